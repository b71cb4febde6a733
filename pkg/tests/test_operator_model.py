import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greenlab.errors import GridTooCoarse, InvalidParameters
from greenlab.operator_model import (ChannelSpace, RadialGrid, SpectralParameter, harmonic_index,
                                     make_indicator_source, make_power_law_potential, make_smooth_source,
                                     make_spherical_reduction_potential, zero_potential)


def test_power_law_values():
    V = make_power_law_potential(1, 1.0, 0.8, 256.0, [[1.0]])
    vals = V(np.array([0.0, 255.0, 257.0]))[:, 0, 0]
    assert vals[0] == pytest.approx(1.0)
    assert vals[1].real == pytest.approx(256 ** -0.8, rel=1e-12)
    assert vals[1].real == pytest.approx(0.0118415, abs=1e-7)
    assert vals[2] == 0


def test_power_law_zero_coupling_strength():
    V = make_power_law_potential(2, 0.0, 0.8, 4.0)
    assert not np.any(V(np.linspace(0, 5, 50)))


def test_power_law_gamma_gate():
    V = make_power_law_potential(1, 1.0, 0.5, 8.0)
    assert not V.usable_for_multiscale
    assert make_power_law_potential(1, 1.0, 0.8, 8.0).usable_for_multiscale


@pytest.mark.parametrize("kw", [dict(lam=-1.0, gamma=0.8), dict(lam=1.0, gamma=1.5), dict(lam=1.0, gamma=0.0)])
def test_power_law_rejects(kw):
    with pytest.raises(InvalidParameters):
        make_power_law_potential(1, T=8.0, **kw)


def test_power_law_rejects_non_hermitian_coupling():
    with pytest.raises(InvalidParameters):
        make_power_law_potential(2, 1.0, 0.8, 8.0, [[0, 1], [0, 0]])


def test_power_law_invariants_with_coupling():
    C = np.array([[0, 1j], [-1j, 0]])
    V = make_power_law_potential(2, 0.7, 0.9, 10.0, C)
    rep = V.check_invariants(np.linspace(0, 12, 200))
    assert rep["hermitian_defect"] == 0
    assert rep["outside_support"] == 0
    assert rep["envelope_excess"] <= 1e-15


def test_spherical_budget_one_is_zero():
    V = make_spherical_reduction_potential(1, 0.1, 2.0)
    assert V.N == 1
    assert not np.any(V(np.linspace(0.1, 3, 40)))


def test_spherical_activation_threshold():
    V = make_spherical_reduction_potential(4, 0.5, 16.0)
    assert harmonic_index(1) == (1, -1)
    r = np.array([3.99, 4.0, 5.0])
    d = V(r)[:, 1, 1].real
    assert d[0] == 0
    # centrifugal entry +l(l+1)/r^2 for l = 1
    assert d[1] == pytest.approx(2 / 16)
    assert d[2] == pytest.approx(2 / 25)
    assert 4.0 in V.breakpoints


def test_spherical_isotropic_angular_potential_adds_identity():
    c = lambda r: 0.3 / (1 + r)
    V0 = make_spherical_reduction_potential(4, 0.5, 16.0)
    V1 = make_spherical_reduction_potential(4, 0.5, 16.0, lambda r, th, ph: c(r) + 0 * th)
    r = np.array([0.5, 2.0, 10.0])
    diff = V1(r) - V0(r)
    for i, ri in enumerate(r):
        assert np.allclose(diff[i], c(ri) * np.eye(4), atol=1e-12)


def test_spherical_budget_too_small():
    with pytest.raises(InvalidParameters):
        make_spherical_reduction_potential(2, 0.5, 16.0)


def test_indicator_source():
    F = make_indicator_source(1)
    assert F(np.array([0.5]))[0, 0] == 1
    assert F(np.array([1.5]))[0, 0] == 0
    assert F.norm_squared() == pytest.approx(1.0)
    F3 = make_indicator_source(3)
    assert not np.any(F3(np.linspace(0, 1, 11))[:, 1:])


def test_smooth_source_norm():
    F = make_smooth_source(1)
    assert F(np.array([0.5]))[0, 0].real == pytest.approx(math.sqrt(30) / 4)
    assert F.norm_squared() == pytest.approx(1.0, rel=1e-12)


def test_spectral_parameter():
    k = SpectralParameter.from_z(-1 + 1e-3j)
    assert k.k.real > 0 and k.k.imag > 0
    assert k.z == pytest.approx(-1 + 1e-3j)
    assert SpectralParameter(1j).z == pytest.approx(-1)
    with pytest.raises(InvalidParameters):
        SpectralParameter(-1 + 1j)
    with pytest.raises(InvalidParameters):
        SpectralParameter(0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.floats(1e-6, 50))
def test_principal_root_upper_half_plane(x, y):
    k = SpectralParameter.from_z(complex(x, y))
    assert k.k.real >= 0 and k.k.imag > 0
    assert abs(k.z - complex(x, y)) <= 1e-12 * max(1.0, abs(complex(x, y)))


def test_grid_basics():
    g = RadialGrid(0.01, 5.0)
    assert g.size == 500
    assert g.index_of(2.5) == 250
    assert g.first_index_at_or_after(2.505) == 251
    with pytest.raises(InvalidParameters):
        RadialGrid(0.3, 1.0)
    with pytest.raises(InvalidParameters):
        g.index_of(2.505)


def test_grid_sampling_gate():
    g = RadialGrid(0.5, 5.0)
    with pytest.raises(GridTooCoarse):
        g.check_sampling(math.pi)
    g.check_sampling(0.9)


def test_grid_covering():
    g = RadialGrid.covering(0.01, 64.0, 1.0)
    assert g.right_end >= 64 + 4 * math.pi - 1e-9
    assert g.right_end == pytest.approx(round(g.right_end / 0.01) * 0.01)


def test_cell_average_of_jump():
    V = make_power_law_potential(1, 1.0, 0.8, 2.0)
    g = RadialGrid(0.5, 4.0)
    avg = V.cell_average(g)[:, 0, 0].real
    # the cell around r=2 is half inside the support
    expect = 2 * ((3.0 ** 0.2 - 2.75 ** 0.2) / 0.2)
    assert avg[4] == pytest.approx(expect, rel=1e-6)
    assert avg[5] == 0


def test_channel_space():
    with pytest.raises(InvalidParameters):
        ChannelSpace(0)
    assert zero_potential(3).N == 3
