import math

import numpy as np
import pytest
from scipy import integrate

from greenlab.errors import InvalidParameters
from greenlab.operator_model import RadialGrid, make_indicator_source, make_power_law_potential, zero_potential
from greenlab.spectral import (density_via_boundary, density_via_stieltjes, entropy_integral, free_density,
                               resolvent_form, total_mass_check)

F = make_indicator_source(1)
V0 = zero_potential()


def grid_for(k, T=1.0, h=1e-3):
    return RadialGrid.covering(h, T, k)


def test_free_density_at_pi():
    s = density_via_boundary(V0, F, math.pi, grid_for(math.pi))
    assert s.density == pytest.approx(4 / math.pi ** 4, rel=1e-5)


def test_free_density_zero_at_two_pi():
    k = 2 * math.pi
    assert density_via_boundary(V0, F, k, grid_for(k)).density < 1e-25


def test_density_nonnegative_power_law():
    V = make_power_law_potential(1, 2.0, 0.8, 16.0)
    for k in (0.3, 1.0, 2.5):
        assert density_via_boundary(V, F, k, grid_for(k, 16.0, 5e-3)).density >= 0


def test_stieltjes_free_at_pi():
    res = density_via_stieltjes(V0, F, math.pi ** 2, grid_for(math.pi))
    assert res.converged
    assert res.extrapolated == pytest.approx(4 / math.pi ** 4, rel=1e-5)


def test_stieltjes_below_spectrum_vanishes():
    vals = [resolvent_form(V0, F, -1 + 1j * eta, RadialGrid.covering(1e-3, 1.0, 1j)).imag for eta in (1e-2, 1e-3)]
    assert vals[1] < vals[0] / 5
    assert abs(vals[1]) < 1e-3


@pytest.mark.parametrize("E", [-1.0, 0.5, 4.0])
def test_herglotz(E):
    V = make_power_law_potential(1, 0.5, 0.8, 8.0)
    z = E + 0.01j
    k = np.sqrt(z)
    assert resolvent_form(V, F, z, RadialGrid.covering(min(1e-3, 0.25 / abs(k)), 8.0, k)).imag > 0


def test_stieltjes_rejects_bad_etas():
    with pytest.raises(InvalidParameters):
        density_via_stieltjes(V0, F, 1.0, grid_for(1.0), etas=(1e-3, 4e-4, 1e-4))


def test_total_mass_free():
    rep = total_mass_check(V0, F, nodes=2001)
    assert 0.9 <= rep.mass <= 1.0
    assert rep.estimate_with_tail == pytest.approx(1.0, abs=0.01)


def test_total_mass_scales_quadratically():
    a = total_mass_check(V0, F, window=(-1, 40), nodes=401)
    b = total_mass_check(V0, F.scaled(3.0), window=(-1, 40), nodes=401)
    assert b.mass == pytest.approx(9 * a.mass, rel=1e-10)


def test_total_mass_grows_with_window():
    masses = [total_mass_check(V0, F, window=(-1, top), nodes=801).mass for top in (50, 100, 200)]
    assert masses[0] < masses[1] < masses[2] < 1


def test_entropy_free_matches_quadrature():
    rep = entropy_integral(V0, F, (1, 2), nodes=33)
    assert rep.finite
    exact = integrate.quad(lambda k: math.log(free_density(k)), 1, 2, epsabs=1e-12)[0]
    assert rep.entropy == pytest.approx(exact, abs=1e-5)
    assert rep.log_plus + rep.log_minus == pytest.approx(rep.entropy)


def test_entropy_flags_zero_at_two_pi():
    rep = entropy_integral(V0, F, (6.0, 7.0), nodes=33)
    assert rep.entropy == -math.inf
    assert any(abs(k - 2 * math.pi) < 1 / 32 for k in rep.zero_nodes)
    assert '"-inf"' in rep.to_jsonl()


def test_entropy_continuous_in_coupling():
    free = entropy_integral(V0, F, (1, 2), nodes=17, h=2e-3).entropy
    diffs = []
    for lam in (0.1, 0.01, 0.001):
        V = make_power_law_potential(1, lam, 0.8, 8.0)
        diffs.append(abs(entropy_integral(V, F, (1, 2), nodes=17, h=2e-3).entropy - free))
    assert diffs[0] > diffs[1] > diffs[2]
    assert diffs[2] < 1e-2


def test_entropy_energy_variable():
    rk = entropy_integral(V0, F, (1, 2), nodes=33)
    rE = entropy_integral(V0, F, (1, 2), nodes=33, variable="E")
    exact = integrate.quad(lambda k: 2 * k * math.log(free_density(k)), 1, 2)[0]
    assert rE.entropy == pytest.approx(exact, abs=1e-4)
    assert rE.entropy != rk.entropy
