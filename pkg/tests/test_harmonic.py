import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from greenlab.errors import InvalidParameters, MeshTooCoarse
from greenlab.harmonic import (Cylinder, MeshSolver, Piece, Rectangle, Trapezoid, check_interpolation_lower,
                               check_interpolation_upper, check_total_mass_lemma, check_trapezoid_bounds,
                               cylinder_density, cylinder_mass, mean_value_check, measure_by_grid,
                               measure_by_walk, monotonicity_check, walk_on_spheres)


def rect_lower_series(a, b, z, terms=400):
    # harmonic measure of the bottom side of [0, a] x [0, b] by separation of variables
    n = np.arange(1, 2 * terms, 2)
    x, y = z.real, z.imag
    return float(np.sum(4 / (n * np.pi) * np.sin(n * np.pi * x / a)
                        * np.exp(-n * np.pi * y / a) * (1 - np.exp(-2 * n * np.pi * (b - y) / a))
                        / (1 - np.exp(-2 * n * np.pi * b / a))))


def test_strip_density_at_center():
    assert cylinder_density(1.0, 0.5j, 0.0) == pytest.approx(0.5)
    assert cylinder_density(2.0, 1j, 0.0) == pytest.approx(0.25)


def test_strip_density_decay_rate():
    d = cylinder_density(1.0, 0.5j, np.array([10.0, 11.0]))
    assert d[1] / d[0] == pytest.approx(math.exp(-math.pi), rel=1e-9)


def test_strip_side_mass_is_linear():
    for y in (0.1, 0.25, 0.5, 0.9):
        v, _ = integrate.quad(lambda t: cylinder_density(1.0, 0.3 + 1j * y, t), -np.inf, np.inf)
        assert v == pytest.approx(1 - y, abs=1e-8)
        assert cylinder_mass(1.0, 0.3 + 1j * y, -np.inf, np.inf) == pytest.approx(1 - y, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.01, 0.99), st.floats(-3, 3), st.floats(-5, 5), st.floats(0, 4))
def test_strip_mass_matches_quadrature(eps, frac, x, lo, width):
    pole = complex(x, frac * eps)
    hi = lo + width
    for side in ("lower", "upper"):
        q, _ = integrate.quad(lambda t: cylinder_density(eps, pole, t, side), lo, hi, epsabs=1e-12)
        assert cylinder_mass(eps, pole, lo, hi, side) == pytest.approx(q, abs=1e-9)
    total = cylinder_mass(eps, pole, -np.inf, np.inf) + cylinder_mass(eps, pole, -np.inf, np.inf, "upper")
    assert total == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.001, 0.999), st.floats(-50, 50))
def test_strip_density_positive(eps, frac, t):
    assert cylinder_density(eps, complex(0, frac * eps), t) >= 0


def test_pole_outside_rejected():
    with pytest.raises(InvalidParameters):
        cylinder_density(1.0, 1.5j, 0.0)
    with pytest.raises(InvalidParameters):
        walk_on_spheres(Rectangle(0, 1, 1), 2 + 0.5j, walkers=10)


def test_walk_total_and_symmetry():
    res = walk_on_spheres(Rectangle(-1, 1, 2), 1j, walkers=20000, seed=3)
    assert res.unabsorbed == 0
    assert res.mass("all")[0] == 1.0
    ms = [res.mass(p) for p in ("lower", "upper", "left", "right")]
    for m, se in ms:
        assert abs(m - 0.25) <= 4 * se


def test_walk_is_seeded():
    a = walk_on_spheres(Cylinder(1.0), 0.5j, walkers=2000, seed=11)
    b = walk_on_spheres(Cylinder(1.0), 0.5j, walkers=2000, seed=11)
    assert np.array_equal(a.exit_point, b.exit_point)


def test_walk_strip_segment_against_exact():
    pole = 0.2 + 0.4j
    est = measure_by_walk(Cylinder(1.0), pole, Piece("lower", -0.5, 0.5), walkers=40000, seed=5)
    (m,), (se,) = est.masses.values(), est.errors.values()
    assert abs(m - cylinder_mass(1.0, pole, -0.5, 0.5)) <= 4 * se


def test_grid_square_symmetry_and_total():
    s = MeshSolver(Rectangle(0, 1, 1), 16, 16)
    m = s.node_masses([0.5 + 0.5j])[0]
    assert m.sum() == pytest.approx(1.0, abs=1e-13)
    assert np.all(m >= -1e-15)
    for p in ("lower", "upper", "left", "right"):
        assert m @ s.piece_weights(p) == pytest.approx(0.25, abs=1e-12)


def test_grid_converges_at_second_order():
    rect, pole = Rectangle(0, 2, 1), 0.75 + 0.375j
    exact = rect_lower_series(2.0, 1.0, pole)
    errs = [abs(measure_by_grid(rect, [pole], "lower", 1 / n)[0].masses["lower"] - exact) for n in (8, 16, 32)]
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.25)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.25)


def test_grid_pole_off_node():
    rect = Rectangle(0, 2, 1)
    pole = 0.71 + 0.33j
    got = measure_by_grid(rect, [pole], "lower", 1 / 64)[0].masses["lower"]
    assert got == pytest.approx(rect_lower_series(2.0, 1.0, pole), abs=5e-4)


def test_mesh_too_coarse():
    with pytest.raises(MeshTooCoarse):
        MeshSolver(Rectangle(0, 1, 1), 4, 4)


def test_harmonic_extension_reproduces_linear():
    s = MeshSolver(Trapezoid(0, 2, 0.5, 3.0), 32, 8)
    zb = s.Z[s.boundary]
    u = s.harmonic_extension(2 * zb.real - zb.imag + 1)
    assert np.allclose(u, 2 * s.Z.ravel().real - s.Z.ravel().imag + 1, atol=1e-12)


def test_trapezoid_geometry():
    t = Trapezoid(0, 2, 0.1, 4.0)
    assert t.inset == pytest.approx(0.1)
    assert t.right(0.1) == pytest.approx(1.9)
    with pytest.raises(InvalidParameters):
        Trapezoid(0, 2, 0.1, 2.0)


def test_trapezoid_bounds_finite_and_settling():
    rep = check_trapezoid_bounds(0.05, 3.0, 0.3, [0.5 + 0.02j, 1.0 + 0.02j], ny=16)
    assert all(rep.regime.values())
    for piece in ("lower", "upper", "left", "right"):
        assert all(math.isfinite(v) and v > 0 for v in rep.ratios[piece])
    # the half-plane Poisson kernel dominates; allow the mesh error of a pole 3 cells up
    assert rep.ratios["lower"][1] <= 1.01
    assert rep.change("lower") < 0.1


def test_total_mass_lemma_linear_in_ratio():
    devs = [check_total_mass_lemma(0.04, e2, 0.25, ny=16).deviation[-1] for e2 in (0.01, 0.005)]
    assert devs[0] / devs[1] == pytest.approx(2.0, rel=0.1)


def test_interpolation_constant_function():
    h = lambda k: np.full(np.shape(k) + (2,), 1.0 + 0j)
    up = check_interpolation_upper(h, 0.1, 0.01, 0.2, 1.0, 2.0, 0.0)
    assert up.A == pytest.approx(2 * 4.0, rel=1e-9)
    assert up.B == pytest.approx(2 * 2.4, rel=1e-9)
    assert up.growth_ok and up.stable
    assert up.strip_constant[-1] == pytest.approx(0.0, abs=1e-9)
    lo = check_interpolation_lower(lambda k: np.ones(np.shape(k), complex), 0.1, 0.01, 0.2)
    assert lo.constant[-1] == pytest.approx(0.0, abs=1e-9)
    assert lo.excluded_nodes == 0


def test_interpolation_growth_certificate_fails_when_violated():
    h = lambda k: np.exp(np.minimum(1.0 / np.maximum(np.asarray(k).imag, 1e-300), 700))
    assert not check_interpolation_upper(h, 0.1, 0.01, 0.2, 0.5, 1.0, 1.0).growth_ok


def test_mean_value_equality_for_exponential():
    h = lambda k: np.exp(np.asarray(k))
    r = mean_value_check(h, Cylinder(1.0), 0.3 + 0.4j)
    assert r.value == pytest.approx(r.average, abs=1e-7)
    r = mean_value_check(h, Rectangle(0, 2, 1), 0.75 + 0.5j, ny=8)
    assert r.value == pytest.approx(r.average, abs=1e-10)


def test_mean_value_subharmonic_vector():
    h = lambda k: np.stack([np.asarray(k) - 0.5, np.exp(np.asarray(k) / 2)], axis=-1)
    for dom, pole in ((Cylinder(1.0), 0.5 + 0.5j), (Rectangle(0, 2, 1), 0.5 + 0.5j)):
        r = mean_value_check(h, dom, pole, ny=16)
        assert r.holds


def test_monotonicity_shared_piece():
    inner = Rectangle(0, 1, 0.5)
    outer = Rectangle(-0.5, 1.5, 0.5)
    a, b = monotonicity_check(inner, outer, 0.5 + 0.25j, Piece("lower", 0.25, 0.75), 1 / 32)
    assert a <= b + 1e-12
