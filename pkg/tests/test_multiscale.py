import math

import numpy as np
import pytest

from greenlab.errors import IntervalExhausted, InvalidParameters
from greenlab.multiscale import (IterationSettings, advance_scale, default_delta1, fit_power, limiting_interval,
                                 pc_stability_probe, pc_zone, run_iteration, shrink_interval, start_iteration,
                                 strip_functionals, truncate_potential, upsilon_ceiling, zone_to_shrink_ratio)
from greenlab.operator_model import make_indicator_source, make_power_law_potential, zero_potential

F = make_indicator_source(1)
FAST = IterationSettings(h=0.05, y_points=6, x_nodes=16)


def test_truncation():
    V = make_power_law_potential(1, 1.0, 0.8, 1024.0)
    V8 = truncate_potential(V, 8)
    r = np.array([10.0, 256.0, 256.5, 700.0])
    assert np.allclose(V8(r)[:2], V(r)[:2])
    assert not np.any(V8(r)[2:])
    assert truncate_potential(V, 10) is V
    assert truncate_potential(V, 11) is V
    V6 = truncate_potential(V8, 6)
    assert np.allclose(V6(np.linspace(0, 300, 301)), truncate_potential(V, 6)(np.linspace(0, 300, 301)))


def test_zone_numbers():
    z = pc_zone((1, 2), 256.0, 0.8)
    assert default_delta1(0.8) == pytest.approx(1 / 15)
    assert z.lower == pytest.approx(256.0 ** (-7 / 15), rel=1e-12)
    assert z.lower == pytest.approx(0.07513, abs=1e-4)
    assert z.upper == pytest.approx(256.0 ** (-4 / 15), rel=1e-12)
    assert z.upper == pytest.approx(0.22787, abs=1e-4)
    assert z.contains(1.5 + 0.1j) and not z.contains(1.5 + 0.05j)


def test_zone_shrinks_with_T():
    zs = [pc_zone((1, 2), 2.0 ** n, 0.8) for n in (6, 10, 14, 18)]
    assert all(a.upper > b.upper and a.lower > b.lower for a, b in zip(zs, zs[1:]))
    ratios = [z.upper / z.lower for z in zs]
    assert all(a < b for a, b in zip(ratios, ratios[1:]))


def test_zone_rejects_degenerate_delta():
    with pytest.raises(InvalidParameters):
        pc_zone((1, 2), 256.0, 0.8, 0.8 - 2 / 3)
    with pytest.raises(InvalidParameters):
        pc_zone((1, 2), 256.0, 0.6)


def test_shrink_arithmetic():
    assert shrink_interval((1, 2), 10, 0.5) == pytest.approx((1.03125, 1.96875))
    with pytest.raises(IntervalExhausted):
        shrink_interval((1, 2), 10, 0.001)
    a = shrink_interval((1, 2), 6, 1.0)
    b = shrink_interval(a, 7, 1.0)
    assert sum(a) / 2 == pytest.approx(1.5) and sum(b) / 2 == pytest.approx(1.5)


def test_limiting_interval_and_zone_ratio():
    lo, hi = limiting_interval((1, 2), 6, 1.0)
    assert hi - lo == pytest.approx(1 - 2 * 2.0 ** -6)
    ups = 0.5 * upsilon_ceiling(0.8, default_delta1(0.8))
    ratios = [zone_to_shrink_ratio(n, 0.8, default_delta1(0.8), ups) for n in (10, 20, 40)]
    assert ratios[0] > ratios[1] > ratios[2]


def test_probe_free_case():
    rep = pc_stability_probe(zero_potential(1, 1024.0), F, (1, 2), 7, nx=3, ny=3)
    assert rep.eps_prime < 1e-9
    assert rep.eps_T < 1e-9


def test_probe_includes_zone_top():
    V = make_power_law_potential(1, 1.0, 0.8, 1024.0)
    rep = pc_stability_probe(V, F, (1, 2), 7, nx=3, ny=3)
    tops = [s for s in rep.samples if abs(s[0].imag - rep.zone.y_range[1]) < 1e-12]
    assert tops and all(math.isfinite(s[1]) for s in tops)


def test_probe_trend():
    V = make_power_law_potential(1, 1.0, 0.8, 1024.0)
    eps = [pc_stability_probe(V, F, (1, 2), n, nx=3, ny=3).eps_prime for n in (6, 8, 10)]
    assert eps[0] > eps[1] > eps[2] > 0


def test_fit_power():
    Ts = np.array([64, 128, 256, 512.0])
    assert fit_power(Ts, 3 * Ts ** -0.25) == pytest.approx(-0.25)


def test_free_iteration_B_constant_A_nonincreasing():
    states = run_iteration(zero_potential(1, 1024.0), F, (1, 2), 6, 8, 2.0, settings=FAST)
    B = [s.B for s in states]
    A = [s.A for s in states]
    assert max(B) - min(B) <= 1e-3 * abs(B[0])
    # the strip top L(T_n) shrinks, so the free sup can only drop
    assert all(a >= b - 1e-12 for a, b in zip(A, A[1:]))
    assert all("upsilon_outside_constraint" in s.flags for s in states)


def test_power_law_iteration_bounded():
    V = make_power_law_potential(1, 0.1, 0.8, 1024.0)
    states = run_iteration(V, F, (1, 2), 6, 8, 2.0, settings=FAST)
    A = np.array([s.A for s in states])
    assert A.max() <= 1.5 * A[0]
    assert all(math.isfinite(s.B) for s in states)
    rec = states[-1].record()
    assert set(rec) >= {"n", "T_n", "ell", "L", "interval", "A_n", "B_n", "flags"}


def test_start_rejects_slow_decay():
    with pytest.raises(InvalidParameters):
        start_iteration(make_power_law_potential(1, 1.0, 0.5, 64.0), F, (1, 2), 6, 2.0)


def test_advance_raises_when_interval_exhausted():
    V = make_power_law_potential(1, 0.1, 0.8, 1024.0)
    s = start_iteration(V, F, (1, 2), 6, 0.001, settings=FAST)
    with pytest.raises(IntervalExhausted):
        advance_scale(s, V, F, FAST)


def test_strip_functionals_flag_zero():
    # a strip hugging k = 2 pi where the free psi vanishes: the log integral stays finite off the axis
    sf = strip_functionals(zero_potential(1, 1.0), F, (6.0, 6.5), 0.1, 0.05, y_points=4, x_nodes=16)
    assert all(math.isfinite(v) for v in sf.logs) and not sf.flags
