import json
import math

import numpy as np
import pytest

from greenlab.bounds import (Verdict, check_combes_thomas, check_convolution_lemma, check_energy_identity,
                             check_rough_bound, check_windowed_decay, combes_thomas_threshold,
                             combes_thomas_verdict, convolution_verdict, default_window_gate,
                             energy_identity_verdict, indicator_closed_form, rough_bound_verdict,
                             windowed_decay_verdict)
from greenlab.errors import FitUnderdetermined, GateViolation, InvalidParameters
from greenlab.operator_model import RadialGrid, make_indicator_source, make_power_law_potential, zero_potential

F = make_indicator_source(1)
PL = make_power_law_potential(1, 1.0, 0.8, 8.0)


def test_energy_identity_free_beyond_support_is_exact():
    k = 1 + 0.3j
    grid = RadialGrid.covering(0.01, 8.0, k)
    r = check_energy_identity(zero_potential(1, 8.0), F, k, 2.0, 5.0, grid)
    assert r.residual <= 1e-9 * abs(r.lhs)


def test_energy_identity_second_order():
    v = energy_identity_verdict(PL, F, 2 + 0.5j, 1.5, 3.0, h=2.5e-3)
    assert v.passed
    assert v.order == pytest.approx(2.0, abs=0.3)
    r = v.details["residuals"]
    assert r[0] > r[1] > r[2]


def test_energy_identity_rejects_bad_k():
    grid = RadialGrid.covering(0.01, 8.0, 1.0)
    with pytest.raises(InvalidParameters):
        check_energy_identity(PL, F, 1.0, 2.0, 3.0, grid)
    with pytest.raises(InvalidParameters):
        check_energy_identity(PL, F, 1 + 0.5j, 0.5, 3.0, RadialGrid.covering(0.01, 8.0, 1 + 0.5j))


def test_convolution_indicator_closed_form():
    k, a = 1.0 + 0.5j, 2.0
    Y = indicator_closed_form(k, a)
    # Y = (i / 2k) Y' + A on (a, a + 1): check by a centered difference
    r = np.linspace(a + 0.1, a + 0.9, 9)
    d = 1e-5
    dY = (Y(r + d) - Y(r - d)) / (2 * d)
    assert np.allclose(Y(r), 1j / (2 * k) * dY + 1, atol=1e-8)
    A = lambda s: ((np.asarray(s) >= a) & (np.asarray(s) <= a + 1)).astype(float)
    rep = check_convolution_lemma(A, k, a, a + 4, closed_form=Y)
    assert rep.closed_form_defect < 1e-9
    assert rep.representation_defect < 1e-3 * rep.sup_Y
    assert rep.C_inf > 0 and rep.C_2 > 0


def test_convolution_constants_bounded_in_k():
    A = lambda s: np.stack([np.sin(np.asarray(s)), np.exp(-np.asarray(s))], axis=-1)
    Cs = [check_convolution_lemma(A, complex(1, y), 1.0, 12.0, step=2e-3).C_inf for y in (1.0, 0.5, 0.25)]
    assert max(Cs) < 10


def test_convolution_verdict_passes():
    k, a = 2.0 + 0.25j, 1.0
    A = lambda s: ((np.asarray(s) >= a) & (np.asarray(s) <= a + 1)).astype(float)
    v = convolution_verdict(A, k, a, a + 3, closed_form=indicator_closed_form(k, a))
    assert v.verdict == "pass"


def test_free_green_decays_at_full_rate():
    fit = check_combes_thomas(zero_potential(1, 1.0), 1.5 + 1j, 4.0, np.linspace(1, 12, 12), h=0.01)
    assert fit.rate == pytest.approx(1.0, abs=1e-3)
    assert fit.holds()


def test_combes_thomas_power_law():
    V = make_power_law_potential(1, 0.1, 0.8, 64.0)
    assert combes_thomas_threshold(V) == pytest.approx(0.4)
    fit = check_combes_thomas(V, 1.5 + 1j, 8.0, np.linspace(1, 20, 20), h=0.02)
    assert fit.holds() and fit.rate > 0.5


def test_combes_thomas_gate():
    with pytest.raises(GateViolation):
        check_combes_thomas(PL, 1 + 0.1j, 4.0, np.linspace(1, 3, 10))
    v = combes_thomas_verdict(PL, 1 + 0.1j, 4.0, np.linspace(1, 3, 10))
    assert v.verdict == "inconclusive" and "skipped" in v.details


def test_fit_underdetermined():
    with pytest.raises(FitUnderdetermined):
        check_combes_thomas(zero_potential(1, 1.0), 1 + 1j, 2.0, [1.0, 1.5, 2.0, 2.5])


def test_window_gate_default():
    assert default_window_gate(1.0, 0.8) == pytest.approx(4 ** 1.8)
    V = make_power_law_potential(1, 1.0, 0.8, 64.0)
    with pytest.raises(GateViolation):
        check_windowed_decay(V, 1 + 8 * 64 ** -0.8 * 1j)
    fit = check_windowed_decay(V, 1 + 8 * 64 ** -0.8 * 1j, C1=4.0)
    assert fit.rate > 0


def test_windowed_decay_verdict_stable_rate():
    make = lambda T: make_power_law_potential(1, 1.0, 0.8, T)
    v = windowed_decay_verdict(make, [32.0, 64.0], lambda T: 1 + 8 * T ** -0.8 * 1j, C1=4.0)
    assert v.verdict == "pass"
    assert all(c > 0 for c in v.details["rates"])


def test_rough_bound_finite():
    V = make_power_law_potential(1, 1.0, 0.8, 16.0)
    rep = check_rough_bound(V, F, (1.0, 2.0), 0.8, nx=3, ny=3)
    assert all(math.isfinite(e) for e in rep.excess)
    v = rough_bound_verdict(V, F, (1.0, 2.0), 0.8, nx=3, ny=3)
    assert v.verdict in ("pass", "inconclusive")
    with pytest.raises(InvalidParameters):
        check_rough_bound(V, F, (1.0, 2.0), 1.0)


def test_verdict_record_nonfinite():
    v = Verdict("x", {"a": 1}, math.inf, "constant", None, "fail")
    rec = json.loads(v.to_jsonl())
    assert rec["constant"] == "inf" and rec["order"] is None and rec["verdict"] == "fail"
