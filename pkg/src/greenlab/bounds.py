"""Numerical checks of the a priori estimates: energy identity, rough bound,
first-order convolution lemma and Combes-Thomas decay of the Green's kernel.

Each check returns a small report; ``*_verdict`` helpers wrap them into
JSON-lines verdict records with a refinement triple where that makes sense.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import FitUnderdetermined, GateViolation, InvalidParameters
from .operator_model import MatrixPotential, RadialGrid, SourceProfile, as_parameter
from .resolvent import greens_column, solve_driven

ORDER_THRESHOLD = 1.7
STABILITY_TOL = 0.2


@dataclass(frozen=True)
class Verdict:
    check: str
    params: dict
    value: float
    value_name: str = "residual"
    order: Optional[float] = None
    verdict: str = "pass"
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def record(self) -> dict:
        rec = {"check": self.check, "params": self.params, self.value_name: _num(self.value),
               "order": _num(self.order), "verdict": self.verdict}
        if self.details:
            rec["details"] = self.details
        return rec

    def to_jsonl(self) -> str:
        return json.dumps(self.record(), sort_keys=True)


def _num(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _order(values) -> Optional[float]:
    a, b = values[-2], values[-1]
    if a > 0 and b > 0:
        return math.log2(a / b)
    return None


def _stable(a: float, b: float, tol: float = STABILITY_TOL) -> bool:
    if a == b:
        return True
    return abs(a - b) <= tol * max(abs(a), abs(b))


# ----------------------------------------------------------------------------
# energy identity


@dataclass(frozen=True)
class IdentityResidual:
    a: float
    b: float
    k: complex
    lhs: float
    rhs: float
    step: float

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)


def _psi_prime(psi, h, k, at_end_outgoing):
    d = np.empty_like(psi)
    d[1:-1] = (psi[2:] - psi[:-2]) / (2 * h)
    d[0] = (psi[1] - psi[0]) / h
    # u' = iku at the last node means psi' = 0 there
    d[-1] = 0.0 if at_end_outgoing else (psi[-1] - psi[-2]) / h
    return d


def check_energy_identity(potential: MatrixPotential, source: SourceProfile, k, a: float, b: float,
                          grid: RadialGrid) -> IdentityResidual:
    """Both sides of the energy identity on [a, b] from one driven solve.

    psi' by centered differences; integrals by the trapezoid rule, with V
    entering through its cell averages so that a jump inside [a, b] costs
    only O(h^2).
    """
    k = as_parameter(k)
    kk = k.k
    if not (kk.real > 0 and kk.imag > 0):
        raise InvalidParameters("energy identity needs Re k > 0 and Im k > 0")
    if not 1 < a <= b <= grid.right_end:
        raise InvalidParameters("need 1 < a <= b <= R")
    ia, ib = grid.index_of(a), grid.index_of(b)
    sol = solve_driven(potential, source, k, grid)
    h = grid.step
    psi = sol.psi
    dpsi = _psi_prime(psi, h, kk, True)
    seg = slice(ia, ib + 1)
    w = np.full(ib - ia + 1, h)
    w[0] = w[-1] = h / 2
    if ib == ia:
        w[:] = 0.0
    Vbar = potential.cell_average(grid)[seg]
    grad = float(np.sum(w * np.sum(np.abs(dpsi[seg]) ** 2, axis=1)))
    pot = float(np.sum(w * np.einsum("ja,jab,jb->j", np.conj(psi[seg]), Vbar, psi[seg]).real))

    def Q(j):
        ip = complex(np.vdot(psi[j], dpsi[j]))  # <psi', psi> = sum psi' conj(psi)
        return (1j / (2 * kk) * ip - 1j / (2 * np.conj(kk)) * np.conj(ip)).real

    c = kk.imag / abs(kk) ** 2
    lhs = float(np.linalg.norm(psi[ib]) ** 2) + c * grad
    rhs = float(np.linalg.norm(psi[ia]) ** 2) + Q(ib) - Q(ia) - c * pot
    return IdentityResidual(float(a), float(b), kk, lhs, rhs, h)


def energy_identity_verdict(potential, source, k, a: float, b: float, h: float = 1e-3,
                            tol: Optional[float] = None, noise: float = 1e-9) -> Verdict:
    """Residual at ``h`` plus its order on the triple (4h, 2h, h).

    The triple ends at h rather than starting there: at h/4 the residual of
    a smooth case is already near the round-off floor of psi' (about
    1e-13 / h). Residuals below ``noise`` times the size of the sides count
    as exact. Passes if exact, or if the order is >= 1.7 and (when given)
    the residual at h is <= ``tol``.
    """
    res = []
    for step in (4 * h, 2 * h, h):
        grid = RadialGrid.covering(step, max(potential.T, b), k)
        res.append(check_energy_identity(potential, source, k, a, b, grid))
    r = [x.residual for x in res]
    scale = max(abs(res[-1].lhs), 1e-300)
    exact = all(x <= noise * scale for x in r)
    order = None if exact else _order(r)
    ok = exact or (order is not None and order >= ORDER_THRESHOLD)
    if tol is not None:
        ok = ok and r[-1] <= tol
    kk = complex(getattr(k, "k", k))
    return Verdict("energy-identity", {"k": [kk.real, kk.imag], "a": a, "b": b, "h": h, "potential": potential.label},
                   r[-1], "residual", order, "pass" if ok else "fail",
                   {"residuals": r, "steps": [4 * h, 2 * h, h], "lhs": res[-1].lhs, "rhs": res[-1].rhs,
                    "exact": exact})


# ----------------------------------------------------------------------------
# rough bound


@dataclass(frozen=True)
class RoughBoundReport:
    alpha: float
    T: float
    lattice_shape: tuple
    excess: tuple        # per lattice: max of log sup_r |psi| - 2 y^{-(1-alpha)/alpha}
    argmax: tuple

    @property
    def constant(self) -> float:
        return math.exp(self.excess[-1])

    @property
    def stable(self) -> bool:
        return _stable(math.exp(self.excess[-2]), math.exp(self.excess[-1]))


def rough_bound_exponent(y, alpha: float):
    return 2.0 * np.asarray(y, float) ** (-(1 - alpha) / alpha)


def check_rough_bound(potential: MatrixPotential, source: SourceProfile, interval, alpha: float,
                      nx: int = 5, ny: int = 4, h: float = 0.05, y_min_ratio: float = 0.125) -> RoughBoundReport:
    """max over the lattice of log sup_r |psi(r, k)| - 2 (Im k)^{-(1-alpha)/alpha}.

    The lattice covers I x [y_min_ratio * T^-alpha, T^-alpha] (log-spaced in
    y); it is evaluated at (nx, ny) and (2nx - 1, 2ny - 1), the second
    containing the first.
    """
    if not 0 < alpha < 1:
        raise InvalidParameters("alpha must lie in (0, 1)")
    a, b = map(float, interval)
    T = potential.T
    top = T ** -alpha
    excess, where = [], []
    for mx, my in ((nx, ny), (2 * nx - 1, 2 * ny - 1)):
        best, arg = -math.inf, None
        for y in np.geomspace(y_min_ratio * top, top, my):
            for x in np.linspace(a, b, mx):
                k = complex(x, y)
                grid = RadialGrid.covering(min(h, 0.5 / abs(k)), T, k)
                sol = solve_driven(potential, source, k, grid)
                s = float(np.max(np.linalg.norm(sol.psi, axis=1)))
                e = math.log(s) - float(rough_bound_exponent(y, alpha))
                if e > best:
                    best, arg = e, k
        excess.append(best)
        where.append(arg)
    return RoughBoundReport(alpha, T, (nx, ny), tuple(excess), tuple(where))


# ----------------------------------------------------------------------------
# convolution lemma


@dataclass(frozen=True)
class ConvolutionReport:
    k: complex
    a: float
    R: float
    sup_Y: float
    l2_Y: float
    l2_A: float
    C_inf: float          # sup|Y| sqrt(Im k) / (|k| |A|_2)
    C_2: float            # |Y|_2 Im k / (|k| |A|_2)
    radii: tuple
    representation_defect: float   # quadrature route vs ODE route at the radii
    closed_form_defect: Optional[float] = None


def convolution_solution(A: Callable, k: complex, r: np.ndarray) -> np.ndarray:
    """Y(r) = -2ik e^{-2ikr} int_r^R A(s) e^{2iks} ds on the uniform nodes ``r``.

    Product rule: A is taken at cell midpoints and e^{2iks} is integrated
    exactly, so a piecewise-constant A with jumps at nodes is handled exactly.
    """
    h = r[1] - r[0]
    vals = np.asarray(A(r[:-1] + h / 2), complex)
    if vals.ndim == 1:
        vals = vals[:, None]
    cell = vals * ((np.exp(2j * k * r[1:]) - np.exp(2j * k * r[:-1])) / (2j * k))[:, None]
    tail = np.zeros((len(r), vals.shape[1]), complex)
    tail[:-1] = np.cumsum(cell[::-1], axis=0)[::-1]
    return -2j * k * np.exp(-2j * k * r)[:, None] * tail


def check_convolution_lemma(A: Callable, k: complex, a: float, R: float, step: float = 1e-3,
                            radii: Optional[Sequence[float]] = None,
                            closed_form: Optional[Callable] = None) -> ConvolutionReport:
    """Solve Y = (i/2k) Y' + A on [a, R] with Y(R) = 0 in two ways and report the constants.

    ``A`` maps radii to vectors (or scalars). The ODE route integrates
    Y' = -2ik Y + 2ik A backwards from R, which is the stable direction.
    """
    k = complex(k)
    if not k.imag > 0:
        raise InvalidParameters("need Im k > 0")
    n = int(round((R - a) / step))
    r = a + step * np.arange(n + 1)
    Y = convolution_solution(A, k, r)
    norms = np.linalg.norm(Y, axis=1)
    An = np.asarray(A(r), complex)
    An = An[:, None] if An.ndim == 1 else An
    l2A = math.sqrt(float(integrate.trapezoid(np.sum(np.abs(An) ** 2, axis=1), r)))
    l2Y = math.sqrt(float(integrate.trapezoid(norms ** 2, r)))
    supY = float(norms.max())
    if radii is None:
        radii = (a, a + 0.25 * (R - a), a + 0.5 * (R - a))
    radii = tuple(float(x) for x in radii)
    N = Y.shape[1]

    def rhs(t, y):
        av = np.asarray(A(np.array([t])), complex).reshape(-1)
        yc = y[:N] + 1j * y[N:]
        d = -2j * k * yc + 2j * k * av
        return np.concatenate([d.real, d.imag])

    ode = integrate.solve_ivp(rhs, (R, a), np.zeros(2 * N), t_eval=sorted(radii, reverse=True),
                              rtol=1e-10, atol=1e-12, method="DOP853", max_step=0.05)
    ode_vals = {t: ode.y[:N, i] + 1j * ode.y[N:, i] for i, t in enumerate(ode.t)}
    defect = 0.0
    cf = None
    for t in radii:
        j = int(round((t - a) / step))
        defect = max(defect, float(np.linalg.norm(Y[j] - ode_vals[min(ode_vals, key=lambda s: abs(s - t))])))
    if closed_form is not None:
        exact = np.asarray(closed_form(r), complex)
        exact = exact[:, None] if exact.ndim == 1 else exact
        cf = float(np.max(np.linalg.norm(Y - exact, axis=1)))
    scale = abs(k) * l2A if l2A > 0 else math.inf
    return ConvolutionReport(k, a, R, supY, l2Y, l2A, supY * math.sqrt(k.imag) / scale, l2Y * k.imag / scale,
                             radii, defect, cf)


def indicator_closed_form(k: complex, a: float):
    """Y for A = chi_[a, a+1]: 1 - e^{2ik(a+1-r)} on [a, a+1], zero beyond."""
    def Y(r):
        r = np.asarray(r, float)
        return np.where(r <= a + 1, 1 - np.exp(2j * k * (a + 1 - r)), 0.0)
    return Y


# ----------------------------------------------------------------------------
# Combes-Thomas


@dataclass(frozen=True)
class DecayFit:
    separations: np.ndarray
    log_norms: np.ndarray
    slope: float
    intercept: float
    stderr: float
    k: complex
    target_rate: float      # the slope must not exceed -target_rate

    @property
    def rate(self) -> float:
        """Empirical c in |G| ~ exp(-c Im k |r - rho|)."""
        return -self.slope / self.k.imag

    @property
    def decades(self) -> float:
        return float((self.log_norms.max() - self.log_norms.min()) / math.log(10))

    def holds(self, tol: Optional[float] = None) -> bool:
        tol = 3 * self.stderr + 1e-3 if tol is None else tol
        return self.slope <= -self.target_rate + tol


def _fit(separations, norms, k, target, floor_ratio=1e-13):
    separations = np.asarray(separations, float)
    norms = np.asarray(norms, float)
    keep = (separations > 0) & (norms > floor_ratio * norms.max())
    if np.count_nonzero(keep) < 8:
        raise FitUnderdetermined(f"only {np.count_nonzero(keep)} separations above the noise floor")
    x, y = separations[keep], np.log(norms[keep])
    (slope, icpt), cov = np.polyfit(x, y, 1, cov=True)
    return DecayFit(x, y, float(slope), float(icpt), float(math.sqrt(cov[0, 0])), k, target)


def combes_thomas_threshold(potential: MatrixPotential, factor: float = 4.0) -> float:
    """Im k must exceed factor * |V|_inf (the contraction condition)."""
    return factor * potential.sup_norm()


def check_combes_thomas(potential: MatrixPotential, k, rho: float, separations: Sequence[float],
                        h: float = 0.01, factor: float = 4.0) -> DecayFit:
    """Slope of log |G(rho + s, rho)| against s; the target rate is 0.5 Im k."""
    k = as_parameter(k).k
    thr = combes_thomas_threshold(potential, factor)
    if not k.imag > thr:
        raise GateViolation(f"Im k = {k.imag:g} is not above the gate {thr:g}")
    seps = np.asarray(separations, float)
    grid = RadialGrid.covering(h, max(potential.T, rho + seps.max()), k)
    col = greens_column(potential, k, rho, grid)
    norms = col.norms()
    r = rho + seps
    idx = np.array([grid.index_of(x) for x in r])
    return _fit(seps, norms[idx], k, 0.5 * k.imag)


def default_window_gate(lam: float, gamma: float) -> float:
    """C1 with Im k > C1 T^-gamma: 4 |V chi_{r > T/4}|_inf < Im k gives C1 = 4^{1+gamma} lam."""
    return 4.0 ** (1 + gamma) * lam


def check_windowed_decay(potential: MatrixPotential, k, C1: Optional[float] = None, points: int = 16,
                         h: float = 0.05) -> DecayFit:
    """Decay of |G(r, T/2)| for r in (T/2, T]; the fitted rate c = -slope / Im k is reported."""
    k = as_parameter(k).k
    T = potential.T
    lam, gam = potential.decay_lambda, potential.decay_gamma
    if lam is None:
        raise InvalidParameters("windowed decay needs a power-law potential")
    C1 = default_window_gate(lam, gam) if C1 is None else C1
    if not k.imag > C1 * T ** -gam:
        raise GateViolation(f"Im k = {k.imag:g} is not above C1 T^-gamma = {C1 * T ** -gam:g}")
    rho = T / 2
    grid = RadialGrid.covering(h, T, k)
    col = greens_column(potential, k, rho, grid)
    seps = np.linspace(0, T / 2, points + 1)[1:]
    seps = np.round(seps / h) * h
    idx = np.array([grid.index_of(rho + s) for s in seps])
    return _fit(seps, col.norms()[idx], k, 0.0)


def _skipped(check, params, exc) -> Verdict:
    return Verdict(check, params, math.nan, "constant", None, "inconclusive", {"skipped": str(exc)})


def combes_thomas_verdict(potential, k, rho, separations, h: float = 0.01, factor: float = 4.0) -> Verdict:
    """Fits at h and h/2; inconclusive when the gate fails or the slopes differ by > 20%."""
    kk = complex(getattr(k, "k", k))
    params = {"k": [kk.real, kk.imag], "rho": rho, "h": h, "potential": potential.label}
    try:
        fits = [check_combes_thomas(potential, k, rho, separations, hh, factor) for hh in (h, h / 2)]
    except (GateViolation, FitUnderdetermined) as exc:
        return _skipped("combes-thomas", params, exc)
    ok = all(f.holds() for f in fits)
    stable = _stable(fits[0].slope, fits[1].slope)
    verdict = "pass" if ok and stable else ("fail" if not ok else "inconclusive")
    return Verdict("combes-thomas", params, fits[-1].slope, "constant", None, verdict,
                   {"slopes": [f.slope for f in fits], "target": -fits[-1].target_rate,
                    "decades": fits[-1].decades})


def windowed_decay_verdict(potential_factory: Callable, Ts: Sequence[float], k_of_T: Callable,
                           C1: Optional[float] = None, tol: float = 0.3, h: float = 0.05) -> Verdict:
    """Fitted c at each T; passes if all c > 0 and max/min - 1 <= ``tol``."""
    rates = []
    params = {"T": list(Ts), "C1": C1, "h": h}
    for T in Ts:
        try:
            fit = check_windowed_decay(potential_factory(T), k_of_T(T), C1, h=h)
        except (GateViolation, FitUnderdetermined) as exc:
            return _skipped("windowed-decay", params, exc)
        rates.append(fit.rate)
    spread = max(rates) / min(rates) - 1 if min(rates) > 0 else math.inf
    ok = min(rates) > 0 and spread <= tol
    return Verdict("windowed-decay", params, min(rates), "constant", None,
                   "pass" if ok else "fail", {"rates": rates, "spread": spread})


def rough_bound_verdict(potential, source, interval, alpha: float, **kw) -> Verdict:
    rep = check_rough_bound(potential, source, interval, alpha, **kw)
    finite = all(math.isfinite(e) for e in rep.excess)
    verdict = "pass" if finite and rep.stable else ("fail" if not finite else "inconclusive")
    return Verdict("rough-bound", {"interval": list(interval), "alpha": alpha, "potential": potential.label},
                   rep.constant, "constant", None, verdict, {"excess": list(rep.excess)})


def convolution_verdict(A, k, a, R, step: float = 1e-3, closed_form=None) -> Verdict:
    reps = [check_convolution_lemma(A, k, a, R, s, closed_form=closed_form) for s in (step, step / 2)]
    stable = _stable(reps[0].C_inf, reps[1].C_inf) and _stable(reps[0].C_2, reps[1].C_2)
    scale = max(reps[-1].sup_Y, 1e-300)
    # the ODE route steps across jumps of A adaptively; 1e-3 relative is its budget
    agree = reps[-1].representation_defect <= 1e-3 * scale
    if closed_form is not None:
        agree = agree and reps[-1].closed_form_defect <= 1e-6 * scale
    verdict = "pass" if stable and agree else ("fail" if not agree else "inconclusive")
    kk = complex(k)
    return Verdict("convolution", {"k": [kk.real, kk.imag], "a": a, "R": R, "step": step},
                   reps[-1].C_inf, "constant", None, verdict,
                   {"C_inf": [r.C_inf for r in reps], "C_2": [r.C_2 for r in reps],
                    "representation_defect": reps[-1].representation_defect,
                    "closed_form_defect": reps[-1].closed_form_defect})
