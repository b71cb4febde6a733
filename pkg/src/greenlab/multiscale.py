"""Dyadic truncation iteration: zones of perfect control, shrinking intervals, A_n and B_n.

At scale n the potential is truncated to [0, T_n], T_n = 2**n, and the
functionals

    A_n = sup_{0<y<L(T_n)} int_{I_(n)} |psi_n(inf, x+iy)|^2 dx
    B_n = inf_{0<y<L(T_n)} int_{I_(n)} log |psi_n(inf, x+iy)| dx

are evaluated with the sup/inf replaced by max/min over a log-spaced y-lattice
and the x-integral by composite Simpson. Everything reachable at desk scale is
a trend check; no constant from the asymptotic argument is asserted.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import IntervalExhausted, InvalidParameters
from .operator_model import MatrixPotential, RadialGrid, SourceProfile
from .resolvent import solve_driven


def default_delta1(gamma: float) -> float:
    return gamma / 2.0 - 1.0 / 3.0


def upsilon_ceiling(gamma: float, delta1: float) -> float:
    """Upper limit 0.01 * (1 - gamma + delta1) on the shrink exponent."""
    return 0.01 * (1.0 - gamma + delta1)


@dataclass(frozen=True)
class PCZone:
    """R_{I,1} intersected with the strip lower <= Im k <= upper."""

    interval: tuple
    T: float
    gamma: float
    delta1: float
    lower: float
    upper: float

    @property
    def y_range(self) -> tuple:
        return self.lower, min(self.upper, 1.0)

    def contains(self, k: complex) -> bool:
        a, b = self.interval
        lo, hi = self.y_range
        return a <= k.real <= b and lo <= k.imag <= hi

    def lattice(self, nx: int, ny: int) -> np.ndarray:
        """nx x ny sample points, y log-spaced and including both zone edges."""
        a, b = self.interval
        lo, hi = self.y_range
        xs = np.linspace(a, b, nx)
        ys = np.geomspace(lo, hi, ny) if ny > 1 else np.array([hi])
        return (xs[None, :] + 1j * ys[:, None]).ravel()


def pc_zone(interval, T: float, gamma: float, delta1: Optional[float] = None) -> PCZone:
    if delta1 is None:
        delta1 = default_delta1(gamma)
    a, b = map(float, interval)
    if not 0 < a < b:
        raise InvalidParameters("zone interval must lie in (0, inf)")
    if not 2.0 / 3.0 < gamma < 1.0:
        raise InvalidParameters(f"gamma={gamma} outside (2/3, 1)")
    if not 0 < delta1 < gamma - 2.0 / 3.0:
        raise InvalidParameters(f"delta1={delta1} must lie in (0, gamma - 2/3)")
    lower = T ** (1 - 2 * gamma + 2 * delta1)
    upper = T ** (gamma - 1 - delta1)
    if not lower < upper or lower >= 1:
        raise InvalidParameters(f"empty zone at T={T}: lower={lower:.4g}, upper={upper:.4g}")
    return PCZone((a, b), float(T), float(gamma), float(delta1), lower, upper)


def truncate_potential(V: MatrixPotential, n: int) -> MatrixPotential:
    """V * chi_[0, 2**n]."""
    if n < 0:
        raise InvalidParameters("scale index must be nonnegative")
    Tn = 2.0 ** n
    if Tn >= V.T:
        return V
    return V.truncated(Tn, f"{V.label}|n={n}")


def shrink_interval(I_prev, n: int, upsilon: float) -> tuple:
    """Same center, length reduced by 2 * T_n**(-upsilon)."""
    a, b = map(float, I_prev)
    tau = 2.0 ** (-upsilon * n)
    if b - a - 2 * tau <= 0:
        raise IntervalExhausted(f"|I|={b - a:.6g} <= 2*tau_{n}={2 * tau:.6g}; start at a larger n0")
    return (a + tau, b - tau)


def limiting_interval(I, n0: int, upsilon: float) -> tuple:
    """Interval of center c_I shrunk by sum_{n > n0} tau_n on each side."""
    a, b = map(float, I)
    q = 2.0 ** (-upsilon)
    total = q ** (n0 + 1) / (1 - q)
    if b - a - 2 * total <= 0:
        raise IntervalExhausted("the shrink sum exhausts the interval")
    return (a + total, b - total)


def zone_to_shrink_ratio(n: int, gamma: float, delta1: float, upsilon: float) -> float:
    """L(T_n) / tau_n = T_n**(gamma - 1 - delta1 + upsilon)."""
    return 2.0 ** (n * (gamma - 1 - delta1 + upsilon))


def psi_infinity_norms(V: MatrixPotential, source: SourceProfile, ks, h: float) -> np.ndarray:
    out = np.empty(len(ks))
    for i, k in enumerate(ks):
        grid = RadialGrid.covering(h, V.T, k)
        out[i] = np.linalg.norm(solve_driven(V, source, k, grid).psi_infinity)
    return out


@dataclass(frozen=True)
class StabilityReport:
    n: int
    T: float
    zone: PCZone
    eps_T: float
    eps_prime: float
    samples: tuple = field(repr=False)
    excluded: tuple = ()

    def record(self) -> dict:
        return {"n": self.n, "T": self.T, "eps_T": self.eps_T, "eps_prime": self.eps_prime,
                "zone": [self.zone.lower, self.zone.upper], "excluded": [list(map(_c2l, e)) for e in self.excluded]}


def _c2l(z):
    return [float(np.real(z)), float(np.imag(z))]


def pc_stability_probe(V: MatrixPotential, source: SourceProfile, interval, n: int, h: float = 0.05,
                       nx: int = 5, ny: int = 4, delta1: Optional[float] = None,
                       floor: float = 1e-12) -> StabilityReport:
    """Empirical eps_T and eps'_n over PC_{I, T_{n-1}}.

    eps_T   = max |psi_n(T_n)|^2 / |psi_n(T_n/2)|^2 - 1   (potential V_(n))
    eps'_n  = max | |psi_n(inf)| / |psi_{n-1}(inf)| - 1 |

    Samples where |psi_{n-1}(inf)| or |psi_n(T_n/2)| falls below ``floor`` are
    excluded from the maxima and listed.
    """
    if V.decay is None:
        raise InvalidParameters("probe needs a potential with a decay envelope")
    gamma = V.decay[1]
    zone = pc_zone(interval, 2.0 ** (n - 1), gamma, delta1)
    Vn, Vm = truncate_potential(V, n), truncate_potential(V, n - 1)
    Tn = 2.0 ** n
    rows, excluded = [], []
    for k in zone.lattice(nx, ny):
        grid = RadialGrid.covering(h, Tn, k)
        sol = solve_driven(Vn, source, k, grid)
        # the solution for V_(n) at T_n/2 and its constant value beyond T_n
        half = sol.psi_norm_at(Tn / 2)
        full = float(np.linalg.norm(sol.psi_infinity))
        prev = float(np.linalg.norm(solve_driven(Vm, source, k, RadialGrid.covering(h, Vm.T, k)).psi_infinity))
        if half < floor or prev < floor:
            excluded.append((k,))
            continue
        rows.append((k, full ** 2 / half ** 2 - 1.0, full / prev - 1.0))
    eps_T = max((abs(r[1]) for r in rows), default=float("nan"))
    eps_p = max((abs(r[2]) for r in rows), default=float("nan"))
    return StabilityReport(n, Tn, zone, float(eps_T), float(eps_p), tuple(rows), tuple(excluded))


def fit_power(Ts, values) -> float:
    """Least-squares slope of log(values) against log(Ts)."""
    Ts, values = np.asarray(Ts, float), np.asarray(values, float)
    return float(np.polyfit(np.log(Ts), np.log(values), 1)[0])


@dataclass(frozen=True)
class StripFunctionals:
    A: float
    B: float
    ys: tuple
    l2: tuple
    logs: tuple
    flags: tuple


def strip_functionals(Vn: MatrixPotential, source: SourceProfile, interval, y_top: float, h: float,
                      y_points: int = 16, x_nodes: int = 64, y_floor: float = 1e-3) -> StripFunctionals:
    """Max over y of int |psi|^2 dx and min over y of int log|psi| dx.

    y runs over ``y_points`` log-spaced values in [y_floor * y_top, y_top]; x
    over ``x_nodes`` Simpson panels of the interval.
    """
    a, b = interval
    nx = x_nodes + 1 if x_nodes % 2 == 0 else x_nodes
    xs = np.linspace(a, b, nx)
    ys = np.geomspace(y_floor * y_top, y_top, y_points)
    l2, logs, flags = [], [], []
    for y in ys:
        norms = psi_infinity_norms(Vn, source, xs + 1j * y, h)
        l2.append(float(integrate.simpson(norms ** 2, x=xs)))
        if np.any(norms <= 0):
            flags.append(f"log_zero@y={y:.4g}")
            logs.append(-math.inf)
        else:
            logs.append(float(integrate.simpson(np.log(norms), x=xs)))
    return StripFunctionals(max(l2), min(logs), tuple(ys), tuple(l2), tuple(logs), tuple(flags))


@dataclass(frozen=True)
class IterationState:
    n: int
    T: float
    interval: tuple
    tau: float
    upsilon: float
    gamma: float
    delta1: float
    zone_lower: float
    zone_upper: float
    A: float
    B: float
    flags: tuple = ()
    eps_T: Optional[float] = None
    eps_prime_max: Optional[float] = None

    def __post_init__(self):
        if self.A < 0:
            raise InvalidParameters("A_n must be nonnegative")

    def record(self) -> dict:
        return {"n": self.n, "T_n": self.T, "ell": self.zone_lower, "L": self.zone_upper,
                "interval": list(self.interval), "A_n": self.A,
                "B_n": self.B if math.isfinite(self.B) else "-inf",
                "eps_T": self.eps_T, "eps_prime_max": self.eps_prime_max, "flags": list(self.flags)}

    def to_jsonl(self) -> str:
        return json.dumps(self.record(), sort_keys=True)


@dataclass(frozen=True)
class IterationSettings:
    h: float = 0.05
    y_points: int = 16
    x_nodes: int = 64
    probe: bool = False
    probe_nx: int = 5
    probe_ny: int = 4


def _state(V, source, n, interval, tau, upsilon, delta1, settings, extra_flags=()):
    gamma = V.decay[1]
    Tn = 2.0 ** n
    lower = Tn ** (1 - 2 * gamma + 2 * delta1)
    upper = Tn ** (gamma - 1 - delta1)
    Vn = truncate_potential(V, n)
    sf = strip_functionals(Vn, source, interval, min(upper, 1.0), settings.h, settings.y_points, settings.x_nodes)
    flags = list(extra_flags) + list(sf.flags)
    if upsilon >= upsilon_ceiling(gamma, delta1):
        flags.append("upsilon_outside_constraint")
    eps_T = eps_p = None
    if settings.probe and n >= 1:
        rep = pc_stability_probe(V, source, interval, n, settings.h, settings.probe_nx, settings.probe_ny, delta1)
        eps_T, eps_p = rep.eps_T, rep.eps_prime
        if rep.excluded:
            flags.append(f"probe_excluded={len(rep.excluded)}")
    return IterationState(n, Tn, tuple(interval), tau, upsilon, gamma, delta1, lower, upper,
                          sf.A, sf.B, tuple(flags), eps_T, eps_p)


def start_iteration(V: MatrixPotential, source: SourceProfile, interval, n0: int, upsilon: float,
                    delta1: Optional[float] = None, settings: IterationSettings = IterationSettings()) -> IterationState:
    """A_{n0}, B_{n0} over the starting interval I_(n0) = I."""
    if not V.usable_for_multiscale:
        raise InvalidParameters("multiscale iteration needs a decay exponent gamma in (2/3, 1)")
    if delta1 is None:
        delta1 = default_delta1(V.decay[1])
    pc_zone(interval, 2.0 ** n0, V.decay[1], delta1)  # validates the parameters
    return _state(V, source, n0, interval, 0.0, upsilon, delta1, settings)


def advance_scale(state: IterationState, V: MatrixPotential, source: SourceProfile,
                  settings: IterationSettings = IterationSettings()) -> IterationState:
    n = state.n + 1
    interval = shrink_interval(state.interval, n, state.upsilon)
    tau = 2.0 ** (-state.upsilon * n)
    return _state(V, source, n, interval, tau, state.upsilon, state.delta1, settings)


def run_iteration(V, source, interval, n0: int, n_max: int, upsilon: float, delta1=None,
                  settings: IterationSettings = IterationSettings()) -> list:
    states = [start_iteration(V, source, interval, n0, upsilon, delta1, settings)]
    while states[-1].n < n_max:
        states.append(advance_scale(states[-1], V, source, settings))
    return states
