"""Spectral densities from boundary data, Stieltjes inversion and entropy integrals."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import InvalidParameters
from .operator_model import MatrixPotential, RadialGrid, SourceProfile, SpectralParameter
from .resolvent import solve_driven


@dataclass(frozen=True)
class DensitySample:
    k: float
    E: float
    density: float
    psi_norm_sq: float

    def row(self):
        return (self.k, self.E, self.density, self.psi_norm_sq)


def density_via_boundary(potential: MatrixPotential, source: SourceProfile, k: float,
                         grid: RadialGrid) -> DensitySample:
    """sigma_F'(k^2) = k/pi * |psi(inf, k)|^2 from a real-axis solve."""
    k = float(k)
    if not k > 0:
        raise InvalidParameters("boundary density needs real k > 0")
    sol = solve_driven(potential, source, k, grid)
    nsq = float(np.vdot(sol.psi_infinity, sol.psi_infinity).real)
    return DensitySample(k, k * k, k / math.pi * nsq, nsq)


def resolvent_form(potential, source, z: complex, grid: RadialGrid) -> complex:
    """<R_z F, F> with the discrete inner product sum_j h <u_j, F_j>."""
    k = SpectralParameter.from_z(z)
    sol = solve_driven(potential, source, k, grid)
    Fbar = source.cell_average(grid)
    return complex(grid.step * np.sum(sol.u * np.conj(Fbar)))


@dataclass(frozen=True)
class StieltjesResult:
    E: float
    etas: tuple
    values: tuple
    extrapolated: float
    converged: bool
    spread: float


def density_via_stieltjes(potential, source, E: float, grid: RadialGrid,
                          etas: Sequence[float] = (1e-3, 5e-4, 2.5e-4), rtol: float = 1e-2) -> StieltjesResult:
    """pi^{-1} Im <R_{E+i eta} F, F> on a ratio-2 eta sequence, Richardson-extrapolated to eta = 0.

    ``converged`` is False when the last two first-level extrapolants differ by
    more than ``rtol`` relative (or absolute, for tiny values); this is a flag,
    not an error.
    """
    etas = tuple(float(e) for e in etas)
    if len(etas) != 3 or any(e <= 0 for e in etas):
        raise InvalidParameters("need three positive etas")
    if not all(abs(a / b - 2.0) < 1e-12 for a, b in zip(etas[:-1], etas[1:])):
        raise InvalidParameters("eta sequence must halve at each step")
    g = [resolvent_form(potential, source, E + 1j * eta, grid).imag / math.pi for eta in etas]
    r1 = 2 * g[1] - g[0]
    r2 = 2 * g[2] - g[1]
    extrap = (8 * g[2] - 6 * g[1] + g[0]) / 3.0
    spread = abs(r2 - r1)
    converged = spread <= rtol * max(abs(extrap), 1e-12)
    return StieltjesResult(float(E), etas, tuple(g), float(extrap), bool(converged), float(spread))


@dataclass(frozen=True)
class MassReport:
    window: tuple
    eta: float
    nodes: int
    mass: float
    tail_estimate: float

    @property
    def estimate_with_tail(self) -> float:
        return self.mass + self.tail_estimate


def total_mass_check(potential, source, window=(-1.0, 400.0), eta: float = 1e-3, nodes: int = 4001,
                     h: float = 0.01) -> MassReport:
    """Integrate pi^{-1} Im <R_{E+i eta}F, F> over ``window`` by composite Simpson.

    The tail beyond the window is estimated from a c*E^{-3/2} fit (the decay
    for a source with a jump) averaged over the last 2*pi in k, one full
    oscillation for a source supported in [0, 1]. The fit is a report, not a
    correction.
    """
    if nodes % 2 == 0:
        nodes += 1
    E = np.linspace(window[0], window[1], nodes)
    vals = np.empty(nodes)
    for i, e in enumerate(E):
        k = np.sqrt(complex(e + 1j * eta))
        step = min(h, 0.25 / abs(k))
        grid = RadialGrid.covering(step, potential.T, k)
        vals[i] = resolvent_form(potential, source, e + 1j * eta, grid).imag / math.pi
    mass = float(integrate.simpson(vals, x=E))
    tail_est = 0.0
    if window[1] > 0:
        kmax = math.sqrt(window[1])
        tail = (E > 0) & (np.sqrt(np.maximum(E, 0)) >= kmax - 2 * math.pi)
        ke = np.sqrt(E[tail])
        # average of E^{3/2} sigma' in dk over the last period
        c = float(integrate.trapezoid(vals[tail] * E[tail] ** 1.5, x=ke) / max(ke[-1] - ke[0], 1e-300))
        tail_est = 2 * c / kmax
    return MassReport(tuple(window), eta, nodes, mass, tail_est)


@dataclass(frozen=True)
class EntropyReport:
    interval: tuple
    variable: str
    nodes: int
    entropy: float
    log_plus: float
    log_minus: float
    zero_nodes: tuple = ()
    samples: tuple = field(default=(), repr=False)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.entropy)

    def record(self) -> dict:
        return {"interval": list(self.interval), "variable": self.variable, "nodes": self.nodes,
                "entropy": _json_float(self.entropy), "log_plus": _json_float(self.log_plus),
                "log_minus": _json_float(self.log_minus), "zero_nodes": list(self.zero_nodes)}

    def to_jsonl(self) -> str:
        return json.dumps(self.record(), sort_keys=True)


def _json_float(x):
    return x if math.isfinite(x) else ("-inf" if x < 0 else "inf")


def entropy_integral(potential, source, interval, nodes: int = 65, h: float = 1e-3,
                     variable: str = "k", zero_floor: float = 1e-10) -> EntropyReport:
    """Composite Simpson value of the log-density integral over ``interval`` in k.

    With ``variable="E"`` the integral is over E = k^2 (integrand log sigma' * 2k
    in k). A node whose density falls below ``zero_floor`` times the largest
    density on the lattice makes the entropy -inf; those nodes are listed.
    """
    a, b = map(float, interval)
    if not 0 < a < b:
        raise InvalidParameters("entropy interval must lie in (0, inf)")
    if variable not in ("k", "E"):
        raise InvalidParameters("variable must be 'k' or 'E'")
    if nodes % 2 == 0:
        nodes += 1
    ks = np.linspace(a, b, nodes)
    samples = []
    for k in ks:
        grid = RadialGrid.covering(h, potential.T, k)
        samples.append(density_via_boundary(potential, source, k, grid))
    dens = np.array([s.density for s in samples])
    zero = np.nonzero(dens <= zero_floor * dens.max())[0]
    weight = 2 * ks if variable == "E" else np.ones_like(ks)
    if zero.size:
        with np.errstate(divide="ignore"):
            logs = np.log(np.maximum(dens, 0.0))
        lp = float(integrate.simpson(np.where(np.isfinite(logs), np.maximum(logs, 0), 0) * weight, x=ks))
        return EntropyReport((a, b), variable, nodes, -math.inf, lp, -math.inf,
                             tuple(float(ks[i]) for i in zero), tuple(samples))
    logs = np.log(dens)
    lp = float(integrate.simpson(np.maximum(logs, 0.0) * weight, x=ks))
    lm = float(integrate.simpson(np.minimum(logs, 0.0) * weight, x=ks))
    return EntropyReport((a, b), variable, nodes, lp + lm, lp, lm, (), tuple(samples))


def free_density(k):
    """Closed-form density for V = 0 and F = chi_[0,1]: k/pi * ((1 - cos k)/k^2)^2."""
    k = np.asarray(k, float)
    return k / np.pi * ((1 - np.cos(k)) / k ** 2) ** 2


def write_density_csv(path, samples) -> None:
    with open(path, "w") as fh:
        fh.write("k,E,density,psi_norm_sq\n")
        for s in samples:
            fh.write(",".join(repr(float(v)) for v in s.row()) + "\n")
