"""Driven solutions, gauge transform and Green's columns on a radial grid.

The equation -u'' + V u = k^2 u + F, u(0) = 0, is discretized with centered
second differences and solved as one banded (block tridiagonal) system.

Two details keep the free region exact at the discrete level:

* the spectral parameter enters as z_h = (2 - 2 cos(kh)) / h^2, so discrete
  plane waves are exactly e^{ikr_j};
* the right end is closed with the ghost node u_{J+1} = e^{ikh} u_J, the
  discrete form of u'(R) = ik u(R).

As a result psi = e^{-ikr} u is constant to machine precision beyond the
support, and for V = 0 the discrete kernel equals G0 * kh / sin(kh).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import InvalidParameters, SingularSystem
from .operator_model import (MatrixPotential, RadialGrid, SourceProfile, SpectralParameter, as_parameter)

# relative tolerance used for tail constancy of psi
SOLVER_RTOL = 1e-10


def discrete_spectral_parameter(k: complex, h: float) -> complex:
    return (2.0 - 2.0 * np.cos(k * h)) / h ** 2


def _assemble(Vbar: np.ndarray, k: complex, h: float) -> np.ndarray:
    """Banded storage (l = u = N) of the operator on nodes 1..J."""
    J = Vbar.shape[0] - 1
    N = Vbar.shape[1]
    n = J * N
    ab = np.zeros((2 * N + 1, n), complex)
    zh = discrete_spectral_parameter(k, h)
    blocks = Vbar[1:]  # (J, N, N)
    chan = np.tile(np.arange(N), J)
    for d in range(-(N - 1), N):
        # entry a[i, i+d] lives at ab[N - d, i + d]
        vals = np.zeros(n, complex)
        ok = (chan + d >= 0) & (chan + d < N)
        rows = np.nonzero(ok)[0]
        vals[rows] = blocks[rows // N, chan[rows], chan[rows] + d]
        if d == 0:
            vals += 2.0 / h ** 2 - zh
        cols = np.arange(n) + d
        good = (cols >= 0) & (cols < n)
        ab[N - d, cols[good]] = vals[good]
    ab[0, N:] = -1.0 / h ** 2      # a[i, i+N]
    ab[2 * N, :-N] = -1.0 / h ** 2  # a[i+N, i]
    # outgoing closure at the last node: -u_{J-1} + (2 - e^{ikh}) u_J
    ab[N, n - N:] -= np.exp(1j * k * h) / h ** 2
    return ab


def _solve(potential, k, grid, rhs):
    grid.check_sampling(k)
    if grid.right_end < max(potential.T, 1.0):
        raise InvalidParameters(f"grid ends at R={grid.right_end} inside the support max(T,1)={max(potential.T, 1.0)}")
    Vbar = potential.cell_average(grid)
    ab = _assemble(Vbar, k, grid.step)
    N = potential.N
    try:
        x = linalg.solve_banded((N, N), ab, rhs, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularSystem(f"singular system at k={k}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem(f"non-finite solution at k={k}")
    return x


@dataclass(frozen=True)
class WaveSolution:
    grid: RadialGrid
    k: SpectralParameter
    u: np.ndarray
    potential: MatrixPotential = field(repr=False)
    source: Optional[SourceProfile] = field(default=None, repr=False)
    psi: Optional[np.ndarray] = field(default=None, repr=False)
    psi_infinity: Optional[np.ndarray] = None
    match_index: int = -1

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def support_end(self) -> float:
        return max(self.potential.T, 1.0)

    def psi_norm_at(self, r: float) -> float:
        """Norm of psi at the first node at or after ``r``."""
        j = self.grid.first_index_at_or_after(r)
        return float(np.linalg.norm(self.psi[j]))

    def tail_defect(self) -> float:
        """max_{r_j >= support} |psi_j - psi_inf| / |psi_inf|."""
        tail = self.psi[self.match_index:]
        scale = max(np.linalg.norm(self.psi_infinity), 1e-300)
        return float(np.max(np.linalg.norm(tail - self.psi_infinity, axis=1)) / scale)

    def residual(self) -> float:
        """Max over interior nodes of |-D2 u + V u - k^2 u - F|.

        This is O(h^2), not round-off: the scheme uses z_h in place of k^2.
        """
        h = self.grid.step
        Vr = self.potential(self.r)
        F = self.source(self.r) if self.source is not None else 0.0
        u = self.u
        d2 = (u[2:] - 2 * u[1:-1] + u[:-2]) / h ** 2
        res = -d2 + np.einsum("jab,jb->ja", Vr[1:-1], u[1:-1]) - self.k.z * u[1:-1]
        res = res - (F[1:-1] if self.source is not None else 0.0)
        # skip nodes next to a jump of V or F
        skip = np.zeros(len(res), bool)
        for b in (1.0, self.potential.T) + tuple(self.potential.breakpoints):
            j = b / h
            skip |= np.abs(np.arange(1, len(res) + 1) - j) <= 1.0
        return float(np.max(np.linalg.norm(res[~skip], axis=1), initial=0.0))

    def to_csv(self, path) -> None:
        """Columns r, then Re/Im of every channel of u, then of psi."""
        N = self.u.shape[1]
        header = ["r"] + [f"{p}_{c}_{part}" for p in ("u", "psi") for c in range(1, N + 1) for part in ("re", "im")]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for j, r in enumerate(self.r):
                row = [repr(float(r))]
                for arr in (self.u, self.psi):
                    for c in range(N):
                        row += [repr(float(arr[j, c].real)), repr(float(arr[j, c].imag))]
                w.writerow(row)


def solve_driven(potential: MatrixPotential, source: SourceProfile, k, grid: RadialGrid) -> WaveSolution:
    """Solve -u'' + V u = k^2 u + F with u(0) = 0 and the outgoing closure.

    Returns the gauge-transformed solution; ``psi_infinity`` is psi at the
    first node at or beyond max(T, 1).
    """
    k = as_parameter(k)
    if source.N != potential.N:
        raise InvalidParameters("source and potential live in different channel spaces")
    rhs = source.cell_average(grid)[1:].ravel()
    x = _solve(potential, k.k, grid, rhs)
    u = np.vstack([np.zeros((1, potential.N), complex), x.reshape(-1, potential.N)])
    return gauge_transform(WaveSolution(grid, k, u, potential, source))


def gauge_transform(solution: WaveSolution) -> WaveSolution:
    """Fill psi_j = e^{-ik r_j} u_j and psi_infinity."""
    k = solution.k.k
    psi = np.exp(-1j * k * solution.r)[:, None] * solution.u
    j = solution.grid.first_index_at_or_after(solution.support_end)
    return replace(solution, psi=psi, psi_infinity=psi[j].copy(), match_index=j)


def gauge_residual(solution: WaveSolution, start: float = 0.0) -> float:
    """Max of |-psi'' - 2ik psi' + V psi - F e^{-ikr}| at interior nodes beyond ``start``.

    Centered differences; the value is an O(h^2) discretization residual.
    """
    h, k = solution.grid.step, solution.k.k
    r, psi = solution.r, solution.psi
    d1 = (psi[2:] - psi[:-2]) / (2 * h)
    d2 = (psi[2:] - 2 * psi[1:-1] + psi[:-2]) / h ** 2
    Vr = solution.potential(r[1:-1])
    F = solution.source(r[1:-1]) if solution.source is not None else np.zeros_like(psi[1:-1])
    res = -d2 - 2j * k * d1 + np.einsum("jab,jb->ja", Vr, psi[1:-1]) - F * np.exp(-1j * k * r[1:-1])[:, None]
    mask = r[1:-1] >= start
    for b in (1.0, solution.potential.T) + tuple(solution.potential.breakpoints):
        mask &= np.abs(r[1:-1] - b) > 1.5 * h
    return float(np.max(np.linalg.norm(res[mask], axis=1), initial=0.0))


@dataclass(frozen=True)
class GreensColumn:
    grid: RadialGrid
    k: SpectralParameter
    source_node: int
    values: np.ndarray  # (J+1, N, N)

    @property
    def rho(self) -> float:
        return self.source_node * self.grid.step

    def at(self, r: float) -> np.ndarray:
        return self.values[self.grid.index_of(r)]

    def norms(self) -> np.ndarray:
        """Largest singular value of each N x N block."""
        return np.linalg.norm(self.values, ord=2, axis=(1, 2))


def greens_column(potential: MatrixPotential, k, rho: float, grid: RadialGrid) -> GreensColumn:
    """G(., rho, k^2) from a discrete delta of weight 1/h at the node rho."""
    k = as_parameter(k)
    N = potential.N
    j0 = grid.index_of(rho)
    if j0 == 0:
        return GreensColumn(grid, k, 0, np.zeros((grid.size + 1, N, N), complex))
    rhs = np.zeros((grid.size * N, N), complex)
    rhs[(j0 - 1) * N + np.arange(N), np.arange(N)] = 1.0 / grid.step
    x = _solve(potential, k.k, grid, rhs)
    vals = np.concatenate([np.zeros((1, N, N), complex), x.reshape(grid.size, N, N)])
    return GreensColumn(grid, k, j0, vals)


def free_green(r, rho, k) -> np.ndarray:
    """G0(r, rho, k^2) = (i/2k)(e^{ik|r-rho|} - e^{ik(r+rho)})."""
    k = complex(getattr(k, "k", k))
    r, rho = np.asarray(r, float), np.asarray(rho, float)
    return 1j / (2 * k) * (np.exp(1j * k * np.abs(r - rho)) - np.exp(1j * k * (r + rho)))


@dataclass(frozen=True)
class ConvergenceReport:
    steps: tuple
    values: tuple
    differences: tuple
    orders: tuple

    @property
    def order(self) -> float:
        return self.orders[-1] if self.orders else float("nan")


def richardson_check(potential: MatrixPotential, source: SourceProfile, k, grid: RadialGrid,
                     levels: int = 3) -> ConvergenceReport:
    """psi(inf) on h, h/2, ..., successive differences and log2 ratios."""
    k = as_parameter(k)
    steps, vals = [], []
    g = grid
    for _ in range(levels):
        sol = solve_driven(potential, source, k, g)
        steps.append(g.step)
        vals.append(sol.psi_infinity)
        g = g.refined(2)
    diffs = [float(np.linalg.norm(a - b)) for a, b in zip(vals[:-1], vals[1:])]
    orders = [math.log2(a / b) if b > 0 and a > 0 else float("nan") for a, b in zip(diffs[:-1], diffs[1:])]
    return ConvergenceReport(tuple(steps), tuple(vals), tuple(diffs), tuple(orders))
