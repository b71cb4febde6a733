"""Channel-truncated matrix potentials, source profiles and radial grids.

Everything here is immutable. Potentials and sources are *samplers*: callables
evaluated at arbitrary radii, so the same object can be used on many grids.
The solver consumes cell averages (:meth:`MatrixPotential.cell_average`,
:meth:`SourceProfile.cell_average`) which keep the scheme second order across
the jump of a truncated potential at ``r = T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from .errors import GridTooCoarse, InvalidParameters

# Gauss-Legendre rule used for every cell average.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(3)

SAMPLING_LIMIT = 0.5


@dataclass(frozen=True)
class ChannelSpace:
    """Truncation of l^2(N) to the first ``dimension`` channels."""

    dimension: int

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise InvalidParameters(f"channel dimension must be a positive integer, got {self.dimension!r}")


@dataclass(frozen=True)
class SpectralParameter:
    """Spectral parameter z = k**2, k the principal square root (Re k >= 0, Im k >= 0)."""

    k: complex

    def __post_init__(self):
        k = complex(self.k)
        if not np.isfinite(k):
            raise InvalidParameters("k must be finite")
        # closed first quadrant minus the origin; Re k = 0 only off the real axis
        if k.real < 0 or k.imag < 0 or (k.real == 0 and k.imag == 0):
            raise InvalidParameters(f"need k in the closed first quadrant, k != 0, got k={k}")
        object.__setattr__(self, "k", k)

    @classmethod
    def from_z(cls, z: complex) -> "SpectralParameter":
        # principal branch; Im z > 0 gives Re k > 0 and Im k > 0
        return cls(np.sqrt(complex(z)))

    @property
    def z(self) -> complex:
        return self.k * self.k

    @property
    def on_real_axis(self) -> bool:
        return self.k.imag == 0.0


def as_parameter(k) -> SpectralParameter:
    return k if isinstance(k, SpectralParameter) else SpectralParameter(k)


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid r_j = j*h, j = 0..J, with J*h = R."""

    step: float
    right_end: float

    def __post_init__(self):
        h, R = float(self.step), float(self.right_end)
        if not (h > 0 and R > 0):
            raise InvalidParameters("grid step and right end must be positive")
        J = round(R / h)
        if J < 2 or abs(J * h - R) > 1e-9 * R:
            raise InvalidParameters(f"R={R} is not a multiple of h={h}")
        object.__setattr__(self, "step", h)
        object.__setattr__(self, "right_end", J * h)

    @property
    def size(self) -> int:
        """Index J of the last node."""
        return round(self.right_end / self.step)

    @property
    def nodes(self) -> np.ndarray:
        return self.step * np.arange(self.size + 1)

    def index_of(self, r: float) -> int:
        j = round(r / self.step)
        if abs(j * self.step - r) > 1e-9 * max(1.0, abs(r)) or not 0 <= j <= self.size:
            raise InvalidParameters(f"r={r} is not a grid node")
        return j

    def first_index_at_or_after(self, r: float) -> int:
        return min(self.size, int(math.ceil(r / self.step - 1e-9)))

    def check_sampling(self, k) -> None:
        k = complex(getattr(k, "k", k))
        if self.step * abs(k) > SAMPLING_LIMIT:
            raise GridTooCoarse(f"h*|k| = {self.step * abs(k):.3g} exceeds {SAMPLING_LIMIT}")

    def refined(self, factor: int = 2) -> "RadialGrid":
        return RadialGrid(self.step / factor, self.right_end)

    @classmethod
    def covering(cls, h: float, support: float, k=None, margin: Optional[float] = None) -> "RadialGrid":
        """Smallest grid of step ``h`` reaching ``max(support, 1) + margin``.

        The default margin is two wavelengths, ``4*pi/|k|`` (one unit when no
        ``k`` is given). The radiation closure is exact anywhere beyond the
        support, so the margin only makes the constant tail of psi visible.
        """
        if margin is None:
            margin = 4 * math.pi / abs(complex(getattr(k, "k", k))) if k is not None else 1.0
            margin = min(margin, 64.0)
        target = max(float(support), 1.0) + max(margin, 2 * h)
        return cls(h, math.ceil(target / h - 1e-9) * h)


def _cell_average(func, centers, h, breaks, n_out):
    """(1/h) * integral of ``func`` over [c - h/2, c + h/2] for each center.

    ``func`` maps a 1-d radius array to an array of shape (len, *n_out).
    Sub-intervals are split at ``breaks`` so that jumps are integrated exactly
    up to the Gauss rule.
    """
    centers = np.asarray(centers, float)
    lo, hi = centers - h / 2, centers + h / 2
    out = np.zeros((len(centers),) + n_out, complex)
    cuts = sorted(b for b in breaks if np.isfinite(b))
    rows = np.arange(len(centers))
    # split each cell at every break inside it; most cells have none
    edges = [lo]
    for b in cuts:
        edges.append(np.clip(np.full_like(lo, b), lo, hi))
    edges.append(hi)
    edges = np.sort(np.stack(edges), axis=0)
    for a, b in zip(edges[:-1], edges[1:]):
        width = b - a
        keep = width > 0
        if not keep.any():
            continue
        a, b, width, idx = a[keep], b[keep], width[keep], rows[keep]
        mid, half = (a + b) / 2, width / 2
        for x, w in zip(_GL_X, _GL_W):
            vals = np.asarray(func(mid + half * x))
            out[idx] += (w * half).reshape((-1,) + (1,) * len(n_out)) * vals
    return out / h


@dataclass(frozen=True)
class MatrixPotential:
    """Hermitian N x N potential supported in [0, T].

    ``sampler`` maps a 1-d array of radii to an array of shape (len, N, N) and
    must vanish for r > T. ``breakpoints`` lists radii where the sampler may
    jump. ``decay`` is the envelope (lambda, gamma) when one is guaranteed.
    """

    channels: ChannelSpace
    support_bound: float
    sampler: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    decay: Optional[tuple] = None
    breakpoints: tuple = ()
    label: str = "potential"

    @property
    def N(self) -> int:
        return self.channels.dimension

    @property
    def T(self) -> float:
        return self.support_bound

    @property
    def decay_lambda(self):
        return None if self.decay is None else self.decay[0]

    @property
    def decay_gamma(self):
        return None if self.decay is None else self.decay[1]

    @property
    def usable_for_multiscale(self) -> bool:
        """The multiscale construction needs gamma in (2/3, 1)."""
        return self.decay is not None and 2.0 / 3.0 < self.decay[1] < 1.0

    def __call__(self, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, float))
        return np.asarray(self.sampler(r), complex).reshape(len(r), self.N, self.N)

    def cell_average(self, grid: RadialGrid) -> np.ndarray:
        return _cell_average(self, grid.nodes, grid.step, (self.T,) + tuple(self.breakpoints), (self.N, self.N))

    def sup_norm(self, r=None) -> float:
        """Max over ``r`` (default: a fine sample of [0, T]) of the operator norm."""
        if r is None:
            r = np.linspace(0.0, self.T, 4097)
        vals = self(r)
        if not np.any(vals):
            return 0.0
        return float(np.max(np.linalg.norm(vals, ord=2, axis=(1, 2))))

    def check_invariants(self, r) -> dict:
        """Hermiticity defect, envelope excess and support violation on ``r``."""
        r = np.atleast_1d(np.asarray(r, float))
        vals = self(r)
        herm = float(np.max(np.abs(vals - np.conj(np.swapaxes(vals, 1, 2))), initial=0.0))
        norms = np.linalg.norm(vals, ord=2, axis=(1, 2))
        report = {"hermitian_defect": herm,
                  "outside_support": float(np.max(norms[r > self.T], initial=0.0)),
                  "envelope_excess": None}
        if self.decay is not None:
            lam, gam = self.decay
            report["envelope_excess"] = float(np.max(norms - lam * (1 + r) ** (-gam)))
        return report

    def truncated(self, T_cut: float, label: Optional[str] = None) -> "MatrixPotential":
        """V * chi_[0, T_cut]."""
        inner = self.sampler
        N = self.N

        def sampler(r):
            vals = np.asarray(inner(r), complex).reshape(len(r), N, N)
            return np.where((r <= T_cut)[:, None, None], vals, 0.0)

        return MatrixPotential(self.channels, min(self.T, T_cut), sampler, self.decay,
                               tuple(b for b in self.breakpoints if b < T_cut) + (T_cut,),
                               label or f"{self.label}|T<={T_cut:g}")

    def scaled(self, c: float) -> "MatrixPotential":
        inner = self.sampler
        decay = None if self.decay is None else (abs(c) * self.decay[0], self.decay[1])
        return MatrixPotential(self.channels, self.T, lambda r: c * np.asarray(inner(r)), decay,
                               self.breakpoints, f"{c:g}*{self.label}")


def _check_hermitian_pattern(coupling, N):
    C = np.atleast_2d(np.asarray(coupling, complex))
    if C.shape != (N, N):
        raise InvalidParameters(f"coupling must be {N}x{N}, got {C.shape}")
    if not np.allclose(C, C.conj().T, rtol=0, atol=1e-12):
        raise InvalidParameters("coupling pattern must be Hermitian")
    return C


def zero_potential(N: int = 1, T: float = 1.0) -> MatrixPotential:
    channels = ChannelSpace(N)
    return MatrixPotential(channels, float(T), lambda r: np.zeros((len(r), N, N), complex),
                           (0.0, 0.8), (), "zero")


def make_power_law_potential(channels, lam: float, gamma: float, T: float, coupling=None) -> MatrixPotential:
    """V(r) = lam * (1 + r)**(-gamma) * chi_[0,T](r) * coupling.

    ``coupling`` must be Hermitian with unit operator norm (default: identity).
    A zero ``lam`` gives the zero potential.
    """
    if not isinstance(channels, ChannelSpace):
        channels = ChannelSpace(channels)
    N = channels.dimension
    if not 0.0 < gamma <= 1.0:
        raise InvalidParameters(f"gamma must lie in (0, 1], got {gamma}")
    if lam < 0:
        raise InvalidParameters("lambda must be nonnegative")
    if not T > 0:
        raise InvalidParameters("support bound T must be positive")
    C = np.eye(N, dtype=complex) if coupling is None else _check_hermitian_pattern(coupling, N)
    if lam > 0 and abs(np.linalg.norm(C, 2) - 1.0) > 1e-12:
        raise InvalidParameters("coupling pattern must have unit operator norm")
    lam, gamma, T = float(lam), float(gamma), float(T)

    def sampler(r):
        amp = np.where(r <= T, lam * (1.0 + r) ** (-gamma), 0.0)
        return amp[:, None, None] * C

    return MatrixPotential(channels, T, sampler, (lam, gamma), (), f"power_law(lam={lam:g},gamma={gamma:g},T={T:g})")


def harmonic_index(channel: int) -> tuple:
    """(l, m) of the 0-based ``channel``, ordered by l then m = -l..l."""
    l = math.isqrt(channel)
    return l, channel - l * l - l


def _sphere_rule(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    theta = np.arccos(x)
    phi = 2 * np.pi * np.arange(2 * order) / (2 * order)
    TH, PH = np.meshgrid(theta, phi, indexing="ij")
    W = np.repeat(w[:, None], 2 * order, axis=1) * (2 * np.pi / (2 * order))
    return TH.ravel(), PH.ravel(), W.ravel()


def _sph_harm(l, m, theta, phi):
    if hasattr(special, "sph_harm_y"):
        return special.sph_harm_y(l, m, theta, phi)
    return special.sph_harm(m, l, phi, theta)  # pragma: no cover - older scipy


def make_spherical_reduction_potential(channel_budget: int, kappa: float, T: float,
                                       angular_potential=None, quadrature_order: int = 24,
                                       radial_samples: Optional[Sequence[float]] = None) -> MatrixPotential:
    """Matrix potential of the spherical reduction restricted to ``channel_budget`` harmonics.

    Channel c (0-based) carries the harmonic Y_l^m with l = floor(sqrt(c)). Its
    centrifugal entry l(l+1)/r**2 is switched on once c + 1 <= floor(r**kappa).
    ``angular_potential(r, theta, phi)`` (scalar r, arrays of angles) is
    projected on the harmonics by Gauss-Legendre x trapezoid quadrature on the
    sphere. Everything is cut off for r > T. No decay envelope is claimed.
    """
    if not kappa > 0:
        raise InvalidParameters("kappa must be positive")
    if not T > 0:
        raise InvalidParameters("T must be positive")
    budget = int(channel_budget)
    needed = int(math.floor(T ** kappa + 1e-12))
    if budget < max(needed, 1):
        raise InvalidParameters(f"channel budget {budget} cannot hold the {needed} harmonics active at r=T")
    channels = ChannelSpace(budget)
    ls = np.array([harmonic_index(c)[0] for c in range(budget)])
    centrifugal = ls * (ls + 1.0)
    # radius at which channel c is switched on: floor(r**kappa) >= c+1
    thresholds = (np.arange(budget) + 1.0) ** (1.0 / kappa)

    if angular_potential is not None:
        TH, PH, W = _sphere_rule(quadrature_order)
        Y = np.stack([_sph_harm(*harmonic_index(c), TH, PH) for c in range(budget)])  # (budget, q)
        YW = Y.conj() * W

    def sampler(r):
        r = np.asarray(r, float)
        out = np.zeros((len(r), budget, budget), complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            active = np.floor(r[:, None] ** kappa + 1e-12) >= (np.arange(budget) + 1)[None, :]
            diag = np.where(active, centrifugal[None, :] / np.maximum(r[:, None], 1e-300) ** 2, 0.0)
        idx = np.arange(budget)
        out[:, idx, idx] = diag
        if angular_potential is not None:
            for i, ri in enumerate(r):
                if ri <= T:
                    vals = np.asarray(angular_potential(ri, TH, PH), float) * np.ones_like(TH)
                    out[i] += (YW * vals) @ Y.T
        out[r > T] = 0.0
        return out

    breaks = tuple(float(t) for t in thresholds if t < T) + (float(T),)
    return MatrixPotential(channels, float(T), sampler, None, breaks,
                           f"spherical(budget={budget},kappa={kappa:g},T={T:g})")


@dataclass(frozen=True)
class SourceProfile:
    """Source F(r) supported in [0, 1]; ``profile`` maps radii to (len, N) arrays."""

    channels: ChannelSpace
    profile: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    label: str = "source"
    breakpoints: tuple = (0.0, 1.0)

    @property
    def N(self) -> int:
        return self.channels.dimension

    def __call__(self, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, float))
        vals = np.asarray(self.profile(r), complex).reshape(len(r), self.N)
        return np.where(((r >= 0) & (r <= 1))[:, None], vals, 0.0)

    def cell_average(self, grid: RadialGrid) -> np.ndarray:
        return _cell_average(self, grid.nodes, grid.step, self.breakpoints, (self.N,))

    def norm_squared(self, order: int = 64) -> float:
        x, w = np.polynomial.legendre.leggauss(order)
        r = 0.5 * (x + 1.0)
        return float(0.5 * np.sum(w * np.sum(np.abs(self(r)) ** 2, axis=1)))

    def scaled(self, c: complex) -> "SourceProfile":
        inner = self.profile
        return SourceProfile(self.channels, lambda r: c * np.asarray(inner(r)), f"{c}*{self.label}", self.breakpoints)


def make_indicator_source(channels) -> SourceProfile:
    """F = (chi_[0,1], 0, ...)."""
    if not isinstance(channels, ChannelSpace):
        channels = ChannelSpace(channels)
    N = channels.dimension

    def profile(r):
        out = np.zeros((len(r), N), complex)
        out[:, 0] = 1.0
        return out

    return SourceProfile(channels, profile, "indicator")


def make_smooth_source(channels) -> SourceProfile:
    """F = (sqrt(30) r (1 - r), 0, ...), unit L^2 norm on [0, 1]."""
    if not isinstance(channels, ChannelSpace):
        channels = ChannelSpace(channels)
    N = channels.dimension
    c = math.sqrt(30.0)

    def profile(r):
        out = np.zeros((len(r), N), complex)
        out[:, 0] = c * r * (1.0 - r)
        return out

    return SourceProfile(channels, profile, "smooth")
