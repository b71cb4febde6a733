"""Harmonic measure of strips, rectangles and thin trapezoids, plus subharmonic checks.

Three routes to the harmonic measure omega_k:

* the closed-form density of the infinite strip ``0 < Im k < eps``;
* walk on spheres (Monte Carlo, seeded);
* a P1 finite-element solve on a structured mesh. The discrete harmonic
  measure of boundary node i seen from a pole p is ``-(K_BI K_II^{-1} e_p)_i``.
  These masses are nonnegative and sum to one exactly. On the rectangle this
  is the five-point scheme and mass / dual length is the one-sided normal
  difference of the Green's function.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, sparse
from scipy.sparse import linalg as splinalg

from .errors import InvalidParameters, MeshTooCoarse

# ----------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class Cylinder:
    """Infinite strip 0 < Im k < eps."""

    eps: float
    kind = "cylinder"
    piece_names = ("lower", "upper")

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidParameters("strip height must be positive")

    @property
    def scale(self) -> float:
        return self.eps

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z)
        return (z.imag > 0) & (z.imag < self.eps)

    def distance(self, z) -> np.ndarray:
        y = np.asarray(z).imag
        return np.minimum(y, self.eps - y)

    def closest(self, z):
        z = np.asarray(z)
        upper = z.imag > self.eps / 2
        pts = np.where(upper, z.real + 1j * self.eps, z.real + 0j)
        return upper.astype(int), pts

    def truncated(self, half_width: float, center: float = 0.0) -> "Rectangle":
        return Rectangle(center - half_width, center + half_width, self.eps)

    def describe(self) -> str:
        return f"cylinder(eps={self.eps:g})"


class _Polygon:
    """Quadrilateral with horizontal bases; ``left(y)``/``right(y)`` are its sides."""

    piece_names = ("lower", "right", "upper", "left")

    def vertices(self):
        h = self.height
        return [complex(self.left(0), 0), complex(self.right(0), 0),
                complex(self.right(h), h), complex(self.left(h), h)]

    def edges(self):
        v = self.vertices()
        return [(name, v[i], v[(i + 1) % 4]) for i, name in enumerate(self.piece_names)]

    @property
    def scale(self) -> float:
        v = self.vertices()
        return max(abs(a - b) for a in v for b in v)

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z)
        y = z.imag
        return (y > 0) & (y < self.height) & (z.real > self.left(y)) & (z.real < self.right(y))

    def _edge_distances(self, z):
        z = np.asarray(z, complex)
        ds, pts = [], []
        for _, a, b in self.edges():
            d = b - a
            t = np.clip(((z - a) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
            p = a + t * d
            ds.append(np.abs(z - p))
            pts.append(p)
        return np.stack(ds), np.stack(pts)

    def distance(self, z) -> np.ndarray:
        return self._edge_distances(z)[0].min(axis=0)

    def closest(self, z):
        ds, pts = self._edge_distances(z)
        idx = ds.argmin(axis=0)
        return idx, pts[idx, np.arange(ds.shape[1])]


@dataclass(frozen=True)
class Rectangle(_Polygon):
    """R = (x0, x1) x (0, height)."""

    x0: float
    x1: float
    height: float
    kind = "rectangle"

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.height > 0):
            raise InvalidParameters("degenerate rectangle")

    def left(self, y):
        return self.x0 + 0 * np.asarray(y, float)

    def right(self, y):
        return self.x1 + 0 * np.asarray(y, float)

    def describe(self) -> str:
        return f"rectangle({self.x0:g},{self.x1:g};{self.height:g})"


@dataclass(frozen=True)
class Trapezoid(_Polygon):
    """Isosceles trapezoid over the lower base [a, b], height eps, base angles pi/beta."""

    a: float
    b: float
    eps: float
    beta: float
    kind = "trapezoid"

    def __post_init__(self):
        if not self.beta > 2:
            raise InvalidParameters("trapezoid needs beta > 2")
        if not self.eps > 0 or not self.b - self.a > 2 * self.inset:
            raise InvalidParameters("degenerate trapezoid")

    @property
    def height(self) -> float:
        return self.eps

    @property
    def inset(self) -> float:
        """Horizontal run of a leg, eps * cot(pi / beta)."""
        return self.eps / math.tan(math.pi / self.beta)

    def left(self, y):
        return self.a + np.asarray(y, float) / math.tan(math.pi / self.beta)

    def right(self, y):
        return self.b - np.asarray(y, float) / math.tan(math.pi / self.beta)

    def regime_flags(self, delta: float) -> dict:
        return {"beta>2": self.beta > 2, "eps<delta^2": self.eps < delta ** 2, "delta<<1": delta <= 0.5}

    def describe(self) -> str:
        return f"trapezoid([{self.a:g},{self.b:g}];eps={self.eps:g},beta={self.beta:g})"


def piece_index(domain, name: str) -> int:
    try:
        return domain.piece_names.index(name)
    except ValueError:
        raise InvalidParameters(f"{domain.kind} has no piece {name!r}") from None


@dataclass(frozen=True)
class Piece:
    """A boundary piece, optionally restricted to lo <= Re xi <= hi. ``name='all'`` is the whole boundary."""

    name: str
    lo: float = -math.inf
    hi: float = math.inf

    def label(self) -> str:
        if math.isinf(self.lo) and math.isinf(self.hi):
            return self.name
        return f"{self.name}[{self.lo:g},{self.hi:g}]"


def as_piece(p) -> Piece:
    if isinstance(p, Piece):
        return p
    if isinstance(p, str):
        return Piece(p)
    return Piece(*p)


# ----------------------------------------------------------------------------
# exact strip


def cylinder_density(eps: float, pole: complex, t, side: str = "lower"):
    """Density of the strip's harmonic measure at t on the lower (or upper) side."""
    x, y = pole.real, pole.imag
    if not 0 < y < eps:
        raise InvalidParameters("pole must lie inside the strip")
    t = np.asarray(t, float)
    a = math.pi * y / eps
    c = math.cos(a) if side == "lower" else -math.cos(a)
    # 1 / (cosh u - c) written with e^{-|u|} so large |u| underflows quietly
    e = np.exp(-np.abs(math.pi * (x - t) / eps))
    return (1.0 / (2 * eps)) * math.sin(a) * 2 * e / (1 + e * e - 2 * c * e)


def cylinder_mass(eps: float, pole: complex, lo: float, hi: float, side: str = "lower") -> float:
    """Closed-form integral of the strip density over [lo, hi]."""
    x, y = pole.real, pole.imag
    a = math.pi * (y if side == "lower" else eps - y) / eps
    cot = 1.0 / math.tan(a / 2)

    def prim(t):
        if math.isinf(t):
            return math.copysign(math.atan(cot), t) / math.pi
        return math.atan(math.tanh(math.pi * (t - x) / (2 * eps)) * cot) / math.pi

    return prim(hi) - prim(lo)


# ----------------------------------------------------------------------------
# estimates


@dataclass(frozen=True)
class HarmonicMeasureEstimate:
    domain: object
    pole: complex
    method: str
    masses: dict
    errors: dict = field(default_factory=dict)
    densities: dict = field(default_factory=dict, repr=False)
    info: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(sum(self.masses.values()))


@dataclass(frozen=True)
class WalkResult:
    """Exit points of a walk-on-spheres run."""

    domain: object
    pole: complex
    exit_piece: np.ndarray
    exit_point: np.ndarray
    unabsorbed: int
    steps: int
    shell: float

    @property
    def walkers(self) -> int:
        return len(self.exit_piece)

    def mass(self, piece) -> tuple:
        """(estimate, binomial standard error) of omega(piece)."""
        piece = as_piece(piece)
        n = self.walkers
        if piece.name == "all":
            hit = self.exit_piece >= 0
        else:
            hit = self.exit_piece == piece_index(self.domain, piece.name)
        hit &= (self.exit_point.real >= piece.lo) & (self.exit_point.real <= piece.hi)
        p = float(np.count_nonzero(hit)) / n
        return p, math.sqrt(max(p * (1 - p), 0.0) / n)


def walk_on_spheres(domain, pole: complex, walkers: int = 100_000, seed: int = 0,
                    shell: Optional[float] = None, max_steps: int = 100_000) -> WalkResult:
    """Run ``walkers`` walks from ``pole`` until they are within ``shell`` of the boundary."""
    if not domain.contains(np.array([pole]))[0]:
        raise InvalidParameters("pole must be strictly inside the domain")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    shell = 1e-6 * domain.scale if shell is None else shell
    z = np.full(walkers, complex(pole))
    piece = np.full(walkers, -1)
    point = np.full(walkers, np.nan + 0j)
    active = np.arange(walkers)
    steps = 0
    while active.size and steps < max_steps:
        d = domain.distance(z[active])
        done = d <= shell
        if done.any():
            idx = active[done]
            piece[idx], point[idx] = domain.closest(z[idx])
            active, d = active[~done], d[~done]
        if not active.size:
            break
        theta = rng.uniform(0.0, 2 * math.pi, active.size)
        z[active] += d * np.exp(1j * theta)
        steps += 1
    return WalkResult(domain, complex(pole), piece, point, int(active.size), steps, shell)


def measure_by_walk(domain, pole: complex, piece, walkers: int = 100_000, seed: int = 0,
                    shell: Optional[float] = None, max_steps: int = 100_000) -> HarmonicMeasureEstimate:
    piece = as_piece(piece)
    res = walk_on_spheres(domain, pole, walkers, seed, shell, max_steps)
    m, se = res.mass(piece)
    return HarmonicMeasureEstimate(domain, complex(pole), "monte_carlo", {piece.label(): m}, {piece.label(): se},
                                   info={"walkers": walkers, "unabsorbed": res.unabsorbed, "shell": res.shell,
                                         "seed": seed})


# ----------------------------------------------------------------------------
# finite elements


class MeshSolver:
    """P1 elements on the structured mesh of a rectangle or trapezoid.

    Node (i, j) sits at s = i/nx across the domain and y = j*height/ny.
    """

    def __init__(self, domain, nx: int, ny: int):
        if isinstance(domain, Cylinder):
            raise InvalidParameters("truncate the strip to a rectangle first")
        if ny < 8:
            raise MeshTooCoarse(f"{ny} cells across the height; need at least 8")
        self.domain, self.nx, self.ny = domain, int(nx), int(ny)
        s = np.arange(nx + 1) / nx
        y = domain.height * np.arange(ny + 1) / ny
        L, R = domain.left(y), domain.right(y)
        self.X = L[None, :] + s[:, None] * (R - L)[None, :]
        self.Y = np.broadcast_to(y[None, :], self.X.shape).copy()
        self.Z = (self.X + 1j * self.Y).ravel()
        idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
        self.idx = idx
        a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
        c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
        self.tris = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
        self.K = self._stiffness()
        # boundary classification: corners go to the horizontal sides
        I, J = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
        side = np.full(I.shape, -1)
        side[I == 0] = 3
        side[I == nx] = 1
        side[J == 0] = 0
        side[J == ny] = 2
        self.side = side.ravel()
        self.boundary = np.nonzero(self.side >= 0)[0]
        self.interior = np.nonzero(self.side < 0)[0]
        self.dual = self._dual_lengths()
        K = self.K.tocsr()
        self.K_II = K[self.interior][:, self.interior].tocsc()
        self.K_BI = K[self.boundary][:, self.interior].tocsr()
        self.K_IB = K[self.interior][:, self.boundary].tocsr()
        self._lu = splinalg.splu(self.K_II)
        self._pos_in_interior = np.full(len(self.Z), -1)
        self._pos_in_interior[self.interior] = np.arange(len(self.interior))

    @property
    def h(self) -> float:
        return self.domain.height / self.ny

    def _stiffness(self):
        P = self.Z[self.tris]
        x, y = P.real, P.imag
        bx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], 1)
        cx = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], 1)
        area = 0.5 * (bx[:, 0] * cx[:, 1] - bx[:, 1] * cx[:, 0])
        Ke = (bx[:, :, None] * bx[:, None, :] + cx[:, :, None] * cx[:, None, :]) / (4 * area[:, None, None])
        rows = np.repeat(self.tris, 3, axis=1).ravel()
        cols = np.tile(self.tris, (1, 3)).ravel()
        n = len(self.Z)
        return sparse.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    def _dual_lengths(self):
        dual = np.zeros(len(self.Z))
        nx, ny = self.nx, self.ny
        loops = [self.idx[:, 0], self.idx[nx, :], self.idx[::-1, ny], self.idx[0, ::-1]]
        for path in loops:
            seg = np.abs(np.diff(self.Z[path]))
            dual[path[:-1]] += seg / 2
            dual[path[1:]] += seg / 2
        return dual

    def _locate(self, pole: complex):
        """Interior-node weights reproducing the P1 interpolant at ``pole``."""
        d = self.domain
        y = pole.imag
        v = y / d.height
        s = (pole.real - d.left(y)) / (d.right(y) - d.left(y))
        i = min(int(s * self.nx), self.nx - 1)
        j = min(int(v * self.ny), self.ny - 1)
        a, b = self.idx[i, j], self.idx[i + 1, j]
        c, e = self.idx[i + 1, j + 1], self.idx[i, j + 1]
        for tri in ((a, b, c), (a, c, e)):
            P = self.Z[list(tri)]
            M = np.array([[P[0].real, P[1].real, P[2].real], [P[0].imag, P[1].imag, P[2].imag], [1, 1, 1]])
            w = np.linalg.solve(M, [pole.real, pole.imag, 1.0])
            if np.all(w >= -1e-12):
                return np.array(tri), w
        raise InvalidParameters(f"pole {pole} not located in the mesh")

    def node_masses(self, poles) -> np.ndarray:
        """Discrete harmonic measure of every boundary node, one row per pole."""
        poles = np.atleast_1d(np.asarray(poles, complex))
        rhs = np.zeros((len(self.interior), len(poles)))
        for col, p in enumerate(poles):
            if not self.domain.contains(np.array([p]))[0]:
                raise InvalidParameters(f"pole {p} is not inside the domain")
            nodes, w = self._locate(p)
            # boundary vertices of the containing triangle carry their own data
            for n, wt in zip(nodes, w):
                k = self._pos_in_interior[n]
                if k >= 0:
                    rhs[k, col] += wt
        G = self._lu.solve(rhs)
        masses = -(self.K_BI @ G).T
        # a pole in a boundary-touching triangle also sees the boundary vertex directly
        for col, p in enumerate(poles):
            nodes, w = self._locate(p)
            for n, wt in zip(nodes, w):
                if self._pos_in_interior[n] < 0:
                    masses[col, np.searchsorted(self.boundary, n)] += wt
        return masses

    def piece_weights(self, piece) -> np.ndarray:
        """Weight of each boundary node in ``piece`` (fractional at the piece's ends)."""
        piece = as_piece(piece)
        zb = self.Z[self.boundary]
        sides = self.side[self.boundary]
        if piece.name == "all":
            sel = np.ones(len(zb), bool)
        else:
            sel = sides == piece_index(self.domain, piece.name)
        w = sel.astype(float)
        if not (math.isinf(piece.lo) and math.isinf(piece.hi)):
            half = self.dual[self.boundary] / 2
            x = zb.real
            frac = (np.minimum(x + half, piece.hi) - np.maximum(x - half, piece.lo)) / (2 * half)
            w *= np.clip(frac, 0.0, 1.0)
        return w

    def harmonic_extension(self, boundary_values) -> np.ndarray:
        """Nodal values of the discrete harmonic function with given boundary data."""
        g = np.asarray(boundary_values, float)
        u = np.zeros(len(self.Z))
        u[self.boundary] = g
        u[self.interior] = self._lu.solve(-(self.K_IB @ g))
        return u

    def densities(self, poles, piece_name: str, corner_cells: int = 2):
        """(positions, densities) along a piece, excluding nodes near corners."""
        masses = self.node_masses(poles)
        k = piece_index(self.domain, piece_name)
        I, J = np.unravel_index(self.boundary, (self.nx + 1, self.ny + 1))
        if piece_name in ("lower", "upper"):
            keep = (self.side[self.boundary] == k) & (I >= corner_cells) & (I <= self.nx - corner_cells)
        else:
            keep = (self.side[self.boundary] == k) & (J >= corner_cells) & (J <= self.ny - corner_cells)
        pos = self.Z[self.boundary][keep]
        return pos, masses[:, keep] / self.dual[self.boundary][keep][None, :]


def measure_by_grid(domain, poles, piece, mesh: float) -> list:
    """Harmonic measure of ``piece`` at each pole from one factorization (mesh = cell height)."""
    ny = int(round(domain.height / mesh))
    nx = int(round((domain.right(0) - domain.left(0)) / mesh))
    solver = MeshSolver(domain, nx, ny)
    piece = as_piece(piece)
    masses = solver.node_masses(poles)
    w = solver.piece_weights(piece)
    out = []
    for p, m in zip(np.atleast_1d(poles), masses):
        out.append(HarmonicMeasureEstimate(domain, complex(p), "grid", {piece.label(): float(m @ w)},
                                           info={"mesh": solver.h, "total": float(m.sum())}))
    return out


def grid_density_pair(domain, poles, piece_name: str, ny: int, nx: int):
    """Densities on meshes (nx, ny) and (2nx, 2ny), compared at the coarse nodes."""
    coarse = MeshSolver(domain, nx, ny)
    fine = MeshSolver(domain, 2 * nx, 2 * ny)
    pc, dc = coarse.densities(poles, piece_name)
    pf, df = fine.densities(poles, piece_name)
    # coarse boundary nodes are fine nodes too
    lookup = {complex(round(z.real, 12), round(z.imag, 12)): i for i, z in enumerate(pf)}
    idx = np.array([lookup.get(complex(round(z.real, 12), round(z.imag, 12)), -1) for z in pc])
    keep = idx >= 0
    return pc[keep], dc[:, keep], df[:, idx[keep]]


# ----------------------------------------------------------------------------
# strip battery: exact vs grid vs walk on spheres


@dataclass(frozen=True)
class BatteryRow:
    pole: complex
    offset: float
    exact_density: float
    grid_density: float
    grid_error_estimate: float
    segment: tuple
    exact_mass: float
    mc_mass: float
    mc_stderr: float

    @property
    def grid_ok(self) -> bool:
        return abs(self.grid_density - self.exact_density) <= 4 * self.grid_error_estimate + 1e-12

    @property
    def mc_ok(self) -> bool:
        return abs(self.mc_mass - self.exact_mass) <= 3 * self.mc_stderr


@dataclass(frozen=True)
class BatteryReport:
    eps: float
    rows: tuple
    mc_totals: tuple
    grid_totals: tuple
    lower_mass_mc: tuple
    lower_mass_grid: float
    seed: int
    walkers: int
    unabsorbed: int


def cylinder_battery(eps: float = 1.0, poles=(0.5j, 0.25j, 0.75j, 0.25 + 0.4j),
                     offsets=(0.0, 0.5, -1.0), segment_width: float = 0.5, walkers: int = 100_000,
                     seed: int = 7, ny: int = 16, half_width: Optional[float] = None) -> BatteryReport:
    """Exact strip density vs grid and walk-on-spheres on pole/offset pairs.

    For each pole x+iy and offset d the lower-side point is t = x + d, which
    must be a multiple of eps / ny so that it is a mesh node. The grid
    density (truncated strip, meshes ny and 2ny) is compared with the exact
    value using the Richardson error estimate |d_h - d_{h/2}| / 3. The walk
    mass of the segment [t - w/2, t + w/2] is compared with the closed-form
    mass. Also reported: total boundary mass from both methods, and the
    lower-side mass at the first pole.
    """
    if half_width is None:
        # exp(-pi * L / eps) below 1e-12 beyond the offsets in use
        half_width = eps * 9.0 + max(abs(o) for o in offsets) + max(abs(p.real) for p in poles)
    # lower-side nodes at multiples of eps / ny
    half_width = math.ceil(half_width * ny / eps) * eps / ny
    rect = Cylinder(eps).truncated(half_width)
    nx = int(round(2 * half_width / eps * ny))
    coarse, fine = MeshSolver(rect, nx, ny), MeshSolver(rect, 2 * nx, 2 * ny)
    poles = [complex(p) for p in poles]
    mc = coarse.node_masses(poles)
    mf = fine.node_masses(poles)
    rows, totals_mc = [], []
    ss = np.random.SeedSequence(seed)
    child = ss.spawn(len(poles))
    unabsorbed = 0
    lower_mc = None
    for pi_, (pole, seq) in enumerate(zip(poles, child)):
        walk = walk_on_spheres(Cylinder(eps), pole, walkers, int(seq.generate_state(1)[0]))
        unabsorbed += walk.unabsorbed
        totals_mc.append(walk.mass("all")[0])
        if pi_ == 0:
            lower_mc = walk.mass("lower")
        for off in offsets:
            t = pole.real + off
            ex = float(cylinder_density(eps, pole, t))
            dc = _density_at(coarse, mc[pi_], t)
            df = _density_at(fine, mf[pi_], t)
            lo, hi = t - segment_width / 2, t + segment_width / 2
            m, se = walk.mass(Piece("lower", lo, hi))
            rows.append(BatteryRow(pole, off, ex, df, abs(dc - df) / 3.0, (lo, hi),
                                   cylinder_mass(eps, pole, lo, hi), m, se))
    grid_totals = tuple(float(x) for x in mf.sum(axis=1))
    lower_grid = float(mf[0] @ fine.piece_weights("lower"))
    return BatteryReport(eps, tuple(rows), tuple(totals_mc), grid_totals, lower_mc, lower_grid,
                         seed, walkers, unabsorbed)


def _density_at(solver: MeshSolver, masses, t: float) -> float:
    zb = solver.Z[solver.boundary]
    sel = np.nonzero((solver.side[solver.boundary] == 0) & (np.abs(zb.real - t) < 1e-9))[0]
    if not sel.size:
        raise InvalidParameters(f"t={t} is not a mesh node on the lower side")
    i = sel[0]
    return float(masses[i] / solver.dual[solver.boundary][i])


def write_battery_csv(path, report: BatteryReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["domain", "method", "pole", "piece", "mass", "density", "error"])
        dom = f"cylinder(eps={report.eps!r})"
        for r in report.rows:
            pole = f"{r.pole.real!r}+{r.pole.imag!r}j"
            piece = f"lower[{r.segment[0]!r},{r.segment[1]!r}]"
            w.writerow([dom, "exact", pole, piece, repr(r.exact_mass), repr(r.exact_density), "0.0"])
            w.writerow([dom, "grid", pole, f"lower@{r.pole.real + r.offset!r}", "", repr(r.grid_density),
                        repr(r.grid_error_estimate)])
            w.writerow([dom, "monte_carlo", pole, piece, repr(r.mc_mass), "", repr(r.mc_stderr)])


# ----------------------------------------------------------------------------
# lemma checks


@dataclass(frozen=True)
class TrapezoidBoundReport:
    domain: Trapezoid
    delta: float
    poles: tuple
    ratios: dict        # piece -> (coarse max ratio, fine max ratio)
    mesh: tuple
    regime: dict

    def change(self, piece: str) -> float:
        a, b = self.ratios[piece]
        return abs(a - b) / max(abs(b), 1e-300)


def trapezoid_bound_shapes(domain: Trapezoid, pole: complex, xi: np.ndarray, piece: str) -> np.ndarray:
    """Right-hand sides of the four density bounds, without their constants."""
    x, y, eps, beta = pole.real, pole.imag, domain.eps, domain.beta
    if piece == "upper":
        return eps ** -2 * y / np.cosh(math.pi * (x - xi.real) / eps)
    if piece == "lower":
        return y / (math.pi * ((xi.real - x) ** 2 + y ** 2))
    if piece == "left":
        t = np.abs(xi - domain.a)
        return (x * t) ** (beta - 1) * y / (t ** 2 + x ** 2) ** beta
    if piece == "right":
        t = np.abs(xi - domain.b)
        return y * t ** (beta - 1)
    raise InvalidParameters(piece)


def check_trapezoid_bounds(eps: float, beta: float, delta: float, poles, ny: int = 32,
                           corner_cells: int = 2) -> TrapezoidBoundReport:
    """Max of numeric density / bound shape on each piece, on meshes ny and 2ny.

    Lower base [0, 2]. The right-leg bound is only evaluated for poles with
    Re k < 1.
    """
    dom = Trapezoid(0.0, 2.0, eps, beta)
    poles = [complex(p) for p in poles]
    for p in poles:
        if not (delta < p.real < 2 - delta and 0 < p.imag < 0.5 * eps):
            raise InvalidParameters(f"pole {p} outside R_(delta,2-delta),eps/2")
    nx = int(round(2.0 / eps * ny))
    ratios = {}
    solvers = [MeshSolver(dom, nx, ny), MeshSolver(dom, 2 * nx, 2 * ny)]
    for piece in ("lower", "upper", "left", "right"):
        vals = []
        for s in solvers:
            pos, dens = s.densities(poles, piece, corner_cells)
            best = 0.0
            for i, p in enumerate(poles):
                if piece == "right" and p.real >= 1:
                    continue
                shape = trapezoid_bound_shapes(dom, p, pos, piece)
                best = max(best, float(np.max(dens[i] / shape)))
            vals.append(best)
        ratios[piece] = tuple(vals)
    return TrapezoidBoundReport(dom, delta, tuple(poles), ratios, (solvers[0].h, solvers[1].h),
                                dom.regime_flags(delta))


@dataclass(frozen=True)
class TotalMassLemmaReport:
    eps1: float
    eps2: float
    delta: float
    xi: tuple
    deviation: tuple      # per mesh: sup over xi of |int omega' dx - 1|
    constant: tuple       # deviation / (eps2 / eps1)
    regime_ok: bool


def check_total_mass_lemma(eps1: float, eps2: float, delta: float, xi=None, ny: int = 16,
                           x_nodes_per_cell: int = 1) -> TotalMassLemmaReport:
    """sup_xi |int_{-1}^{1} omega'_{x + i eps2}(xi) dx - 1| on R_{I_{1+delta}, eps1}.

    By symmetry of the discrete problem, x -> omega'_{x+i eps2}(xi) is the
    discrete harmonic extension of the boundary delta at xi, read on the row
    y = eps2 (linear interpolation between mesh rows).
    """
    regime_ok = 2 * eps2 < eps1 < delta ** 2
    if xi is None:
        xi = np.linspace(-(1 - delta), 1 - delta, 9)
    rect = Rectangle(-1 - delta, 1 + delta, eps1)
    devs, consts = [], []
    for level in (1, 2):
        nyl = ny * level
        nx = int(round((2 + 2 * delta) / eps1 * nyl))
        s = MeshSolver(rect, nx, nyl)
        zb = s.Z[s.boundary]
        lower = np.nonzero(s.side[s.boundary] == 0)[0]
        sup = 0.0
        for t in xi:
            i = lower[np.argmin(np.abs(zb[lower].real - t))]
            g = np.zeros(len(s.boundary))
            g[i] = 1.0 / s.dual[s.boundary][i]
            u = s.harmonic_extension(g).reshape(nx + 1, nyl + 1)
            v = eps2 / eps1 * nyl
            j = min(int(v), nyl - 1)
            row = (1 - (v - j)) * u[:, j] + (v - j) * u[:, j + 1]
            xs = s.X[:, 0]
            inside = (xs >= -1 - 1e-12) & (xs <= 1 + 1e-12)
            val = integrate.trapezoid(row[inside], x=xs[inside])
            sup = max(sup, abs(val - 1.0))
        devs.append(sup)
        consts.append(sup / (eps2 / eps1))
    return TotalMassLemmaReport(eps1, eps2, delta, tuple(float(t) for t in xi), tuple(devs), tuple(consts), regime_ok)


# ----------------------------------------------------------------------------
# subharmonic interpolation checks


def _norms(h, k) -> np.ndarray:
    vals = np.asarray(h(np.asarray(k, complex)))
    if vals.ndim == np.ndim(k):
        return np.abs(vals)
    return np.linalg.norm(vals, axis=-1)


def _simpson_nodes(a, b, n):
    n = n + 1 if n % 2 == 0 else n
    return np.linspace(a, b, n)


@dataclass(frozen=True)
class UpperInterpolationReport:
    A: float
    B: float
    pointwise_constant: tuple   # per lattice level
    strip_sup: tuple
    strip_constant: tuple       # (S - A) / (eps2/eps1 * (A + B + eps1)), floored at 0
    growth_ok: bool
    stable: bool


def check_interpolation_upper(h: Callable, eps1: float, eps2: float, delta: float, kappa: float,
                              C1: float, C2: float, nodes: int = 201, levels: int = 2) -> UpperInterpolationReport:
    """Pointwise and strip bounds for |h|^2 from its traces on y = 0 and y = eps1.

    ``h`` maps complex arrays to arrays of vectors (shape (..., N)) or scalars.
    Empirical constants are computed on ``levels`` lattices, each twice as
    dense as the previous; ``stable`` means the last two differ by < 20%
    (or are both zero).
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _upper(h, eps1, eps2, delta, kappa, C1, C2, nodes, levels)


def _upper(h, eps1, eps2, delta, kappa, C1, C2, nodes, levels):
    growth_grid = _simpson_nodes(-2, 2, 81)[:, None] + 1j * np.geomspace(1e-2, 1, 20)[None, :]
    growth_ok = bool(np.all(_norms(h, growth_grid) <= C1 * np.exp(C2 * growth_grid.imag ** -kappa) * (1 + 1e-12)))
    xa = _simpson_nodes(-2, 2, 4 * nodes)
    A = float(integrate.simpson(_norms(h, xa) ** 2, x=xa))
    xb = _simpson_nodes(-1 - delta, 1 + delta, 2 * nodes)
    B = float(integrate.simpson(_norms(h, xb + 1j * eps1) ** 2, x=xb))
    pw, sups, consts = [], [], []
    for level in range(levels):
        m = nodes * 2 ** level
        xs = _simpson_nodes(-1 - delta / 2, 1 + delta / 2, m)
        ys = eps1 * np.linspace(0, 1, 2 + 16 * 2 ** level)[1:-1]
        K = xs[None, :] + 1j * ys[:, None]
        rhs = 1 + A / ys[:, None] + B / (eps1 - ys[:, None])
        pw.append(float(np.max(_norms(h, K) ** 2 / rhs)))
        xi = _simpson_nodes(-1, 1, m)
        ys2 = eps2 * np.linspace(0, 1, 2 + 8 * 2 ** level)[1:]
        S = max(float(integrate.simpson(_norms(h, xi + 1j * y) ** 2, x=xi)) for y in ys2)
        sups.append(S)
        consts.append(max(0.0, (S - A) / (eps2 / eps1 * (A + B + eps1))))
    stable = _stable(pw[-2:]) and _stable(consts[-2:]) if levels > 1 else True
    return UpperInterpolationReport(A, B, tuple(pw), tuple(sups), tuple(consts), growth_ok, stable)


def _stable(pair, tol=0.2) -> bool:
    a, b = pair
    if a == 0 and b == 0:
        return True
    return abs(a - b) <= tol * max(abs(a), abs(b))


@dataclass(frozen=True)
class LowerInterpolationReport:
    lhs: tuple           # inf_y int_{I_{1-delta}} log|h(x+iy)| dx, per level
    rhs_core: tuple      # int_{I_1} log|h(x + i eps2)| dx, per level
    eta_shape: float
    constant: tuple      # max(0, rhs_core - lhs) / eta_shape
    W: float
    L: float
    certificate_ok: bool
    excluded_nodes: int
    stable: bool


def check_interpolation_lower(h: Callable, eps1: float, eps2: float, delta: float, W: Optional[float] = None,
                              L: Optional[float] = None, nodes: int = 201, levels: int = 2,
                              zero_floor: float = 1e-300) -> LowerInterpolationReport:
    """Lower bound for the log-integral near the real axis from its value at height eps2.

    Lattice nodes where |h| <= ``zero_floor`` are dropped from the log
    integrals (trapezoid rule on the remaining nodes) and counted.
    """
    if W is None:
        xs = _simpson_nodes(-1 - delta, 1 + delta, 2 * nodes)
        W = max(float(integrate.simpson(_norms(h, xs + 1j * y) ** 2, x=xs))
                for y in eps1 * np.linspace(0, 1, 18)[1:-1])
    ys = eps1 * np.linspace(0, 1, 34)[1:-1]
    xs = _simpson_nodes(-1 - delta, 1 + delta, 2 * nodes)
    K = xs[None, :] + 1j * ys[:, None]
    bound = _norms(h, K) ** 2 / (1 / ys[:, None] + 1 / (eps1 - ys[:, None]))
    if L is None:
        L = max(2.0 + 1e-9, float(np.max(bound)))
    certificate_ok = bool(np.max(bound) <= L)
    eta_shape = eps2 / eps1 * (math.sqrt(W) + abs(math.log(L)) + abs(math.log(eps1))) + math.sqrt(delta * W)
    lhs, core, consts = [], [], []
    excluded = 0
    for level in range(levels):
        m = nodes * 2 ** level
        x_in = _simpson_nodes(-(1 - delta), 1 - delta, m)
        vals = []
        for y in (eps2 / 2) * np.geomspace(1e-3, 1, 6 + 4 * level):
            n = _norms(h, x_in + 1j * y)
            ok = n > zero_floor
            excluded += int(np.count_nonzero(~ok))
            vals.append(float(integrate.trapezoid(np.log(n[ok]), x=x_in[ok])))
        lhs.append(min(vals))
        x1 = _simpson_nodes(-1, 1, m)
        n1 = _norms(h, x1 + 1j * eps2)
        ok = n1 > zero_floor
        excluded += int(np.count_nonzero(~ok))
        core.append(float(integrate.trapezoid(np.log(n1[ok]), x=x1[ok])))
        consts.append(max(0.0, (core[-1] - lhs[-1]) / eta_shape))
    stable = _stable(consts[-2:]) if levels > 1 else True
    return LowerInterpolationReport(tuple(lhs), tuple(core), eta_shape, tuple(consts), float(W), float(L),
                                    certificate_ok, excluded, stable)


# ----------------------------------------------------------------------------
# mean-value inequality for log|h|


@dataclass(frozen=True)
class MeanValueResult:
    pole: complex
    value: float        # log|h(pole)|
    average: float      # integral of log|h| against omega_pole
    tolerance: float

    @property
    def holds(self) -> bool:
        return self.value <= self.average + self.tolerance


def mean_value_check(h: Callable, domain, pole: complex, ny: int = 32) -> MeanValueResult:
    """log|h(pole)| against the harmonic-measure average of log|h|.

    Strips use the exact density (adaptive quadrature, tolerance from its error
    estimate); rectangles and trapezoids use the discrete harmonic measure on
    meshes ny and 2ny, with tolerance twice the change between them.
    """
    pole = complex(pole)
    value = float(np.log(_norms(h, np.array([pole]))[0]))
    if isinstance(domain, Cylinder):
        eps = domain.eps
        total, err = 0.0, 0.0
        for side, yb in (("lower", 0.0), ("upper", eps)):
            def f(t, side=side, yb=yb):
                return float(np.log(_norms(h, np.array([t + 1j * yb]))[0])) * float(
                    cylinder_density(eps, pole, t, side))
            # the density is below e^{-120} beyond 40 strip heights; stop there so
            # that log|h| is never sampled where h itself overflows
            reach = 40 * eps
            for lo, hi in ((pole.real - reach, pole.real), (pole.real, pole.real + reach)):
                v, e = integrate.quad(f, lo, hi, limit=400, epsabs=1e-11, epsrel=1e-11)
                total += v
                err += e
        return MeanValueResult(pole, value, total, 10 * err + 1e-9)
    avgs = []
    for level in (1, 2):
        nyl = ny * level
        nx = int(round((domain.right(0) - domain.left(0)) / domain.height * nyl))
        s = MeshSolver(domain, nx, nyl)
        m = s.node_masses([pole])[0]
        logs = np.log(np.maximum(_norms(h, s.Z[s.boundary]), 1e-300))
        avgs.append(float(m @ logs))
    return MeanValueResult(pole, value, avgs[1], 2 * abs(avgs[1] - avgs[0]) + 1e-9)


def monotonicity_check(inner: Rectangle, outer: Rectangle, pole: complex, piece, mesh: float) -> tuple:
    """(omega_inner(E), omega_outer(E)) for a shared piece E; the first should not exceed the second."""
    a = measure_by_grid(inner, [pole], piece, mesh)[0]
    b = measure_by_grid(outer, [pole], piece, mesh)[0]
    key = as_piece(piece).label()
    return a.masses[key], b.masses[key]
