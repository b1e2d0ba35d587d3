r"""Reflected random walk ``X_{n+1} = max(X_n + Y_{n+1}, 0)`` on the half line.

Step laws are immutable value objects; the Markov kernel

    Pf(x) = f(0) rho((-inf, -x]) + int_{-x}^{inf} f(x + y) drho(y)

is evaluated with the atom at 0 handled exactly and the remaining integral
by composite Gauss-Legendre quadrature (exact finite sums for discrete
steps).  All functions passed to the kernel must be vectorized: they take
and return numpy arrays.
"""

import csv
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import ndtr, ndtri

from . import rng as _rng
from .errors import NonIntegerAtoms, QuadratureFailure
from .finite_chain import validate_stochastic

PROB_TOL = 1e-12
KERNEL_CHUNK = 1 << 20


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule.

    ``tail`` is the total step-law mass allowed outside the integration
    window; that mass is lumped at the window edge rather than dropped, so
    ``P1 = 1`` holds to round-off.  ``mass_tol`` bounds the discrepancy between
    the quadrature of the density and the exact CDF difference.
    """

    n_nodes: int = 32
    panels: int = 16
    tail: float = 1e-12
    mass_tol: float = 1e-10

    def reference(self):
        t, w = np.polynomial.legendre.leggauss(self.n_nodes)
        return (t + 1.0) / 2.0, w / 2.0


DEFAULT_QUAD = QuadratureSpec()


class StepDistribution:
    """Common interface of the step laws ``rho``."""

    kind = None
    is_discrete = False
    declared_moment_order = math.inf

    @property
    def mean(self):
        raise NotImplementedError

    @property
    def variance(self):
        raise NotImplementedError

    def cdf(self, y):
        raise NotImplementedError

    def sample(self, gen, size):
        raise NotImplementedError

    def window(self, tail):
        """Interval ``[lo, hi]`` carrying all but ``tail`` of the mass."""
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError

    @staticmethod
    def from_json(doc):
        """Parse ``{"kind": "mixture" | "normal" | "uniform", ...}``."""
        kind = doc.get("kind")
        order = doc.get("moment_order", math.inf)
        order = math.inf if order is None else float(order)
        if kind == "mixture":
            return DiscreteMixture(tuple((float(y), float(p)) for y, p in doc["atoms"]), order)
        if kind == "normal":
            return Normal(float(doc["mean"]), float(doc["sd"]), order)
        if kind == "uniform":
            return Uniform(float(doc["a"]), float(doc["b"]), order)
        raise ValueError(f"unknown step distribution kind {kind!r}")


@dataclass(frozen=True)
class DiscreteMixture(StepDistribution):
    atoms: tuple
    declared_moment_order: float = math.inf
    kind = "mixture"
    is_discrete = True
    ys: np.ndarray = field(init=False, repr=False, compare=False)
    ps: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        atoms = tuple((float(y), float(p)) for y, p in self.atoms)
        if not atoms:
            raise ValueError("mixture needs at least one atom")
        ys = np.array([a[0] for a in atoms])
        ps = np.array([a[1] for a in atoms])
        if (ps < 0).any() or not np.all(np.isfinite(ys)):
            raise ValueError("mixture probabilities must be non-negative and atoms finite")
        total = ps.sum()
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"mixture probabilities sum to {total!r}")
        ps = ps / total
        ys.setflags(write=False)
        ps.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "ps", ps)

    @property
    def mean(self):
        return float(self.ps @ self.ys)

    @property
    def variance(self):
        return float(self.ps @ (self.ys - self.mean) ** 2)

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        return (self.ps[None, :] * (self.ys[None, :] <= y.reshape(-1, 1))).sum(axis=1).reshape(y.shape)

    def sample(self, gen, size):
        if self.ys.size == 1:
            return np.full(size, self.ys[0])
        cum = np.cumsum(self.ps)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, gen.random(size), side="right")
        return self.ys[np.minimum(idx, self.ys.size - 1)]

    def window(self, tail):
        return float(self.ys.min()), float(self.ys.max())

    def to_json(self):
        return {"kind": "mixture", "atoms": [list(a) for a in self.atoms],
                "moment_order": _order_json(self.declared_moment_order)}


@dataclass(frozen=True)
class Normal(StepDistribution):
    loc: float
    sd: float
    declared_moment_order: float = math.inf
    kind = "normal"

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError("normal step needs sd > 0")

    @property
    def mean(self):
        return float(self.loc)

    @property
    def variance(self):
        return float(self.sd) ** 2

    def cdf(self, y):
        return ndtr((np.asarray(y, dtype=float) - self.loc) / self.sd)

    def pdf(self, y):
        z = (np.asarray(y, dtype=float) - self.loc) / self.sd
        return np.exp(-0.5 * z * z) / (self.sd * math.sqrt(2.0 * math.pi))

    def sample(self, gen, size):
        return gen.normal(self.loc, self.sd, size)

    def window(self, tail):
        k = -float(ndtri(tail / 2.0))
        return self.loc - k * self.sd, self.loc + k * self.sd

    def to_json(self):
        return {"kind": "normal", "mean": self.loc, "sd": self.sd,
                "moment_order": _order_json(self.declared_moment_order)}


@dataclass(frozen=True)
class Uniform(StepDistribution):
    a: float
    b: float
    declared_moment_order: float = math.inf
    kind = "uniform"

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("uniform step needs a < b")

    @property
    def mean(self):
        return 0.5 * (self.a + self.b)

    @property
    def variance(self):
        return (self.b - self.a) ** 2 / 12.0

    def cdf(self, y):
        return np.clip((np.asarray(y, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where((y >= self.a) & (y <= self.b), 1.0 / (self.b - self.a), 0.0)

    def sample(self, gen, size):
        return gen.uniform(self.a, self.b, size)

    def window(self, tail):
        return float(self.a), float(self.b)

    def to_json(self):
        return {"kind": "uniform", "a": self.a, "b": self.b,
                "moment_order": _order_json(self.declared_moment_order)}


def _order_json(order):
    return None if math.isinf(order) else order


def drift_lambda(rho):
    """Mean step ``lambda = int y drho(y)``."""
    return rho.mean


def step(x, y):
    """One reflected step ``max(x + y, 0)`` (works elementwise on arrays)."""
    return np.maximum(np.add(x, y), 0.0) if np.ndim(x) or np.ndim(y) else max(x + y, 0.0)


def kernel_apply(rho, f, x, quad=DEFAULT_QUAD, breaks=()):
    """``Pf(x)`` for scalar or array ``x``.

    ``breaks`` lists state-space points where ``f`` jumps or kinks; panel
    edges are placed there so each panel integrates a smooth piece.

    Raises
    ------
    QuadratureFailure
        The quadrature of the density over the window disagrees with the
        exact CDF difference by more than ``quad.mass_tol``.
    """
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if rho.is_discrete:
        z = np.maximum(xa[:, None] + rho.ys[None, :], 0.0)
        out = (f(z) * rho.ps[None, :]).sum(axis=1)
    else:
        flat = xa.ravel()
        step_ = max(1, KERNEL_CHUNK // (quad.n_nodes * quad.panels))
        brk = np.asarray(breaks, dtype=float).ravel()
        out = np.concatenate([_continuous_kernel(rho, f, flat[i:i + step_], quad, brk)
                              for i in range(0, flat.size, step_)] or [np.zeros(0)])
        out = out.reshape(xa.shape)
    return out if np.ndim(x) else float(out[0])


def _continuous_kernel(rho, f, x, quad, breaks):
    y_lo, y_hi = rho.window(quad.tail)
    f0 = np.asarray(f(np.zeros(1)), dtype=float)[0]
    atom = rho.cdf(-x)
    out = f0 * atom
    lo = np.maximum(-x, y_lo)
    live = lo < y_hi
    if not live.any():
        # whole window sits below -x; residual upper tail lumps at x + y_hi
        return out + (1.0 - atom) * f0
    xl, lol = x[live], lo[live]
    t, w = quad.reference()
    edges = lol[:, None] + (y_hi - lol)[:, None] * np.linspace(0.0, 1.0, quad.panels + 1)[None, :]
    if breaks.size:
        # clipped breaks give zero-width panels, which contribute nothing
        cut = np.clip(breaks[None, :] - xl[:, None], lol[:, None], y_hi)
        edges = np.sort(np.concatenate([edges, cut], axis=1), axis=1)
    a, b = edges[:, :-1], edges[:, 1:]
    h = (b - a)[..., None]
    y = a[..., None] + h * t
    wts = (h * w) * rho.pdf(y)
    wts = wts.reshape(xl.size, -1)
    y = y.reshape(xl.size, -1)
    inner = wts.sum(axis=1)
    exact = rho.cdf(np.full_like(xl, y_hi)) - rho.cdf(lol)
    if np.max(np.abs(inner - exact), initial=0.0) > quad.mass_tol:
        raise QuadratureFailure(f"density quadrature off by {np.max(np.abs(inner - exact)):.3g}")
    vals = np.asarray(f(xl[:, None] + y), dtype=float)
    integral = (wts * vals).sum(axis=1)
    # mass outside the window goes to the nearest window edge
    upper = 1.0 - rho.cdf(np.full_like(xl, y_hi))
    lower = np.where(lol > -xl, rho.cdf(lol) - rho.cdf(-xl), 0.0)
    integral += upper * f(xl + y_hi) + np.where(lower > 0, lower * f(xl + lol), 0.0)
    res = out.copy()
    res[live] += integral
    dead = ~live
    if dead.any():
        res[dead] += (1.0 - atom[dead]) * f0
    return res


@dataclass(frozen=True)
class Trajectory:
    """Positions ``X_0..X_n`` with the increments that produced them."""

    states: np.ndarray
    increments: np.ndarray
    seed: int

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "state"])
            for i, s in enumerate(self.states.tolist()):
                w.writerow([i, repr(s)])


@numba.njit(cache=False)
def _reflect(x0, ys):
    out = np.empty(ys.size + 1)
    out[0] = x0
    for i in range(ys.size):
        v = out[i] + ys[i]
        out[i + 1] = v if v > 0.0 else 0.0
    return out


def sample_path(rho, x0, n, seed):
    """Simulate ``n`` steps of the walk from ``x0`` (deterministic in ``seed``)."""
    if x0 < 0:
        raise ValueError("x0 must be non-negative")
    ys = np.ascontiguousarray(rho.sample(_rng.stream(seed, 0), int(n)), dtype=float)
    return Trajectory(states=_reflect(float(x0), ys), increments=ys, seed=int(seed))


def discretize(rho, x_max):
    """Exact truncated chain on ``{0, ..., x_max}`` for integer-valued steps.

    Mass that would leave through the top is lumped into ``x_max``.

    Returns
    -------
    P : StochasticMatrix
    tail_bound : float
        ``(p/q)^x_max`` for +-1 steps (the exact stationary tail beyond the
        cut); otherwise a Markov-inequality bound ``Var(Y) / (2 |lambda| x_max)``
        built on Kingman's bound for the stationary mean.
    """
    if not rho.is_discrete:
        raise NonIntegerAtoms("discretize needs a discrete mixture")
    ys = rho.ys
    if not np.all(ys == np.round(ys)):
        raise NonIntegerAtoms(f"atoms {ys.tolist()} are not all integers")
    x_max = int(x_max)
    if x_max < 1:
        raise ValueError("x_max must be >= 1")
    n = x_max + 1
    P = np.zeros((n, n))
    states = np.arange(n)
    for y, p in zip(ys.astype(int), rho.ps):
        tgt = np.clip(states + y, 0, x_max)
        np.add.at(P, (states, tgt), p)
    lam = rho.mean
    support = set(ys.astype(int).tolist())
    if lam >= 0:
        tail = math.inf
    elif support <= {-1, 1} and len(support) == 2:
        p_up = float(rho.ps[ys == 1].sum())
        tail = (p_up / (1.0 - p_up)) ** x_max
    else:
        tail = min(1.0, rho.variance / (2.0 * abs(lam) * x_max))
    return validate_stochastic(P), tail


class Interpolant:
    """Piecewise-linear function on a sorted grid, extended linearly past both ends."""

    def __init__(self, grid, values):
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.grid.ndim != 1 or self.grid.size < 2 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing with at least two points")
        if self.values.shape != self.grid.shape:
            raise ValueError("values and grid differ in shape")

    def weights(self, z):
        """Cell index ``i`` and weights so that ``value = wl v[i] + wr v[i+1]``."""
        g = self.grid
        z = np.asarray(z, dtype=float)
        i = np.clip(np.searchsorted(g, z, side="right") - 1, 0, g.size - 2)
        wr = (z - g[i]) / (g[i + 1] - g[i])
        return i, 1.0 - wr, wr

    def __call__(self, z):
        i, wl, wr = self.weights(z)
        return wl * self.values[i] + wr * self.values[i + 1]


def grid_kernel_matrix(rho, grid, quad=DEFAULT_QUAD):
    """Matrix ``W`` with ``(W v)_i = P[interp(v)](grid_i)``.

    Returns
    -------
    W : (m, m) ndarray
    inside : (m,) bool ndarray
        Rows whose step law (up to ``quad.tail``) lands inside
        ``[grid[0], grid[-1]]``, i.e. rows that need no extrapolation.
    """
    grid = np.asarray(grid, dtype=float)
    m = grid.size
    it = Interpolant(grid, np.zeros(m))
    W = np.zeros((m, m))
    rows = np.arange(m)
    top = grid[-1] + 1e-12 * max(1.0, abs(grid[-1]))

    def scatter(row_idx, z, mass):
        i, wl, wr = it.weights(z)
        np.add.at(W, (row_idx, i), mass * wl)
        np.add.at(W, (row_idx, i + 1), mass * wr)

    if rho.is_discrete:
        z = np.maximum(grid[:, None] + rho.ys[None, :], 0.0)
        for k, p in enumerate(rho.ps):
            scatter(rows, z[:, k], p)
        inside = z.max(axis=1) <= top
        return W, inside

    y_lo, y_hi = rho.window(quad.tail)
    t, w = quad.reference()
    atom = rho.cdf(-grid)
    scatter(rows, np.zeros(m), atom)
    for r, x in enumerate(grid):
        lo = max(-x, y_lo)
        if lo >= y_hi:
            scatter(np.array([r]), np.zeros(1), np.array([1.0 - atom[r]]))
            continue
        # panel breaks at grid knots so the hat functions are smooth per panel
        knots = grid[(grid > x + lo) & (grid < x + y_hi)] - x
        base = np.linspace(lo, y_hi, quad.panels + 1)
        br = np.unique(np.concatenate([base, knots]))
        a, b = br[:-1], br[1:]
        h = (b - a)[:, None]
        y = (a[:, None] + h * t).ravel()
        wy = ((h * w).ravel()) * rho.pdf(y)
        scatter(np.full(y.size, r), x + y, wy)
        upper = 1.0 - float(rho.cdf(y_hi))
        lower = float(rho.cdf(lo) - rho.cdf(-x)) if lo > -x else 0.0
        scatter(np.array([r, r]), np.array([x + y_hi, x + lo]), np.array([upper, lower]))
    inside = grid + y_hi <= top
    return W, inside
