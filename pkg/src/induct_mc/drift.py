r"""Drift-function conditions and weighted sup-norms, checked on grids.

A drift function is ``u >= 1`` such that, with ``B_u = sup(Pu - u) + 1`` and
``w = u - Pu + B_u``, the quantities ``Qu``, ``E tau / u`` and ``Pw / w``
are bounded.  The sups here are over an explicit grid, so a report
certifies the condition on that grid only; ``DriftReport.domain`` records it.

Two model kinds are supported: a finite chain (``StochasticMatrix`` plus a
return set) where everything is exact, and the reflected walk (a
``StepDistribution``) where ``E_x tau`` is estimated by excursions and the
report uses the upper end of its confidence band.  On the half line
``X_tau = 0``, so ``Qu = u(0)`` exactly.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGrid, MomentTooLow, NonNegativeDrift
from .excursion import sample_excursions_multi
from .finite_chain import StochasticMatrix, induced_operators
from .lindley import DEFAULT_QUAD, StepDistribution, kernel_apply

W_TOL = 1e-9
DISCRETE_GRID_MAX = 200
CONTINUOUS_GRID_POINTS = 512
DRIFT_DOMAIN = 1 << 20


@dataclass(frozen=True)
class DriftFunctionSpec:
    """``power``: ``u_s(x) = 1 + |x|^s`` on the half line; ``tabulated``: explicit values."""

    kind: str
    s: float = 0.0
    values: tuple = ()

    @classmethod
    def power(cls, s):
        if s < 0:
            raise ValueError("power drift function needs s >= 0")
        return cls("power", s=float(s))

    @classmethod
    def tabulated(cls, values):
        v = tuple(float(x) for x in values)
        if min(v) < 1.0:
            raise ValueError("drift function values must be >= 1")
        return cls("tabulated", values=v)

    def __call__(self, x):
        if self.kind == "power":
            return 1.0 + np.abs(np.asarray(x, dtype=float)) ** self.s
        idx = np.asarray(x).astype(int)
        return np.asarray(self.values)[idx]


@dataclass
class DriftReport:
    B_u: float
    inf_w: float
    sup_ratio_Pw_w: float
    sup_Qu: float
    sup_Etau_over_u: float
    passed: bool
    domain: tuple
    sup_at_edge: bool = False
    asymptotic_slope: float = math.nan
    x: np.ndarray = field(default=None, repr=False)
    u: np.ndarray = field(default=None, repr=False)
    Pu: np.ndarray = field(default=None, repr=False)
    w: np.ndarray = field(default=None, repr=False)


def _values(f, grid):
    return np.asarray(f(grid) if callable(f) else f, dtype=float)


def f_norm(f, u, p, grid):
    """Weighted sup-norm ``max_grid |f(x)| / u(x)^(1/p)``."""
    grid = np.asarray(grid)
    if grid.size == 0:
        raise EmptyGrid("grid is empty")
    if p < 1:
        raise ValueError("p must be >= 1")
    return float(np.max(np.abs(_values(f, grid)) / _values(u, grid) ** (1.0 / p)))


def default_grid(rho):
    if rho.is_discrete:
        return np.arange(DISCRETE_GRID_MAX + 1, dtype=float)
    x_max = 50.0 * math.sqrt(rho.variance) / abs(rho.mean) if rho.mean != 0 else 50.0 * math.sqrt(rho.variance)
    return np.linspace(0.0, x_max, CONTINUOUS_GRID_POINTS)


def _finite_report(P, u, Y):
    if Y is None:
        raise ValueError("a finite-chain drift report needs a return set")
    Pm = P.entries if isinstance(P, StochasticMatrix) else np.asarray(P, dtype=float)
    sys = induced_operators(Pm, Y)
    n = Pm.shape[0]
    x = np.arange(n)
    uv = _values(u, x)
    Pu = Pm @ uv
    B = float(np.max(Pu - uv)) + 1.0
    w = uv - Pu + B
    Pw = Pm @ w
    Qu = sys.Q @ uv
    ratios = (float(np.max(Pw / w)), float(np.max(Qu)), float(np.max(sys.mean_return / uv)))
    ok = all(math.isfinite(r) for r in ratios) and float(w.min()) >= 1.0 - W_TOL
    return DriftReport(B_u=B, inf_w=float(w.min()), sup_ratio_Pw_w=ratios[0], sup_Qu=ratios[1],
                       sup_Etau_over_u=ratios[2], passed=ok, domain=(0, n - 1),
                       x=x.astype(float), u=uv, Pu=Pu, w=w)


def drift_report(model, u, Y=None, grid=None, quad=DEFAULT_QUAD, n_excursions=200, seed=0,
                 workers=1, z=3.0):
    """Check the drift-function conditions for ``u`` on a grid.

    Parameters
    ----------
    model : StochasticMatrix or StepDistribution
    u : DriftFunctionSpec or vectorized callable
    Y : return set, finite chains only (the walk always returns to 0)
    n_excursions : int
        Excursions per grid point for ``E_x tau`` on the half line.
    z : float
        ``E_x tau`` enters through ``mean + z * se``.
    """
    if not isinstance(model, StepDistribution):
        return _finite_report(model, u, Y)
    rho = model
    grid = default_grid(rho) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise EmptyGrid("grid is empty")
    uv = _values(u, grid)
    Pu = kernel_apply(rho, u, grid, quad)
    diff = Pu - uv
    B = float(np.max(diff)) + 1.0
    at_edge = bool(grid.size > 1 and np.argmax(diff) == grid.size - 1)
    w = uv - Pu + B

    def w_fn(y):
        return u(y) - kernel_apply(rho, u, np.ravel(y), quad).reshape(np.shape(y)) + B

    Pw = kernel_apply(rho, w_fn, grid, quad)
    sup_Pw_w = float(np.max(Pw / w)) if w.min() > 0 else math.inf
    sup_Qu = float(_values(u, np.zeros(1))[0])
    slope = math.nan
    if isinstance(u, DriftFunctionSpec) and u.kind == "power":
        slope = u.s * rho.mean
    if rho.mean < 0:
        starts = np.repeat(grid, n_excursions)
        tau, _ = sample_excursions_multi(rho, starts, [], seed, workers, domain=DRIFT_DOMAIN)
        tau = tau.reshape(grid.size, n_excursions).astype(float)
        upper = tau.mean(axis=1) + z * tau.std(axis=1, ddof=1) / math.sqrt(n_excursions)
        sup_Etau_u = float(np.max(upper / uv))
    else:
        # no negative drift: the return time has infinite mean
        sup_Etau_u = math.inf
    finite = all(math.isfinite(v) for v in (B, sup_Pw_w, sup_Qu, sup_Etau_u))
    ok = finite and float(w.min()) >= 1.0 - W_TOL and not at_edge
    return DriftReport(B_u=B, inf_w=float(w.min()), sup_ratio_Pw_w=sup_Pw_w, sup_Qu=sup_Qu,
                       sup_Etau_over_u=sup_Etau_u, passed=ok,
                       domain=(float(grid[0]), float(grid[-1])), sup_at_edge=at_edge,
                       asymptotic_slope=slope, x=grid, u=uv, Pu=Pu, w=w)


def sandwich_profile(rho, s, grid=None, quad=DEFAULT_QUAD):
    """``B_s`` and the ratio ``(u_s - Pu_s + B_s) / u_{s-1}`` on the grid."""
    if rho.declared_moment_order < s:
        raise MomentTooLow(f"step law declares moments up to {rho.declared_moment_order}, need {s}")
    if not rho.mean < 0:
        raise NonNegativeDrift(f"drift {rho.mean} is not negative")
    grid = default_grid(rho) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise EmptyGrid("grid is empty")
    us = DriftFunctionSpec.power(s)
    us1 = DriftFunctionSpec.power(s - 1)
    Pu = kernel_apply(rho, us, grid, quad)
    B = float(np.max(Pu - us(grid))) + 1.0
    ratio = (us(grid) - Pu + B) / us1(grid)
    return B, ratio, grid


def sandwich_constants(rho, s, grid=None, quad=DEFAULT_QUAD):
    """Constants with ``u_{s-1} / N_s <= u_s - Pu_s + B_s <= N_s u_{s-1}`` on the grid.

    ``N_s`` is the smallest such constant.

    Returns
    -------
    B_s, N_s : float
    """
    B, ratio, _ = sandwich_profile(rho, s, grid, quad)
    if ratio.min() <= 0:
        return B, math.inf
    return B, float(max(ratio.max(), 1.0 / ratio.min()))


def sandwich_holds(rho, s, B, N, grid=None, quad=DEFAULT_QUAD):
    """Whether both sandwich inequalities hold at every grid point for ``(B, N)``."""
    grid = default_grid(rho) if grid is None else np.asarray(grid, dtype=float)
    us = DriftFunctionSpec.power(s)
    us1 = DriftFunctionSpec.power(s - 1)
    mid = us(grid) - kernel_apply(rho, us, grid, quad) + B
    lo = us1(grid)
    return bool(np.all(lo / N <= mid) and np.all(mid <= N * lo))
