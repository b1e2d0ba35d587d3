r"""Regenerative Monte Carlo for the reflected walk.

An excursion from ``x`` runs until the stopping time
``tau = inf{n >= 1 : X_{n-1} + Y_n <= 0}``, which is also the first return to
0.  Excursions are simulated as a vectorized population: every live walker
takes one step per sweep, and walkers drop out when they hit 0.

Randomness is keyed by ``(seed, domain, worker)``: the excursions started at
0 use domain 0, grid point ``j`` of a Poisson solve uses domain ``j + 1``.
Results depend only on ``(inputs, seed, workers)``; worker outputs are
concatenated in worker order.
"""

import math
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .errors import (
    BatchTooSmall,
    ExcursionCapExceeded,
    GridTooCoarse,
    MomentTooLow,
    NonNegativeDrift,
)
from .lindley import DEFAULT_QUAD, Interpolant, grid_kernel_matrix, kernel_apply, sample_path
from .stats import (
    ks_normal_test,
    lil_track,
    lindeberg_statistic,
    ratio_se,
)

DEFAULT_CAP = 10**9
MIN_KAC_EXCURSIONS = 100
MIN_BATCH = 1000

Estimate = namedtuple("Estimate", ["value", "se"])


def constant(c):
    """Vectorized constant function."""
    return lambda x: np.full(np.shape(x), float(c))


def identity(x):
    return np.asarray(x, dtype=float)


def indicator_zero(x):
    return (np.asarray(x) == 0).astype(float)


def _require_negative_drift(rho):
    if not rho.mean < 0:
        raise NonNegativeDrift(f"step law has drift {rho.mean} >= 0; excursions need not end")


@dataclass
class ExcursionBatch:
    """Per-excursion records for a batch started at ``start_x``.

    ``f_sums[i, e]`` is ``f_i(X_0) + ... + f_i(X_{tau-1})`` along excursion
    ``e``; ``end_states`` holds ``X_tau`` (always 0).
    """

    tau: np.ndarray
    f_sums: np.ndarray
    end_states: np.ndarray
    start_x: float
    seed: int
    workers: int = 1

    @property
    def count(self):
        return int(self.tau.size)

    @property
    def tau_sum(self):
        return int(self.tau.sum())

    @property
    def tau_sq_sum(self):
        t = self.tau.astype(float)
        return float(t @ t)

    @property
    def f_totals(self):
        return self.f_sums.sum(axis=1)

    @property
    def f_cross(self):
        return self.f_sums @ self.tau.astype(float)


def _simulate(rho, x0, fs, n, gen, cap):
    tau = np.zeros(n, dtype=np.int64)
    sums = np.zeros((len(fs), n))
    end = np.full(n, np.nan)
    active = np.arange(n)
    xa = np.broadcast_to(np.asarray(x0, dtype=float), (n,)).copy()
    sweeps = 0
    while active.size:
        if sweeps >= cap:
            raise ExcursionCapExceeded(f"{active.size} excursions still running after {cap} steps")
        for i, f in enumerate(fs):
            sums[i, active] += f(xa)
        nxt = xa + rho.sample(gen, active.size)
        tau[active] += 1
        sweeps += 1
        stop = nxt <= 0.0
        end[active[stop]] = np.maximum(nxt[stop], 0.0)
        keep = ~stop
        active = active[keep]
        xa = nxt[keep]
    return tau, sums, end


def _map(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def sample_excursions(rho, x0, f_list, n, seed, workers=1, domain=0, cap=DEFAULT_CAP):
    """Simulate ``n`` independent excursions from ``x0``.

    Returns
    -------
    ExcursionBatch
    """
    _require_negative_drift(rho)
    if x0 < 0:
        raise ValueError("start must be non-negative")
    fs = list(f_list)
    counts = _rng.split_counts(n, workers)

    def run(w):
        return _simulate(rho, x0, fs, counts[w], _rng.stream(seed, domain, w), cap)

    parts = _map(run, list(range(len(counts))), workers)
    tau = np.concatenate([p[0] for p in parts])
    sums = np.concatenate([p[1] for p in parts], axis=1)
    end = np.concatenate([p[2] for p in parts])
    return ExcursionBatch(tau=tau, f_sums=sums, end_states=end, start_x=float(x0),
                          seed=int(seed), workers=len(counts))


def sample_excursions_multi(rho, starts, f_list, seed, workers=1, domain=0, cap=DEFAULT_CAP):
    """One excursion per entry of ``starts``, simulated as a single population."""
    _require_negative_drift(rho)
    starts = np.asarray(starts, dtype=float)
    if (starts < 0).any():
        raise ValueError("starts must be non-negative")
    fs = list(f_list)
    counts = _rng.split_counts(starts.size, workers)
    offsets = np.concatenate([[0], np.cumsum(counts)])

    def run(w):
        x0 = starts[offsets[w]:offsets[w + 1]]
        return _simulate(rho, x0, fs, counts[w], _rng.stream(seed, domain, w), cap)

    parts = _map(run, list(range(len(counts))), workers)
    return (np.concatenate([p[0] for p in parts]),
            np.concatenate([p[1] for p in parts], axis=1))


def sample_excursion(rho, x0, f_list, seed, cap=DEFAULT_CAP):
    """One excursion: ``(tau, [sum_{k<tau} f_i(X_k) for each f_i])``."""
    b = sample_excursions(rho, x0, f_list, 1, seed, cap=cap)
    return int(b.tau[0]), b.f_sums[:, 0].tolist()


def kac_from_batch(batch):
    """Ratio estimates ``sum(f-sums) / sum(tau)`` with delta-method SEs."""
    tau = batch.tau.astype(float)
    out = []
    for a in batch.f_sums:
        out.append(Estimate(float(a.sum() / tau.sum()), ratio_se(a, tau)))
    return out


def kac_estimator(rho, f_list, n_excursions, seed, workers=1):
    """Estimate ``mu(f) = E_0 sum_{k<tau} f(X_k) / E_0 tau`` for each ``f``.

    All excursions start at 0.

    Returns
    -------
    list of Estimate
    """
    if n_excursions < MIN_KAC_EXCURSIONS:
        raise ValueError(f"need at least {MIN_KAC_EXCURSIONS} excursions")
    batch = sample_excursions(rho, 0.0, f_list, n_excursions, seed, workers)
    return kac_from_batch(batch)


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.inf
    return Estimate(float(v.mean()), se)


def r_estimate(rho, f, x, n_excursions, seed, workers=1):
    """Excursion-sum potential ``Rf(x)`` with its standard error."""
    batch = sample_excursions(rho, x, [f], n_excursions, seed, workers)
    return _mean_se(batch.f_sums[0])


def _phi(phi):
    if callable(phi):
        return phi
    if phi == "linear":
        return lambda n: n.astype(float)
    if phi == "quadratic":
        return lambda n: n.astype(float) ** 2
    if isinstance(phi, (tuple, list)) and phi[0] == "exponential":
        a = float(phi[1])
        if not 0 < a < 1:
            raise ValueError("exponential phi needs a in (0, 1)")
        return lambda n: np.power(a, 1.0 - n.astype(float))
    raise ValueError(f"unknown phi {phi!r}")


def phi_moment(rho, x, phi, n_excursions, seed, workers=1, cap=DEFAULT_CAP):
    """``E_x phi(tau)`` for ``phi`` in ``{"linear", "quadratic", ("exponential", a)}``."""
    fn = _phi(phi)
    batch = sample_excursions(rho, x, [], n_excursions, seed, workers, cap=cap)
    with np.errstate(over="ignore"):
        return _mean_se(fn(batch.tau))


@dataclass
class PoissonSolution:
    """Monte Carlo solution ``g = R(f - mu(f))`` of ``g - Pg = f - mu(f)`` on a grid.

    ``se`` combines the per-point excursion noise with the uncertainty of
    ``mu_f``.  ``residual`` is ``g - Pg - (f - mu_f)`` with ``Pg`` computed on
    the piecewise-linear interpolant; it is NaN at points whose one-step law
    leaves the grid.
    """

    grid: np.ndarray
    g_hat: np.ndarray
    mu_f: float
    mu_se: float
    se: np.ndarray
    residual: np.ndarray
    residual_se: np.ndarray
    point_se: np.ndarray = field(repr=False)
    interp_error_bound: float = 0.0
    tau_mean: np.ndarray = field(default=None, repr=False)

    def interpolant(self):
        return Interpolant(self.grid, self.g_hat)


def _is_integer_lattice(rho, grid):
    if not rho.is_discrete or not np.all(rho.ys == np.round(rho.ys)):
        return False
    return bool(np.all(grid == np.arange(grid.size)))


def _interp_bound(grid, g, se):
    """``h^2/8 max|g''|`` with ``g''`` from coarse second differences.

    Each difference is shrunk by twice its own standard error, so excursion
    noise alone does not register as curvature.
    """
    m = grid.size
    s = max(1, m // 16)
    if m < 2 * s + 1:
        return 0.0
    x0, x1, x2 = grid[:-2 * s], grid[s:-s], grid[2 * s:]
    c0 = 2.0 / ((x1 - x0) * (x2 - x0))
    c2 = 2.0 / ((x2 - x1) * (x2 - x0))
    c1 = c0 + c2
    d2 = c0 * g[:-2 * s] - c1 * g[s:-s] + c2 * g[2 * s:]
    d2_se = np.sqrt((c0 * se[:-2 * s]) ** 2 + (c1 * se[s:-s]) ** 2 + (c2 * se[2 * s:]) ** 2)
    curv = np.maximum(np.abs(d2) - 2.0 * d2_se, 0.0)
    h = float(np.max(np.diff(grid)))
    return h * h / 8.0 * float(np.max(curv))


def poisson_solve(rho, f, grid, n_excursions_per_point, seed, workers=1,
                  n_excursions_kac=100_000, quad=DEFAULT_QUAD, interp_tol=None):
    """Solve Poisson's equation for the walk on ``grid`` by regenerative simulation.

    ``mu(f)`` comes from excursions started at 0; ``g(x) = R(f - mu(f))(x)``
    from independent excursions started at each grid point.

    Raises
    ------
    NonNegativeDrift
    GridTooCoarse
        The estimated interpolation error of ``g`` exceeds ``interp_tol``
        (default: the median residual standard error).
    """
    _require_negative_drift(rho)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing and start at 0")
    mu, mu_se = kac_estimator(rho, [f], n_excursions_kac, seed, workers)[0]
    one = constant(1.0)
    m = grid.size
    a = np.empty(m)
    t = np.empty(m)
    g = np.empty(m)
    point_se = np.empty(m)
    for j, x in enumerate(grid):
        b = sample_excursions(rho, x, [f], n_excursions_per_point, seed, workers, domain=j + 1)
        tau = b.tau.astype(float)
        c = b.f_sums[0] - mu * tau
        a[j] = b.f_sums[0].mean()
        t[j] = tau.mean()
        g[j] = c.mean()
        point_se[j] = c.std(ddof=1) / math.sqrt(c.size)
    se = np.sqrt(point_se**2 + (t * mu_se) ** 2)
    W, inside = grid_kernel_matrix(rho, grid, quad)
    fv = np.asarray(f(grid), dtype=float)
    base = a - W @ a - fv
    slope = t - W @ t - 1.0
    residual = base - mu * slope
    M = np.eye(m) - W
    residual_se = np.sqrt((M**2) @ point_se**2 + (slope * mu_se) ** 2)
    residual[~inside] = np.nan
    residual_se[~inside] = np.nan
    bound = 0.0 if _is_integer_lattice(rho, grid) else _interp_bound(grid, g, point_se)
    tol = float(np.nanmedian(residual_se)) if interp_tol is None else float(interp_tol)
    if bound > tol:
        raise GridTooCoarse(f"interpolation error bound {bound:.3g} exceeds tolerance {tol:.3g}")
    return PoissonSolution(grid=grid, g_hat=g, mu_f=mu, mu_se=mu_se, se=se, residual=residual,
                           residual_se=residual_se, point_se=point_se, interp_error_bound=bound,
                           tau_mean=t)


def conditional_variance(rho, g, quad=DEFAULT_QUAD):
    """Vectorized ``x -> P(g^2)(x) - (Pg(x))^2`` (clipped at 0)."""

    def h(x):
        pg2 = kernel_apply(rho, lambda z: g(z) ** 2, x, quad)
        pg = kernel_apply(rho, g, x, quad)
        return np.maximum(pg2 - pg * pg, 0.0)

    return h


def _hat(it, j):
    def phi(z):
        i, wl, wr = it.weights(z)
        return np.where(i == j, wl, 0.0) + np.where(i + 1 == j, wr, 0.0)

    return phi


def sigma2_via_g(rho, f, grid, n_excursions, seed, workers=1, solution=None,
                 n_excursions_per_point=20_000, quad=DEFAULT_QUAD):
    """Asymptotic variance ``int P(g^2) - (Pg)^2 dmu`` from the Poisson solution.

    The SE adds the noise of ``g`` to that of the final average.  It is
    propagated by the delta method: the derivative in the grid value ``g_j``
    is ``2 mu(P(g phi_j) - Pg P phi_j)`` with ``phi_j`` the hat function,
    evaluated with the grid kernel matrix and Kac estimates of ``mu(phi_j)``.
    The cost grows with the grid size (one extra function per point).
    """
    if solution is None:
        solution = poisson_solve(rho, f, grid, n_excursions_per_point, seed, workers,
                                 n_excursions_kac=n_excursions, quad=quad)
    g = solution.g_hat
    if not np.any(g):
        return Estimate(0.0, 0.0)
    it = solution.interpolant()
    h = conditional_variance(rho, it, quad)
    hats = [_hat(it, j) for j in range(g.size)]
    ests = kac_estimator(rho, [h] + hats, n_excursions, seed, workers)
    w = np.array([e.value for e in ests[1:]])
    W, _ = grid_kernel_matrix(rho, solution.grid, quad)
    grad = 2.0 * (w[:, None] * W * (g[None, :] - (W @ g)[:, None])).sum(axis=0)
    var_g = (grad**2) @ solution.point_se**2
    if solution.tau_mean is not None:
        # g_j = a_j - mu t_j shares the error of mu across all points
        var_g += (grad @ solution.tau_mean * solution.mu_se) ** 2
    return Estimate(ests[0].value, math.sqrt(ests[0].se**2 + var_g))


@dataclass
class CltReport:
    """Diagnostics of one long trajectory.

    ``sigma2_n`` holds ``(n, sigma^2_n)`` from regeneration cycles completed
    by step ``n``; ``sigma2_batch_means`` is the classical fixed-size batch
    estimate at the full length, kept for comparison.
    """

    n_steps: int
    batch_size: int
    mu_hat: float
    mu_se: float
    n_cycles: int
    sigma2_n: list
    sigma2_limit: float
    sigma2_rel_change: float
    sigma2_batch_means: float
    degenerate: bool
    batch_z: np.ndarray
    ks_stat: float
    ks_p: float
    lil_track: list
    lil_max: float
    lil_min: float
    lil_window: tuple
    lindeberg: list
    tail_decay: dict

    def series_rows(self):
        """CSV rows ``n, sigma2_n, L_n`` over the union of both schedules."""
        s2 = dict(self.sigma2_n)
        ll = dict(self.lil_track)
        rows = []
        for n in sorted(set(s2) | set(ll)):
            rows.append((n, s2.get(n, math.nan), ll.get(n, math.nan)))
        return rows


def _regenerative_sigma2(fx, zeros, n):
    """Cycle-based mean and variance from cycles completed by ``n``."""
    z = zeros[zeros <= n]
    if z.size < 3:
        return math.nan, math.nan, 0
    csum = np.concatenate([[0.0], np.cumsum(fx[: z[-1]])])
    A = csum[z[1:]] - csum[z[:-1]]
    tau = np.diff(z).astype(float)
    mu = A.sum() / tau.sum()
    s2 = float(((A - mu * tau) ** 2).sum() / tau.sum())
    return float(mu), s2, int(A.size)


def _pg_on_states(rho, g, states, quad):
    if rho.is_discrete:
        return kernel_apply(rho, g, states, quad)
    # continuous steps: tabulate Pg on a fine grid, then interpolate
    top = float(states.max()) if states.size else 1.0
    tab = np.linspace(0.0, max(top, 1e-9), 4097)
    return Interpolant(tab, kernel_apply(rho, g, tab, quad))(states)


def clt_experiment(rho, f, x0, n_steps, batch_size, seed, g=None, alpha=0.5, eps=0.1,
                   lil_window=(10**5, 10**7), quad=DEFAULT_QUAD, track_points=512):
    """LLN / CLT / LIL diagnostics for ``f`` along one trajectory of ``n_steps``.

    Parameters
    ----------
    g : callable, optional
        Poisson solution for ``f``; when given, the Lindeberg statistic of the
        martingale increments ``g(X_{k+1}) - Pg(X_k)`` is computed.
    alpha : float
        Exponent of the tail-decay check ``|f(X_n)| / n^(1 + alpha)``.
    """
    _require_negative_drift(rho)
    if not rho.declared_moment_order > 4.0 + alpha:
        raise MomentTooLow(f"CLT diagnostics need moments beyond order {4.0 + alpha}, "
                           f"step law declares {rho.declared_moment_order}")
    if batch_size < MIN_BATCH:
        raise BatchTooSmall(f"batch_size must be >= {MIN_BATCH}, got {batch_size}")
    n = int(n_steps)
    if n < 2 * batch_size:
        raise ValueError("need at least two batches")
    traj = sample_path(rho, x0, n, seed)
    states = traj.states
    fx = np.asarray(f(states[:n]), dtype=float)
    zeros = np.flatnonzero(states[: n + 1] == 0.0)

    mu_hat = float(fx.mean())
    checkpoints = []
    k = n
    while k >= batch_size:
        checkpoints.append(k)
        k //= 2
    checkpoints = checkpoints[::-1]
    sigma2_n = []
    n_cycles = 0
    for c in checkpoints:
        _, s2, n_cycles = _regenerative_sigma2(fx, zeros, c)
        sigma2_n.append((int(c), s2))
    sigma2_limit = sigma2_n[-1][1]
    prev = sigma2_n[-2][1] if len(sigma2_n) > 1 else math.nan
    scale = 1.0 + mu_hat * mu_hat
    degenerate = not (sigma2_limit > 1e-12 * scale)
    if degenerate:
        sigma2_limit = 0.0
        rel = 0.0
        sigma2_n = [(c, 0.0 if not math.isnan(v) else v) for c, v in sigma2_n]
    else:
        rel = abs(sigma2_limit - prev) / sigma2_limit

    nb = n // batch_size
    B = fx[: nb * batch_size].reshape(nb, batch_size).sum(axis=1)
    sigma2_bm = float(((B - batch_size * mu_hat) ** 2).sum() / (nb - 1) / batch_size)

    if degenerate:
        batch_z = np.zeros(0)
        ks_stat = ks_p = math.nan
        track, lil_max, lil_min = [], math.nan, math.nan
        mu_se = 0.0
    else:
        batch_z = (B - batch_size * mu_hat) / math.sqrt(batch_size * sigma2_limit)
        ks_stat, ks_p = ks_normal_test(batch_z) if nb >= 50 else (math.nan, math.nan)
        mu_se = math.sqrt(sigma2_limit / n)
        S = np.cumsum(fx)
        ns = np.arange(1, n + 1, dtype=float)
        lo, hi = max(16, int(lil_window[0])), min(n, int(lil_window[1]))
        if hi >= lo:
            seg = slice(lo - 1, hi)
            Lw = (S[seg] - ns[seg] * mu_hat) / np.sqrt(2.0 * ns[seg] * sigma2_limit * np.log(np.log(ns[seg])))
            lil_max, lil_min = float(Lw.max()), float(Lw.min())
        else:
            lil_max = lil_min = math.nan
        pts = np.unique(np.geomspace(16, n, track_points).astype(np.int64))
        track = lil_track(np.column_stack([pts, S[pts - 1]]), mu_hat, sigma2_limit)

    lindeberg = []
    if g is not None:
        d = np.asarray(g(states[1: n + 1]), dtype=float) - _pg_on_states(rho, g, states[:n], quad)
        lindeberg = [(m_, eps, v) for m_, v in lindeberg_statistic(d, eps)]

    idx = np.arange(1, n)
    ratio = np.abs(fx[1:]) / idx ** (1.0 + alpha)
    q = max(1, (n - 1) // 4)
    tail = {
        "alpha": alpha,
        "first_quarter_max": float(ratio[:q].max()),
        "last_quarter_max": float(ratio[-q:].max()),
    }

    return CltReport(
        n_steps=n, batch_size=int(batch_size), mu_hat=mu_hat, mu_se=mu_se, n_cycles=n_cycles,
        sigma2_n=sigma2_n, sigma2_limit=float(sigma2_limit), sigma2_rel_change=float(rel),
        sigma2_batch_means=sigma2_bm, degenerate=degenerate, batch_z=batch_z,
        ks_stat=float(ks_stat), ks_p=float(ks_p), lil_track=track, lil_max=lil_max,
        lil_min=lil_min, lil_window=(int(lil_window[0]), int(lil_window[1])),
        lindeberg=lindeberg, tail_decay=tail,
    )
