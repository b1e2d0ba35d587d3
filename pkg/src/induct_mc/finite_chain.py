r"""Exact operator calculus for first-return times on finite state spaces.

For a row-stochastic matrix ``P`` and a return set ``Y`` the stopping time is
the first return time ``tau = inf{n >= 1 : X_n in Y}``.  With
``T = P diag(1_{Y^c})`` (the chain killed on entering ``Y``) the four
operators are

* ``S = P diag(1_Y)``            -- ``Sf(x) = E_x[f(X_1); tau = 1]``
* ``R = sum_n T^n = (I - T)^-1`` -- ``Rf(x) = E_x[f(X_0) + ... + f(X_{tau-1})]``
* ``Q = R S``                    -- ``Qf(x) = E_x f(X_tau)``
* ``R 1``                        -- ``E_x tau``

Everything is dense numpy; the intended sizes are up to a few thousand
states.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import (
    DimensionMismatch,
    NegativeEntry,
    NonUniqueStationary,
    RowSumOutOfTolerance,
    YUnreachable,
)

INPUT_TOL = 1e-12
Q_STOCHASTIC_TOL = 1e-10
IDENTITY_TOL = 1e-9
KAC_TOL = 1e-10


@dataclass(frozen=True)
class StochasticMatrix:
    """Validated dense transition matrix; build it with :func:`validate_stochastic`."""

    entries: np.ndarray

    @property
    def n(self):
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True)
class ReturnSet:
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 1 or not mask.any():
            raise ValueError("return set must be a non-empty boolean vector")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_indices(cls, n, indices):
        mask = np.zeros(n, dtype=bool)
        idx = np.asarray(list(indices), dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise DimensionMismatch(f"return-set index out of range for {n} states")
        mask[idx] = True
        return cls(mask)

    @property
    def indices(self):
        return np.flatnonzero(self.mask)


@dataclass(frozen=True)
class InducedSystem:
    S: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    mean_return: np.ndarray
    Y: ReturnSet


@dataclass(frozen=True)
class MeasureVec:
    """Non-negative (not necessarily normalized) measure on ``{0..n-1}``."""

    weights: np.ndarray

    @property
    def mass(self):
        return float(self.weights.sum())

    def normalized(self):
        return MeasureVec(self.weights / self.mass)

    def integrate(self, f):
        return float(self.weights @ np.asarray(f, dtype=float))


@dataclass(frozen=True)
class IdentityReport:
    r_plus_q: float
    pr_vs_sr: float
    sq_vs_pq: float
    rs_vs_q: float
    tol: float = IDENTITY_TOL

    @property
    def deviations(self):
        return {
            "R+Q-I-RP": self.r_plus_q,
            "(I+PR)-(I+S)R": self.pr_vs_sr,
            "(I+S)Q-S-PQ": self.sq_vs_pq,
            "RS-Q": self.rs_vs_q,
        }

    @property
    def passed(self):
        return max(self.deviations.values()) <= self.tol


@dataclass(frozen=True)
class BijectionReport:
    s_mu_q_invariance: float
    r_s_mu_minus_mu: float
    s_r_nu_minus_nu: float
    r_nu_p_invariance: float
    s_mu: MeasureVec
    r_nu: MeasureVec
    tol: float = IDENTITY_TOL

    @property
    def deviations(self):
        return {
            "Q*(S*mu)-S*mu": self.s_mu_q_invariance,
            "R*S*mu-mu": self.r_s_mu_minus_mu,
            "S*R*nu-nu": self.s_r_nu_minus_nu,
            "P*(R*nu)-R*nu": self.r_nu_p_invariance,
        }

    @property
    def passed(self):
        return max(self.deviations.values()) <= self.tol


def validate_stochastic(raw):
    """Check that ``raw`` is a square row-stochastic matrix.

    Rows whose sums are within ``1e-12`` of one are renormalized exactly;
    anything further off is rejected.

    Raises
    ------
    DimensionMismatch, NegativeEntry, RowSumOutOfTolerance
    """
    P = np.array(raw, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise NegativeEntry("matrix contains non-finite entries")
    if (P < 0).any():
        i, j = np.argwhere(P < 0)[0]
        raise NegativeEntry(f"entry ({i}, {j}) = {P[i, j]} is negative")
    sums = P.sum(axis=1)
    dev = np.abs(sums - 1.0)
    if (dev > INPUT_TOL).any():
        i = int(np.argmax(dev))
        raise RowSumOutOfTolerance(f"row {i} sums to {sums[i]!r}")
    P = P / sums[:, None]
    P.setflags(write=False)
    return StochasticMatrix(P)


def _as_matrix(P):
    return P.entries if isinstance(P, StochasticMatrix) else np.asarray(P, dtype=float)


def _as_mask(Y, n):
    mask = Y.mask if isinstance(Y, ReturnSet) else np.asarray(Y, dtype=bool)
    if mask.shape != (n,):
        raise DimensionMismatch(f"return set has length {mask.shape}, chain has {n} states")
    return mask


def reaches(P, mask):
    """Boolean vector: which states hit ``mask`` with positive probability.

    States in ``mask`` count as reaching it.  ``I - P 1_{Y^c}`` is invertible
    exactly when every state reaches ``Y``.
    """
    P = _as_matrix(P)
    rev = csr_matrix((P > 0).T)
    hit = np.array(mask, dtype=bool, copy=True)
    for y in np.flatnonzero(mask):
        hit[breadth_first_order(rev, y, directed=True, return_predecessors=False)] = True
    return hit


def induced_operators(P, Y):
    """Build ``S``, ``R``, ``Q`` and ``E tau`` for the first return to ``Y``.

    Parameters
    ----------
    P : StochasticMatrix
    Y : ReturnSet or boolean array

    Raises
    ------
    YUnreachable
        Some state does not reach ``Y`` (so ``E_x tau`` is infinite there).
    """
    P = _as_matrix(P)
    n = P.shape[0]
    mask = _as_mask(Y, n)
    ok = reaches(P, mask)
    if not ok.all():
        bad = np.flatnonzero(~ok).tolist()
        raise YUnreachable(f"states {bad} never reach the return set")
    S = P * mask[None, :]
    C = ~mask
    nc = int(C.sum())
    # K = (I - T_CC)^-1 is the killed-chain potential on Y^c; then
    # R = I + P[:, Y^c] K[., :] row by row, so rows with P(x, Y^c) = 0 are exactly e_x.
    R_C = np.zeros((nc, n))
    if nc:
        A = np.eye(nc) - P[np.ix_(C, C)]
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            try:
                K = scipy.linalg.lu_solve(scipy.linalg.lu_factor(A), np.eye(nc))
            except (np.linalg.LinAlgError, ValueError, scipy.linalg.LinAlgWarning) as exc:
                raise RuntimeError("singular I - P 1_{Y^c} after the reachability check passed") from exc
        if not np.all(np.isfinite(K)):
            raise RuntimeError("non-finite potential after the reachability check passed")
        R_C[:, C] = np.maximum(K, 0.0)
    R = np.eye(n) + P[:, C] @ R_C
    Q = R @ S
    mean_return = R.sum(axis=1)
    for M in (S, R, Q, mean_return):
        M.setflags(write=False)
    return InducedSystem(S=S, R=R, Q=Q, mean_return=mean_return, Y=ReturnSet(mask))


def check_identities(P, sys, tol=IDENTITY_TOL):
    """Max-abs deviations of the four operator relations for ``(P, sys)``."""
    P = _as_matrix(P)
    n = P.shape[0]
    if sys.R.shape != (n, n):
        raise DimensionMismatch(f"system is {sys.R.shape[0]}-dimensional, P is {n}")
    I = np.eye(n)
    S, R, Q = sys.S, sys.R, sys.Q

    def dev(M):
        return float(np.max(np.abs(M)))

    return IdentityReport(
        r_plus_q=dev(R + Q - I - R @ P),
        pr_vs_sr=dev((I + P @ R) - (I + S) @ R),
        sq_vs_pq=dev((I + S) @ Q - S - P @ Q),
        rs_vs_q=dev(R @ S - Q),
        tol=tol,
    )


def closed_classes(P):
    """List of closed communicating classes (index arrays)."""
    P = _as_matrix(P)
    adj = csr_matrix(P > 0)
    k, labels = connected_components(adj, directed=True, connection="strong")
    classes = []
    for c in range(k):
        members = labels == c
        # closed iff no probability leaves the class
        if not (P[np.ix_(members, ~members)] > 0).any():
            classes.append(np.flatnonzero(members))
    return classes


def invariant_measure(P):
    """Unique stationary probability vector of ``P``.

    Solves ``(P^T - I) mu = 0`` with the last equation replaced by the
    normalization ``sum(mu) = 1``.

    Raises
    ------
    NonUniqueStationary
        The chain has more than one closed class.
    """
    P = _as_matrix(P)
    n = P.shape[0]
    classes = closed_classes(P)
    if len(classes) != 1:
        raise NonUniqueStationary(f"{len(classes)} closed classes; stationary law is not unique")
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    mu = np.linalg.solve(A, b)
    mu[np.abs(mu) < 1e-300] = 0.0
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    return MeasureVec(mu)


def power_iteration(P, tol=1e-13, maxiter=100_000):
    """Stationary vector by Cesaro-averaged power iteration (cross-check only)."""
    P = _as_matrix(P)
    n = P.shape[0]
    # lazy chain removes periodicity without changing the stationary law
    L = 0.5 * (P + np.eye(n))
    x = np.full(n, 1.0 / n)
    for _ in range(maxiter):
        y = x @ L
        if np.max(np.abs(y - x)) < tol:
            return MeasureVec(y / y.sum())
        x = y
    raise RuntimeError(f"power iteration did not converge in {maxiter} steps")


def stationary_residual(P, m):
    P = _as_matrix(P)
    w = m.weights if isinstance(m, MeasureVec) else np.asarray(m)
    return float(np.max(np.abs(w @ P - w)))


def pushforward(m, T):
    """Adjoint action ``T* m`` (returns ``T^T m``; no renormalization)."""
    w = m.weights if isinstance(m, MeasureVec) else np.asarray(m, dtype=float)
    T = _as_matrix(T)
    if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] != w.shape[0]:
        raise DimensionMismatch(f"measure of length {w.shape[0]} vs operator {T.shape}")
    return MeasureVec(T.T @ w)


def kac_check(P, Y, f):
    """Both sides of ``int f dmu = int S R f dmu``.

    Returns
    -------
    lhs, rhs : float
    """
    f = np.asarray(f, dtype=float)
    mu = invariant_measure(P)
    sys = induced_operators(P, Y)
    if f.shape != mu.weights.shape:
        raise DimensionMismatch(f"f has shape {f.shape}, chain has {mu.weights.size} states")
    return mu.integrate(f), mu.integrate(sys.S @ (sys.R @ f))


def classical_kac(P, Y):
    """``(sum_{y in Y} mu(y) E_y tau, mu(X))``; equal by Kac's lemma."""
    mu = invariant_measure(P)
    sys = induced_operators(P, Y)
    mask = sys.Y.mask
    return float(mu.weights[mask] @ sys.mean_return[mask]), mu.mass


def measure_bijection_check(P, Y, tol=IDENTITY_TOL):
    """Check that ``S*`` and ``R*`` map invariant measures to each other.

    ``nu`` is the stationary law of ``Q``, computed independently of
    ``mu`` (uniqueness of ``mu`` is equivalent to uniqueness of ``nu``).
    """
    Pm = _as_matrix(P)
    mu = invariant_measure(Pm)
    sys = induced_operators(Pm, Y)
    nu = invariant_measure(sys.Q)
    s_mu = pushforward(mu, sys.S)
    r_nu = pushforward(nu, sys.R)

    def dev(a, b):
        return float(np.max(np.abs(a - b)))

    return BijectionReport(
        s_mu_q_invariance=dev(pushforward(s_mu, sys.Q).weights, s_mu.weights),
        r_s_mu_minus_mu=dev(pushforward(s_mu, sys.R).weights, mu.weights),
        s_r_nu_minus_nu=dev(pushforward(r_nu, sys.S).weights, nu.weights),
        r_nu_p_invariance=dev(pushforward(r_nu, Pm).weights, r_nu.weights),
        s_mu=s_mu,
        r_nu=r_nu,
        tol=tol,
    )


def poisson_exact(P, Y, f, mu=None):
    """Centered Poisson solution ``g = R(f - mu(f))`` with ``g - P g = f - mu(f)``.

    Valid when ``Y`` is a single state (an atom), which is the situation of
    the reflected walk; for larger ``Y`` the result still satisfies the
    equation off ``Y``.
    """
    mu = invariant_measure(P) if mu is None else mu
    sys = induced_operators(P, Y)
    f = np.asarray(f, dtype=float)
    mean = mu.integrate(f)
    return sys.R @ (f - mean), mean


def asymptotic_variance(P, Y, f):
    """``sigma^2(f) = int P(g^2) - (Pg)^2 dmu`` for the Poisson solution ``g``."""
    Pm = _as_matrix(P)
    mu = invariant_measure(Pm)
    g, _ = poisson_exact(Pm, Y, f, mu=mu)
    return mu.integrate(Pm @ (g * g) - (Pm @ g) ** 2)


def random_irreducible(n, rng, density=0.5):
    """Random irreducible stochastic matrix (a Hamiltonian cycle keeps it connected)."""
    W = rng.random((n, n)) * (rng.random((n, n)) < density)
    perm = rng.permutation(n)
    W[perm, np.roll(perm, -1)] += rng.random(n) + 0.1
    return validate_stochastic(W / W.sum(axis=1, keepdims=True))
