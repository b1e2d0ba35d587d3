"""Small statistical toolkit used by the Monte Carlo engine.

Ratio estimators (regenerative CIs), a one-sample Kolmogorov-Smirnov test
against the standard normal, the iterated-logarithm normalization and the
Lindeberg truncated second moment.
"""

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateVariance, TooFewSamples

MIN_RATIO_SAMPLES = 30
MIN_KS_SAMPLES = 50
MIN_LIL_N = 16


@dataclass
class RatioAccumulator:
    """Running sums for a ratio estimator ``sum(a) / sum(b)``.

    ``a`` is the per-cycle numerator (an excursion sum of ``f``) and ``b`` the
    per-cycle denominator (the excursion length ``tau``).
    """

    n: int = 0
    sum_a: float = 0.0
    sum_b: float = 0.0
    sum_a2: float = 0.0
    sum_b2: float = 0.0
    sum_ab: float = 0.0

    @classmethod
    def from_arrays(cls, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape != b.shape:
            raise ValueError("numerator and denominator samples differ in length")
        return cls(
            n=int(a.size),
            sum_a=float(a.sum()),
            sum_b=float(b.sum()),
            sum_a2=float(a @ a),
            sum_b2=float(b @ b),
            sum_ab=float(a @ b),
        )

    def add(self, a, b):
        self.merge(RatioAccumulator.from_arrays(a, b))
        return self

    def merge(self, other):
        self.n += other.n
        self.sum_a += other.sum_a
        self.sum_b += other.sum_b
        self.sum_a2 += other.sum_a2
        self.sum_b2 += other.sum_b2
        self.sum_ab += other.sum_ab
        return self

    @property
    def estimate(self):
        return self.sum_a / self.sum_b

    def standard_error(self):
        """Delta-method standard error of ``sum_a / sum_b``."""
        n = self.n
        if n < 2:
            return math.inf
        r = self.estimate
        abar = self.sum_a / n
        bbar = self.sum_b / n
        # sample variance of a_i - r b_i, expanded in the accumulated moments
        ss = (
            self.sum_a2
            - 2.0 * r * self.sum_ab
            + r * r * self.sum_b2
            - n * (abar - r * bbar) ** 2
        )
        ss = max(ss, 0.0) / (n - 1)
        return math.sqrt(ss / n) / bbar


def ratio_se(a, b):
    """Delta-method SE computed from the samples directly (better conditioned)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.size
    if n < 2:
        return math.inf
    r = a.sum() / b.sum()
    resid = a - r * b
    return float(np.sqrt(resid.var(ddof=1) / n) / b.mean())


def ratio_ci(acc, level=0.95):
    """Point estimate and CI half-width for a ratio of means.

    Parameters
    ----------
    acc : RatioAccumulator
    level : float
        Two-sided confidence level.

    Returns
    -------
    estimate, half_width : float
    """
    if acc.n < MIN_RATIO_SAMPLES:
        raise TooFewSamples(f"need at least {MIN_RATIO_SAMPLES} cycles, got {acc.n}")
    if acc.sum_b <= 0:
        raise ValueError("denominator sum must be positive")
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    return acc.estimate, z * acc.standard_error()


def kolmogorov_sf(lam, term_tol=1e-10):
    """Survival function of the Kolmogorov limit law, ``P(K > lam)``."""
    if lam <= 0:
        return 1.0
    if lam < 1.0:
        # theta-function form converges fast for small lam
        s = 0.0
        k = 1
        c = math.pi**2 / (8.0 * lam * lam)
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * c)
            s += term
            if term < term_tol:
                break
            k += 1
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / lam * s))
    s = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * lam * lam)
        s += term if k % 2 else -term
        if term < term_tol:
            break
        k += 1
    return min(1.0, max(0.0, 2.0 * s))


def ks_normal_test(samples):
    """One-sample two-sided KS test of ``samples`` against N(0, 1).

    The p-value is the asymptotic Kolmogorov tail at ``sqrt(n) D`` with no
    small-sample correction.

    Returns
    -------
    D, p : float
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < MIN_KS_SAMPLES:
        raise TooFewSamples(f"KS test needs at least {MIN_KS_SAMPLES} samples, got {n}")
    cdf = ndtr(x)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - cdf)
    d_minus = np.max(cdf - (i - 1) / n)
    D = float(max(d_plus, d_minus))
    return D, kolmogorov_sf(math.sqrt(n) * D)


def lil_track(partial_sums, mu, sigma2):
    """``L_n = (S_n - n mu) / sqrt(2 n sigma2 ln ln n)`` for each ``(n, S_n)``."""
    if not sigma2 > 0:
        raise DegenerateVariance(f"sigma2 must be positive, got {sigma2}")
    arr = np.asarray(partial_sums, dtype=float).reshape(-1, 2)
    n, S = arr[:, 0], arr[:, 1]
    if (n < MIN_LIL_N).any():
        raise ValueError(f"L_n is only defined here for n >= {MIN_LIL_N}")
    L = (S - n * mu) / np.sqrt(2.0 * n * sigma2 * np.log(np.log(n)))
    return list(zip(n.astype(np.int64).tolist(), L.tolist()))


def doubling_schedule(n_max, start=1):
    out = []
    n = int(start)
    while n <= n_max:
        out.append(n)
        n *= 2
    return out


def lindeberg_statistic(increments, eps, schedule=None):
    """Truncated second moment ``(1/n) sum_{k<n} d_k^2 1{|d_k| >= eps sqrt(n)}``.

    Evaluated at ``n = 1, 2, 4, ...`` up to ``len(increments)`` unless an
    explicit schedule is given.  The indicator is inclusive.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    d = np.asarray(increments, dtype=float)
    if schedule is None:
        schedule = doubling_schedule(d.size)
    ad = np.abs(d)
    sq = d * d
    out = []
    for n in schedule:
        head = ad[:n]
        thr = eps * math.sqrt(n)
        out.append((int(n), float(sq[:n][head >= thr].sum() / n)))
    return out
