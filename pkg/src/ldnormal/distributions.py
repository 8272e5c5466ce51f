"""Truncated integer PMFs for the intermediate families and the discretized normal.

Every PMF lives on a contiguous integer window ``[lo, lo + len(probs))`` and
records the probability mass it does not represent in ``tail_mass``.
Windows are trimmed with a moment-aware rule: an edge point is dropped only
while the cumulative ``p_k * (1 + |k - center|)**3`` of the dropped points stays
within the budget, so trimming cannot distort the first three moments by more
than the budget itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import AccuracyError, ParameterError
from .params import (
    BinPoisParams,
    CumulantTriple,
    NegBinPoisParams,
    NormalParams,
    TriplePoisParams,
)

DEFAULT_EPS = 1e-12
MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class IntegerPMF:
    """Probability mass on the integers ``lo, lo+1, ...`` with recorded tail mass."""

    lo: int
    probs: np.ndarray
    tail_mass: float = 0.0
    meta: str = ""

    def __post_init__(self):
        probs = np.ascontiguousarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ParameterError("probs must be a non-empty 1-d array")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ParameterError("probs must be finite and non-negative")
        if not (self.tail_mass >= 0):
            raise ParameterError(f"tail_mass must be >= 0, got {self.tail_mass}")
        total = math.fsum(probs) + self.tail_mass
        if abs(total - 1.0) > MASS_TOL:
            raise ParameterError(f"probs + tail_mass sum to {total!r}, not 1 within {MASS_TOL}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "lo", int(self.lo))
        object.__setattr__(self, "tail_mass", float(self.tail_mass))

    @property
    def hi(self) -> int:
        """Largest represented point."""
        return self.lo + self.probs.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def __len__(self):
        return self.probs.size

    def pmf(self, k):
        """Mass at ``k`` (scalar or array); zero outside the window."""
        k = np.asarray(k)
        idx = k - self.lo
        inside = (idx >= 0) & (idx < self.probs.size)
        out = np.where(inside, self.probs[np.clip(idx, 0, self.probs.size - 1)], 0.0)
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs) / self.probs.sum())

    def variance(self) -> float:
        c = self.mean()
        return float(np.dot((self.support - c) ** 2, self.probs) / self.probs.sum())

    def mass_below(self, k: int) -> float:
        """Represented mass strictly below ``k``."""
        n = min(max(k - self.lo, 0), self.probs.size)
        return float(self.probs[:n].sum())

    def as_dict(self, min_mass: float = 0.0) -> dict:
        return {int(k): float(p) for k, p in zip(self.support, self.probs) if p > min_mass}

    def with_meta(self, meta: str) -> "IntegerPMF":
        return IntegerPMF(self.lo, self.probs, self.tail_mass, meta)


def point_mass(c: int, meta: str = "") -> IntegerPMF:
    return IntegerPMF(int(c), np.array([1.0]), 0.0, meta or f"point mass at {c}")


def from_weights(values, weights, meta: str = "") -> IntegerPMF:
    """Exact law of an integer variable given values and (unnormalized) weights."""
    values = np.asarray(values, dtype=np.int64)
    weights = np.asarray(weights, dtype=float)
    if values.size == 0 or values.shape != weights.shape:
        raise ParameterError("values and weights must be non-empty and the same shape")
    if np.any(weights < 0):
        raise ParameterError("weights must be non-negative")
    lo = int(values.min())
    probs = np.zeros(int(values.max()) - lo + 1)
    np.add.at(probs, values - lo, weights)
    return IntegerPMF(lo, probs / probs.sum(), 0.0, meta)


def bernoulli(p: float) -> IntegerPMF:
    if not (0.0 <= p <= 1.0):
        raise ParameterError(f"p must lie in [0, 1], got {p}")
    return IntegerPMF(0, np.array([1.0 - p, p]), 0.0, f"Bernoulli({p})")


# ---------------------------------------------------------------------------
# scalar PMFs


def pmf_poisson(lam: float, k):
    """Poisson(lam) mass at ``k`` evaluated in log space; zero for ``k < 0``."""
    if not (lam >= 0) or math.isinf(lam):
        raise ParameterError(f"lambda must be a finite value >= 0, got {lam}")
    k = np.asarray(k, dtype=float)
    safe = np.maximum(k, 0.0)
    logp = special.xlogy(safe, lam) - lam - special.gammaln(safe + 1.0)
    out = np.where(k >= 0, np.exp(logp), 0.0)
    return float(out) if out.ndim == 0 else out


def pmf_negbinomial(r: float, p: float, k):
    """Mass at ``k`` of the failure-counting NB(r, p) law, real ``r`` allowed."""
    if not (r > 0) or math.isinf(r):
        raise ParameterError(f"r must be a finite value > 0, got {r}")
    if not (0.0 < p < 1.0):
        raise ParameterError(f"p must lie in (0, 1), got {p}")
    k = np.asarray(k, dtype=float)
    safe = np.maximum(k, 0.0)
    logp = (
        special.gammaln(safe + r)
        - special.gammaln(r)
        - special.gammaln(safe + 1.0)
        + r * math.log(p)
        + safe * math.log1p(-p)
    )
    out = np.where(k >= 0, np.exp(logp), 0.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# window handling


def _trim(lo: int, probs: np.ndarray, budget: float, center: float):
    """Drop edge points whose cubic-weighted mass fits in ``budget/2`` per side."""
    if budget <= 0 and probs[0] > 0 and probs[-1] > 0:
        return lo, probs, 0.0
    k = lo + np.arange(probs.size)
    w = probs * (1.0 + np.abs(k - center)) ** 3
    half = max(budget, 0.0) / 2.0
    left = int(np.searchsorted(np.cumsum(w), half, side="right"))
    right = int(np.searchsorted(np.cumsum(w[::-1]), half, side="right"))
    left = min(left, probs.size - 1)
    right = min(right, probs.size - 1 - left)
    kept = probs[left : probs.size - right]
    dropped = math.fsum(probs[:left]) + math.fsum(probs[probs.size - right :])
    return lo + left, kept, dropped


def _finish(lo, probs, tail, budget, center, meta) -> IntegerPMF:
    probs = np.clip(probs, 0.0, None)
    lo, probs, dropped = _trim(lo, probs, budget, center)
    return IntegerPMF(lo, probs, max(tail + dropped, 0.0), meta)


def _component(logpmf, logsf, mean: float, sd: float, eps: float):
    """Window ``[0, hi]`` for a non-negative law whose weighted upper tail is below eps."""
    hi = int(math.ceil(mean + max(12.0 * sd, 40.0)))
    while True:
        tail = math.exp(logsf(hi))
        if tail * (1.0 + hi - mean) ** 3 <= eps:
            break
        hi = 2 * hi
    k = np.arange(hi + 1, dtype=float)
    return np.exp(logpmf(k)), tail


def _poisson_array(lam: float, eps: float):
    if lam == 0:
        return np.array([1.0]), 0.0
    sd = math.sqrt(lam)
    return _component(
        lambda k: stats.poisson.logpmf(k, lam),
        lambda h: stats.poisson.logsf(h, lam),
        lam,
        sd,
        eps,
    )


def _negbin_array(r: float, p: float, eps: float):
    q = 1.0 - p

    def logpmf(k):
        return (
            special.gammaln(k + r)
            - special.gammaln(r)
            - special.gammaln(k + 1.0)
            + r * math.log(p)
            + k * math.log1p(-p)
        )

    return _component(
        logpmf,
        lambda h: stats.nbinom.logsf(h, r, p),
        r * q / p,
        math.sqrt(r * q) / p,
        eps,
    )


def _spread(arr: np.ndarray, stride: int) -> np.ndarray:
    """Place ``arr[j]`` at index ``stride * j`` (law of ``stride * X``)."""
    if stride == 1 or arr.size == 1:
        return arr
    out = np.zeros(stride * (arr.size - 1) + 1)
    out[::stride] = arr
    return out


def _combine(parts, eps: float, center: float, meta: str) -> IntegerPMF:
    """Convolve component arrays (each on ``[0, len)``) and trim to the remaining budget."""
    probs = np.array([1.0])
    keep = 1.0
    for arr, tail in parts:
        probs = np.convolve(probs, arr)
        keep *= 1.0 - tail
    tail = 1.0 - keep
    return _finish(0, probs, tail, eps - tail, center, meta)


# ---------------------------------------------------------------------------
# public constructors


def convolve(a: IntegerPMF, b: IntegerPMF, eps: float = 0.0) -> IntegerPMF:
    """Law of the sum of independent variables with laws ``a`` and ``b``."""
    probs = np.convolve(a.probs, b.probs)
    lo = a.lo + b.lo
    tail = a.tail_mass + b.tail_mass - a.tail_mass * b.tail_mass
    center = (a.mean() if a.probs.sum() > 0 else 0.0) + b.mean()
    meta = f"({a.meta}) * ({b.meta})" if a.meta or b.meta else ""
    return _finish(lo, probs, tail, eps, center, meta)


def build_poisson(lam: float, eps: float = DEFAULT_EPS) -> IntegerPMF:
    if not (lam >= 0) or math.isinf(lam):
        raise ParameterError(f"lambda must be a finite value >= 0, got {lam}")
    return _combine([_poisson_array(lam, eps / 4)], eps, lam, f"Poisson({lam})")


def build_M1(params: BinPoisParams, eps: float = DEFAULT_EPS) -> IntegerPMF:
    """B(n, p) * Poisson(lam)."""
    if not isinstance(params, BinPoisParams):
        raise ParameterError("build_M1 needs BinPoisParams")
    n, p, lam = params.n, params.p, params.lam
    binom = stats.binom.pmf(np.arange(n + 1), n, p) if n > 0 else np.array([1.0])
    mean = n * p + lam
    return _combine(
        [(binom, 0.0), _poisson_array(lam, eps / 4)],
        eps,
        mean,
        f"M1(n={n}, p={p}, lam={lam})",
    )


def build_M2(params: NegBinPoisParams, eps: float = DEFAULT_EPS) -> IntegerPMF:
    """NB(r, p) * Poisson(lam), NB counting failures."""
    if not isinstance(params, NegBinPoisParams):
        raise ParameterError("build_M2 needs NegBinPoisParams")
    r, p, lam = params.r, params.p, params.lam
    mean = r * params.q / p + lam
    return _combine(
        [_negbin_array(r, p, eps / 4), _poisson_array(lam, eps / 4)],
        eps,
        mean,
        f"M2(r={r}, p={p}, lam={lam})",
    )


def build_M3(params: TriplePoisParams, eps: float = DEFAULT_EPS) -> IntegerPMF:
    """Poisson(lam) * 2 Poisson(omega/2) * 3 Poisson(eta/3)."""
    if not isinstance(params, TriplePoisParams):
        raise ParameterError("build_M3 needs TriplePoisParams")
    lam, omega, eta = params.lam, params.omega, params.eta
    a, ta = _poisson_array(lam, eps / 6)
    b, tb = _poisson_array(omega / 2, eps / 6)
    c, tc = _poisson_array(eta / 3, eps / 6)
    return _combine(
        [(a, ta), (_spread(b, 2), tb), (_spread(c, 3), tc)],
        eps,
        lam + omega + eta,
        f"M3(lam={lam}, omega={omega}, eta={eta})",
    )


def build_family(params, eps: float = DEFAULT_EPS) -> IntegerPMF:
    """Dispatch on the parameter type."""
    if isinstance(params, BinPoisParams):
        return build_M1(params, eps)
    if isinstance(params, NegBinPoisParams):
        return build_M2(params, eps)
    if isinstance(params, TriplePoisParams):
        return build_M3(params, eps)
    if isinstance(params, NormalParams):
        return build_discretized_normal(params, eps)
    raise ParameterError(f"unsupported parameter object {params!r}")


def build_discretized_normal(params: NormalParams, eps: float = DEFAULT_EPS) -> IntegerPMF:
    """Normal(mu, sigma2) mass on ``[k - 1/2, k + 1/2]`` for every integer k.

    The law lives on all of the integers. ``meta`` reports the mass sitting
    below zero, which a version restricted to ``k >= 0`` would lose.
    """
    if not isinstance(params, NormalParams):
        raise ParameterError("build_discretized_normal needs NormalParams")
    mu, sd = params.mu, params.sigma
    half = max(12.0 * sd, 40.0)
    lo = int(math.floor(mu - half))
    hi = int(math.ceil(mu + half))
    while True:
        left = special.ndtr((lo - 0.5 - mu) / sd)
        right = special.ndtr(-(hi + 0.5 - mu) / sd)
        wl = left * (1.0 + mu - lo) ** 3
        wr = right * (1.0 + hi - mu) ** 3
        if wl + wr <= eps / 4:
            break
        lo -= int(half)
        hi += int(half)
    k = np.arange(lo, hi + 1, dtype=float)
    zu = (k + 0.5 - mu) / sd
    zl = (k - 0.5 - mu) / sd
    # cdf differences below the mean and survival differences above keep precision
    below = special.ndtr(zu) - special.ndtr(zl)
    above = special.ndtr(-zl) - special.ndtr(-zu)
    probs = np.where(k <= mu, below, above)
    neg_mass = float(special.ndtr((-0.5 - mu) / sd))
    meta = f"Yd(mu={mu}, sigma2={params.sigma2}); full integer support; mass below 0 = {neg_mass:.3e}"
    return _finish(lo, probs, float(left + right), eps - float(left + right), mu, meta)


# ---------------------------------------------------------------------------
# cumulants


def closed_form_cumulants(family, params=None) -> CumulantTriple:
    """First three factorial cumulants of an intermediate family.

    ``family`` is ``"M1"``, ``"M2"`` or ``"M3"``; passing a parameter object
    alone is also accepted.
    """
    if params is None:
        params, family = family, getattr(family, "family", None)
    if family == "M1" and isinstance(params, BinPoisParams):
        n, p, lam = params.n, params.p, params.lam
        return CumulantTriple(n * p + lam, -n * p**2, 2 * n * p**3)
    if family == "M2" and isinstance(params, NegBinPoisParams):
        r, p, q, lam = params.r, params.p, params.q, params.lam
        return CumulantTriple(r * q / p + lam, r * q**2 / p**2, 2 * r * q**3 / p**3)
    if family == "M3" and isinstance(params, TriplePoisParams):
        lam, om, eta = params.lam, params.omega, params.eta
        return CumulantTriple(lam + om + eta, om + 2 * eta, 2 * eta)
    raise ParameterError(f"family {family!r} does not match parameters {params!r}")


def numeric_cumulants(pmf: IntegerPMF, max_tail: float = 1e-9) -> CumulantTriple:
    """Factorial cumulants of a PMF from its first three moments.

    Raises ``AccuracyError`` when the tail mass exceeds ``max_tail``; the
    error carries ``tail_mass * (1 + R)**3`` with R the window radius, the
    third-moment error if the missing mass sat just outside the window.
    """
    radius = max(abs(pmf.lo), abs(pmf.hi)) + 1
    if pmf.tail_mass > max_tail:
        bound = pmf.tail_mass * (1.0 + radius) ** 3
        raise AccuracyError(
            f"tail mass {pmf.tail_mass:.3e} exceeds {max_tail:.3e}; third-moment error up to {bound:.3e}",
            bound=bound,
        )
    k = pmf.support.astype(float)
    w = pmf.probs / pmf.probs.sum()
    c = float(np.dot(k, w))
    d = k - c
    c = c + float(np.dot(d, w))  # one refinement step for the mean
    d = k - c
    k2 = float(np.dot(d * d, w))
    k3 = float(np.dot(d * d * d, w))
    return CumulantTriple(c, k2 - c, k3 - 3 * k2 + 2 * c)


def moments_of(pmf: IntegerPMF):
    """Raw moments (m1, m2, m3) of the represented, renormalized mass."""
    k = pmf.support.astype(float)
    w = pmf.probs / pmf.probs.sum()
    return float(np.dot(k, w)), float(np.dot(k**2, w)), float(np.dot(k**3, w))
