"""Distances between integer laws and empirical estimates of them."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .distributions import IntegerPMF
from .errors import ParameterError

METHODS = ("exact", "plugin", "bootstrap")


def _aligned(p: IntegerPMF, q: IntegerPMF):
    """Both mass vectors on the union of their windows, with the common ``lo``."""
    lo = min(p.lo, q.lo)
    hi = max(p.hi, q.hi)
    a = np.zeros(hi - lo + 1)
    b = np.zeros(hi - lo + 1)
    a[p.lo - lo : p.lo - lo + len(p)] = p.probs
    b[q.lo - lo : q.lo - lo + len(q)] = q.probs
    return lo, a, b


def total_variation(p: IntegerPMF, q: IntegerPMF) -> float:
    """Half the l1 distance of the represented masses, clipped to [0, 1]."""
    _, a, b = _aligned(p, q)
    return float(min(0.5 * np.abs(a - b).sum(), 1.0))


def tail_uncertainty(p: IntegerPMF, q: IntegerPMF) -> float:
    """Largest change unrepresented mass could make to ``total_variation(p, q)``."""
    return 0.5 * (p.tail_mass + q.tail_mass)


def local_distance(p: IntegerPMF, q: IntegerPMF) -> float:
    """Largest pointwise gap between the two mass functions."""
    _, a, b = _aligned(p, q)
    return float(np.abs(a - b).max())


def second_difference_norm(p: IntegerPMF) -> float:
    """Sum over all integers of ``|p(k) - 2 p(k-1) + p(k-2)|``."""
    padded = np.concatenate(([0.0, 0.0], p.probs, [0.0, 0.0]))
    return float(np.abs(np.diff(padded, 2)).sum())


@dataclass(frozen=True)
class EmpiricalDistribution:
    counts: dict
    n_samples: int
    seed: int = 0
    model_id: str = ""

    def __post_init__(self):
        if self.n_samples <= 0:
            raise ParameterError("an empirical distribution needs at least one sample")
        if sum(self.counts.values()) != self.n_samples:
            raise ParameterError("counts do not add up to n_samples")

    def arrays(self):
        """Sorted support values and the matching counts."""
        keys = np.array(sorted(self.counts), dtype=np.int64)
        return keys, np.array([self.counts[int(k)] for k in keys], dtype=np.int64)

    def to_pmf(self) -> IntegerPMF:
        keys, cnt = self.arrays()
        lo = int(keys[0])
        probs = np.zeros(int(keys[-1]) - lo + 1)
        probs[keys - lo] = cnt / self.n_samples
        return IntegerPMF(lo, probs, 0.0, f"empirical {self.model_id} n={self.n_samples} seed={self.seed}")

    def mean(self) -> float:
        keys, cnt = self.arrays()
        return float(np.dot(keys, cnt) / self.n_samples)

    def variance(self) -> float:
        keys, cnt = self.arrays()
        m = np.dot(keys, cnt) / self.n_samples
        return float(np.dot((keys - m) ** 2, cnt) / self.n_samples)


def empirical_pmf(samples, seed: int = 0, model_id: str = "") -> EmpiricalDistribution:
    samples = np.asarray(samples)
    if samples.size == 0:
        raise ParameterError("no samples given")
    if not np.issubdtype(samples.dtype, np.integer):
        if not np.all(samples == np.round(samples)):
            raise ParameterError("samples must be integers")
        samples = samples.astype(np.int64)
    keys, cnt = np.unique(samples, return_counts=True)
    counts = {int(k): int(c) for k, c in zip(keys, cnt)}
    return EmpiricalDistribution(counts, int(samples.size), int(seed), model_id)


@dataclass(frozen=True)
class DistanceReport:
    dtv: float
    dloc: float
    s2_left: float
    s2_right: float
    std_error: float = 0.0
    method: str = "exact"
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"method must be one of {METHODS}, got {self.method!r}")


def distance_report(p: IntegerPMF, q: IntegerPMF) -> DistanceReport:
    """Exact comparison of two PMFs; ``std_error`` carries the tail-mass band."""
    return DistanceReport(
        dtv=total_variation(p, q),
        dloc=local_distance(p, q),
        s2_left=second_difference_norm(p),
        s2_right=second_difference_norm(q),
        std_error=tail_uncertainty(p, q),
        method="exact",
    )


def _plugin_dtv(keys, counts, n, q: IntegerPMF) -> float:
    phat = counts / n
    qk = np.asarray(q.pmf(keys), dtype=float)
    # q mass away from the sample support enters with |0 - q| = q
    return 0.5 * (np.abs(phat - qk).sum() + (q.probs.sum() - qk.sum()))


def null_bias(q: IntegerPMF, n: int) -> float:
    """Expected plug-in distance when the n samples really come from ``q`` (normal approximation)."""
    pr = q.probs
    return float(0.5 * np.sqrt(2.0 * pr * (1.0 - pr) / (np.pi * n)).sum())


def bootstrap_seed(seed: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 0x6273, int(rep)])


def dtv_empirical(
    e: EmpiricalDistribution,
    q: IntegerPMF,
    bootstrap_reps: int = 100,
    seed: int | None = None,
    workers: int = 1,
) -> DistanceReport:
    """Plug-in distance ``0.5 * sum |p_hat - q|`` with an optional bootstrap standard error.

    Replicate ``b`` draws from its own stream derived from ``(seed, b)``,
    so results do not depend on ``workers``.
    """
    if bootstrap_reps < 0:
        raise ParameterError("bootstrap_reps must be >= 0")
    seed = e.seed if seed is None else seed
    keys, cnt = e.arrays()
    n = e.n_samples
    dtv = float(min(_plugin_dtv(keys, cnt, n, q), 1.0))
    phat = e.to_pmf()
    dloc = local_distance(phat, q)

    std = 0.0
    reps = np.empty(0)
    if bootstrap_reps > 0:
        probs = cnt / n

        def one(b):
            rng = np.random.default_rng(bootstrap_seed(seed, b))
            return _plugin_dtv(keys, rng.multinomial(n, probs), n, q)

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                reps = np.array(list(pool.map(one, range(bootstrap_reps))))
        else:
            reps = np.array([one(b) for b in range(bootstrap_reps)])
        std = float(reps.std(ddof=1)) if bootstrap_reps > 1 else 0.0

    return DistanceReport(
        dtv=dtv,
        dloc=dloc,
        s2_left=second_difference_norm(phat),
        s2_right=second_difference_norm(q),
        std_error=std + tail_uncertainty(phat, q),
        method="bootstrap" if bootstrap_reps > 0 else "plugin",
        extra={
            "n_samples": n,
            "bootstrap_mean": float(reps.mean()) if reps.size else None,
            "null_bias": null_bias(q, n),
        },
    )
