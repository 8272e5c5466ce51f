"""Stein operators for the intermediate families and numerical Stein-equation solutions.

For all three families the operator has the banded shape

    A g(k) = -k g(k) + b1(k) g(k+1) + b2 g(k+2) + b3 g(k+3)

which is what the truncated Stein-equation solve uses. ``apply_operator``
evaluates the difference form instead, and the tests check the two against
each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import DEFAULT_EPS, IntegerPMF, build_family
from .errors import NumericalError, ParameterError, PreconditionError
from .params import BinPoisParams, NegBinPoisParams, TriplePoisParams

RESIDUAL_GATE = 1e-8
_PARAM_TYPES = {"M1": BinPoisParams, "M2": NegBinPoisParams, "M3": TriplePoisParams}


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Values ``g(0), g(1), ...`` of a bounded function with ``g(0) = 0``."""

    __test__ = False  # keep pytest from collecting this class

    values: np.ndarray
    description: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ParameterError("test function values must be a non-empty 1-d array")
        if v[0] != 0:
            raise ParameterError(f"test functions need g(0) = 0, got {v[0]}")
        if not np.all(np.isfinite(v)):
            raise ParameterError("test function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def at(self, k, extend: bool = False):
        """``g(k)``; past the last stored index either error or hold the last value."""
        k = np.asarray(k)
        if np.any(k < 0):
            raise IndexError("test functions are defined on k >= 0")
        if not extend and np.any(k >= self.values.size):
            raise IndexError(f"g is defined up to {self.values.size - 1}, asked for {int(np.max(k))}")
        out = self.values[np.minimum(k, self.values.size - 1)]
        return float(out) if out.ndim == 0 else out

    def delta(self, k, extend: bool = False):
        return self.at(np.asarray(k) + 1, extend) - self.at(k, extend)

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    @staticmethod
    def random(size: int, rng: np.random.Generator, description: str = "") -> "TestFunction":
        """iid uniform[-1, 1] values with ``g(0)`` forced to 0."""
        v = rng.uniform(-1.0, 1.0, size)
        v[0] = 0.0
        return TestFunction(v, description or f"uniform[-1,1] on 0..{size - 1}")


@dataclass(frozen=True)
class SteinOperator:
    family: str
    params: object

    def __post_init__(self):
        want = _PARAM_TYPES.get(self.family)
        if want is None:
            raise ParameterError(f"unknown family {self.family!r}")
        if not isinstance(self.params, want):
            raise ParameterError(f"{self.family} operator needs {want.__name__}")

    @classmethod
    def for_params(cls, params) -> "SteinOperator":
        return cls(params.family, params)

    def coefficients(self, k):
        """Banded coefficients (c0, c1, c2, c3) of g(k), g(k+1), g(k+2), g(k+3)."""
        k = np.asarray(k, dtype=float)
        P = self.params
        if self.family == "M1":
            a = (P.n * P.p + P.lam - P.p * k) / P.q
            c = P.lam * P.p / P.q
            cols = (-k, a - c, c + 0 * k, 0 * k)
        elif self.family == "M2":
            cols = (-k, P.q * P.r + P.lam + P.q * k, -P.lam * P.q + 0 * k, 0 * k)
        else:
            cols = (-k, P.lam + 0 * k, P.omega + 0 * k, P.eta + 0 * k)
        return tuple(np.asarray(c, dtype=float) for c in cols)

    @property
    def theta(self) -> float:
        return self.params.theta

    def delta_bound(self) -> float:
        """Bound on the sup norm of the forward difference of g_A, as a function of the parameters."""
        P = self.params
        if self.family == "M1":
            den = math.floor(P.n + P.lam / P.p) * P.p * P.q - 2 * P.lam * P.p
            return P.q / den if den > 0 else math.inf
        if self.family == "M2":
            den = (P.r * P.q + P.lam * P.p) - 2 * P.lam * P.q
        else:
            den = P.total - 2 * (P.omega + 2 * P.eta)
        return 1.0 / den if den > 0 else math.inf


def apply_operator(op: SteinOperator, g: TestFunction, k: int) -> float:
    """Evaluate the family's Stein operator at ``k`` in its displayed difference form."""
    if k < 0:
        raise IndexError("k must be >= 0")
    P = op.params
    need = k + (3 if op.family == "M3" else 2)
    if need >= len(g):
        raise IndexError(f"g must be defined up to {need}, it stops at {len(g) - 1}")
    gk, g1 = g.at(k), g.at(k + 1)
    d1 = g.delta(k + 1)
    if op.family == "M1":
        return (P.n * P.p / P.q + P.lam / P.q - P.p / P.q * k) * g1 - k * gk + P.lam * P.p / P.q * d1
    if op.family == "M2":
        return P.q * (P.r + P.lam * P.p / P.q + k) * g1 - k * gk - P.lam * P.q * d1
    d2 = g.delta(k + 2)
    return P.total * g1 - k * gk + P.omega * d1 + P.eta * (d1 + d2)


def apply_banded(op: SteinOperator, values: np.ndarray, ks: np.ndarray) -> np.ndarray:
    """Operator at every ``k`` in ``ks`` using the shift form; ``values`` must reach max(ks)+3."""
    c0, c1, c2, c3 = op.coefficients(ks)
    return c0 * values[ks] + c1 * values[ks + 1] + c2 * values[ks + 2] + c3 * values[ks + 3]


def expectation_of_operator(op: SteinOperator, g: TestFunction, pmf: IntegerPMF) -> float:
    """``E A g(V)`` over the represented mass of ``pmf``; g is held flat past its last value."""
    lo = max(pmf.lo, 0)
    ks = np.arange(lo, pmf.hi + 1)
    vals = g.at(np.arange(pmf.hi + 4), extend=True)
    terms = apply_banded(op, vals, ks)
    return float(np.dot(pmf.probs[lo - pmf.lo :], terms))


def expectation_tolerance(op: SteinOperator, g: TestFunction, pmf: IntegerPMF) -> float:
    """Size of the unrepresented part of ``E A g(V)`` if the tail sat just past the window."""
    k = np.array([pmf.hi + 1.0])
    coef = sum(np.abs(c)[0] for c in op.coefficients(k))
    return float(pmf.tail_mass * coef * g.sup_norm())


@dataclass(frozen=True)
class SteinSolution:
    g: TestFunction
    residual: float
    window: int
    prob_A: float


def _window_for(op: SteinOperator, pmf: IntegerPMF) -> int:
    if op.family == "M1" and op.params.lam == 0:
        return op.params.n
    return max(pmf.hi + 20, 30)


def solve_stein_equation(
    op: SteinOperator,
    A,
    K: int | None = None,
    pmf: IntegerPMF | None = None,
    eps: float = DEFAULT_EPS,
) -> SteinSolution:
    """Solve ``A g(k) = 1_A(k) - P(M in A)`` on ``k = 0..K`` with ``g(0) = 0``.

    Values past ``K`` are held at ``g(K)``, and the stacked equations are
    solved in the least-squares sense. The solution is accepted only
    if the operator residual on ``0..K-3`` is at most ``RESIDUAL_GATE``.
    A pure binomial (M1 with ``lam = 0``) is solved on its support ``0..n``.
    """
    pmf = build_family(op.params, eps) if pmf is None else pmf
    A = {int(a) for a in A}
    probA = float(sum(pmf.pmf(a) for a in A if pmf.lo <= a <= pmf.hi))
    finite = op.family == "M1" and op.params.lam == 0
    K = _window_for(op, pmf) if K is None else int(K)
    if finite:
        K = min(K, op.params.n)
    if K < 1:
        # B(0, p) is a point mass at 0: g(0) = 0 is the whole solution
        return SteinSolution(TestFunction(np.zeros(4), "trivial"), 0.0, 0, probA)

    # Rows k = 0..K with unknowns g(1..K): one more equation than unknowns.
    # Forward recursion from g(0) and backward recursion from the boundary are
    # each unstable on one side of the mode; the row-scaled least-squares
    # solution of the stacked system is stable on both.
    ks = np.arange(K + 1)
    f = np.array([1.0 if k in A else 0.0 for k in ks]) - probA
    M = np.zeros((K + 1, K))
    for offset, coef in zip((-1, 0, 1, 2), op.coefficients(ks)):
        cols = ks + offset
        ok = cols >= 0
        # g(K + j) = g(K) folds the overflow columns onto the last unknown
        np.add.at(M, (ks[ok], np.minimum(cols[ok], K - 1)), coef[ok])
    scale = 1.0 / np.maximum(1.0, np.abs(M).sum(axis=1))
    try:
        sol = np.linalg.lstsq(M * scale[:, None], f * scale, rcond=None)[0]
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Stein solve failed: {exc}") from exc

    values = np.concatenate(([0.0], sol, np.full(4, sol[-1])))
    check = np.arange(max(K - 2, 1))
    res = apply_banded(op, values, check) - f[check]
    residual = float(np.abs(res).max())
    if not np.isfinite(residual) or residual > RESIDUAL_GATE:
        raise NumericalError(f"Stein solve residual {residual:.3e} exceeds {RESIDUAL_GATE}", residual)
    g = TestFunction(values, f"Stein solution for 1_A, |A|={len(A)}, window 0..{K}")
    return SteinSolution(g, residual, K, probA)


@dataclass
class DeltaBoundReport:
    family: str
    bound: float
    trials: int
    max_ratio: float
    max_residual: float
    ratios: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    seed: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def delta_sup(sol: SteinSolution, upto: int) -> float:
    """Largest ``|g(k+1) - g(k)|`` over ``1 <= k < upto``."""
    v = sol.g.values
    hi = min(upto, v.size - 1)
    return float(np.abs(np.diff(v[1 : hi + 1])).max()) if hi >= 2 else 0.0


def verify_delta_bound(
    op: SteinOperator, trials: int = 50, seed: int = 0, eps: float = DEFAULT_EPS
) -> DeltaBoundReport:
    """Solve for ``trials`` random sets A and compare sup |Delta g_A| with the family bound.

    A point enters A by a fair coin flip. The sup runs over ``k >= 1`` up to
    the end of the family's PMF window. Violations are recorded with the
    offending set, not raised.
    """
    if not op.theta < 0.5:
        raise PreconditionError(f"{op.family} bound needs theta < 1/2, got theta = {op.theta}")
    bound = op.delta_bound()
    pmf = build_family(op.params, eps)
    K = _window_for(op, pmf)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5731]))
    report = DeltaBoundReport(op.family, bound, trials, 0.0, 0.0, seed=seed)
    for t in range(trials):
        A = np.flatnonzero(rng.random(K + 1) < 0.5).tolist()
        sol = solve_stein_equation(op, A, K, pmf)
        sup = delta_sup(sol, min(pmf.hi, K) + 1)
        ratio = sup / bound
        report.ratios.append(ratio)
        report.max_ratio = max(report.max_ratio, ratio)
        report.max_residual = max(report.max_residual, sol.residual)
        if ratio > 1.0 + 1e-9:
            report.violations.append({"trial": t, "A": A, "window": K, "sup": sup})
    return report
