"""Locally dependent sums: exact enumeration and the structural quantities gamma, S(W), G1, G2.

An instance is built from independent finite *coordinates* (coin flips, box
choices, colors, ...). Each summand X_i is a function of a few coordinates,
listed in ``deps[i]``. Unless given explicitly, neighborhoods come from shared
coordinates:

    A_i   = {j : deps[j] meets deps[i]}
    A_ij  = {k : deps[k] meets deps[i] | deps[j]}
    A_ijk = {l : deps[l] meets deps[i] | deps[j] | deps[k]}

With this choice the independence conditions hold by construction.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .cumulants import cumulants_from_moments
from .distributions import IntegerPMF
from .errors import BudgetError, ParameterError
from .params import CumulantTriple, MomentTriple

DEFAULT_BUDGET = 2**25
MAX_TENSOR_VARS = 40
_EXACT_LIMIT = 2.0**53


@dataclass(eq=False)
class DependenceInstance:
    """Summands X_i = xfun(coordinates) with explicit or derived neighborhoods.

    ``xfun`` maps an integer array of coordinate indices, shape (B, n_coords),
    to the summand values, shape (B, n_vars). ``coord_probs[c]`` is None for a
    uniform coordinate.
    """

    name: str
    coord_sizes: tuple
    deps: tuple
    xfun: Callable[[np.ndarray], np.ndarray]
    coord_probs: tuple | None = None
    neighborhoods: dict | None = None
    sampler: Callable | None = None
    labels: list | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coord_sizes = tuple(int(s) for s in self.coord_sizes)
        if any(s < 1 for s in self.coord_sizes):
            raise ParameterError("every coordinate needs at least one value")
        self.deps = tuple(tuple(sorted(set(int(c) for c in d))) for d in self.deps)
        for d in self.deps:
            if any(c < 0 or c >= len(self.coord_sizes) for c in d):
                raise ParameterError(f"dependency {d} names a missing coordinate")
        if self.coord_probs is None:
            self.coord_probs = (None,) * len(self.coord_sizes)
        probs = []
        for size, p in zip(self.coord_sizes, self.coord_probs):
            if p is None:
                probs.append(None)
                continue
            p = np.asarray(p, dtype=float)
            if p.shape != (size,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
                raise ParameterError("coordinate probabilities must be a distribution of the right length")
            probs.append(p)
        self.coord_probs = tuple(probs)
        if self.neighborhoods is not None:
            self._check_explicit()

    # -- structure ---------------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.deps)

    @property
    def n_coords(self) -> int:
        return len(self.coord_sizes)

    @property
    def n_configs(self) -> int:
        return math.prod(self.coord_sizes)

    @property
    def uniform(self) -> bool:
        return all(p is None for p in self.coord_probs)

    def _check_explicit(self):
        A = self.neighborhoods.get("A")
        if A is None or len(A) != self.n_vars:
            raise ParameterError("explicit neighborhoods need an 'A' list with one set per variable")
        self.neighborhoods["A"] = [frozenset(int(x) for x in a) | {i} for i, a in enumerate(A)]

    @cached_property
    def _touch(self):
        """For each coordinate, the variables that read it."""
        out = [set() for _ in range(self.n_coords)]
        for i, d in enumerate(self.deps):
            for c in d:
                out[c].add(i)
        return out

    def _meets(self, coords) -> frozenset:
        s = set()
        for c in coords:
            s |= self._touch[c]
        return frozenset(s)

    def A(self, i: int) -> frozenset:
        if self.neighborhoods is not None:
            return self.neighborhoods["A"][i]
        return self._meets(self.deps[i]) | {i}

    def A2(self, i: int, j: int) -> frozenset:
        nb = self.neighborhoods
        if nb is not None:
            pairs = nb.get("pairs")
            if pairs and (i, j) in pairs:
                return frozenset(pairs[(i, j)]) | self.A(i)
            return self.A(i) | self.A(j)
        return self._meets(self.deps[i] + self.deps[j]) | {i, j}

    def A3(self, i: int, j: int, k: int) -> frozenset:
        nb = self.neighborhoods
        if nb is not None:
            triples = nb.get("triples")
            if triples and (i, j, k) in triples:
                return frozenset(triples[(i, j, k)]) | self.A2(i, j)
            return self.A2(i, j) | self.A(k)
        return self._meets(self.deps[i] + self.deps[j] + self.deps[k]) | {i, j, k}

    def check_nesting(self) -> list:
        """Violations of i in A_i, A_i within A_ij (j in A_i), A_ij within A_ijk (k in A_ij)."""
        bad = []
        for i in range(self.n_vars):
            Ai = self.A(i)
            if i not in Ai:
                bad.append(("i in A_i", i))
            for j in Ai:
                Aij = self.A2(i, j)
                if not Ai <= Aij:
                    bad.append(("A_i <= A_ij", i, j))
                for k in Aij:
                    if not Aij <= self.A3(i, j, k):
                        bad.append(("A_ij <= A_ijk", i, j, k))
        return bad

    # -- enumeration -------------------------------------------------------

    def config_chunks(self, budget: int = DEFAULT_BUDGET, chunk: int | None = None):
        """Yield ``(X, w)`` blocks over every configuration in mixed-radix order.

        ``w`` is None for uniform instances (each configuration has weight 1/T).
        """
        T = self.n_configs
        if T > budget:
            raise BudgetError(
                f"{self.name}: {T} configurations exceed the budget {budget}; use the sampler instead"
            )
        if chunk is None:
            chunk = max(1, min(T, 4_000_000 // max(1, self.n_vars * max(1, self.n_vars))))
        sizes = np.array(self.coord_sizes, dtype=np.int64)
        strides = np.ones(self.n_coords, dtype=np.int64)
        for c in range(self.n_coords - 2, -1, -1):
            strides[c] = strides[c + 1] * sizes[c + 1]
        for start in range(0, T, chunk):
            idx = np.arange(start, min(T, start + chunk), dtype=np.int64)
            digits = (idx[:, None] // strides[None, :]) % sizes[None, :]
            X = np.asarray(self.xfun(digits), dtype=np.int64)
            if X.shape != (idx.size, self.n_vars):
                raise ParameterError(f"xfun returned shape {X.shape}, expected {(idx.size, self.n_vars)}")
            if np.any(X < 0):
                raise ParameterError("summands must be non-negative integers")
            if self.uniform:
                w = None
            else:
                w = np.ones(idx.size)
                for c, p in enumerate(self.coord_probs):
                    if p is not None:
                        w = w * p[digits[:, c]]
                    else:
                        w = w / self.coord_sizes[c]
            yield X, w

    def all_configs(self, budget: int = DEFAULT_BUDGET):
        """Every configuration at once as ``(X, probs)``."""
        Xs, ws = [], []
        T = self.n_configs
        for X, w in self.config_chunks(budget):
            Xs.append(X)
            ws.append(np.full(X.shape[0], 1.0 / T) if w is None else w)
        return np.concatenate(Xs), np.concatenate(ws)


# ---------------------------------------------------------------------------
# deterministic pairwise reduction


class _TreeSum:
    """Binary-counter pairwise summation; the result depends only on push order."""

    def __init__(self):
        self._stack = []  # (level, value)

    def push(self, x):
        level = 0
        while self._stack and self._stack[-1][0] == level:
            _, y = self._stack.pop()
            x = y + x
            level += 1
        self._stack.append((level, x))

    def total(self):
        out = None
        for _, v in reversed(self._stack):
            out = v if out is None else v + out
        return out


# ---------------------------------------------------------------------------
# laws and moments


def _law_counts(inst: DependenceInstance, budget: int) -> np.ndarray:
    """Weight (or configuration count, for uniform instances) of each value of W."""
    counts = np.zeros(1)
    for X, w in inst.config_chunks(budget):
        part = np.bincount(X.sum(axis=1), weights=w)
        if part.size > counts.size:
            counts = np.concatenate((counts, np.zeros(part.size - counts.size)))
        counts[: part.size] += part
    return counts


def enumerate_exact_distribution(inst: DependenceInstance, budget: int = DEFAULT_BUDGET) -> IntegerPMF:
    """Exact law of W = sum of X_i by full enumeration."""
    counts = _law_counts(inst, budget)
    probs = counts / inst.n_configs if inst.uniform else counts
    nz = np.flatnonzero(probs)
    lo, hi = int(nz[0]), int(nz[-1])
    probs = probs[lo : hi + 1]
    return IntegerPMF(lo, probs / probs.sum(), 0.0, f"exact law of W for {inst.name}")


def exact_moments(inst: DependenceInstance, budget: int = DEFAULT_BUDGET) -> MomentTriple:
    """Raw moments of W; exact ``Fraction`` values for uniform instances."""
    counts = _law_counts(inst, budget)
    k = np.arange(counts.size)
    if inst.uniform:
        T = inst.n_configs
        c = [int(x) for x in np.rint(counts)]
        s = [sum(ci * kk**p for kk, ci in enumerate(c)) for p in (1, 2, 3)]
        return MomentTriple(*(Fraction(x, T) for x in s))
    w = counts / counts.sum()
    return MomentTriple(*(math.fsum(w * k.astype(float) ** p) for p in (1, 2, 3)))


def exact_cumulants(inst: DependenceInstance, budget: int = DEFAULT_BUDGET) -> CumulantTriple:
    """Factorial cumulants of W from its enumerated law (``Fraction`` when uniform)."""
    return cumulants_from_moments(exact_moments(inst, budget))


@dataclass
class JointMoments:
    """E X_i, E X_i X_j, E X_i X_j X_k and (optionally) fourth-order products."""

    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    e4: np.ndarray | None
    exact: bool


def joint_moments(
    inst: DependenceInstance, order: int = 3, budget: int = DEFAULT_BUDGET, workers: int = 1
) -> JointMoments:
    """Mixed moments up to ``order`` (3 or 4) by enumeration.

    Uniform instances accumulate integer counts, which float64 holds exactly
    below 2**53; ``exact`` reports whether that held.
    """
    N = inst.n_vars
    if N > MAX_TENSOR_VARS:
        raise BudgetError(f"{N} summands is too many for dense moment tensors (limit {MAX_TENSOR_VARS})")

    def block(item):
        X, w = item
        Xf = X.astype(float)
        wx = Xf if w is None else Xf * w[:, None]
        P2 = (Xf[:, :, None] * Xf[:, None, :]).reshape(X.shape[0], N * N)
        wP2 = (wx[:, :, None] * Xf[:, None, :]).reshape(X.shape[0], N * N)
        out = [wx.sum(axis=0), wx.T @ Xf, wP2.T @ Xf]
        if order >= 4:
            out.append(wP2.T @ P2)
        return out

    acc = _TreeSum()
    chunks = inst.config_chunks(budget, chunk=max(1, min(inst.n_configs, 2_000_000 // (N * N))))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = pool.map(block, chunks)
            for r in results:
                acc.push(np.concatenate([a.ravel() for a in r]))
    else:
        for item in chunks:
            acc.push(np.concatenate([a.ravel() for a in block(item)]))
    flat = acc.total()
    sizes = [N, N * N, N**3] + ([N**4] if order >= 4 else [])
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    exact = inst.uniform and float(np.max(np.abs(flat))) < _EXACT_LIMIT
    scale = 1.0 / inst.n_configs if inst.uniform else 1.0
    e1, e2, e3 = parts[0] * scale, parts[1].reshape(N, N) * scale, parts[2].reshape(N, N, N) * scale
    e4 = parts[3].reshape(N, N, N, N) * scale if order >= 4 else None
    return JointMoments(e1, e2, e3, e4, exact)


# ---------------------------------------------------------------------------
# structural quantities


def _idx(s) -> np.ndarray:
    return np.fromiter(sorted(s), dtype=np.int64, count=len(s))


def compute_gamma(inst: DependenceInstance, moments: JointMoments | None = None, budget: int = DEFAULT_BUDGET) -> float:
    """The neighborhood fourth-moment sum gamma, with every optional expectation split included."""
    M = moments if moments is not None and moments.e4 is not None else joint_moments(inst, 4, budget)
    e1, e2, e3, e4 = M.e1, M.e2, M.e3, M.e4
    pair = e2 + np.outer(e1, e1)  # E X_a X_b + E X_a E X_b
    first = _TreeSum()
    second = _TreeSum()
    for i in range(inst.n_vars):
        Ai = inst.A(i)
        for j in sorted(Ai - {i}):
            Aij = inst.A2(i, j)
            for k in sorted(Aij):
                L = _idx(inst.A3(i, j, k))
                first.push(pair[i, j] * pair[k, L].sum())
                if k in Ai:
                    continue
                s = (
                    e4[i, j, k, L].sum()
                    + e1[i] * e3[j, k, L].sum()
                    + e3[i, j, k] * e1[L].sum()
                    + e1[i] * e2[j, k] * e1[L].sum()
                )
                second.push(s)
    return float((first.total() or 0.0) + (second.total() or 0.0))


def compute_G1_G2(inst: DependenceInstance, moments: JointMoments | None = None,
                  budget: int = DEFAULT_BUDGET, exact: bool | None = None):
    """Definition-side G1 and G2, both summed over the index set.

    The "-1" inside ``X_i (sum_j X_j - 1) (...)`` is attached to the term
    j = i, and ``A_ii`` is read as ``A_i``. When ``exact`` (default: uniform
    instances with exactly held counts) the sums run in ``Fraction``.
    """
    M = moments if moments is not None else joint_moments(inst, 3, budget)
    if exact is None:
        exact = M.exact
    if exact:
        T = inst.n_configs
        conv = np.vectorize(lambda x: Fraction(int(round(x * T)), T), otypes=[object])
        e1, e2, e3 = conv(M.e1), conv(M.e2), conv(M.e3)
        half = Fraction(1, 2)
    else:
        e1, e2, e3 = M.e1, M.e2, M.e3
        half = 0.5
    G1 = 0
    G2 = 0
    for i in range(inst.n_vars):
        Ai = inst.A(i)
        ai = _idx(Ai)
        ES = e1[ai].sum()
        EXiS = e2[i, ai].sum()
        G1 += e1[i] * ES - (EXiS - e1[i])

        a = b = c = d = 0
        for j in sorted(Ai):
            Aij = Ai if j == i else inst.A2(i, j)
            t = _idx(Aij - Ai)
            u = _idx(Aij)
            EU = e1[u].sum()
            if t.size:
                a += e2[j, t].sum()
                b += e3[i, j, t].sum()
            c += e1[j] * EU
            d += (e2[i, j] - (e1[i] if j == i else 0)) * EU
        ES2 = e2[np.ix_(ai, ai)].sum()
        EXiS2 = e3[i][np.ix_(ai, ai)].sum()
        e_term = half * e1[i] * (ES2 - ES)
        f_term = -half * (EXiS2 - 3 * EXiS + 2 * e1[i])
        G2 += e1[i] * a - b - e1[i] * c + d + e_term + f_term
    if exact:
        return G1, G2
    return float(G1), float(G2)


def compute_S_W(inst: DependenceInstance, budget: int = DEFAULT_BUDGET, materialize_limit: int = 2**22) -> float:
    """Largest second-difference norm of the law of W given X on some A_ijk.

    Runs over triples with j in A_i and k in A_ij and over every conditioning
    configuration of positive probability.
    """
    if inst.n_configs > min(budget, materialize_limit):
        raise BudgetError(f"{inst.name}: {inst.n_configs} configurations is too many for conditional laws")
    X, w = inst.all_configs(budget)
    W = X.sum(axis=1)
    Wmax = int(W.max())
    sets = set()
    for i in range(inst.n_vars):
        for j in inst.A(i):
            for k in inst.A2(i, j):
                sets.add(inst.A3(i, j, k))
    best = 0.0
    full = frozenset(range(inst.n_vars))
    for B in sets:
        if B == full:
            return 4.0  # conditional laws are point masses
        cols = _idx(B)
        sub = X[:, cols]
        _, key = np.unique(sub, axis=0, return_inverse=True)
        key = key.ravel()
        G = int(key.max()) + 1
        table = np.zeros((G, Wmax + 1))
        np.add.at(table, (key, W), w)
        mass = table.sum(axis=1, keepdims=True)
        cond = table / mass
        padded = np.concatenate((np.zeros((G, 2)), cond, np.zeros((G, 2))), axis=1)
        s2 = np.abs(np.diff(padded, 2, axis=1)).sum(axis=1)
        best = max(best, float(s2.max()))
        if best >= 4.0 - 1e-15:
            return 4.0
    return best


@dataclass(frozen=True)
class StructuralReport:
    gamma: float
    S_W: float
    G1: float
    G2: float
    cumulants: CumulantTriple


def structural_report(inst: DependenceInstance, budget: int = DEFAULT_BUDGET) -> StructuralReport:
    M = joint_moments(inst, 4, budget)
    G1, G2 = compute_G1_G2(inst, M, budget)
    return StructuralReport(
        gamma=compute_gamma(inst, M, budget),
        S_W=compute_S_W(inst, budget),
        G1=float(G1),
        G2=float(G2),
        cumulants=exact_cumulants(inst, budget),
    )


def check_independence(inst: DependenceInstance, budget: int = DEFAULT_BUDGET, tol: float = 1e-12) -> list:
    """Failures of the factorization ``law(X_S, X_outside) = law(X_S) law(X_outside)``.

    Checked for S = {i} against J minus A_i, S = {i, j} against J minus A_ij
    and S = {i, j, k} against J minus A_ijk.
    """
    X, w = inst.all_configs(budget)
    full = frozenset(range(inst.n_vars))
    groups = {}
    for i in range(inst.n_vars):
        groups[(i,)] = inst.A(i)
        for j in inst.A(i):
            groups[(i, j)] = inst.A2(i, j)
            for k in inst.A2(i, j):
                groups[(i, j, k)] = inst.A3(i, j, k)
    failures = []
    for S, nb in groups.items():
        out = full - nb
        if not out:
            continue
        _, ks = np.unique(X[:, list(S)], axis=0, return_inverse=True)
        _, ko = np.unique(X[:, _idx(out)], axis=0, return_inverse=True)
        ks, ko = ks.ravel(), ko.ravel()
        joint = np.zeros((ks.max() + 1, ko.max() + 1))
        np.add.at(joint, (ks, ko), w)
        gap = np.abs(joint - np.outer(joint.sum(1), joint.sum(0))).max()
        if gap > tol:
            failures.append({"vars": S, "gap": float(gap)})
    return failures


# ---------------------------------------------------------------------------
# constructors


def independent_instance(values, probs=None, n: int = 1, name: str = "independent") -> DependenceInstance:
    """n iid copies of a finite non-negative integer variable."""
    values = np.asarray(values, dtype=np.int64)
    return DependenceInstance(
        name=name,
        coord_sizes=(values.size,) * n,
        deps=tuple((i,) for i in range(n)),
        xfun=lambda D: values[D],
        coord_probs=None if probs is None else (np.asarray(probs, dtype=float),) * n,
    )


def m_dependent_instance(values, probs=None, n: int = 5, m: int = 1, func=None,
                         name: str | None = None) -> DependenceInstance:
    """X_i = func(xi_i, ..., xi_{i+m}) over iid coordinates xi; neighborhoods are index windows.

    ``func`` receives an array of shape (B, m+1) of coordinate values and
    defaults to their product. Then A_i = [i-m, i+m], and A_ij, A_ijk are the
    unions of the windows.
    """
    if n < 1 or not (0 <= m < n):
        raise ParameterError(f"need n >= 1 and 0 <= m < n, got n={n}, m={m}")
    values = np.asarray(values, dtype=np.int64)
    if np.any(values < 0):
        raise ParameterError("coordinate values must be non-negative")
    func = func or (lambda block: np.prod(block, axis=1))
    n_coords = n + m

    def xfun(D):
        V = values[D]
        return np.stack([np.asarray(func(V[:, i : i + m + 1]), dtype=np.int64) for i in range(n)], axis=1)

    windows = [set(range(max(0, i - m), min(n, i + m + 1))) for i in range(n)]
    return DependenceInstance(
        name=name or f"{m}-dependent chain n={n}",
        coord_sizes=(values.size,) * n_coords,
        deps=tuple(tuple(range(i, i + m + 1)) for i in range(n)),
        xfun=xfun,
        coord_probs=None if probs is None else (np.asarray(probs, dtype=float),) * n_coords,
        neighborhoods={"A": windows},
        meta={"m": m, "n": n},
    )


_RULES = {
    "product": lambda V, a: np.prod(V, axis=1),
    "sum": lambda V, a: V.sum(axis=1),
    "min": lambda V, a: V.min(axis=1),
    "max": lambda V, a: V.max(axis=1),
    "all_equal": lambda V, a: np.all(V == V[:, :1], axis=1).astype(np.int64),
    "sum_at_least": lambda V, a: (V.sum(axis=1) >= a["threshold"]).astype(np.int64),
}


def load_instance(path) -> DependenceInstance:
    """Read an instance from a JSON file.

    Layout::

        {"name": "...",
         "coordinates": [{"values": [0, 1], "probs": [0.5, 0.5]}, ...],
         "variables": [{"deps": [0, 1], "rule": "product"}, ...],
         "neighborhoods": {"A": [[0, 1], ...]}}          (optional)

    ``probs`` may be omitted for a uniform coordinate. A coordinate entry may
    carry ``"repeat": n`` to stand for n identical coordinates. Rules:
    product, sum, min, max, all_equal, sum_at_least (with ``threshold``).
    """
    text = Path(path).read_text()
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    unknown = set(spec) - {"name", "coordinates", "variables", "neighborhoods"}
    if unknown:
        raise ParameterError(f"{path}: unknown keys {sorted(unknown)}")
    coords = []
    for c in spec["coordinates"]:
        for _ in range(int(c.get("repeat", 1))):
            coords.append((np.asarray(c["values"], dtype=np.int64), c.get("probs")))
    if not coords:
        raise ParameterError(f"{path}: no coordinates")
    variables = spec["variables"]
    for v in variables:
        if v.get("rule", "product") not in _RULES:
            raise ParameterError(f"{path}: unknown rule {v.get('rule')!r}; choose from {sorted(_RULES)}")
    uniform = all(p is None for _, p in coords)

    def xfun(D):
        cols = []
        for v in variables:
            deps = list(v["deps"])
            V = np.stack([coords[c][0][D[:, c]] for c in deps], axis=1)
            cols.append(_RULES[v.get("rule", "product")](V, v))
        return np.stack(cols, axis=1)

    nb = spec.get("neighborhoods")
    return DependenceInstance(
        name=spec.get("name", Path(path).stem),
        coord_sizes=tuple(v.size for v, _ in coords),
        deps=tuple(tuple(v["deps"]) for v in variables),
        xfun=xfun,
        coord_probs=None if uniform else tuple(p for _, p in coords),
        neighborhoods=None if nb is None else {"A": nb["A"]},
    )
