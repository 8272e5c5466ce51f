"""Four locally dependent counting models with closed-form cumulants and fast samplers.

* ``Hypercube(d)``: fair-coin orientation of every edge of {0,1}^d; W counts
  vertices whose d edges all point inward.
* ``Birthday(n, k, d)``: n balls in d boxes; W counts k-subsets of balls that
  share a box.
* ``MonoEdges(edges, c)``: vertices get one of c colors uniformly; W counts
  edges whose endpoints share a color.
* ``Triangles(n, p)``: triangles in the Erdos-Renyi graph G(n, p).

Samplers are counter based: draw ``index`` under ``seed`` depends on nothing
else, so any split of the index range over threads gives the same draws.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numba as nb
import numpy as np

from .cumulants import FamilyChoice, select_family, solve_binpois, solve_negbinpois, solve_triplepois
from .errors import InfeasibleFamilyError, ParameterError
from .localdep import DependenceInstance
from .params import BinPoisParams, CumulantTriple

MAX_INSTANCE_VARS = 100_000

# The 7-vertex, 11-edge example graph (vertices a..g numbered 0..6).
EXAMPLE_GRAPH_EDGES = ((0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 5), (5, 2), (5, 4), (4, 1), (1, 5), (1, 6))


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class Hypercube:
    d: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ParameterError(f"hypercube needs an integer d >= 2, got {self.d}")

    @property
    def model_id(self) -> str:
        return f"hypercube(d={self.d})"


@dataclass(frozen=True)
class Birthday:
    n: int
    k: int
    d: int

    def __post_init__(self):
        if self.n < 1 or self.k < 2 or self.d < 2:
            raise ParameterError(f"birthday needs n >= 1, k >= 2, d >= 2, got {(self.n, self.k, self.d)}")

    @property
    def model_id(self) -> str:
        return f"birthday(n={self.n},k={self.k},d={self.d})"


@dataclass(frozen=True)
class MonoEdges:
    edges: tuple
    c: int

    def __post_init__(self):
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.c < 2:
            raise ParameterError(f"coloring needs c >= 2 colors, got {self.c}")
        if not edges:
            raise ParameterError("graph has no edges")
        seen = set()
        for u, v in edges:
            if u == v or u < 0 or v < 0:
                raise ParameterError(f"bad edge {(u, v)}: self loop or negative vertex id")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ParameterError(f"duplicate edge {key}")
            seen.add(key)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def n_vertices(self) -> int:
        return 1 + max(max(e) for e in self.edges)

    @property
    def max_degree(self) -> int:
        return int(np.bincount(np.array(self.edges).ravel()).max())

    def triangle_count(self) -> int:
        adj = [set() for _ in range(self.n_vertices)]
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return sum(len(adj[u] & adj[v]) for u, v in self.edges) // 3

    @property
    def model_id(self) -> str:
        return f"monoedges(m={self.m},c={self.c})"


@dataclass(frozen=True)
class Triangles:
    n: int
    p: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ParameterError(f"triangle model needs an integer n >= 3, got {self.n}")
        if not (0 < self.p <= 1):
            raise ParameterError(f"edge probability must lie in (0, 1], got {self.p}")

    @property
    def model_id(self) -> str:
        return f"triangles(n={self.n},p={self.p:.6g})"


ModelSpec = Hypercube | Birthday | MonoEdges | Triangles


@dataclass
class ModelAnalytics:
    """Closed-form facts about a model.

    ``cumulants_formula`` is the published closed form. ``cumulants_exact``
    is an independently derived exact value where one exists.
    ``approximate`` names formula components that are only asymptotic.
    """

    spec: object
    cumulants_formula: CumulantTriple
    mu: float
    sigma2: float
    recommended_family: FamilyChoice | None
    published_family: str
    cumulants_exact: CumulantTriple | None = None
    cumulants_tilde: CumulantTriple | None = None
    published_params: object = None
    matched_params: object = None
    approximate: tuple = ()
    discrepancies: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def target_cumulants(self) -> CumulantTriple:
        """Exact cumulants when known, otherwise the published formula."""
        return self.cumulants_exact if self.cumulants_exact is not None else self.cumulants_formula


def _try(fn, *args, **kw):
    try:
        return fn(*args, **kw), None
    except InfeasibleFamilyError as exc:
        return None, str(exc)


# ---------------------------------------------------------------------------
# hypercube


def hypercube_edges(d: int):
    """Edges (u, v) with u < v differing in one bit; orientation 1 points to v."""
    return [(u, u | (1 << b)) for b in range(d) for u in range(1 << d) if not u >> b & 1]


def hypercube_incidence(d: int):
    """Per vertex: ids of its d edges and the orientation bit that points each edge at it."""
    index = {e: i for i, e in enumerate(hypercube_edges(d))}
    V = 1 << d
    inc = np.zeros((V, d), dtype=np.int64)
    want = np.zeros((V, d), dtype=np.int64)
    for v in range(V):
        for b in range(d):
            u = v ^ (1 << b)
            inc[v, b] = index[(min(u, v), max(u, v))]
            want[v, b] = 1 if v > u else 0
    return inc, want


def hypercube_exact_cumulants(d: int) -> CumulantTriple:
    """Exact factorial cumulants from counts of pairwise non-adjacent vertex tuples.

    Two sinks cannot be adjacent; non-adjacent vertices share no edge, so
    the probability that a set of them are all sinks is 2^(-d * size).
    """
    V = 1 << d
    c2 = math.comb(d, 2)
    F1 = Fraction(1)
    F2 = Fraction(V * (V - 1 - d), 4**d)
    at2 = c2 * (V - 2 * d)  # v at distance 2 shares two neighbors with u
    far = (V - 1 - d - c2) * (V - 2 * d - 2)
    F3 = Fraction(V * (at2 + far), 8**d)
    return CumulantTriple(F1, F2 - F1**2, F3 - 3 * F2 * F1 + 2 * F1**3)


def hypercube_formula_cumulants(d: int) -> CumulantTriple:
    return CumulantTriple(Fraction(1), Fraction(d - 1, 2**d), Fraction(3 * d * d + 3 * d + 2, 2 ** (2 * d - 1)))


def build_hypercube(d: int):
    spec = Hypercube(d)
    edges = hypercube_edges(d)
    inc, want = hypercube_incidence(d)
    inst = None
    if len(edges) <= 64:
        inst = DependenceInstance(
            name=spec.model_id,
            coord_sizes=(2,) * len(edges),
            deps=tuple(tuple(r) for r in inc),
            xfun=lambda D: np.all(D[:, inc] == want[None], axis=2).astype(np.int64),
        )

    formula = hypercube_formula_cumulants(d)
    exact = hypercube_exact_cumulants(d)
    disc = []
    if exact != formula:
        disc.append(
            f"printed hypercube cumulants {tuple(map(float, formula))} differ from exact {tuple(map(float, exact))}"
        )
    published_params, note = _try(solve_triplepois, formula)
    matched, note2 = _try(solve_triplepois, exact)
    return inst, ModelAnalytics(
        spec=spec,
        cumulants_formula=formula,
        cumulants_exact=exact,
        mu=1.0,
        sigma2=float(exact.g1 + exact.g2),
        recommended_family=select_family(formula),
        published_family="M3",
        published_params=published_params,
        matched_params=matched,
        discrepancies=disc,
        extras={"poisson_ref": 1.0, "edges": len(edges), "matched_note": note2, "published_note": note},
    )


# ---------------------------------------------------------------------------
# birthday


def birthday_gamma2(n: int, k: int, d: int) -> Fraction:
    """Exact second factorial cumulant from overlapping and disjoint k-subset pairs."""
    overlap = sum(math.comb(k, j) * math.comb(n - k, k - j) * Fraction(d) ** (1 + j - 2 * k) for j in range(1, k))
    C = math.comb(n, k)
    return C * overlap + C * (math.comb(n - k, k) - C) * Fraction(d) ** (2 - 2 * k)


def birthday_tilde(n: int, k: int, d: int) -> CumulantTriple:
    fk1 = math.factorial(k - 1)
    return CumulantTriple(
        Fraction(n**k, math.factorial(k) * d ** (k - 1)),
        Fraction(n ** (k + 1), fk1 * d**k),
        Fraction(k * n ** (k + 2), fk1 * d ** (k + 1)),
    )


def birthday_printed_primed(n: int, k: int, d: int) -> dict:
    """The primed three-Poisson parameters exactly as printed (kept for comparison)."""
    fk1 = math.factorial(k - 1)
    lam = Fraction(n**k, math.factorial(k) * d**k) - Fraction(n ** (k + 1), fk1 * d**k)
    omega = Fraction(n ** (k + 1), fk1 * d**k) - Fraction(k * n ** (k + 2), 2 * fk1 * d ** (k + 1))
    eta = Fraction(k * n ** (k + 2), fk1 * d ** (k + 1))
    return {"lam": float(lam), "omega": float(omega), "eta": float(eta)}


def build_birthday(n: int, k: int, d: int):
    spec = Birthday(n, k, d)
    C = math.comb(n, k)
    inst = None
    if C <= MAX_INSTANCE_VARS:
        subsets = np.array(list(itertools.combinations(range(n), k)), dtype=np.int64)
        inst = DependenceInstance(
            name=spec.model_id,
            coord_sizes=(d,) * n,
            deps=tuple(map(tuple, subsets)),
            xfun=lambda D: np.all(D[:, subsets] == D[:, subsets[:, :1]], axis=2).astype(np.int64),
        )
    g1 = Fraction(C, d ** (k - 1))
    g2 = birthday_gamma2(n, k, d)
    tilde = birthday_tilde(n, k, d)
    formula = CumulantTriple(g1, g2, tilde.g3)
    primed, note = _try(solve_triplepois, tilde)
    printed = birthday_printed_primed(n, k, d)
    disc = []
    if primed is not None and abs(printed["lam"] - primed.lam) > 1e-12 * max(1.0, primed.lam):
        disc.append("printed primed parameters do not reproduce the tilde cumulants; using the three-Poisson solve instead")
    return inst, ModelAnalytics(
        spec=spec,
        cumulants_formula=formula,
        cumulants_tilde=tilde,
        mu=float(g1),
        sigma2=float(g1 + g2),
        recommended_family=select_family(formula),
        published_family="M3",
        published_params=primed,
        approximate=("g3",),
        discrepancies=disc,
        extras={"poisson_ref": float(g1), "printed_primed": printed, "primed_note": note},
    )


def birthday_no_collision(n: int, k: int, d: int) -> Fraction:
    """P(no box gets k or more balls), by counting occupancy vectors with every box below k."""
    # ways[j] = number of ordered ball assignments of j balls to the boxes seen so far
    ways = [1] + [0] * n
    for _ in range(d):
        new = [0] * (n + 1)
        for used, w in enumerate(ways):
            if not w:
                continue
            for c in range(min(k - 1, n - used) + 1):
                new[used + c] += w * math.comb(n - used, c)
        ways = new
    return Fraction(ways[n], d**n)


# ---------------------------------------------------------------------------
# monochromatic edges


def mono_exact_cumulants(spec: MonoEdges) -> CumulantTriple:
    """Exact cumulants; edge indicators are dependent only through triangles."""
    m, c, t = spec.m, spec.c, spec.triangle_count()
    return CumulantTriple(Fraction(m, c), Fraction(-m, c * c), Fraction(2 * m + 6 * t * (c - 1), c**3))


def build_mono_edges(edges, c: int):
    spec = MonoEdges(tuple(edges), c)
    E = np.array(spec.edges, dtype=np.int64)
    inst = None
    if spec.m <= MAX_INSTANCE_VARS:
        inst = DependenceInstance(
            name=spec.model_id,
            coord_sizes=(c,) * spec.n_vertices,
            deps=tuple(map(tuple, E)),
            xfun=lambda D: (D[:, E[:, 0]] == D[:, E[:, 1]]).astype(np.int64),
        )
    m = spec.m
    formula = CumulantTriple(Fraction(m, c), Fraction(-m, c * c), Fraction(4 * m, c**3))
    exact = mono_exact_cumulants(spec)
    disc = []
    if exact.g3 != formula.g3:
        disc.append(f"printed third cumulant 4m/c^3 = {float(formula.g3):.6g} differs from exact {float(exact.g3):.6g}")
    matched, note = _try(solve_binpois, formula)
    return inst, ModelAnalytics(
        spec=spec,
        cumulants_formula=formula,
        cumulants_exact=exact,
        mu=m / c,
        sigma2=m / c - m / c**2,
        recommended_family=select_family(formula),
        published_family="M1",
        published_params=BinPoisParams(m, 1.0 / c, 0.0),
        matched_params=matched,
        discrepancies=disc,
        extras={"max_degree": spec.max_degree, "triangles": spec.triangle_count(), "matched_note": note},
    )


def load_edge_list(path):
    """Read one ``u v`` pair per line (0-based ids); blank lines and ``#`` comments are skipped."""
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParameterError(f"{path}:{lineno}: expected 'u v', got {line!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ParameterError(f"{path}:{lineno}: vertex ids must be integers") from None
    return tuple(edges)


# ---------------------------------------------------------------------------
# triangles


def triangle_cumulants(n: int, p: float) -> CumulantTriple:
    C = math.comb(n, 3)
    return CumulantTriple(C * p**3, C * (3 * n - 9) * p**5 - C * (3 * n - 8) * p**6, n**5 * p**7)


def build_triangles(n: int, p: float):
    spec = Triangles(n, p)
    inst = None
    N = math.comb(n, 3)
    if N <= MAX_INSTANCE_VARS and n * (n - 1) // 2 <= 62:
        pairs = {e: i for i, e in enumerate(itertools.combinations(range(n), 2))}
        tri = np.array(
            [[pairs[(a, b)], pairs[(a, c)], pairs[(b, c)]] for a, b, c in itertools.combinations(range(n), 3)],
            dtype=np.int64,
        )
        uniform = p == 0.5
        inst = DependenceInstance(
            name=spec.model_id,
            coord_sizes=(2,) * len(pairs),
            deps=tuple(map(tuple, tri)),
            xfun=lambda D: np.all(D[:, tri] == 1, axis=2).astype(np.int64),
            coord_probs=None if uniform else (np.array([1 - p, p]),) * len(pairs),
        )
    g = triangle_cumulants(n, p)
    matched, note = _try(solve_negbinpois, g)
    return inst, ModelAnalytics(
        spec=spec,
        cumulants_formula=g,
        mu=g.g1,
        sigma2=g.g1 + g.g2,
        recommended_family=select_family(g),
        published_family="M2",
        published_params=matched,
        matched_params=matched,
        approximate=("g3",),
        extras={"S_W_rate": (n * p) ** -3.0, "matched_note": note},
    )


def build_model(spec):
    if isinstance(spec, Hypercube):
        return build_hypercube(spec.d)
    if isinstance(spec, Birthday):
        return build_birthday(spec.n, spec.k, spec.d)
    if isinstance(spec, MonoEdges):
        return build_mono_edges(spec.edges, spec.c)
    if isinstance(spec, Triangles):
        return build_triangles(spec.n, spec.p)
    raise ParameterError(f"unknown model spec {spec!r}")


# ---------------------------------------------------------------------------
# counter-based sampling kernels

_GOLD = np.uint64(0x9E3779B97F4A7C15)


@nb.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always")
def _key(seed, index):
    return _mix(_mix(np.uint64(seed) + _GOLD) ^ (np.uint64(index) * _GOLD + np.uint64(1)))


@nb.njit(inline="always")
def _unif(key, ctr):
    """Uniform on (0, 1] from the (key, ctr) stream position."""
    x = _mix(key + np.uint64(ctr) * _GOLD)
    return ((x >> np.uint64(11)) + np.uint64(1)) * (1.0 / 9007199254740992.0)


@nb.njit(nogil=True, cache=True)
def _hypercube_block(d, inc, want, seed, start, count):
    V = 1 << d
    E = d * (V >> 1)
    orient = np.empty(E, np.int64)
    out = np.empty(count, np.int64)
    for s in range(count):
        key = _key(seed, start + s)
        for e in range(E):
            orient[e] = 1 if _unif(key, e) <= 0.5 else 0
        w = 0
        for v in range(V):
            sink = True
            for b in range(d):
                if orient[inc[v, b]] != want[v, b]:
                    sink = False
                    break
            if sink:
                w += 1
        out[s] = w
    return out


@nb.njit(nogil=True, cache=True)
def _birthday_block(n, k, d, seed, start, count):
    occ = np.zeros(d, np.int64)
    out = np.empty(count, np.int64)
    for s in range(count):
        key = _key(seed, start + s)
        occ[:] = 0
        for b in range(n):
            box = min(int(_unif(key, b) * d), d - 1)
            occ[box] += 1
        w = 0
        for box in range(d):
            c = occ[box]
            if c >= k:
                # C(c, k) k-subsets inside this box
                r = 1
                for j in range(k):
                    r = r * (c - j) // (j + 1)
                w += r
        out[s] = w
    return out


@nb.njit(nogil=True, cache=True)
def _mono_block(nv, eu, ev, c, seed, start, count):
    col = np.empty(nv, np.int64)
    out = np.empty(count, np.int64)
    for s in range(count):
        key = _key(seed, start + s)
        for v in range(nv):
            col[v] = min(int(_unif(key, v) * c), c - 1)
        w = 0
        for e in range(eu.size):
            if col[eu[e]] == col[ev[e]]:
                w += 1
        out[s] = w
    return out


@nb.njit(nogil=True, cache=True)
def _triangle_block(n, p, seed, start, count):
    """Geometric skips over the lexicographic edge list, then bitset common-neighbor counts."""
    words = (n + 63) // 64
    bits = np.zeros((n, words), np.uint64)
    cap = n * (n - 1) // 2
    eu = np.empty(cap, np.int64)
    ev = np.empty(cap, np.int64)
    out = np.empty(count, np.int64)
    logq = math.log1p(-p) if p < 1.0 else -np.inf
    for s in range(count):
        key = _key(seed, start + s)
        bits[:, :] = 0
        u = 0
        v = 0
        m = 0
        ctr = 0
        while True:
            if p < 1.0:
                g = int(math.floor(math.log(_unif(key, ctr)) / logq))
            else:
                g = 0
            ctr += 1
            v += g + 1
            while u < n - 1 and v > n - 1:
                v = v - (n - 1) + u + 1
                u += 1
            if u >= n - 1:
                break
            eu[m] = u
            ev[m] = v
            m += 1
            bits[u, v >> 6] |= np.uint64(1) << np.uint64(v & 63)
            bits[v, u >> 6] |= np.uint64(1) << np.uint64(u & 63)
        t = 0
        for e in range(m):
            a = eu[e]
            b = ev[e]
            for w in range(words):
                x = bits[a, w] & bits[b, w]
                while x:
                    x &= x - np.uint64(1)
                    t += 1
        out[s] = t // 3
    return out


def _block_fn(spec):
    if isinstance(spec, Hypercube):
        d = spec.d
        inc, want = hypercube_incidence(d)
        return lambda seed, start, count: _hypercube_block(d, inc, want, seed, start, count)
    if isinstance(spec, Birthday):
        return lambda seed, start, count: _birthday_block(spec.n, spec.k, spec.d, seed, start, count)
    if isinstance(spec, MonoEdges):
        E = np.array(spec.edges, np.int64)
        eu, ev = E[:, 0].copy(), E[:, 1].copy()
        return lambda seed, start, count: _mono_block(spec.n_vertices, eu, ev, spec.c, seed, start, count)
    if isinstance(spec, Triangles):
        return lambda seed, start, count: _triangle_block(spec.n, float(spec.p), seed, start, count)
    raise ParameterError(f"unknown model spec {spec!r}")


def _check_seed(seed):
    seed = int(seed)
    if not (0 <= seed < 2**64):
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def sample_many(spec, seed: int, count: int, start: int = 0, workers: int = 1) -> np.ndarray:
    """Draws ``start .. start+count-1`` of W; identical for every ``workers`` value."""
    seed = _check_seed(seed)
    if count < 0 or start < 0:
        raise ParameterError("count and start must be >= 0")
    fn = _block_fn(spec)
    seed = np.uint64(seed)
    if workers <= 1 or count < 2 * workers:
        return fn(seed, start, count)
    bounds = np.linspace(0, count, workers + 1).astype(np.int64)
    with ThreadPoolExecutor(workers) as pool:
        parts = pool.map(lambda i: fn(seed, start + int(bounds[i]), int(bounds[i + 1] - bounds[i])), range(workers))
        return np.concatenate(list(parts))


def sample_W(spec, seed: int, index: int) -> int:
    """Draw number ``index`` of W under ``seed``."""
    return int(sample_many(spec, seed, 1, start=index)[0])
