"""Bound brackets, measured distances, and the triangle-count table with its scaling fit.

Theorem constants are unknown, so every bracket is reported without its
leading constant ("x C"). Brackets whose stability ratio reaches 1/2 are
reported as ``inf``.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__
from .cumulants import FamilyChoice, select_family, solve_family
from .distributions import DEFAULT_EPS, IntegerPMF, build_discretized_normal, build_family, build_poisson, numeric_cumulants
from .errors import BudgetError, InfeasibleFamilyError, ParameterError
from .localdep import DEFAULT_BUDGET, MAX_TENSOR_VARS, compute_gamma, compute_S_W, enumerate_exact_distribution, joint_moments
from .metrics import DistanceReport, distance_report, dtv_empirical, empirical_pmf, second_difference_norm
from .models import Birthday, Hypercube, MonoEdges, Triangles, build_model, sample_many
from .params import NormalParams

TARGETS = ("Yd", "M1", "M2", "M3", "PoissonRef")
TRIANGLE_TABLE_N = (300, 400, 500, 600)
TRIANGLE_TABLE_EXPONENTS = (0.6, 0.7, 0.8)
TRIANGLE_TABLE_PUBLISHED = {
    (300, 0.6): 0.04600, (300, 0.7): 0.06490, (300, 0.8): 0.1198,
    (400, 0.6): 0.03589, (400, 0.7): 0.05900, (400, 0.8): 0.1112,
    (500, 0.6): 0.03360, (500, 0.7): 0.05100, (500, 0.8): 0.1074,
    (600, 0.6): 0.03050, (600, 0.7): 0.04727, (600, 0.8): 0.1015,
}  # fmt: skip
PUBLISHED_FIT = {"slope": 0.7175, "r2": 0.9736}
CSV_HEADER = ("model", "N", "p", "target", "samples", "dtv", "stderr", "seed")


# ---------------------------------------------------------------------------
# bracket arithmetic


def bracket_wm(family: str, gamma: float, S: float, theta: float, mu: float, q: float = 1.0, p: float = 1.0) -> float:
    """Distance bracket between W and the matched family, without its constant."""
    if gamma < 0 or S < 0 or mu <= 0:
        raise ParameterError("bracket inputs need gamma >= 0, S >= 0, mu > 0")
    if not theta < 0.5:
        return math.inf
    core = gamma * S / ((1 - 2 * theta) * mu)
    if family == "M1":
        return core / q + 1 / mu
    if family == "M2":
        return max(1.0, q / p) * core
    if family == "M3":
        return core
    raise ParameterError(f"unknown family {family!r}")


def bracket_local(wm: float, s2_w: float, s2_y: float) -> float:
    """Local-distance bracket: square root of the W-to-family bracket times the smoothness sum."""
    return math.sqrt(wm) * math.sqrt(s2_w + s2_y)


def mono_theorem_bracket(m: int, c: int, dmax: int) -> float:
    return math.sqrt(c / m) + dmax**4 / c**3


def triangle_theorem_bracket(n: int, p: float) -> float:
    """n^(-3/2 + 3 alpha/2) with alpha read off p = n^(-alpha)."""
    alpha = -math.log(p) / math.log(n)
    return n ** (-1.5 + 1.5 * alpha)


def theorem_brackets(spec) -> dict:
    """Model-specific rates stated for each application."""
    if isinstance(spec, Hypercube):
        d = spec.d
        return {"W_vs_M3": d**3 * 2.0 ** (-3 * d), "W_vs_P1": d * 2.0**-d}
    if isinstance(spec, Birthday):
        n, k = spec.n, spec.k
        return {"W_vs_M3": n ** (-k / (k - 1)), "W_vs_M3_primed": 1.0 / n, "W_vs_PLambda": n ** (-1.0 / (k - 1))}
    if isinstance(spec, MonoEdges):
        return {"W_vs_Yd": mono_theorem_bracket(spec.m, spec.c, spec.max_degree)}
    if isinstance(spec, Triangles):
        return {"W_vs_Yd": triangle_theorem_bracket(spec.n, spec.p)}
    raise ParameterError(f"unknown model spec {spec!r}")


def plugin_orders(spec) -> tuple[float, float]:
    """Order-of-magnitude gamma and S(W) used when the instance is too large to enumerate."""
    if isinstance(spec, Hypercube):
        return spec.d**3 * 2.0 ** (-3 * spec.d), 4.0
    if isinstance(spec, Birthday):
        return spec.n ** (2 * spec.k) / spec.d ** (2 * spec.k - 1), 4.0
    if isinstance(spec, MonoEdges):
        m, c, dm = spec.m, spec.c, spec.max_degree
        return m * dm**2 / c**3, min(4.0, c / m + dm**2 / c)
    if isinstance(spec, Triangles):
        n, p = spec.n, spec.p
        return n**5 * p**7, min(4.0, (n * p) ** -3.0)
    raise ParameterError(f"unknown model spec {spec!r}")


# ---------------------------------------------------------------------------
# bound evaluation


@dataclass
class BoundReport:
    model: object
    family: FamilyChoice
    params: object
    gamma: float
    S_W: float
    source: str  # "exact" or "plugin"
    theta: float
    mu: float
    sigma2: float
    bracket_WM: float
    bracket_normal_step: float
    bracket_loc: float | None = None
    theorem: dict = field(default_factory=dict)
    measured_dtv: DistanceReport | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "model": getattr(self.model, "model_id", str(self.model)),
            "family": asdict(self.family),
            "params": _params_dict(self.params),
        }
        for k in ("gamma", "S_W", "source", "theta", "mu", "sigma2", "bracket_WM", "bracket_normal_step", "bracket_loc"):
            out[k] = _num(getattr(self, k))
        out["theorem"] = {k: _num(v) for k, v in self.theorem.items()}
        out["notes"] = list(self.notes)
        if self.measured_dtv is not None:
            out["measured_dtv"] = {k: _num(v) for k, v in asdict(self.measured_dtv).items() if k != "extra"}
        return out


def _num(x):
    if isinstance(x, Fraction):
        x = float(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _params_dict(params) -> dict:
    if params is None:
        return {}
    d = {k: _num(v) for k, v in asdict(params).items()}
    d["family"] = params.family
    return d


def _exact_law(inst, budget: int) -> IntegerPMF | None:
    if inst is None:
        return None
    try:
        return enumerate_exact_distribution(inst, budget)
    except BudgetError:
        return None


def cumulants_of_law(law: IntegerPMF):
    """Factorial cumulants of an enumerated law, in floating point."""
    return numeric_cumulants(law, max_tail=0.0)


def _q_of(params) -> tuple[float, float]:
    if params.family in ("M1", "M2"):
        return 1 - params.p, params.p
    return 1.0, 1.0


def solve_target(analytics, family: str | None = None, project_valid: bool = False, source: str = "exact", g=None):
    """Family choice and parameters for a model.

    ``source`` picks exact or printed cumulants; an explicit ``g`` (say from
    enumeration) overrides both. A requested family is solved or fails; with
    no request, infeasible families are skipped in favour of the next feasible one.
    """
    if g is None:
        g = analytics.target_cumulants if source == "exact" else analytics.cumulants_formula
    if family is not None:
        choice = FamilyChoice(family, float(g.g2) / float(g.g1), float("nan"))
        return choice, solve_family(family, g, float(g.g1), project_valid)
    # automatic choice: the selector's pick first, then the model's own family, then the rest
    choice = select_family(g)
    order = dict.fromkeys((choice.family, analytics.published_family, "M1", "M2", "M3"))
    first_error = None
    for fam in order:
        try:
            params = solve_family(fam, g, float(g.g1), project_valid)
        except InfeasibleFamilyError as exc:
            first_error = first_error or exc
            continue
        return FamilyChoice(fam, choice.ratio, choice.rho0), params
    if analytics.published_params is not None:
        # no three-cumulant match exists; the model's published parameters still match g1 and g2
        return FamilyChoice(analytics.published_params.family, choice.ratio, choice.rho0), analytics.published_params
    raise first_error


def evaluate_bound(
    spec, family: str | None = None, project_valid: bool = False, budget: int = DEFAULT_BUDGET, measure: bool = False
) -> BoundReport:
    """Bracket inputs for one model: exact gamma and S(W) when enumerable, order plug-ins otherwise."""
    inst, an = build_model(spec)
    law = _exact_law(inst, budget)
    g = cumulants_of_law(law) if law is not None else None
    choice, params = solve_target(an, family, project_valid, g=g)
    notes = list(an.discrepancies)
    if params is an.published_params:
        notes.append("no family matches all three cumulants; using the published two-cumulant parameters")
    if getattr(params, "projected", ()):
        notes.append(f"parameters projected onto the valid region: {', '.join(params.projected)}")

    gamma = S = None
    source = "plugin"
    if law is not None and inst.n_vars <= MAX_TENSOR_VARS:
        try:
            gamma = float(compute_gamma(inst, joint_moments(inst, 4, budget)))
            S = float(compute_S_W(inst, budget))
            source = "exact"
        except BudgetError as exc:
            notes.append(f"exact gamma/S(W) skipped: {exc}")
    if source == "plugin":
        gamma, S = plugin_orders(spec)

    theta = float(params.theta)
    if not theta < 0.5:
        notes.append(f"stability ratio theta = {theta:.4g} >= 1/2; bracket is infinite")
    q, p = _q_of(params)
    mu, sigma2 = float(an.mu), float(an.sigma2)
    wm = bracket_wm(choice.family, gamma, S, theta, mu, q, p)
    loc = None
    if law is not None and math.isfinite(wm):
        yd = build_discretized_normal(NormalParams(mu, sigma2))
        loc = bracket_local(wm, second_difference_norm(law), second_difference_norm(yd))
    report = BoundReport(
        model=spec,
        family=choice,
        params=params,
        gamma=gamma,
        S_W=S,
        source=source,
        theta=theta,
        mu=mu,
        sigma2=sigma2,
        bracket_WM=wm,
        bracket_normal_step=1 / math.sqrt(sigma2),
        bracket_loc=loc,
        theorem=theorem_brackets(spec),
        notes=notes,
    )
    if measure and law is not None:
        report.measured_dtv = distance_report(law, build_family(params))
    return report


# ---------------------------------------------------------------------------
# measured distances


def target_pmf(spec, analytics, target: str, project_valid: bool = False, eps: float = DEFAULT_EPS,
               source: str = "exact", g=None):
    """PMF of a comparison law plus a description of its parameters; ``g`` overrides the cumulant source."""
    if target not in TARGETS:
        raise ParameterError(f"target must be one of {TARGETS}, got {target!r}")
    if g is None:
        g = analytics.target_cumulants if source == "exact" else analytics.cumulants_formula
    if target == "Yd":
        params = NormalParams(float(g.g1), float(g.g1 + g.g2))
        return build_discretized_normal(params, eps), {"mu": params.mu, "sigma2": params.sigma2}
    if target == "PoissonRef":
        lam = float(analytics.extras.get("poisson_ref", analytics.mu))
        return build_poisson(lam, eps), {"lam": lam}
    params = solve_family(target, g, float(g.g1), project_valid)
    return build_family(params, eps), _params_dict(params)


def cell_seed(seed: int, *labels) -> int:
    """A 64-bit stream seed for one experiment cell, derived from the run seed and the cell labels."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for lab in labels:
        words.append(int(round(float(lab) * 1000)) if not isinstance(lab, int) else lab)
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def measure_dtv(
    spec,
    target: str = "Yd",
    samples: int = 200_000,
    seed: int = 0,
    workers: int = 1,
    project_valid: bool = False,
    eps: float = DEFAULT_EPS,
    budget: int = DEFAULT_BUDGET,
    bootstrap_reps: int = 100,
    source: str = "exact",
) -> DistanceReport:
    """d_TV(W, target): exact when W can be enumerated, else plug-in with a bootstrap error."""
    inst, an = build_model(spec)
    law = _exact_law(inst, budget)
    g = cumulants_of_law(law) if law is not None and source == "exact" else None
    q, desc = target_pmf(spec, an, target, project_valid, eps, source, g)
    if law is not None:
        r = distance_report(law, q)
        r.extra.update(target=target, target_params=desc, source="enumeration")
        return r
    if seed is None:
        raise ParameterError("Monte Carlo distances need a seed")
    draws = sample_many(spec, seed, samples, workers=workers)
    r = dtv_empirical(empirical_pmf(draws, seed, spec.model_id), q, bootstrap_reps, seed, workers)
    r.extra.update(target=target, target_params=desc, source="monte-carlo", seed=seed)
    return r


def hypercube_target_comparison(d: int = 3, budget: int = DEFAULT_BUDGET) -> dict:
    """Exact distances from W to P(1), the fallback matched family, and the projected three-Poisson laws."""
    inst, an = build_model(Hypercube(d))
    law = enumerate_exact_distribution(inst, budget)
    out = {"d": d, "P1": distance_report(law, build_poisson(1.0)).dtv, "P1_bound": d * 2.0**-d}
    choice, params = solve_target(an, project_valid=True)
    out["fallback"] = {"family": choice.family, "params": _params_dict(params),
                       "dtv": distance_report(law, build_family(params)).dtv}
    for label, source in (("M3_projected_exact", "exact"), ("M3_projected_printed", "formula")):
        _, p3 = solve_target(an, "M3", project_valid=True, source=source)
        out[label] = {"params": _params_dict(p3), "dtv": distance_report(law, build_family(p3)).dtv}
    return out


# ---------------------------------------------------------------------------
# triangle table and scaling fit


@dataclass
class TriangleTableRow:
    N: int
    exponent: float
    p: float
    samples: int
    dtv_estimate: float
    std_error: float
    seed: int
    mu: float = 0.0
    sigma2: float = 0.0
    null_bias: float = 0.0
    published: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.dtv_estimate <= 1.0:
            raise ParameterError(f"d_TV estimate {self.dtv_estimate} outside [0, 1]")

    @property
    def x(self) -> float:
        """Regressor (N p)^(-3/2) of the scaling fit."""
        return (self.N * self.p) ** -1.5

    @property
    def l1(self) -> float:
        return 2.0 * self.dtv_estimate


def fit_through_origin(x, y) -> tuple[float, float]:
    """Least-squares slope of y = s x and the uncentered R^2."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    s = float(np.dot(x, y) / np.dot(x, x))
    r2 = 1.0 - float(np.sum((y - s * x) ** 2) / np.sum(y**2))
    return s, r2


@dataclass
class TriangleTableResult:
    rows: list
    slope: float
    r2: float
    samples: int
    seed: int

    def cell(self, N, exponent) -> TriangleTableRow:
        for r in self.rows:
            if r.N == N and abs(r.exponent - exponent) < 1e-12:
                return r
        raise KeyError((N, exponent))

    def l1_fit(self) -> tuple[float, float]:
        return fit_through_origin([r.x for r in self.rows], [r.l1 for r in self.rows])

    def monotone_violations(self, k: float = 2.0) -> list:
        """Adjacent N pairs in a column where d_TV rises by more than ``k`` pooled standard errors."""
        bad = []
        for e in sorted({r.exponent for r in self.rows}):
            col = sorted((r for r in self.rows if r.exponent == e), key=lambda r: r.N)
            for a, b in itertools.pairwise(col):
                pooled = math.hypot(a.std_error, b.std_error)
                if b.dtv_estimate - a.dtv_estimate > k * pooled:
                    bad.append((e, a.N, b.N, b.dtv_estimate - a.dtv_estimate, pooled))
        return bad


def triangle_table_cell(N: int, exponent: float, samples: int, seed: int, workers: int = 1, bootstrap_reps: int = 100) -> TriangleTableRow:
    """One cell: triangles in G(N, N^-exponent) against the discretized normal with exact mean and variance."""
    p = N ** (-exponent)
    spec = Triangles(N, p)
    s = cell_seed(seed, N, exponent)
    _, an = build_model(spec)
    yd = build_discretized_normal(NormalParams(float(an.mu), float(an.sigma2)))
    draws = sample_many(spec, s, samples, workers=workers)
    r = dtv_empirical(empirical_pmf(draws, s, spec.model_id), yd, bootstrap_reps, s, workers)
    return TriangleTableRow(
        N=N, exponent=exponent, p=p, samples=samples, dtv_estimate=r.dtv, std_error=r.std_error, seed=s,
        mu=float(an.mu), sigma2=float(an.sigma2), null_bias=r.extra["null_bias"],
        published=TRIANGLE_TABLE_PUBLISHED.get((N, exponent)),
    )  # fmt: skip


def reproduce_triangle_table(
    samples: int = 200_000,
    seed: int = 7,
    workers: int = 1,
    Ns=TRIANGLE_TABLE_N,
    exponents=TRIANGLE_TABLE_EXPONENTS,
    bootstrap_reps: int = 100,
    progress=None,
) -> TriangleTableResult:
    rows = []
    for N in Ns:
        for e in exponents:
            rows.append(triangle_table_cell(N, e, samples, seed, workers, bootstrap_reps))
            if progress is not None:
                progress(rows[-1])
    slope, r2 = fit_through_origin([r.x for r in rows], [r.dtv_estimate for r in rows])
    return TriangleTableResult(rows, slope, r2, samples, seed)


def triangle_table_csv(result: TriangleTableResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in result.rows:
        w.writerow(["triangles", r.N, f"{r.p:.10g}", "Yd", r.samples, f"{r.dtv_estimate:.10g}", f"{r.std_error:.10g}", r.seed])
    return buf.getvalue()


def triangle_fit_json(result: TriangleTableResult) -> dict:
    l1_slope, l1_r2 = result.l1_fit()
    return {
        "slope": result.slope,
        "r2": result.r2,
        "l1_slope": l1_slope,
        "l1_r2": l1_r2,
        "published": PUBLISHED_FIT,
        "samples": result.samples,
        "seed": result.seed,
        "cells": [
            {"N": r.N, "exponent": r.exponent, "x": r.x, "dtv": r.dtv_estimate, "stderr": r.std_error,
             "null_bias": r.null_bias, "published": r.published}
            for r in result.rows
        ],
        "monotone_violations": result.monotone_violations(),
    }  # fmt: skip


def triangle_fit_data(result: TriangleTableResult) -> str:
    """Two whitespace-separated columns, x = (N p)^(-3/2) and the measured d_TV."""
    lines = ["# x dtv"] + [f"{r.x:.10g} {r.dtv_estimate:.10g}" for r in result.rows]
    return "\n".join(lines) + "\n"


def distance_csv_row(spec, target: str, samples: int, report: DistanceReport, seed) -> list:
    N = getattr(spec, "n", getattr(spec, "d", getattr(spec, "m", "")))
    p = getattr(spec, "p", "")
    return [spec.model_id, N, p, target, samples, f"{report.dtv:.10g}", f"{report.std_error:.10g}", seed]


def run_manifest(command: str, config: dict, overrides: dict | None = None, artifacts=()) -> dict:
    return {
        "command": command,
        "config": config,
        "overrides": overrides or {},
        "artifacts": list(artifacts),
        "library": {"name": "ldnormal", "version": __version__},
    }


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_num) + "\n"


# ---------------------------------------------------------------------------
# proper-coloring lower bound


@dataclass
class ColoringBoundTrial:
    n_vertices: int
    edges: tuple
    c: int
    prob: Fraction
    lower: Fraction

    @property
    def margin(self) -> Fraction:
        return self.prob - self.lower

    @property
    def holds(self) -> bool:
        return self.prob >= self.lower


def proper_coloring_probability(n_vertices: int, edges, c: int, budget: int = DEFAULT_BUDGET) -> Fraction:
    """P(every listed edge gets two different colors) under uniform c-colorings, by enumeration."""
    if c**n_vertices > budget:
        raise BudgetError(f"{c}^{n_vertices} colorings exceed the budget {budget}")
    cols = np.array(list(itertools.product(range(c), repeat=n_vertices)), dtype=np.int64).reshape(-1, n_vertices)
    ok = np.ones(len(cols), dtype=bool)
    for u, v in edges:
        ok &= cols[:, u] != cols[:, v]
    return Fraction(int(ok.sum()), c**n_vertices)


def coloring_bound_trial(n_vertices: int, edges, c: int) -> ColoringBoundTrial:
    edges = tuple(edges)
    return ColoringBoundTrial(n_vertices, edges, c, proper_coloring_probability(n_vertices, edges, c),
                        1 - Fraction(len(edges), c))  # fmt: skip


@dataclass
class ColoringBoundReport:
    trials: list
    seed: int

    @property
    def violations(self) -> list:
        return [t for t in self.trials if not t.holds]

    @property
    def min_margin(self) -> Fraction:
        return min(t.margin for t in self.trials)


def coloring_bound_spotcheck(trials: int = 100, seed: int = 0, max_vertices: int = 6, max_colors: int = 6) -> ColoringBoundReport:
    """Random small graphs and color counts; each trial enumerates every coloring."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA1]))
    out = []
    while len(out) < trials:
        nv = int(rng.integers(2, max_vertices + 1))
        c = int(rng.integers(2, max_colors + 1))
        pairs = list(itertools.combinations(range(nv), 2))
        keep = rng.random(len(pairs)) < rng.uniform(0.2, 0.9)
        edges = [e for e, k in zip(pairs, keep) if k]
        if not edges:
            continue
        out.append(coloring_bound_trial(nv, edges, c))
    return ColoringBoundReport(out, seed)
