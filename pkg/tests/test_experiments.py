import math
from fractions import Fraction

import numpy as np
import pytest

from ldnormal.errors import InfeasibleFamilyError, ParameterError
from ldnormal.experiments import (
    CSV_HEADER,
    TriangleTableResult,
    TriangleTableRow,
    bracket_local,
    bracket_wm,
    cell_seed,
    evaluate_bound,
    fit_through_origin,
    hypercube_target_comparison,
    coloring_bound_spotcheck,
    coloring_bound_trial,
    measure_dtv,
    mono_theorem_bracket,
    triangle_table_cell,
    triangle_table_csv,
    triangle_fit_data,
    triangle_theorem_bracket,
)
from ldnormal.models import EXAMPLE_GRAPH_EDGES, Birthday, Hypercube, MonoEdges, Triangles


def test_bracket_arithmetic():
    assert bracket_wm("M3", 1.0, 4.0, 0.1, 10.0) == pytest.approx(0.5)
    assert bracket_wm("M1", 1.0, 4.0, 0.1, 10.0, q=1.0) == pytest.approx(0.5 + 1 / 10)
    assert bracket_wm("M2", 1.0, 4.0, 0.1, 10.0, q=2.0, p=0.5) == pytest.approx(4 * 0.5)
    assert bracket_wm("M2", 1.0, 4.0, 0.1, 10.0, q=0.5, p=2.0) == pytest.approx(0.5)
    assert bracket_local(0.25, 1.0, 3.0) == pytest.approx(1.0)


@pytest.mark.parametrize("family", ["M1", "M2", "M3"])
def test_bracket_scales_with_gamma_and_blows_up_at_half(family):
    offset = 1 / 5.0 if family == "M1" else 0.0  # the additive 1/mu term does not scale
    base = bracket_wm(family, 0.3, 2.0, 0.2, 5.0, 0.7, 0.4) - offset
    assert bracket_wm(family, 0.6, 2.0, 0.2, 5.0, 0.7, 0.4) - offset == pytest.approx(2 * base)
    near = [bracket_wm(family, 0.3, 2.0, 0.5 - h, 5.0, 0.7, 0.4) for h in (1e-2, 1e-4, 1e-6)]
    assert near[0] < near[1] < near[2] and near[2] > 1e4
    assert bracket_wm(family, 0.3, 2.0, 0.5, 5.0, 0.7, 0.4) == math.inf


def test_bracket_rejects_negative_inputs():
    with pytest.raises(ParameterError):
        bracket_wm("M1", -1.0, 1.0, 0.1, 1.0)
    with pytest.raises(ParameterError):
        bracket_wm("M4", 1.0, 1.0, 0.1, 1.0)


def test_theorem_rates():
    assert mono_theorem_bracket(10**6, 10**3, 10) == pytest.approx(0.0316228 + 1e-5, abs=1e-7)
    assert triangle_theorem_bracket(300, 300**-0.6) == pytest.approx(300**-0.6)
    assert triangle_theorem_bracket(300, 300**-0.6) == pytest.approx(0.0327, abs=1e-4)


@pytest.mark.slow
def test_mono_bound_at_scale():
    n = 200_000
    spec = MonoEdges(tuple((i, (i + j) % n) for i in range(n) for j in range(1, 6)), 1000)
    assert spec.m == 10**6 and spec.max_degree == 10
    rep = evaluate_bound(spec)
    assert rep.source == "plugin"
    assert rep.theorem["W_vs_Yd"] == pytest.approx(0.031623 + 1e-5, abs=1e-6)
    # the exact third cumulant has no three-parameter match here, so the published B(m, 1/c) is used
    assert rep.family.family == "M1" and rep.params.n == 10**6 and rep.params.p == pytest.approx(1e-3)
    assert rep.bracket_WM >= 0


def test_bound_reports_on_enumerable_models():
    rep = evaluate_bound(MonoEdges(((0, 1), (1, 2), (0, 2)), 4), measure=True)
    assert rep.source == "exact" and rep.S_W <= 4
    assert rep.bracket_WM >= 0 and rep.measured_dtv.dtv >= 0
    rep = evaluate_bound(Hypercube(2))
    assert rep.gamma == pytest.approx(1.125) and rep.S_W == 4.0
    d = rep.to_dict()
    assert d["bracket_WM"] == "inf" and any("theta" in n for n in d["notes"])
    rep = evaluate_bound(Triangles(300, 300**-0.6))
    assert rep.theorem["W_vs_Yd"] == pytest.approx(0.0327, abs=1e-4)
    assert rep.bracket_normal_step == pytest.approx(1 / math.sqrt(rep.sigma2))


def test_requested_infeasible_family_errors():
    with pytest.raises(InfeasibleFamilyError):
        evaluate_bound(Hypercube(2), family="M2")
    rep = evaluate_bound(Hypercube(2), family="M3", project_valid=True)
    assert rep.params.projected


def test_hypercube_comparison():
    out = hypercube_target_comparison(3)
    assert out["P1"] <= out["P1_bound"] == 0.375
    assert out["P1"] == pytest.approx(0.199157, abs=1e-6)
    # the fallback matched family beats P(1); the projected three-Poisson laws do not
    assert out["fallback"]["dtv"] < out["P1"]
    assert out["fallback"]["dtv"] == pytest.approx(0.0625, abs=1e-5)
    assert out["M3_projected_exact"]["dtv"] > out["P1"]
    assert out["M3_projected_printed"]["dtv"] > out["P1"]


def test_measure_dtv_exact_paths():
    r = measure_dtv(Hypercube(3), "PoissonRef")
    assert r.extra["source"] == "enumeration" and r.dtv <= 0.375
    r = measure_dtv(MonoEdges(EXAMPLE_GRAPH_EDGES, 3), "Yd")
    assert 0 < r.dtv < 1
    with pytest.raises(ParameterError):
        measure_dtv(Hypercube(2), "Normal")


def test_self_distance_is_zero():
    from ldnormal.localdep import enumerate_exact_distribution
    from ldnormal.metrics import total_variation
    from ldnormal.models import build_model

    law = enumerate_exact_distribution(build_model(Birthday(4, 2, 3))[0])
    assert total_variation(law, law) == 0.0


def test_monte_carlo_distance_is_seeded():
    a = measure_dtv(Triangles(30, 0.3), "Yd", samples=5000, seed=3, bootstrap_reps=10)
    b = measure_dtv(Triangles(30, 0.3), "Yd", samples=5000, seed=3, bootstrap_reps=10, workers=3)
    assert a.dtv == b.dtv and a.std_error == b.std_error
    with pytest.raises(ParameterError):
        measure_dtv(Triangles(30, 0.3), "Yd", samples=10, seed=None)


def test_fit_through_origin():
    s, r2 = fit_through_origin([1, 2, 3], [2, 4, 6])
    assert s == pytest.approx(2) and r2 == pytest.approx(1)
    s, r2 = fit_through_origin([1, 2], [1, 3])
    assert s == pytest.approx(7 / 5) and 0 < r2 < 1


def row(N, e, d, se=0.001):
    return TriangleTableRow(N, e, N**-e, 10, d, se, 0)


def test_monotone_violations():
    res = TriangleTableResult([row(300, 0.6, 0.05), row(400, 0.6, 0.051), row(500, 0.6, 0.06)], 0, 0, 10, 0)
    bad = res.monotone_violations()
    assert [(v[1], v[2]) for v in bad] == [(400, 500)]
    with pytest.raises(ParameterError):
        row(300, 0.6, 1.5)


def test_triangle_table_cell_and_artifacts():
    r = triangle_table_cell(300, 0.8, 2000, seed=7, bootstrap_reps=5)
    again = triangle_table_cell(300, 0.8, 2000, seed=7, workers=2, bootstrap_reps=5)
    assert r == again
    assert r.mu == pytest.approx(math.comb(300, 3) * r.p**3)
    assert r.published == pytest.approx(0.1198)
    res = TriangleTableResult([r], 1.0, 1.0, 2000, 7)
    lines = triangle_table_csv(res).splitlines()
    assert lines[0] == ",".join(CSV_HEADER) == "model,N,p,target,samples,dtv,stderr,seed"
    assert len(lines) == 2
    assert triangle_fit_data(res).splitlines()[0] == "# x dtv"


def test_cell_seeds_differ_by_cell():
    assert cell_seed(7, 300, 0.6) != cell_seed(7, 300, 0.7) != cell_seed(8, 300, 0.7)
    assert cell_seed(7, 300, 0.6) == cell_seed(7, 300, 0.6)


def test_coloring_bound_examples():
    assert coloring_bound_trial(2, [(0, 1)], 2).prob == Fraction(1, 2)
    t = coloring_bound_trial(3, [(0, 1), (1, 2)], 3)
    assert t.prob == Fraction(4, 9) and t.lower == Fraction(1, 3) and t.holds
    t = coloring_bound_trial(3, [(0, 1), (1, 2), (0, 2)], 4)
    assert t.prob == Fraction(3, 8) and t.lower == Fraction(1, 4) and t.holds


def test_coloring_bound_spotcheck_small():
    rep = coloring_bound_spotcheck(20, seed=1)
    assert len(rep.trials) == 20 and not rep.violations and rep.min_margin >= 0
