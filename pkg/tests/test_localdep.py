import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldnormal.errors import BudgetError, ParameterError
from ldnormal.localdep import (
    DependenceInstance,
    check_independence,
    compute_G1_G2,
    compute_gamma,
    compute_S_W,
    enumerate_exact_distribution,
    exact_cumulants,
    independent_instance,
    joint_moments,
    load_instance,
    m_dependent_instance,
)
from ldnormal.models import build_birthday, build_hypercube, build_mono_edges, build_triangles

K3 = ((0, 1), (1, 2), (0, 2))


def k3():
    return build_mono_edges(K3, 2)[0]


def test_exact_laws():
    assert np.allclose(enumerate_exact_distribution(build_hypercube(2)[0]).probs, [0.125, 0.75, 0.125], atol=0)
    law = enumerate_exact_distribution(k3())
    assert law.pmf(1) == 0.75 and law.pmf(3) == 0.25 and law.pmf(0) == 0 and law.pmf(2) == 0
    assert np.array_equal(enumerate_exact_distribution(independent_instance([0, 1])).probs, [0.5, 0.5])


def test_exact_cumulants_are_rational():
    assert tuple(exact_cumulants(k3())) == (Fraction(3, 2), Fraction(-3, 4), Fraction(3, 2))
    assert exact_cumulants(build_birthday(3, 2, 2)[0]).g2 == Fraction(-3, 4)
    assert exact_cumulants(build_hypercube(2)[0]).g2 == Fraction(-3, 4)


def test_gamma_examples():
    assert compute_gamma(independent_instance([0, 1], n=5)) == 0
    assert compute_gamma(k3()) == pytest.approx(15.75, abs=1e-12)
    # two iid fair bits with every neighborhood forced to the whole index set:
    # 2 ordered (i, j) pairs x (1/4 + 1/4) x [2 (1/2 + 1/4) + 2 (1/4 + 1/4)] = 2.5
    forced = DependenceInstance("forced", (2, 2), ((0,), (1,)), lambda D: D, neighborhoods={"A": [{0, 1}, {0, 1}]})
    assert compute_gamma(forced) == pytest.approx(2.5, abs=1e-12)


def test_S_W_examples():
    assert compute_S_W(k3()) == 4.0
    chain = m_dependent_instance([0, 1], n=6, m=1)
    assert 0 <= compute_S_W(chain) <= 4
    # golden value from the 16-orientation enumeration
    assert compute_S_W(build_hypercube(2)[0]) == 4.0


def test_G1_G2_examples():
    iid = independent_instance([0, 1], n=4)
    G1, G2 = compute_G1_G2(iid)
    assert G1 == 1 and G2 == Fraction(-1, 2)
    assert compute_G1_G2(k3()) == (Fraction(3, 4), Fraction(-3, 4))


LEMMA_INSTANCES = {
    "k3_c2": lambda: k3(),
    "birthday_3_2_2": lambda: build_birthday(3, 2, 2)[0],
    "hypercube_2": lambda: build_hypercube(2)[0],
    "triangles_4_half": lambda: build_triangles(4, 0.5)[0],
    "chain_n6_m1": lambda: m_dependent_instance([0, 1], n=6, m=1),
    "chain_n5_m2_weighted": lambda: m_dependent_instance([0, 1, 2], [0.5, 0.3, 0.2], n=5, m=2,
                                                         func=lambda b: b.sum(axis=1)),
    "triangles_4_weighted": lambda: build_triangles(4, 0.3)[0],
}  # fmt: skip


@pytest.mark.parametrize("name", sorted(LEMMA_INSTANCES))
def test_G_identity(name):
    inst = LEMMA_INSTANCES[name]()
    G1, G2 = compute_G1_G2(inst)
    g = exact_cumulants(inst)
    assert abs(float(G1) + float(g.g2)) <= 1e-10
    assert abs(float(G2) + float(g.g3) / 2) <= 1e-10


def test_m_dependent_structure():
    inst = m_dependent_instance([0, 1], n=5, m=0)
    assert all(inst.A(i) == {i} for i in range(5))
    inst = m_dependent_instance([0, 1], n=5, m=1)
    assert all(len(inst.A(i)) <= 3 for i in range(5))
    assert inst.check_nesting() == []
    with pytest.raises(ParameterError):
        m_dependent_instance([0, 1], n=3, m=3)


@pytest.mark.parametrize("name", ["k3_c2", "birthday_3_2_2", "hypercube_2", "chain_n6_m1"])
def test_neighborhoods_nest_and_factorize(name):
    inst = LEMMA_INSTANCES[name]()
    assert inst.check_nesting() == []
    assert check_independence(inst) == []


def test_independence_check_catches_bad_neighborhoods():
    # chain neighborhoods shrunk to singletons are wrong: X_0 and X_1 share a coordinate
    inst = m_dependent_instance([0, 1], n=4, m=1)
    bad = DependenceInstance("bad", inst.coord_sizes, inst.deps, inst.xfun, neighborhoods={"A": [{i} for i in range(4)]})
    assert check_independence(bad)


@settings(max_examples=15)
@given(st.integers(2, 5), st.integers(0, 2), st.lists(st.floats(0.05, 1), min_size=2, max_size=3))
def test_gamma_non_negative_and_lemma_identity_on_random_chains(n, m, w):
    m = min(m, n - 1)
    probs = np.asarray(w) / np.sum(w)
    inst = m_dependent_instance(np.arange(len(w)), probs, n=n, m=m, func=lambda b: b.max(axis=1))
    M = joint_moments(inst, 4)
    assert compute_gamma(inst, M) >= 0
    G1, G2 = compute_G1_G2(inst, M)
    g = exact_cumulants(inst)
    assert abs(float(G1) + float(g.g2)) <= 1e-10 and abs(float(G2) + float(g.g3) / 2) <= 1e-10


def test_budget_is_enforced():
    with pytest.raises(BudgetError):
        enumerate_exact_distribution(build_hypercube(4)[0])


def test_load_instance_round_trip(tmp_path):
    path = tmp_path / "pair.json"
    path.write_text(json.dumps({
        "name": "pair",
        "coordinates": [{"values": [0, 1], "repeat": 3}],
        "variables": [{"deps": [0, 1], "rule": "product"}, {"deps": [1, 2], "rule": "product"}],
    }))  # fmt: skip
    inst = load_instance(path)
    twin = m_dependent_instance([0, 1], n=2, m=1)
    assert np.allclose(enumerate_exact_distribution(inst).probs, enumerate_exact_distribution(twin).probs)
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x",\n "oops": 1}')
    with pytest.raises(ParameterError, match="unknown keys"):
        load_instance(bad)
    broken = tmp_path / "broken.json"
    broken.write_text('{"name": "x",\n "coordinates": [}')
    with pytest.raises(ParameterError, match="line 2"):
        load_instance(broken)
