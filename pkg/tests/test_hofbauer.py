import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from intervalrts.errors import TruncationError
from intervalrts.hofbauer import (
    EXCEEDED,
    TowerPoint,
    build_tower,
    lift_measure,
    lifted_target,
    project,
    tower_first_return,
    tower_step,
    write_measure_csv,
)
from intervalrts.maps import build_map

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="module")
def tent_r2():
    return build_map("tent", {"s": SQRT2})


@pytest.fixture(scope="module")
def tower_r2(tent_r2):
    return build_tower(tent_r2)


@pytest.mark.parametrize("family,params", [("tent", {"s": 2.0}), ("logistic", {"a": 4.0}), ("doubling", {})])
def test_full_branch_towers_are_trivial(family, params):
    g = build_tower(build_map(family, params))
    assert g.n_domains == 1
    assert sorted(g.edges) == [(0, 0, 0), (0, 0, 1)]
    assert not g.truncated


def test_tent_sqrt2_domains_hand_enumerated(tower_r2):
    # c1 = f(1/2), c2 = f(c1), c3 = f(c2)
    c1 = SQRT2 / 2
    c2 = SQRT2 * (1 - c1)
    c3 = SQRT2 * c2
    expected = [(0.0, 1.0), (0.0, c1), (c2, c1), (c3, c1), (c2, c3)]
    got = [(d.left, d.right) for d in tower_r2.domains]
    assert len(got) == 5
    for (a, b), (x, y) in zip(expected, got):
        assert a == pytest.approx(x, abs=1e-12) and b == pytest.approx(y, abs=1e-12)
    assert len(tower_r2.edges) == 9
    assert not tower_r2.truncated
    assert tower_r2.markov_defects() == []


def test_dot_export(tower_r2):
    dot = tower_r2.to_dot()
    assert dot.startswith("digraph tower {")
    assert dot.count("->") == 9


def test_truncated_tower_raises_on_missing_successor():
    m = build_map("logistic", {"a": 3.8})
    g = build_tower(m, max_level=3)
    assert g.truncated
    p = g.lift(0.3)
    with pytest.raises(TruncationError):
        for _ in range(1000):
            p = tower_step(g, p)


@settings(max_examples=200, deadline=None)
@given(hs.floats(0.0, 1.0), hs.integers(1, 30))
def test_projection_commutes(tent_r2, tower_r2, x, n):
    p = tower_r2.lift(x)
    y = x
    for _ in range(n):
        p = tower_step(tower_r2, p)
        y = tent_r2.eval_point(y)
        assert project(p) == y
        D = tower_r2.domains[p.domain_id]
        assert D.left - 1e-12 <= p.x <= D.right + 1e-12


def test_lifted_target_requires_margin(tower_r2):
    J = (0.6464466094067263, 0.6616116523516815)
    t = lifted_target(tower_r2, J, 0.5)
    assert sorted(t) == [0, 1, 2, 3]
    assert tower_first_return(tower_r2, t, tower_r2.lift(0.65), 1) in (1, EXCEEDED)


def test_lift_measure_projects_back(tent_r2, tower_r2, tmp_path):
    edges = np.linspace(0, 1, 501)
    base = np.diff(tent_r2.density.cdf(edges))
    base /= base.sum()
    lm = lift_measure(tower_r2, edges, base, 200, max_bin=1 / 500)
    assert lm.total_mass == pytest.approx(1.0, abs=1e-12)
    proj = lm.project(edges)
    assert np.abs(proj - base).sum() < 2 / 500
    write_measure_csv(tmp_path / "m.csv", lm)
    assert (tmp_path / "m.csv").read_text().startswith("domain_id,bin_left,bin_right,weight")


def test_lift_k1_reproduces_base(tent_r2, tower_r2):
    edges = np.linspace(0, 1, 101)
    base = np.full(100, 0.01)
    lm = lift_measure(tower_r2, edges, base, 1)
    assert np.array_equal(lm.weights[0], base)


def test_tower_point_fields():
    p = TowerPoint(0.25, 0)
    assert p.x == 0.25 and p.domain_id == 0
