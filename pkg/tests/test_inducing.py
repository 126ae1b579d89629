import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from intervalrts.errors import SchemeError
from intervalrts.hofbauer import EXCEEDED, build_tower, lifted_target, tower_first_return
from intervalrts.inducing import (
    build_first_return_scheme,
    build_inducing_scheme,
    extendible_return_time,
    first_return_time,
    kac_check,
    project_induced_measure,
    return_records,
    scaled_neighbourhood,
    write_returns_csv,
    write_scheme_csv,
)
from intervalrts.maps import OrbitSampler, build_map, cylinder_of

SQRT2 = math.sqrt(2.0)


def cylinder_route_tau(fmap, nb, x, horizon):
    """Independent route: M_i is the image of the level-i cylinder of x."""
    y = x
    r = EXCEEDED
    for i in range(1, horizon + 1):
        y = fmap.eval_point(y)
        if nb.Y[0] <= y <= nb.Y[1]:
            if r == EXCEEDED:
                r = i
            lo, hi = cylinder_of(fmap, x, i).image
            if lo <= nb.Yp[0] and nb.Yp[1] <= hi:
                return r, i
    return r, EXCEEDED


def test_scaled_neighbourhood_rules():
    nb = scaled_neighbourhood((0.4, 0.5), 0.5)
    assert nb.Yp == pytest.approx((0.35, 0.55))
    with pytest.raises(SchemeError):
        scaled_neighbourhood((0.4, 0.5), 0.0)
    with pytest.raises(SchemeError):
        scaled_neighbourhood((0.0, 0.5), 0.5)


def test_first_return_example():
    d = build_map("doubling", {})
    assert first_return_time(d, (0.0, 0.25), 0.1) == 1


def test_non_extendible_first_return():
    # tent with slope 1.6: the orbit of 0.499 is back in J at step 3, but the
    # branch through x only covers the scaled neighbourhood at step 31
    m = build_map("tent", {"s": 1.6})
    nb = scaled_neighbourhood((0.49, 0.52), 0.5)
    rec, _ = extendible_return_time(m, nb, 0.499, 100)
    assert (rec.r, rec.tau, rec.extendible) == (3, 31, False)
    assert cylinder_route_tau(m, nb, 0.499, 100) == (3, 31)


@settings(max_examples=80, deadline=None)
@given(hs.floats(0.0, 1.0))
def test_lap_recursion_matches_cylinder_images(u):
    m = build_map("tent", {"s": 1.6})
    nb = scaled_neighbourhood((0.49, 0.52), 0.5)
    x = 0.49 + 0.03 * u
    rec, _ = extendible_return_time(m, nb, x, 40)
    assert (rec.r, rec.tau) == cylinder_route_tau(m, nb, x, 40)


def test_doubling_first_return_scheme_branches():
    d = build_map("doubling", {})
    s = build_first_return_scheme(d, (0.0, 0.5), depth=30)
    assert s.uncovered == pytest.approx(2.0**-30, rel=1e-9)
    first = sorted(s.branches, key=lambda b: b.tau)[:6]
    for i, b in enumerate(first, start=1):
        assert b.tau == i
        assert (b.left, b.right) == (0.5 - 2.0**-i, 0.5 - 2.0 ** (-i - 1))
    # Kac: Σ τ_i |Y_i| / |Y| = 1 / μ(Y)
    mean_tau = sum(b.tau * b.width for b in s.branches) / 0.5
    assert mean_tau == pytest.approx(2.0, rel=1e-6)


def test_induced_measure_projects_to_lebesgue():
    d = build_map("doubling", {})
    s = build_first_return_scheme(d, (0.0, 0.5), depth=30)
    w = np.array([b.width for b in s.branches]) / 0.5
    assert project_induced_measure(s, w, (0.6, 0.9)) == pytest.approx(0.3, abs=1e-6)


def test_tent_scheme_is_onto_and_consistent():
    m = build_map("tent", {"s": SQRT2})
    J = cylinder_of(m, 0.65, 6).interval
    nb = scaled_neighbourhood(J, 0.5)
    s = build_inducing_scheme(m, nb, depth=30, threshold=0.1)
    assert all(b.onto for b in s.branches)
    rng = np.random.default_rng(3)
    for x in rng.uniform(*J, size=60):
        br = s.locate(float(x))
        if br is None:
            continue
        rec, _ = extendible_return_time(m, nb, float(x), 100)
        assert rec.tau == br.tau


def test_scheme_rejects_bad_depth():
    with pytest.raises(SchemeError):
        build_inducing_scheme(build_map("doubling", {}), scaled_neighbourhood((0.2, 0.3), 0.5), depth=0)


@pytest.mark.parametrize("z", [0.65, 0.45])
def test_branch_tracking_equals_tower_return(z):
    m = build_map("tent", {"s": SQRT2})
    g = build_tower(m)
    J = cylinder_of(m, z, 6).interval
    nb = scaled_neighbourhood(J, 0.5)
    tgt = lifted_target(g, J, 0.5)
    rng = np.random.default_rng(int(z * 100))
    for x in rng.uniform(*J, size=150):
        rec, _ = extendible_return_time(m, nb, float(x), 10_000)
        assert tower_first_return(g, tgt, g.lift(float(x)), 10_000) == rec.tau


def test_kac_doubling():
    d = build_map("doubling", {})
    res = kac_check(d, OrbitSampler(d, 5), (0.0, 0.25), 200_000)
    assert res.product == pytest.approx(1.0, abs=0.03)


def test_csv_writers(tmp_path):
    d = build_map("doubling", {})
    s = build_first_return_scheme(d, (0.0, 0.5), depth=10)
    write_scheme_csv(tmp_path / "s.csv", s)
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "branch_index,left,right,tau"
    nb = scaled_neighbourhood((0.2, 0.3), 0.5)
    recs = return_records(d, nb, [0.21, 0.25], 1000)
    write_returns_csv(tmp_path / "r.csv", recs)
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "x,r,tau,extendible"
