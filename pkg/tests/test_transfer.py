import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from intervalrts.errors import ConvergenceError
from intervalrts.inducing import build_inducing_scheme, scaled_neighbourhood
from intervalrts.maps import build_map, cylinder_from_symbols
from intervalrts.transfer import (
    RychlikSystem,
    check_rychlik,
    invariant_density,
    pressure_estimate,
    pressure_sweep,
    transfer_apply,
    ulam_operator,
    write_density_csv,
    write_pressure_csv,
)


@pytest.fixture(scope="module")
def doubling():
    return build_map("doubling", {})


def test_doubling_is_conformal(doubling):
    sys = RychlikSystem.from_map(doubling)
    assert sys.is_conformal
    op = ulam_operator(sys, 256)
    one = transfer_apply(op, np.ones(256))
    assert np.max(np.abs(one - 1.0)) < 1e-14


def test_indicator_of_left_half(doubling):
    op = ulam_operator(RychlikSystem.from_map(doubling), 256)
    psi = np.r_[np.ones(128), np.zeros(128)]
    assert np.allclose(transfer_apply(op, psi), 0.5, atol=1e-14)


@pytest.mark.parametrize("delta", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_doubling_pressure(doubling, delta):
    est = pressure_estimate(lambda d: RychlikSystem.from_map(doubling, delta=d), delta, n_bins=512, tol=1e-12)
    assert est.pressure == pytest.approx((1 - delta) * math.log(2), abs=1e-10)


def test_skew_pressure_closed_form():
    m = build_map("skewlinear", {"w": [1 / 3, 2 / 3]})
    rows = pressure_sweep(lambda d: RychlikSystem.from_map(m, delta=d), [0.3, 1.0, 1.1], n_bins=512, tol=1e-12)
    for r in rows:
        ref = math.log((1 / 3) ** r.delta + (2 / 3) ** r.delta)
        assert r.pressure == pytest.approx(ref, abs=1e-9)


def test_pressure_rejects_bad_delta(doubling):
    with pytest.raises(ValueError):
        pressure_estimate(lambda d: RychlikSystem.from_map(doubling, delta=d), 1.5)


def test_skew_invariant_density_is_lebesgue():
    m = build_map("skewlinear", {"w": [1 / 3, 2 / 3]})
    est = invariant_density(ulam_operator(RychlikSystem.from_map(m), 300))
    assert est.lambda1 == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(est.density - 1.0)) < 1e-9


def test_convergence_error_carries_trace(doubling):
    op = ulam_operator(RychlikSystem.from_map(build_map("skewlinear", {"w": [0.3, 0.7]})), 64)
    with pytest.raises(ConvergenceError) as info:
        invariant_density(op, tol=1e-300, max_iter=3)
    assert len(info.value.trace) == 3


@pytest.fixture(scope="module")
def induced_logistic():
    m = build_map("logistic", {"a": 4.0})
    Y = cylinder_from_symbols(m, [0, 1]).interval
    scheme = build_inducing_scheme(m, scaled_neighbourhood(Y, 0.25), depth=30)
    return m, RychlikSystem.from_scheme(scheme)


def test_induced_logistic_density(induced_logistic):
    m, sys = induced_logistic
    est = invariant_density(ulam_operator(sys, 4096))
    assert est.l1_to(m.density.cdf) < 10 * est.h
    assert est.lambda1 == pytest.approx(1.0, abs=1e-6)


def test_induced_logistic_rychlik(induced_logistic):
    _, sys = induced_logistic
    rep = check_rychlik(sys)
    assert rep.passed
    assert rep.sup_phi < 0 and rep.inf_abs_dF > 1


def test_writers(tmp_path, doubling):
    est = invariant_density(ulam_operator(RychlikSystem.from_map(doubling), 64))
    write_density_csv(tmp_path / "d.csv", est)
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "bin_left,bin_right,density"
    rows = pressure_sweep(lambda d: RychlikSystem.from_map(doubling, delta=d), [0.5], n_bins=64)
    write_pressure_csv(tmp_path / "p.csv", rows)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "delta,pressure,residual"


@settings(max_examples=40, deadline=None)
@given(hs.lists(hs.floats(0.0, 10.0), min_size=64, max_size=64))
def test_operator_preserves_integral_when_conformal(doubling, vals):
    op = ulam_operator(RychlikSystem.from_map(build_map("skewlinear", {"w": [0.25, 0.75]})), 64)
    psi = np.asarray(vals)
    out = transfer_apply(op, psi)
    assert out.sum() == pytest.approx(psi.sum(), rel=1e-12, abs=1e-12)
    assert np.all(out >= 0)
