"""Acceptance criteria, each run at its stated tolerance.

Every test prints one PASS/FAIL line; the lines are repeated in the
terminal summary under "acceptance criteria".
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from intervalrts.errors import EstimationError
from intervalrts.hofbauer import build_tower, lift_measure, lifted_target, tower_first_return
from intervalrts.inducing import build_inducing_scheme, extendible_return_time, kac_check, scaled_neighbourhood
from intervalrts.maps import OrbitSampler, build_map, cylinder_from_symbols, cylinder_of
from intervalrts.statistics import (
    ball_target,
    bernoulli_cylinder_ks,
    cylinder_target,
    fluctuation_test,
    gibbs_trace,
    induced_return_comparison,
    is_periodic,
    ks_two_sample,
    l2_check,
    ow_entropy,
    return_stats_many,
)
from intervalrts.transfer import (
    RychlikSystem,
    invariant_density,
    pressure_sweep,
    transfer_apply,
    ulam_operator,
)

SQRT2 = math.sqrt(2.0)
ROOT = Path(__file__).resolve().parents[1]
SEED = 20240611

GALLERY = {
    "doubling": ("doubling", {}),
    "tent(2)": ("tent", {"s": 2.0}),
    "skewlinear(1/3,2/3)": ("skewlinear", {"w": [1 / 3, 2 / 3]}),
    "logistic(4)": ("logistic", {"a": 4.0}),
}


def _aperiodic_centers(fmap, sampler, n):
    out = []
    for z in sampler.sample(10 * n):
        if is_periodic(fmap, float(z)) is None:
            out.append(float(z))
        if len(out) == n:
            return out
    raise RuntimeError("not enough aperiodic centers")


def test_criterion_01_exponential_rts(verdict):
    lines, ok = [], True
    for name, (fam, params) in GALLERY.items():
        t0 = time.perf_counter()
        m = build_map(fam, params)
        cs, orbit = OrbitSampler(m, SEED).spawn(2)
        targets = []
        for z in _aperiodic_centers(m, cs, 20):
            for n in range(6, 13):
                c = cylinder_target(m, z, n)
                targets += [c, ball_target(m, z, (c.right - c.left) / 2)]
        res = return_stats_many(m, orbit, targets, 100_000)
        ks = np.array([e.ks() for e in res])
        dt = time.perf_counter() - t0
        bad = int((ks >= 0.05).sum())
        worst_level = {n: float(max(k for k, t in zip(ks, targets) if t.kind == "cylinder" and t.scale == n))
                       for n in range(6, 13)}
        ok &= bad == 0 and dt < 300
        lines.append(f"{name}: {bad}/{len(ks)} targets with KS >= 0.05, max KS {ks.max():.3f}, "
                     f"max cylinder KS by level {{{', '.join(f'{n}: {v:.3f}' for n, v in worst_level.items())}}}, "
                     f"{dt:.0f}s")
    verdict(1, "exponential RTS on the gallery", ok, "; ".join(lines))


def test_criterion_02_negative_control(verdict):
    m = build_map("doubling", {})
    assert is_periodic(m, 0.0) == 1
    targets = [cylinder_target(m, 0.0, n) for n in range(6, 13)]
    res = return_stats_many(m, OrbitSampler(m, SEED), targets, 100_000)
    emp = [e.ks() for e in res]
    exact = [bernoulli_cylinder_ks([0] * n, [0.5, 0.5]) for n in range(6, 13)]
    ok = min(emp) > 0.1 and min(exact) > 0.1
    verdict(2, "negative control at z = 0", ok,
            f"empirical KS min {min(emp):.3f}, exact KS min {min(exact):.3f} over levels 6-12")


def test_criterion_03_kac(verdict):
    pairs = [("doubling", {}, (0.0, 0.25)),
             ("skewlinear", {"w": [1 / 3, 2 / 3]}, (0.0, 1 / 3)),
             ("logistic", {"a": 4.0}, (0.2, 0.4))]
    out, ok = [], True
    for fam, params, Y in pairs:
        m = build_map(fam, params)
        r = kac_check(m, OrbitSampler(m, SEED), Y, 1_000_000)
        ok &= 0.98 <= r.product <= 1.02
        out.append(f"{m.tag} Y={Y[0]:.3g},{Y[1]:.3g}: {r.product:.4f}")
    verdict(3, "Kac normalisation", ok, "; ".join(out))


def test_criterion_04_induced_agreement(verdict):
    m = build_map("doubling", {})
    U = cylinder_of(m, 0.1, 8).interval
    full, ind, _, _ = induced_return_comparison(m, OrbitSampler(m, SEED), (0.0, 0.25), U, 100_000)
    gap = ks_two_sample(full, ind)
    verdict(4, "first-return RTS vs full RTS", gap < 0.03, f"KS gap {gap:.4f} on U = {U}")


def test_criterion_05_extendible_vs_tower(verdict):
    cases = [("tent", {"s": SQRT2}, 0.65, 6), ("logistic", {"a": 4.0}, 0.3, 4)]
    out, ok = [], True
    for fam, params, z, level in cases:
        m = build_map(fam, params)
        g = build_tower(m)
        J = cylinder_of(m, z, level).interval
        nb = scaled_neighbourhood(J, 0.5, m.domain)
        tgt = lifted_target(g, J, 0.5)
        rng = np.random.default_rng(SEED)
        xs = rng.uniform(J[0], J[1], size=1000)
        mism = 0
        for x in xs:
            rec, _ = extendible_return_time(m, nb, float(x), 100_000)
            mism += tower_first_return(g, tgt, g.lift(float(x)), 100_000) != rec.tau
        ok &= mism == 0
        out.append(f"{m.tag}: {mism} mismatches in 1000")
    verdict(5, "extendible returns equal tower returns", ok, "; ".join(out))


def test_criterion_06_tower_structure(verdict):
    out, ok = [], True
    for fam, params in [("tent", {"s": 2.0}), ("logistic", {"a": 4.0})]:
        g = build_tower(build_map(fam, params))
        good = g.n_domains == 1 and sorted(g.edges) == [(0, 0, 0), (0, 0, 1)] and not g.markov_defects()
        ok &= good
        out.append(f"{g.map.tag}: {g.n_domains} domain, {len(g.edges)} self-loops")
    g = build_tower(build_map("tent", {"s": SQRT2}))
    good = g.n_domains == 5 and not g.truncated and not g.markov_defects()
    ok &= good
    out.append(f"tent(sqrt2): {g.n_domains} domains (expected 5), {len(g.edges)} edges, "
               f"{len(g.markov_defects())} Markov defects")
    verdict(6, "tower structure", ok, "; ".join(out))


def test_criterion_07_lifting(verdict):
    m = build_map("tent", {"s": SQRT2})
    g = build_tower(m)
    edges = np.linspace(0.0, 1.0, 1001)
    base = np.diff(m.density.cdf(edges))
    base /= base.sum()
    lm = lift_measure(g, edges, base, 200, max_bin=1e-3)
    proj = lm.project(edges) / lm.total_mass
    l1 = float(np.abs(proj - base).sum())
    tol = 1e-3 + 1e-3
    ok = lm.total_mass >= 0.9 and l1 <= tol
    verdict(7, "lifted measure projects to the base", ok,
            f"retained {lm.total_mass:.6f}, projection L1 {l1:.2e} (tolerance {tol:g})")


def test_criterion_08_gibbs(verdict):
    out, ok = [], True
    for name in ("doubling", "tent(2)", "skewlinear(1/3,2/3)"):
        m = build_map(*GALLERY[name])
        xs = OrbitSampler(m, SEED).sample(20)
        dev = max(float(np.max(np.abs(gibbs_trace(m, float(x), range(1, 41), 17, 2.5).g - 1.0))) for x in xs)
        ok &= dev <= 1e-10
        out.append(f"{name}: max |g_n - 1| = {dev:.1e}")
    m = build_map("logistic", {"a": 4.0})
    xs = OrbitSampler(m, SEED).sample(20)
    n0 = [gibbs_trace(m, float(x), range(1, 26), 17, 2.5).n0 for x in xs]
    ok &= all(n is not None for n in n0)
    out.append(f"logistic(4): envelope holds from n0 = {sorted(set(n0), key=lambda v: (v is None, v))} up to 25")
    verdict(8, "polynomial Gibbs property", ok, "; ".join(out))


@pytest.mark.parametrize("name,ref", [("doubling", math.log(2)), ("skewlinear(1/3,2/3)", 0.6365)])
def test_criterion_09_ornstein_weiss(verdict, name, ref):
    m = build_map(*GALLERY[name])
    t0 = time.perf_counter()
    est = ow_entropy(m, OrbitSampler(m, SEED), 15, 2000)
    dt = time.perf_counter() - t0
    rel = abs(est.estimate - ref) / ref
    verdict(9, f"Ornstein-Weiss on {name}", rel <= 0.1 and dt < 120,
            f"mean {est.estimate:.4f} vs {ref:.4f} ({rel:.1%}), censored {est.censored}, {dt:.0f}s")


def test_criterion_10_fluctuations(verdict):
    m = build_map("skewlinear", {"w": [1 / 3, 2 / 3]})
    h, sigma = 0.6365141682948128, math.sqrt(m.oracles["sigma2"])
    res = fluctuation_test(m, OrbitSampler(m, SEED), 20, h, sigma, 5000)
    d = build_map("doubling", {})
    try:
        fluctuation_test(d, OrbitSampler(d, SEED), 20, math.log(2), 0.0, 100)
        rejected = False
    except EstimationError:
        rejected = True
    verdict(10, "log-return fluctuations", res.ks < 0.05 and rejected,
            f"skewlinear KS to N(0,1) {res.ks:.4f} (sigma {sigma:.4f}); doubling rejected: {rejected}")


def test_criterion_11_transfer_operator(verdict):
    d = build_map("doubling", {})
    op = ulam_operator(RychlikSystem.from_map(d), 1024)
    l1_dev = float(np.max(np.abs(transfer_apply(op, np.ones(1024)) - 1.0)))
    deltas = [0.0, 0.25, 0.5, 0.75, 1.0]
    rows = pressure_sweep(lambda s: RychlikSystem.from_map(d, delta=s), deltas, n_bins=1024, tol=1e-12)
    perr = max(abs(r.pressure - (1 - r.delta) * math.log(2)) for r in rows)
    m = build_map("logistic", {"a": 4.0})
    Y = cylinder_from_symbols(m, [0, 1]).interval
    scheme = build_inducing_scheme(m, scaled_neighbourhood(Y, 0.25), depth=30)
    est = invariant_density(ulam_operator(RychlikSystem.from_scheme(scheme), 4096))
    l1 = est.l1_to(m.density.cdf)
    ok = l1_dev == 0.0 and perr <= 1e-6 and l1 <= 10 * est.h
    verdict(11, "transfer operator", ok,
            f"max |L1 - 1| = {l1_dev:.1e}; pressure error {perr:.1e}; induced logistic L1 {l1:.2e} "
            f"vs 10h = {10 * est.h:.2e}")


def test_criterion_12_l2(verdict):
    sk = build_map("skewlinear", {"w": [1 / 3, 2 / 3]})
    a = l2_check(sk, OrbitSampler(sk, SEED), 10_000_000)
    rel = abs(a.estimates[-1] - 0.5119) / 0.5119
    lg = build_map("logistic", {"a": 4.0})
    b = l2_check(lg, OrbitSampler(lg, SEED), 10_000_000)
    drift = abs(b.estimates[-1] - b.estimates[-2]) / b.estimates[-1]
    ok = rel <= 0.02 and not b.diverging and drift <= 0.02
    verdict(12, "L2 of log|Df|", ok,
            f"skewlinear {a.estimates[-1]:.4f} vs 0.5119 ({rel:.2%}); logistic(4) trace "
            f"{', '.join(f'{v:.4f}' for v in b.estimates)} (last doubling changes {drift:.2%})")


def test_criterion_13_reproducibility(verdict, tmp_path):
    out = []
    ok = True
    for cfg in ("rts.toml", "ow.toml", "tower.toml"):
        dirs = []
        for k in range(2):
            d = tmp_path / f"{cfg}-{k}"
            subprocess.run([sys.executable, "-m", "intervalrts.cli", "run", str(ROOT / "configs" / cfg),
                            "--strict-repro", "--out", str(d)], check=False, capture_output=True)
            dirs.append(d)
        files = sorted(p.name for p in dirs[0].iterdir())
        same = files == sorted(p.name for p in dirs[1].iterdir()) and all(
            (dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes() for f in files
        )
        ok &= same and len(files) > 1
        out.append(f"{cfg}: {len(files)} files {'identical' if same else 'differ'}")
    verdict(13, "byte-identical reruns", ok, "; ".join(out))
