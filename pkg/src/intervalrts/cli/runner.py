"""Experiment dispatch, output files and exit status."""

from __future__ import annotations

import csv
import json
import logging
import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
from scipy.stats import norm

from .. import hofbauer, inducing, transfer
from .. import statistics as st
from ..errors import EstimationError, IntervalRTSError
from ..maps import OrbitSampler, build_map, cylinder_from_symbols, lyapunov
from ..maps.core import IntervalMap
from .config import ExperimentConfig

log = logging.getLogger(__name__)

EXIT_PASS, EXIT_WARN, EXIT_ERROR = 0, 1, 2


@dataclass
class RunReport:
    config: dict
    status: str = "pass"  # pass | warn | error
    results: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)
    wall_clock: Optional[float] = None

    @property
    def exit_code(self) -> int:
        return {"pass": EXIT_PASS, "warn": EXIT_WARN}.get(self.status, EXIT_ERROR)

    def to_json(self) -> dict:
        d = {
            "config": self.config,
            "status": self.status,
            "results": self.results,
            "warnings": self.warnings,
            "artifacts": self.artifacts,
        }
        if self.wall_clock is not None:
            d["wall_clock"] = self.wall_clock
        return d


class _Context:
    def __init__(self, cfg: ExperimentConfig, out: Path, threads: int):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.report = RunReport(cfg.echo())
        self.root = np.random.SeedSequence(cfg.seed)
        self._streams = iter(self.root.spawn(64))

    @property
    def p(self):
        return self.cfg.params

    def seed(self) -> np.random.SeedSequence:
        """Next child seed, in a fixed order per experiment kind."""
        return next(self._streams)

    def sampler(self, fmap: IntervalMap, **kw) -> OrbitSampler:
        return OrbitSampler(fmap, self.seed(), **kw)

    def path(self, name: str) -> Path:
        self.report.artifacts.append(name)
        return self.out / name

    def warn(self, msg: str) -> None:
        log.warning(msg)
        self.report.warnings.append(msg)

    def check(self, ok: bool, what: str) -> None:
        """Record a threshold verdict; failing thresholds downgrade to warn."""
        self.report.results.setdefault("checks", {})[what] = bool(ok)
        if not ok:
            self.warn(f"threshold not met: {what}")


def _jsonable(v: Any):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _dump_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _pool_map(fn: Callable, units: list, threads: int) -> list:
    """Run independent work units; output order is the unit order regardless of pool size."""
    if threads <= 1 or len(units) <= 1:
        return [fn(*u) for u in units]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=min(threads, len(units)), mp_context=ctx) as ex:
        return list(ex.map(_star, [(fn, u) for u in units]))


def _star(job):
    fn, args = job
    return fn(*args)


# -- worker units (module level so they pickle) ---------------------------------------


def _unit_returns(family, params, seed, targets, N, horizon):
    fmap = build_map(family, params)
    return st.return_stats_many(fmap, OrbitSampler(fmap, seed), targets, N, horizon)


def _unit_ow(family, params, seed, n, N, horizon):
    fmap = build_map(family, params)
    return st.first_returns_to_cylinders(fmap, OrbitSampler(fmap, seed), n, N, horizon)


def _split(N: int, k: int) -> list[int]:
    return [N // k + (1 if i < N % k else 0) for i in range(k)]


def _sample_centers(ctx: _Context, fmap: IntervalMap, n: int) -> list[float]:
    s = ctx.sampler(fmap)
    out = []
    while len(out) < n:
        for z in s.sample(4 * n):
            if st.is_periodic(fmap, float(z)) is None:
                out.append(float(z))
                if len(out) == n:
                    break
    return out


# -- experiment kinds ---------------------------------------------------------------


def run_tower(ctx: _Context, fmap: IntervalMap):
    p = ctx.p
    g = hofbauer.build_tower(fmap, p.max_level, p.max_domains, p.tol)
    ctx.path("tower.dot").write_text(g.to_dot())
    defects = g.markov_defects()
    worst = max((d[3] for d in defects), default=0.0)
    r = ctx.report.results
    r.update(
        n_domains=g.n_domains,
        n_edges=len(g.edges),
        truncated=g.truncated,
        max_level_reached=g.max_level_reached,
        markov_defects=len(defects),
        worst_markov_error=worst,
        domains=[[d.id, d.left, d.right, d.level] for d in g.domains],
    )
    if g.truncated:
        ctx.warn(f"tower truncated at level {g.max_level_reached} with {g.frontier_size} unexpanded domains")
    ctx.check(all(d[3] <= p.markov_tol for d in defects), "markov edge property")
    if p.expected_domains is not None:
        ctx.check(g.n_domains == p.expected_domains, f"domain count == {p.expected_domains}")
    if p.lift_k:
        edges = np.linspace(*fmap.domain, p.hist_bins + 1)
        if fmap.density is not None:
            base = np.diff(fmap.density.cdf(edges))
            base = base / base.sum()
            r["base_histogram"] = "analytic density"
        else:
            xs = ctx.sampler(fmap).sample(p.hist_samples)
            base = np.histogram(xs, edges)[0] / p.hist_samples
            r["base_histogram"] = f"{p.hist_samples} samples"
        max_bin = 1.0 / p.hist_bins
        lm = hofbauer.lift_measure(g, edges, base, p.lift_k, max_bin=max_bin)
        hofbauer.write_measure_csv(ctx.path("measure.csv"), lm)
        proj = lm.project(edges) / max(lm.total_mass, 1e-300)
        l1 = float(np.abs(proj - base).sum())
        tol = (edges[1] - edges[0]) + max_bin
        r.update(lift_k=p.lift_k, retained=lm.total_mass, lost=lm.lost, projection_l1=l1, binning_tolerance=tol)
        if lm.status != "ok":
            ctx.warn(f"lifted measure status {lm.status}: lost mass {lm.lost:.3g}")
        ctx.check(lm.total_mass >= p.min_retained, f"retained mass >= {p.min_retained}")
        ctx.check(l1 <= tol, "projection within binning tolerance")


def run_rts(ctx: _Context, fmap: IntervalMap):
    p = ctx.p
    if p.center is not None:
        centers = [p.center]
        per = st.is_periodic(fmap, p.center)
        if per is not None:
            ctx.warn(f"center {p.center!r} is periodic with period {per}")
        ctx.report.results["center_period"] = per
    else:
        centers = _sample_centers(ctx, fmap, p.n_centers)
    targets = []
    for z in centers:
        for n in p.levels:
            c = st.cylinder_target(fmap, z, n)
            if p.target in ("cylinder", "both"):
                targets.append(c)
            if p.target in ("ball", "both"):
                targets.append(st.ball_target(fmap, z, (c.right - c.left) * 2.0**p.radius_exponent))
    shards = [targets[i :: p.shards] for i in range(p.shards)]
    units = [
        (fmap.family, fmap.params, ctx.seed(), sh, p.N, p.horizon) for sh in shards if sh
    ]
    parts = _pool_map(_unit_returns, units, ctx.threads)
    by_target = {}
    for sh, res in zip([s for s in shards if s], parts):
        for t, e in zip(sh, res):
            by_target[id(t)] = e
    emps = [by_target[id(t)] for t in targets]
    rows = []
    for i, e in enumerate(emps):
        name = "rts.csv" if len(emps) == 1 else f"rts_{i:03d}.csv"
        st.write_rts_csv(ctx.path(name), e)
        for w in e.warnings:
            ctx.warn(f"{e.target.label}: {w}")
        rows.append([i, e.target.kind, e.target.center, e.target.scale, e.target.left, e.target.right,
                     e.mu, e.mu_occupation, e.N, e.censored, e.ks(), e.kac_mean])
    with open(ctx.path("targets.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "kind", "center", "scale", "left", "right", "mu", "mu_occupation", "N",
                    "censored", "ks", "kac_mean"])
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    ks = [r[10] for r in rows]
    kac = [r[11] for r in rows]
    ctx.report.results.update(n_targets=len(rows), centers=centers, max_ks=max(ks), ks=ks,
                              kac_min=min(kac), kac_max=max(kac))
    ctx.check(max(ks) < p.ks, f"KS < {p.ks}")
    ctx.check(p.kac_low <= min(kac) and max(kac) <= p.kac_high, f"Kac mean in [{p.kac_low}, {p.kac_high}]")


def _ow_returns(ctx, fmap, n, N, horizon, shards):
    units = [(fmap.family, fmap.params, ctx.seed(), n, k, horizon) for k in _split(N, shards) if k]
    return np.concatenate(_pool_map(_unit_ow, units, ctx.threads))


def run_ow(ctx: _Context, fmap: IntervalMap):
    p = ctx.p
    ref = p.reference if p.reference is not None else fmap.oracles.get("entropy")
    rows = []
    for n in p.levels:
        r = _ow_returns(ctx, fmap, n, p.N, p.horizon, p.shards)
        ok = r > 0
        lr = np.log(r[ok].astype(float)) / n
        cf = 1.0 - ok.mean()
        rows.append((n, float(lr.mean()), float(lr.std(ddof=1) / math.sqrt(len(lr))), float(cf)))
        if cf > 0.05:
            ctx.warn(f"n={n}: censored fraction {cf:.3g}")
    with open(ctx.path("ow.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "mean", "stderr", "censored_fraction"])
        for n, m, se, cf in rows:
            w.writerow([n, repr(m), repr(se), repr(cf)])
    ctx.report.results.update(levels=[r[0] for r in rows], means=[r[1] for r in rows], reference=ref)
    if ref is not None:
        rel = [abs(r[1] - ref) / ref for r in rows]
        ctx.report.results["relative_error"] = rel
        ctx.check(max(rel) <= p.rel_tol, f"within {p.rel_tol:.0%} of the entropy")


def run_gibbs(ctx: _Context, fmap: IntervalMap):
    p = ctx.p
    pts = p.points if p.points is not None else [float(x) for x in ctx.sampler(fmap).sample(p.n_points)]
    ns = range(1, p.n_max + 1)
    n0s, devs = [], []
    exact = fmap.density is not None and fmap.density.name == "lebesgue"
    for i, x in enumerate(pts):
        tr = st.gibbs_trace(fmap, x, ns, p.gamma, p.gamma_prime)
        st.write_gibbs_csv(ctx.path("gibbs.csv" if len(pts) == 1 else f"gibbs_{i:03d}.csv"), tr)
        n0s.append(tr.n0)
        if exact:
            devs.append(float(np.max(np.abs(tr.g - 1.0))))
    ctx.report.results.update(points=pts, n0=n0s)
    ctx.check(all(n is not None for n in n0s), "envelope holds from n0 to n_max at every point")
    if exact:
        ctx.report.results["max_abs_g_minus_1"] = max(devs)
        ctx.check(max(devs) <= p.exact_tol, f"g_n = 1 within {p.exact_tol:g}")


def run_fluct(ctx: _Context, fmap: IntervalMap):
    p = ctx.p
    h = p.h if p.h is not None else fmap.oracles.get("entropy")
    if p.sigma is not None:
        sigma = p.sigma
    elif "sigma2" in fmap.oracles:
        sigma = math.sqrt(max(fmap.oracles["sigma2"], 0.0))
    else:
        raise IntervalRTSError("fluct needs h and sigma (no closed form registered for this map)")
    if h is None:
        raise IntervalRTSError("fluct needs h (no closed form registered for this map)")
    if not sigma > 0:
        raise EstimationError(f"σ = {sigma}: log|Df| is cohomologous to a constant, the normal limit is degenerate")
    r = _ow_returns(ctx, fmap, p.n, p.N, p.horizon, p.shards)
    ok = r > 0
    v = st.fluctuation_values(np.log(r[ok].astype(float)), p.n, h, sigma)
    ks = st.ks_distance(v, norm.cdf)
    with open(ctx.path("fluct.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value"])
        for x in v:
            w.writerow([repr(float(x))])
    summary = {"n": p.n, "h": h, "sigma": sigma, "ks": ks, "N": int(ok.sum())}
    _dump_json(ctx.path("fluct.json"), summary)
    ctx.report.results.update(summary, censored=int((~ok).sum()))
    ctx.check(ks < p.ks, f"KS to N(0,1) < {p.ks}")


def _target_interval(fmap, p):
    if p.Y is not None:
        return tuple(p.Y)
    return cylinder_from_symbols(fmap, p.word).interval


def run_density(ctx: _Context, fmap: IntervalMap):
    p = ctx.p
    Y = _target_interval(fmap, p)
    nb = inducing.scaled_neighbourhood(Y, p.delta, fmap.domain)
    scheme = inducing.build_inducing_scheme(fmap, nb, p.depth)
    inducing.write_scheme_csv(ctx.path("scheme.csv"), scheme)
    for w in scheme.warnings:
        ctx.warn(w)
    sys = transfer.RychlikSystem.from_scheme(scheme)
    rep = transfer.check_rychlik(sys)
    op = transfer.ulam_operator(sys, p.n_bins)
    est = transfer.invariant_density(op, p.tol)
    transfer.write_density_csv(ctx.path("density.csv"), est)
    r = ctx.report.results
    r.update(Y=list(Y), branches=len(scheme.branches), uncovered=scheme.uncovered, lambda1=est.lambda1,
             residual=est.residual, iterations=est.iterations, bin_width=est.h,
             rychlik={"passed": rep.passed, "sup_phi": rep.sup_phi, "inf_abs_dF": rep.inf_abs_dF,
                      "var_exp_phi": rep.var_exp_phi, "unresolved": rep.unresolved})
    ctx.check(rep.passed, "Rychlik conditions")
    if fmap.density is not None:
        l1 = est.l1_to(fmap.density.cdf)
        r["l1_to_density"] = l1
        ctx.check(l1 <= p.l1_bins * est.h, f"L1 to analytic density <= {p.l1_bins:g} bin widths")


def _closed_form_pressure(fmap: IntervalMap):
    slopes = [b.slope for b in fmap.branches]
    if any(s is None for s in slopes):
        return None
    if any(tuple(b.image) != tuple(fmap.domain) for b in fmap.branches):
        return None
    return lambda d: math.log(math.fsum(abs(s) ** (-d) for s in slopes))


def run_pressure(ctx: _Context, fmap: IntervalMap):
    p = ctx.p
    rows = transfer.pressure_sweep(lambda d: transfer.RychlikSystem.from_map(fmap, delta=d), p.deltas,
                                   n_bins=p.n_bins, tol=p.tol)
    transfer.write_pressure_csv(ctx.path("pressure.csv"), rows)
    ref = _closed_form_pressure(fmap)
    r = ctx.report.results
    r["pressure"] = {repr(e.delta): e.pressure for e in rows}
    if ref is not None:
        err = max(abs(e.pressure - ref(e.delta)) for e in rows)
        r["max_abs_error"] = err
        ctx.check(err <= p.abs_tol, f"pressure within {p.abs_tol:g} of the closed form")
    one = [e for e in rows if e.delta == 1.0]
    if one:
        r["lambda_at_delta_1"] = math.exp(one[0].pressure)


def run_kac(ctx: _Context, fmap: IntervalMap):
    p = ctx.p
    res = inducing.kac_check(fmap, ctx.sampler(fmap), p.Y, p.N)
    d = {"Y": p.Y, "N": p.N, "mu_hat": res.mu_hat, "mean_return": res.mean_return, "product": res.product}
    _dump_json(ctx.path("kac.json"), d)
    ctx.report.results.update(d)
    ctx.check(p.low <= res.product <= p.high, f"Kac product in [{p.low}, {p.high}]")


def run_diag(ctx: _Context, fmap: IntervalMap):
    p = ctx.p
    r = ctx.report.results
    r["lyapunov"] = lyapunov(fmap, ctx.sampler(fmap), p.lyapunov_N)
    growth = st.growth_diagnostic(fmap, p.n_max)
    st.write_growth_json(ctx.path("growth.json"), growth)
    r["growth"] = [{"c": g.critical_point, "alpha": g.alpha, "beta": g.beta, "non_growth": g.non_growth}
                   for g in growth]
    for g in growth:
        if g.non_growth:
            ctx.warn(f"no derivative growth along the orbit of c={g.critical_point!r}")
    l2 = st.l2_check(fmap, ctx.sampler(fmap), p.l2_N)
    r["l2"] = {"N": l2.Ns, "estimates": l2.estimates, "diverging": l2.diverging}
    ctx.check(not l2.diverging, "L2 estimate stable under doubling N")
    ref = fmap.oracles.get("log_deriv_second_moment")
    if ref is not None:
        rel = abs(l2.estimates[-1] - ref) / ref
        r["l2"]["relative_error"] = rel
        ctx.check(rel <= p.l2_rel_tol, f"L2 within {p.l2_rel_tol:.0%} of the closed form")
    s2 = st.variance_sigma2(fmap, ctx.sampler(fmap), p.sigma2_N, p.max_lag)
    r["sigma2"] = s2.estimate
    r["sigma2_negative"] = s2.negative
    r["sigma2_trajectory"] = s2.trajectory[:: max(1, p.max_lag // 20)]
    _dump_json(ctx.path("diag.json"), r)


def run_inducing(ctx: _Context, fmap: IntervalMap):
    p = ctx.p
    nb = inducing.scaled_neighbourhood(p.Y, p.delta, fmap.domain)
    scheme = inducing.build_inducing_scheme(fmap, nb, p.depth, p.uncovered)
    inducing.write_scheme_csv(ctx.path("scheme.csv"), scheme)
    for w in scheme.warnings:
        ctx.warn(w)
    s = ctx.sampler(fmap)
    xs = []
    while len(xs) < p.n_points:
        x = s.orbit(1 << 16)
        xs.extend(x[(x >= nb.Y[0]) & (x <= nb.Y[1])][: p.n_points - len(xs)].tolist())
    recs = inducing.return_records(fmap, nb, xs, p.horizon)
    inducing.write_returns_csv(ctx.path("returns.csv"), recs)
    r = ctx.report.results
    exceeded = sum(1 for q in recs if q.tau == hofbauer.EXCEEDED)
    r.update(branches=len(scheme.branches), uncovered=scheme.uncovered, scheme_status=scheme.status,
             points=len(recs), exceeded=exceeded,
             first_return_extendible=sum(1 for q in recs if q.extendible) / len(recs))
    if exceeded:
        ctx.warn(f"{exceeded} points without an extendible return within {p.horizon} steps")
    ctx.check(scheme.uncovered <= p.uncovered, f"uncovered mass <= {p.uncovered:g}")
    if p.compare_tower:
        g = hofbauer.build_tower(fmap, p.max_level)
        tgt = hofbauer.lifted_target(g, tuple(nb.Y), p.delta)
        mism = 0
        for q in recs:
            t = hofbauer.tower_first_return(g, tgt, g.lift(q.x), p.horizon)
            mism += t != q.tau
        r.update(tower_domains=g.n_domains, target_domains=sorted(tgt), tower_mismatches=mism)
        ctx.check(mism == 0, "tower first return equals extendible return")


RUNNERS = {
    "tower": run_tower,
    "rts": run_rts,
    "ow": run_ow,
    "gibbs": run_gibbs,
    "fluct": run_fluct,
    "density": run_density,
    "pressure": run_pressure,
    "kac": run_kac,
    "diag": run_diag,
    "inducing": run_inducing,
}


def run(cfg: ExperimentConfig, out: Optional[Path] = None, threads: int = 1, strict_repro: bool = False) -> RunReport:
    """Execute one experiment and write its outputs plus summary.json."""
    out = Path(out if out is not None else (cfg.out or f"runs/{cfg.kind}"))
    out.mkdir(parents=True, exist_ok=True)
    ctx = _Context(cfg, out, max(1, int(threads)))
    t0 = time.perf_counter()
    try:
        fmap = build_map(cfg.map.family, cfg.map.params)
        RUNNERS[cfg.kind](ctx, fmap)
        failed = [k for k, v in ctx.report.results.get("checks", {}).items() if not v]
        ctx.report.status = "warn" if failed or ctx.report.warnings else "pass"
    except IntervalRTSError as exc:
        ctx.report.status = "error"
        ctx.report.results["error"] = f"{type(exc).__name__}: {exc}"
    if not strict_repro:
        ctx.report.wall_clock = time.perf_counter() - t0
    ctx.report.artifacts.append("summary.json")
    _dump_json(out / "summary.json", ctx.report.to_json())
    return ctx.report


__all__ = ["RunReport", "run", "RUNNERS", "EXIT_PASS", "EXIT_WARN", "EXIT_ERROR"]
