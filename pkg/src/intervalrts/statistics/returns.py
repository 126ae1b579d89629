"""Return-time statistics: targets, empirical survival functions, KS distances."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .. import _kernels as K
from ..errors import EstimationError
from ..maps.core import IntervalMap
from ..maps.partition import cylinder_of
from ..maps.sampler import OrbitSampler

PERIOD_MAX = 64
PERIOD_TOL = 1e-12
MIN_OCCUPATION_STEPS = 10_000_000


def exponential_cdf(t):
    return -np.expm1(-np.asarray(t, dtype=float))


@dataclass(frozen=True)
class Target:
    """A set U = ball(z, α) or cylinder(z, n), stored as a closed interval."""

    kind: str
    center: float
    scale: float  # level n for cylinders, radius α for balls
    left: float
    right: float
    mu_exact: Optional[float] = None

    @property
    def interval(self) -> tuple[float, float]:
        return (self.left, self.right)

    @property
    def label(self) -> str:
        if self.kind == "cylinder":
            return f"cylinder(z={self.center!r}, n={int(self.scale)})"
        return f"ball(z={self.center!r}, r={self.scale!r})"


def _exact_measure(fmap: IntervalMap, a: float, b: float, width: Optional[float] = None) -> Optional[float]:
    d = fmap.density
    if d is None:
        return None
    if d.name == "lebesgue" and width is not None:
        return float(width)
    return d.measure(a, b)


def cylinder_target(fmap: IntervalMap, z: float, n: int) -> Target:
    Z = cylinder_of(fmap, z, n)
    return Target("cylinder", float(z), float(n), Z.left, Z.right, _exact_measure(fmap, Z.left, Z.right, Z.width))


def ball_target(fmap: IntervalMap, z: float, radius: float) -> Target:
    lo, hi = fmap.domain
    a, b = max(lo, z - radius), min(hi, z + radius)
    return Target("ball", float(z), float(radius), a, b, _exact_measure(fmap, a, b))


def is_periodic(fmap: IntervalMap, z: float, kmax: int = PERIOD_MAX, tol: float = PERIOD_TOL) -> Optional[int]:
    """Smallest k ≤ kmax with |f^k(z) − z| < tol, else None."""
    x = z
    for k in range(1, kmax + 1):
        x = fmap.eval_point(x)
        if abs(x - z) < tol:
            return k
    return None


@dataclass
class EmpiricalSurvival:
    target: Target
    mu: float
    mu_occupation: float
    scaled: np.ndarray  # sorted r·μ(U)
    censored: int
    steps: int
    status: str = "ok"
    warnings: list[str] = field(default_factory=list)

    @property
    def N(self) -> int:
        return len(self.scaled)

    @property
    def kac_mean(self) -> float:
        return float(self.scaled.mean())

    def survival(self, t) -> np.ndarray:
        """S(t) = fraction of scaled times strictly greater than t (right-continuous)."""
        t = np.asarray(t, dtype=float)
        return 1.0 - np.searchsorted(self.scaled, t, side="right") / self.N

    def ks(self, cdf: Callable = exponential_cdf) -> float:
        return ks_distance(self.scaled, cdf)


def ks_distance(sample, cdf: Callable = exponential_cdf) -> float:
    """Exact sup_t |F_emp(t) − F(t)| for a continuous reference cdf.

    Ties (return times are integers) are handled by evaluating the
    empirical cdf just before and at each distinct value.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n == 0:
        raise EstimationError("empty sample")
    vals, first = np.unique(x, return_index=True)
    last = np.concatenate((first[1:], [n]))
    F = np.asarray(cdf(vals), dtype=float)
    before = first / n
    at = last / n
    return float(max(np.max(np.abs(F - before)), np.max(np.abs(at - F))))


def ks_two_sample(a, b) -> float:
    """sup_t |F_a(t) − F_b(t)| over the pooled jump points."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pts = np.union1d(a, b)
    Fa = np.searchsorted(a, pts, side="right") / len(a)
    Fb = np.searchsorted(b, pts, side="right") / len(b)
    return float(np.max(np.abs(Fa - Fb)))


def return_stats_many(
    fmap: IntervalMap,
    sampler: OrbitSampler,
    targets: Sequence[Target],
    N: int,
    horizon: int = 10_000_000,
    min_steps: int = MIN_OCCUPATION_STEPS,
    max_steps: int = 50_000_000_000,
    chunk: int = 1 << 22,
) -> list[EmpiricalSurvival]:
    """Collect N return gaps for every target from one shared orbit.

    Gaps between consecutive visits of a stationary orbit are distributed
    as r_U under μ_U. μ(U) uses the analytic density when the map has one
    and the occupation fraction of the same orbit otherwise; both are
    reported.
    """
    if N < 100:
        raise ValueError("N must be >= 100")
    m = len(targets)
    tl = np.array([t.left for t in targets])
    tr = np.array([t.right for t in targets])
    lo, hi = fmap.domain
    starts, ids, inv_bw = K.target_index(lo, hi, np.stack([tl, tr], axis=1))
    last = np.full(m, -1, dtype=np.int64)
    count = np.zeros(m, dtype=np.int64)
    visits = np.zeros(m, dtype=np.int64)
    gaps = np.zeros((m, N), dtype=np.int64)
    t0 = 0
    while t0 < max_steps:
        x = sampler.orbit(chunk)
        K.collect_returns(x, t0, lo, inv_bw, starts, ids, tl, tr, last, count, visits, gaps)
        t0 += chunk
        if t0 >= min_steps and np.all(count >= N):
            break
    out = []
    for j, t in enumerate(targets):
        if visits[j] == 0:
            raise EstimationError(f"no visits to {t.label} in {t0} steps")
        occ = visits[j] / t0
        mu = t.mu_exact if t.mu_exact is not None else occ
        g = gaps[j, : count[j]]
        cens = int(np.count_nonzero(g > horizon))
        g = g[g <= horizon]
        warns = []
        if count[j] < N:
            warns.append(f"only {count[j]} of {N} returns collected in {t0} steps")
        if cens > 0.01 * max(1, count[j]):
            warns.append(f"censored fraction {cens / count[j]:.3g} > 1%")
        if t.mu_exact is not None and abs(occ - t.mu_exact) > 5 * math.sqrt(t.mu_exact / t0) + 0.05 * t.mu_exact:
            warns.append(f"occupation {occ:.6g} disagrees with exact measure {t.mu_exact:.6g}")
        out.append(
            EmpiricalSurvival(t, float(mu), float(occ), np.sort(g * mu), cens, t0,
                              "warn" if warns else "ok", warns)
        )
    return out


def return_stats(fmap, sampler, target: Target, N: int, horizon: int = 10_000_000, **kw) -> EmpiricalSurvival:
    return return_stats_many(fmap, sampler, [target], N, horizon, **kw)[0]


def induced_return_comparison(
    fmap: IntervalMap, sampler: OrbitSampler, Y: Sequence[float], U: Sequence[float], N: int, chunk: int = 1 << 22
):
    """Scaled return times to U ⊂ Y under f and under the first return map to Y.

    Returns (full, induced, mu_U, mu_U_given_Y): full-system times are
    scaled by μ(U), induced times (counted in visits to Y) by μ_Y(U).
    Measures come from the occupation fractions of the same orbit.
    """
    ya, yb = float(Y[0]), float(Y[1])
    ua, ub = float(U[0]), float(U[1])
    if not (ya <= ua and ub <= yb):
        raise ValueError("U must lie inside Y")
    last_u = np.array([-1], dtype=np.int64)
    ycount = np.zeros(1, dtype=np.int64)
    last_y = np.zeros(1, dtype=np.int64)
    cnt = np.zeros(1, dtype=np.int64)
    full = np.zeros(N, dtype=np.int64)
    ind = np.zeros(N, dtype=np.int64)
    t0 = 0
    uvisits = 0
    while cnt[0] < N:
        x = sampler.orbit(chunk)
        before = ycount[0]
        K.induced_counts(x, t0, ya, yb, ua, ub, last_u, ycount, last_y, full, ind, cnt)
        uvisits += int(np.count_nonzero((x >= ua) & (x <= ub)))
        t0 += chunk
        if ycount[0] == before and t0 > 1e11:
            raise EstimationError("orbit never visits Y")
    mu_u = uvisits / t0
    mu_y = ycount[0] / t0
    return np.sort(full * mu_u), np.sort(ind * (mu_u / mu_y)), mu_u, mu_u / mu_y


def write_rts_csv(path, emp: EmpiricalSurvival, cdf: Callable = exponential_cdf, max_rows: int = 2000) -> None:
    """Columns t, empirical_survival, reference_survival on a grid of jump points."""
    vals = np.unique(emp.scaled)
    if len(vals) > max_rows:
        vals = vals[np.linspace(0, len(vals) - 1, max_rows).astype(int)]
    S = emp.survival(vals)
    G = 1.0 - np.asarray(cdf(vals))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "empirical_survival", "reference_survival"])
        w.writerow([repr(0.0), repr(1.0), repr(1.0)])
        for t, s, g in zip(vals, S, G):
            w.writerow([repr(float(t)), repr(float(s)), repr(float(g))])


# -- exact law for Bernoulli cylinders ----------------------------------------------


def _kmp_automaton(word: Sequence[int], k: int) -> np.ndarray:
    n = len(word)
    fail = [0] * (n + 1)
    q = 0
    for i in range(1, n):
        while q and word[i] != word[q]:
            q = fail[q]
        if word[i] == word[q]:
            q += 1
        fail[i + 1] = q
    T = np.zeros((n + 1, k), dtype=np.int64)
    for s in range(n + 1):
        for b in range(k):
            st = fail[s] if s == n else s
            while st and word[st] != b:
                st = fail[st]
            if word[st] == b:
                st += 1
            T[s, b] = st
    return T


def bernoulli_cylinder_survival(word: Sequence[int], probs: Sequence[float], t_max: float = 25.0):
    """Exact P_{μ_U}(r_U·μ(U) > t) for the cylinder U = [word] of an i.i.d. shift.

    A pattern-matching automaton tracks the longest suffix of the symbols
    read so far that is a prefix of the word; starting in the full-match
    state, r_U is the first time the full-match state is re-entered.
    Returns (t, S) at the lattice points t = k·μ(U).
    """
    p = np.asarray(probs, dtype=float)
    n = len(word)
    mu = float(np.prod(p[list(word)]))
    T = _kmp_automaton(word, len(p))
    kmax = int(math.ceil(t_max / mu))
    M = np.zeros((n + 1, n + 1))
    for s in range(n + 1):
        for b in range(len(p)):
            M[T[s, b], s] += p[b]
    v = np.zeros(n + 1)
    v[n] = 1.0
    S = np.empty(kmax + 1)
    S[0] = 1.0
    for k in range(1, kmax + 1):
        v = M @ v
        S[k] = S[k - 1] - v[n]
        v[n] = 0.0
    return np.arange(kmax + 1) * mu, S


def bernoulli_cylinder_ks(word: Sequence[int], probs: Sequence[float], t_max: float = 25.0) -> float:
    """Exact KS distance between the cylinder's scaled return law and e^{-t}."""
    t, S = bernoulli_cylinder_survival(word, probs, t_max)
    G = np.exp(-t)
    # S is constant on [t_k, t_{k+1}); compare at both ends of each step
    return float(max(np.max(np.abs(S - G)), np.max(np.abs(S[:-1] - G[1:])), S[-1]))
