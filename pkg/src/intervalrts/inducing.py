"""First return maps, δ-extendible returns and inducing schemes."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import EstimationError, SchemeError
from .hofbauer import EXCEEDED
from .maps.core import IntervalMap
from .maps.partition import pull_back
from .maps.sampler import OrbitSampler

DEFAULT_HORIZON = 10_000_000
DEFAULT_DEPTH = 30
UNCOVERED_THRESHOLD = 1e-3


@dataclass(frozen=True)
class ScaledNeighbourhood:
    Y: tuple[float, float]
    delta: float
    Yp: tuple[float, float]

    @property
    def width(self) -> float:
        return self.Y[1] - self.Y[0]


def scaled_neighbourhood(Y: Sequence[float], delta: float, domain: Sequence[float] = (0.0, 1.0)) -> ScaledNeighbourhood:
    a, b = float(Y[0]), float(Y[1])
    if not b > a:
        raise SchemeError(f"Y must have positive length, got [{a}, {b}]")
    if not delta > 0:
        raise SchemeError(f"delta must be positive, got {delta}")
    m = delta * (b - a)
    yp = (a - m, b + m)
    if yp[0] < domain[0] or yp[1] > domain[1]:
        raise SchemeError(f"Y' = [{yp[0]}, {yp[1]}] leaves the domain {tuple(domain)}; shrink Y or delta")
    return ScaledNeighbourhood((a, b), float(delta), yp)


def _in(iv, x) -> bool:
    return iv[0] <= x <= iv[1]


def first_return_time(fmap: IntervalMap, Y: Sequence[float], x: float, horizon: int = DEFAULT_HORIZON) -> int:
    """Least i in [1, horizon] with f^i(x) in Y, else EXCEEDED."""
    if not _in(Y, x):
        raise ValueError(f"x={x} is not in Y={tuple(Y)}")
    f = fmap.eval_point
    for i in range(1, horizon + 1):
        x = f(x)
        if Y[0] <= x <= Y[1]:
            return i
    return EXCEEDED


@dataclass(frozen=True)
class ReturnRecord:
    x: float
    r: int
    tau: int
    extendible: bool  # the first return was already extendible

    def as_row(self):
        return [repr(self.x), self.r, self.tau, int(self.extendible)]


def lap_step(fmap: IntervalMap, x: float, M: tuple[float, float]):
    """One step of the lap-image recursion: (f(x), f(M ∩ cell of x))."""
    s = int(fmap.branch_of(x))
    br = fmap.branches[s]
    a, b = max(M[0], br.left), min(M[1], br.right)
    if not b > a and fmap.on_boundary(x) and s + 1 < fmap.n_branches:
        # x is the endpoint shared with the next cell, which is the one M actually meets
        br = fmap.branches[s + 1]
        a, b = max(M[0], br.left), min(M[1], br.right)
    return fmap.eval_point(x), br.image_of(a, b)


def extendible_return_time(
    fmap: IntervalMap,
    nbhd: ScaledNeighbourhood,
    x: float,
    horizon: int = DEFAULT_HORIZON,
    trace: bool = False,
):
    """First δ-extendible return of x to Y.

    M_i is the image under f^i of the maximal monotone branch of f^i
    containing x. Returns (ReturnRecord, trace) where trace lists
    (f^i(x), M_i) when requested.
    """
    Y, Yp = nbhd.Y, nbhd.Yp
    if not _in(Y, x):
        raise ValueError(f"x={x} is not in Y={Y}")
    x0 = x
    M = tuple(fmap.domain)
    r = EXCEEDED
    steps = [] if trace else None
    for i in range(1, horizon + 1):
        x, M = lap_step(fmap, x, M)
        if steps is not None:
            steps.append((x, M))
        if Y[0] <= x <= Y[1]:
            if r == EXCEEDED:
                r = i
            if M[0] <= Yp[0] and Yp[1] <= M[1]:
                return ReturnRecord(x0, r, i, r == i), steps
    return ReturnRecord(x0, r, EXCEEDED, False), steps


def return_records(fmap, nbhd, xs, horizon=DEFAULT_HORIZON) -> list[ReturnRecord]:
    return [extendible_return_time(fmap, nbhd, float(x), horizon)[0] for x in xs]


def write_returns_csv(path, records: Sequence[ReturnRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "r", "tau", "extendible"])
        for rec in records:
            w.writerow(rec.as_row())


# -- schemes --------------------------------------------------------------------


@dataclass(frozen=True)
class InducedBranch:
    left: float
    right: float
    width: float
    tau: int
    word: tuple[int, ...]
    onto: bool


@dataclass
class InducingScheme:
    map: IntervalMap
    Y: tuple[float, float]
    nbhd: Optional[ScaledNeighbourhood]
    branches: list[InducedBranch]
    depth: int
    uncovered: float  # μ_Y-mass (Lebesgue if no density) of points with τ > depth
    status: str = "ok"
    warnings: list[str] = field(default_factory=list)

    @property
    def covered(self) -> float:
        return 1.0 - self.uncovered

    def locate(self, x: float) -> Optional[InducedBranch]:
        lefts = np.array([b.left for b in self.branches])
        i = int(np.searchsorted(lefts, x, side="right")) - 1
        if i >= 0 and self.branches[i].left <= x <= self.branches[i].right:
            return self.branches[i]
        return None

    def evaluate(self, i: int, y):
        """F on branch i, i.e. f^τ following the branch word."""
        y = np.asarray(y, dtype=float)
        for s in self.branches[i].word:
            y = self.map.branches[s].forward(y)
        return y

    def inverse(self, i: int, y):
        y = np.asarray(y, dtype=float)
        for s in reversed(self.branches[i].word):
            y = np.asarray(self.map.branches[s].inverse(y), dtype=float)
        return y

    def log_abs_deriv(self, i: int, y):
        """log|DF| on branch i by the chain rule along the word."""
        y = np.asarray(y, dtype=float)
        acc = np.zeros_like(y)
        with np.errstate(divide="ignore"):
            for s in self.branches[i].word:
                br = self.map.branches[s]
                acc = acc + np.log(np.abs(br.derivative(y)))
                y = br.forward(y)
        return acc


def _pull_word(fmap, word, a, b):
    w = b - a
    for s in reversed(word):
        a, b, w = pull_back(fmap, s, a, b, w)
    return a, b, w


def _measure_fn(fmap, Y):
    d = fmap.density
    if d is not None:
        total = d.measure(*Y)
        if total > 0:
            return lambda a, b, w: d.measure(a, b) / total if b > a else w * float(d.pdf(a)) / total
    return lambda a, b, w: w / (Y[1] - Y[0])


def _explore(fmap, Y, Yp, depth, max_pieces, prune):
    """Image-tracking exploration shared by both scheme builders.

    Each live piece is (word, K, M): the unreturned points whose f^i-image
    is K, and the lap image M of f^i on them. Pieces are split by the
    branch cells, recorded when the return qualifies, and the rest carried.
    """
    lo, hi = fmap.domain
    mass = _measure_fn(fmap, Y)
    live = [((), Y[0], Y[1], lo, hi)]
    branches = []
    dropped = 0.0
    warnings = []
    for i in range(1, depth + 1):
        nxt = []
        for word, ka, kb, ma, mb in live:
            for s, br in enumerate(fmap.branches):
                a, b = max(ka, br.left), min(kb, br.right)
                if not b > a:
                    continue
                Ka, Kb = br.image_of(a, b)
                Ma, Mb = br.image_of(max(ma, br.left), min(mb, br.right))
                w = word + (s,)
                ya, yb = max(Ka, Y[0]), min(Kb, Y[1])
                hit = yb > ya
                ok = hit and (Yp is None or (Ma <= Yp[0] and Yp[1] <= Mb))
                if ok:
                    pa, pb, pw = _pull_word(fmap, w, ya, yb)
                    onto = ya == Y[0] and yb == Y[1]
                    branches.append(InducedBranch(pa, pb, pw, i, w, onto))
                    rest = []
                    if Ka < Y[0]:
                        rest.append((Ka, min(Kb, Y[0])))
                    if Kb > Y[1]:
                        rest.append((max(Ka, Y[1]), Kb))
                else:
                    rest = [(Ka, Kb)]
                for ra, rb in rest:
                    if not rb > ra:
                        continue
                    if prune > 0:
                        pa, pb, pw = _pull_word(fmap, w, ra, rb)
                        m = mass(pa, pb, pw)
                        if m < prune:
                            dropped += m
                            continue
                    nxt.append((w, ra, rb, Ma, Mb))
        live = nxt
        if len(live) > max_pieces:
            warnings.append(f"exploration stopped at time {i}: {len(live)} live pieces > {max_pieces}")
            break
    uncovered = dropped
    for word, ka, kb, _, _ in live:
        pa, pb, pw = _pull_word(fmap, word, ka, kb)
        uncovered += mass(pa, pb, pw)
    branches.sort(key=lambda b: (b.left, b.right))
    return branches, uncovered, warnings


def build_inducing_scheme(
    fmap: IntervalMap,
    nbhd: ScaledNeighbourhood,
    depth: int = DEFAULT_DEPTH,
    threshold: float = UNCOVERED_THRESHOLD,
    max_pieces: int = 200_000,
    prune: float = 1e-15,
) -> InducingScheme:
    """Branches of the first δ-extendible return map to Y, up to time ``depth``."""
    if depth < 1:
        raise SchemeError("depth must be >= 1")
    branches, unc, warns = _explore(fmap, nbhd.Y, nbhd.Yp, depth, max_pieces, prune)
    return _finish(fmap, nbhd.Y, nbhd, branches, depth, unc, warns, threshold)


def build_first_return_scheme(
    fmap: IntervalMap,
    Y: Sequence[float],
    depth: int = DEFAULT_DEPTH,
    threshold: float = UNCOVERED_THRESHOLD,
    max_pieces: int = 200_000,
    prune: float = 1e-15,
) -> InducingScheme:
    """Branches of the plain first return map to Y (no extendibility requirement)."""
    if depth < 1:
        raise SchemeError("depth must be >= 1")
    Y = (float(Y[0]), float(Y[1]))
    if not Y[1] > Y[0]:
        raise SchemeError("Y must have positive length")
    branches, unc, warns = _explore(fmap, Y, None, depth, max_pieces, prune)
    return _finish(fmap, Y, None, branches, depth, unc, warns, threshold)


def _finish(fmap, Y, nbhd, branches, depth, unc, warns, threshold):
    status = "ok"
    if unc > threshold:
        status = "warn"
        warns.append(f"uncovered mass {unc:.3g} exceeds threshold {threshold:g}")
    if warns:
        status = "warn"
    return InducingScheme(fmap, tuple(Y), nbhd, branches, depth, unc, status, warns)


def write_scheme_csv(path, scheme: InducingScheme) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["branch_index", "left", "right", "tau"])
        for i, b in enumerate(scheme.branches):
            w.writerow([i, repr(b.left), repr(b.right), b.tau])


def project_induced_measure(
    scheme: InducingScheme,
    weights: Sequence[float],
    A: Sequence[float],
    cdf: Optional[Callable] = None,
) -> float:
    """μ(A) = (1/Λ) Σ_i Σ_{k<τ_i} μ_F(f^{-k}(A) ∩ Y_i).

    Inside each Y_i, μ_F is spread proportionally to Lebesgue measure, or
    to ``cdf`` when given.
    """
    fmap = scheme.map
    wts = np.asarray(weights, dtype=float)
    if len(wts) != len(scheme.branches):
        raise ValueError("one weight per branch is required")
    if np.any(wts < 0):
        raise ValueError("weights must be nonnegative")
    Lam = float(sum(b.tau * w for b, w in zip(scheme.branches, wts)))
    if not Lam > 0:
        raise SchemeError("Λ = Σ τ_i μ_F(Y_i) is zero")
    A0, A1 = float(A[0]), float(A[1])
    total = 0.0
    for br, wt in zip(scheme.branches, wts):
        if wt == 0:
            continue
        ka, kb, kw = br.left, br.right, br.width
        word = br.word
        for k in range(br.tau):
            # K = f^k(Y_i); A ∩ K pulled back to Y_i
            a, b = max(ka, A0), min(kb, A1)
            if b > a:
                if a == ka and b == kb:
                    frac = 1.0
                else:
                    pa, pb, pw = _pull_word(fmap, word[:k], a, b)
                    if cdf is not None:
                        den = cdf(br.right) - cdf(br.left)
                        frac = (cdf(pb) - cdf(pa)) / den if den > 0 else 0.0
                    else:
                        frac = pw / br.width if br.width > 0 else 0.0
                total += wt * float(frac)
            s = word[k]
            m = fmap.branches[s]
            ka, kb = m.image_of(max(ka, m.left), min(kb, m.right))
    return total / Lam


# -- Kac and extendibility statistics ---------------------------------------------


@dataclass(frozen=True)
class KacResult:
    mu_hat: float
    mean_return: float
    product: float
    n_occupation: int
    n_returns: int


def _visit_gaps(sampler: OrbitSampler, Y, n_returns: int, chunk: int = 1 << 20) -> np.ndarray:
    gaps = np.empty(n_returns, dtype=np.int64)
    filled = 0
    last = -1
    t0 = 0
    while filled < n_returns:
        x = sampler.orbit(chunk)
        idx = np.nonzero((x >= Y[0]) & (x <= Y[1]))[0] + t0
        if len(idx):
            seq = idx if last < 0 else np.concatenate(([last], idx))
            d = np.diff(seq)
            take = min(len(d), n_returns - filled)
            gaps[filled : filled + take] = d[:take]
            filled += take
            last = int(idx[-1])
        t0 += chunk
        if t0 > 1e11:
            raise EstimationError("no returns observed; Y too small")
    return gaps


def occupation_fraction(sampler: OrbitSampler, Y, N: int, chunk: int = 1 << 20) -> tuple[float, int]:
    hits = 0
    for x in sampler.chunks(N, chunk):
        hits += int(np.count_nonzero((x >= Y[0]) & (x <= Y[1])))
    return hits / N, hits


def kac_check(fmap: IntervalMap, sampler: OrbitSampler, Y: Sequence[float], N: int) -> KacResult:
    """E_{μ_Y}[r_Y] · μ(Y) from two independent child streams.

    μ(Y) is the occupation fraction of an orbit of length N; the mean
    return time averages N consecutive return gaps from the other stream.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    Y = (float(Y[0]), float(Y[1]))
    occ, ret = sampler.spawn(2)
    mu, hits = occupation_fraction(occ, Y, N)
    if hits == 0:
        raise EstimationError(f"no visits to Y={Y} in {N} steps")
    gaps = _visit_gaps(ret, Y, N)
    mean_r = float(gaps.mean())
    return KacResult(mu, mean_r, mu * mean_r, N, N)


def extendibility_profile(
    fmap: IntervalMap,
    sampler: OrbitSampler,
    z: float,
    levels: Sequence[int],
    delta: float,
    n_points: int,
    horizon: int = 1_000_000,
) -> list[tuple[int, float, int]]:
    """Fraction of points of J_n = Z_n[z] whose first return is not δ-extendible.

    Returns (n, fraction, points used) per level. Points are orbit visits
    to J_n, i.e. draws from μ conditioned on J_n.
    """
    from .maps.partition import cylinder_of

    out = []
    for n in levels:
        J = cylinder_of(fmap, z, n)
        nb = scaled_neighbourhood(J.interval, delta, fmap.domain)
        xs = []
        while len(xs) < n_points:
            x = sampler.orbit(1 << 16)
            sel = x[(x >= J.left) & (x <= J.right)]
            xs.extend(sel[: n_points - len(xs)].tolist())
        recs = return_records(fmap, nb, xs, horizon)
        bad = sum(1 for r in recs if not r.extendible)
        out.append((int(n), bad / len(recs), len(recs)))
    return out
