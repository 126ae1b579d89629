"""Ornstein-Weiss entropy estimates, log-return fluctuations, σ² and L² checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm

from .. import _kernels as K
from ..errors import CriticalOrbitError, EstimationError
from ..maps.core import LOG_FLOOR, IntervalMap
from ..maps.partition import cylinder_from_orbit
from ..maps.sampler import OrbitSampler
from .returns import ks_distance

BUFFER = 1 << 20


class _Stream:
    """Sliding window over an orbit stream with forward first-hit search."""

    def __init__(self, sampler: OrbitSampler, block: int = BUFFER):
        self.sampler = sampler
        self.block = block
        self.buf = sampler.orbit(block)
        self.pos = 0

    def ensure(self, k: int) -> None:
        """Make buf[pos : pos + k] available."""
        if self.pos + k <= len(self.buf):
            return
        tail = self.buf[self.pos :]
        more = max(self.block, k - len(tail))
        self.buf = np.concatenate((tail, self.sampler.orbit(more)))
        self.pos = 0

    def first_return(self, a: float, b: float, horizon: int) -> int:
        """Smallest r in [1, horizon] with buf[pos + r] in [a, b], else -1.

        Consumes the points searched.
        """
        done = 0  # steps already searched before the current pos
        while done < horizon:
            self.ensure(2)
            k = K.first_hit(self.buf, self.pos + 1, a, b)
            if k >= 0:
                r = done + (k - self.pos)
                self.pos = k
                return r if r <= horizon else -1
            done += len(self.buf) - 1 - self.pos
            self.pos = len(self.buf) - 1
        return -1

    def skip(self, k: int) -> None:
        self.ensure(k + 1)
        self.pos += k


@dataclass
class OWEstimate:
    n: int
    N: int
    estimate: float  # mean of (1/n) log r_n
    stderr: float
    log_returns: np.ndarray  # log r_n(x) for the uncensored samples
    censored: int
    status: str = "ok"
    warnings: list[str] = field(default_factory=list)


def first_returns_to_cylinders(
    fmap: IntervalMap, sampler: OrbitSampler, n: int, N: int, horizon: int = 10_000_000, gap: Optional[int] = None
):
    """r_n(x) = min{k ≥ 1 : f^k x ∈ Z_n[x]} for N points along one μ-typical orbit.

    The cylinder of x is read off the orbit itself (exact for coded
    samplers). Consecutive sample points are separated by the return
    excursion plus ``gap`` steps. Censored samples are reported as -1.
    """
    if n < 1 or N < 1:
        raise ValueError("n and N must be positive")
    gap = sampler.stride if gap is None else gap
    st = _Stream(sampler)
    out = np.empty(N, dtype=np.int64)
    for i in range(N):
        st.ensure(n + 1)
        Z = cylinder_from_orbit(fmap, st.buf[st.pos : st.pos + n], n)
        r = st.first_return(Z.left, Z.right, horizon)
        out[i] = r
        st.skip(gap)
    return out


def ow_entropy(
    fmap: IntervalMap, sampler: OrbitSampler, n: int, N: int, horizon: int = 10_000_000, censor_limit: float = 0.05
) -> OWEstimate:
    r = first_returns_to_cylinders(fmap, sampler, n, N, horizon)
    ok = r > 0
    cens = int(N - ok.sum())
    if ok.sum() < 2:
        raise EstimationError(f"only {int(ok.sum())} uncensored returns at n={n}")
    lr = np.log(r[ok].astype(float))
    warns = []
    if cens > censor_limit * N:
        warns.append(f"censored fraction {cens / N:.3g} exceeds {censor_limit}")
    return OWEstimate(
        n, N, float(lr.mean() / n), float(lr.std(ddof=1) / (n * math.sqrt(len(lr)))), lr, cens,
        "warn" if warns else "ok", warns,
    )


@dataclass
class FluctuationResult:
    n: int
    h: float
    sigma: float
    values: np.ndarray  # (log r_n − n h)/(σ √n)
    ks: float
    censored: int


def fluctuation_values(log_returns, n: int, h: float, sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise EstimationError("σ must be positive; σ = 0 means log|Df| is cohomologous to a constant")
    return (np.asarray(log_returns) - n * h) / (sigma * math.sqrt(n))


def fluctuation_test(
    fmap: IntervalMap, sampler: OrbitSampler, n: int, h: float, sigma: float, N: int, horizon: int = 10_000_000
) -> FluctuationResult:
    """KS distance of the normalised log-return times to the standard normal."""
    if not sigma > 0:
        raise EstimationError("σ must be positive; σ = 0 means log|Df| is cohomologous to a constant")
    est = ow_entropy(fmap, sampler, n, N, horizon)
    v = fluctuation_values(est.log_returns, n, h, sigma)
    return FluctuationResult(n, h, sigma, v, ks_distance(v, norm.cdf), est.censored)


# -- variance -----------------------------------------------------------------------


def _log_abs_deriv_vec(fmap: IntervalMap, xs: np.ndarray, max_guard_hits: int = 3) -> np.ndarray:
    if fmap.vector_deriv is not None:
        d = np.abs(fmap.vector_deriv(xs))
    else:
        d = np.abs(np.array([fmap._deriv_scalar(float(x), "left") for x in xs]))
    with np.errstate(divide="ignore"):
        out = np.log(d)
    bad = out < LOG_FLOOR
    if bad.sum() > max_guard_hits:
        raise CriticalOrbitError(f"orbit hit a critical point {int(bad.sum())} times")
    out[bad] = np.nan
    return out


@dataclass
class Sigma2Estimate:
    estimate: float
    lags: np.ndarray
    trajectory: np.ndarray  # partial sums C(0) + 2 Σ_{k≤L} C(k)
    negative: bool


def sigma2_from_series(y, max_lag: int = 200) -> Sigma2Estimate:
    """C(0) + 2 Σ_{k=1}^{L} C(k) from one stationary series, autocovariances via FFT.

    A constant series gives exactly 0.
    """
    y = np.asarray(y, dtype=float)
    y = y[np.isfinite(y)]
    lags = np.arange(max_lag + 1)
    if len(y) <= max_lag + 1:
        raise EstimationError(f"series of length {len(y)} is too short for max_lag={max_lag}")
    if np.ptp(y) == 0.0:
        return Sigma2Estimate(0.0, lags, np.zeros(max_lag + 1), False)
    y = y - y.mean()
    n = len(y)
    m = 1 << int(math.ceil(math.log2(2 * n)))
    F = np.fft.rfft(y, m)
    ac = np.fft.irfft(F * np.conj(F), m)[: max_lag + 1] / (n - lags)
    traj = ac[0] + 2.0 * np.concatenate(([0.0], np.cumsum(ac[1:])))
    est = float(traj[-1])
    return Sigma2Estimate(est, lags, traj, est < 0)


def variance_sigma2(
    fmap: IntervalMap,
    sampler: OrbitSampler,
    N: int = 1_000_000,
    max_lag: int = 200,
    observable: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Sigma2Estimate:
    """Asymptotic variance of Birkhoff sums of φ (default log|Df|) along one orbit."""
    x = sampler.orbit(N)
    y = observable(x) if observable is not None else _log_abs_deriv_vec(fmap, x)
    return sigma2_from_series(y, max_lag)


@dataclass
class L2Check:
    Ns: np.ndarray
    estimates: np.ndarray
    diverging: bool


def l2_check(fmap: IntervalMap, sampler: OrbitSampler, N: int = 10_000_000, doublings: int = 6) -> L2Check:
    """Running estimate of ∫ (log|Df|)² dμ at N/2^k, ..., N/2, N.

    ``diverging`` is set when the estimate keeps growing by more than 20%
    per doubling over the last three doublings.
    """
    Ns = (N // 2 ** np.arange(doublings, -1, -1)).astype(np.int64)
    total = 0.0
    seen = 0
    ests = []
    for target in Ns:
        k = int(target - seen)
        while k > 0:
            c = min(k, BUFFER)
            v = _log_abs_deriv_vec(fmap, sampler.sample(c))
            v = v[np.isfinite(v)]
            total += math.fsum(v * v)
            seen += c
            k -= c
        ests.append(total / seen)
    ests = np.array(ests)
    ratios = ests[1:] / ests[:-1]
    diverging = bool(len(ratios) >= 3 and np.all(ratios[-3:] > 1.2))
    return L2Check(Ns, ests, diverging)
