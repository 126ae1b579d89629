"""Weak Gibbs envelope traces along one orbit."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import EstimationError
from ..maps.core import IntervalMap
from ..maps.partition import cylinder_of


@dataclass
class GibbsTrace:
    """Per-level quantities for Z_n[x]:

    g_n = μ(Z_n[x]) · |Df^n(x)|, image_len = |f^n(Z_n[x])|, and three
    envelope verdicts:

    * lower: n^{-2γ} ≤ image_len / n^γ
    * mid:   image_len / n^γ ≤ g_n
    * upper: g_n ≤ n^{γ'}

    ``n0`` is the first level from which all three hold up to the end of
    the trace (None if the last level fails).
    """

    x: float
    gamma: float
    gamma_prime: float
    ns: np.ndarray
    g: np.ndarray
    image_len: np.ndarray
    lower_ok: np.ndarray
    mid_ok: np.ndarray
    upper_ok: np.ndarray
    n0: Optional[int]

    @property
    def all_ok(self) -> np.ndarray:
        return self.lower_ok & self.mid_ok & self.upper_ok


def _measure(fmap: IntervalMap, cell) -> float:
    d = fmap.density
    if d is None:
        raise EstimationError(f"{fmap.tag} has no registered density")
    if d.name == "lebesgue":
        return cell.width
    return d.measure(cell.left, cell.right)


def gibbs_trace(
    fmap: IntervalMap, x: float, ns: Sequence[int], gamma: float, gamma_prime: float, strict: bool = True
) -> GibbsTrace:
    lmax = max(1.0, fmap.max_critical_order)
    if strict and not (gamma > 4 * lmax**2 and gamma_prime > 2):
        raise ValueError(f"need γ > 4ℓ² = {4 * lmax ** 2:g} and γ' > 2 (got {gamma}, {gamma_prime})")
    ns = np.asarray(sorted(set(int(n) for n in ns)), dtype=np.int64)
    if len(ns) == 0 or ns[0] < 1:
        raise ValueError("levels must be positive")
    # log|Df^n(x)| by accumulating along the orbit
    nmax = int(ns[-1])
    logd = np.empty(nmax + 1)
    logd[0] = 0.0
    y = float(x)
    for k in range(nmax):
        logd[k + 1] = logd[k] + fmap.log_abs_deriv(y)
        y = fmap.eval_point(y)
    g = np.empty(len(ns))
    img = np.empty(len(ns))
    for i, n in enumerate(ns):
        Z = cylinder_of(fmap, x, int(n))
        g[i] = _measure(fmap, Z) * math.exp(logd[n])
        img[i] = Z.image[1] - Z.image[0]
    nf = ns.astype(float)
    lower = nf ** (-2 * gamma) <= img / nf**gamma
    mid = img / nf**gamma <= g
    upper = g <= nf**gamma_prime
    ok = lower & mid & upper
    if not ok[-1]:
        n0 = None
    else:
        bad = np.nonzero(~ok)[0]
        n0 = int(ns[bad[-1] + 1]) if len(bad) else int(ns[0])
    return GibbsTrace(float(x), gamma, gamma_prime, ns, g, img, lower, mid, upper, n0)


def write_gibbs_csv(path, tr: GibbsTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "g_n", "image_len", "lower_ok", "mid_ok", "upper_ok"])
        for row in zip(tr.ns, tr.g, tr.image_len, tr.lower_ok, tr.mid_ok, tr.upper_ok):
            n, gv, il, lo, mi, up = row
            w.writerow([int(n), repr(float(gv)), repr(float(il)), int(lo), int(mi), int(up)])
