"""Derivative growth along critical orbits."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..maps.core import LOG_FLOOR, IntervalMap


@dataclass
class GrowthReport:
    critical_point: float
    order: float
    log_series: list  # log|Df^n(f(c))| for n = 1..n_max
    alpha: float  # fitted exponential rate
    beta: float  # fitted polynomial exponent
    liminf: float  # min of |Df^n(f(c))| over the second half of the series
    non_growth: bool
    hit_critical: bool


def _fit_slope(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) < 2:
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


def growth_diagnostic(fmap: IntervalMap, n_max: int = 200) -> list[GrowthReport]:
    """One report per critical point c, tracking |Df^n(f(c))|.

    Non-growth is flagged when the orbit lands on a critical point or when
    neither an exponential nor a polynomial fit shows growth.
    """
    out = []
    for cp in fmap.critical_points:
        c = cp.location
        y = fmap.eval_point(c)
        logs = []
        acc = 0.0
        hit = False
        for _ in range(n_max):
            d = abs(fmap._deriv_scalar(y, "left"))
            if d == 0.0 or math.log(d) < LOG_FLOOR:
                hit = True
                break
            acc += math.log(d)
            logs.append(acc)
            y = fmap.eval_point(y)
        L = np.array(logs)
        n = np.arange(1, len(L) + 1, dtype=float)
        half = len(L) // 2
        alpha = _fit_slope(n, L)
        beta = _fit_slope(np.log(n[half:]), L[half:]) if half >= 2 else float("nan")
        liminf = float(np.exp(L[half:].min())) if len(L) else 0.0
        non_growth = hit or not (alpha > 0 or beta > 0)
        out.append(GrowthReport(c, cp.order, L.tolist(), alpha, beta, liminf, non_growth, hit))
    return out


def write_growth_json(path, reports: list[GrowthReport]) -> None:
    with open(path, "w") as fh:
        json.dump([asdict(r) for r in reports], fh, indent=2)
