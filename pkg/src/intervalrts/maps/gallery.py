"""The built-in map families and their analytically known invariants."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import tomli

from .. import _kernels as K
from ..errors import MalformedMapError
from .core import Branch, Coding, CriticalPoint, IntervalMap

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class AnalyticDensity:
    """Closed-form invariant density with its distribution function."""

    name: str
    pdf: Callable
    cdf: Callable

    def measure(self, lo: float, hi: float) -> float:
        return float(self.cdf(hi) - self.cdf(lo))


def _lebesgue() -> AnalyticDensity:
    return AnalyticDensity(
        "lebesgue",
        pdf=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        cdf=lambda x: np.clip(np.asarray(x, dtype=float), 0.0, 1.0),
    )


def _arcsine() -> AnalyticDensity:
    def pdf(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return 1.0 / (math.pi * np.sqrt(x * (1.0 - x)))

    def cdf(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return (2.0 / math.pi) * np.arcsin(np.sqrt(x))

    return AnalyticDensity("arcsine", pdf, cdf)


def _tent_sqrt2_density() -> AnalyticDensity:
    # Markov partition c2 < 1/2 < c3 < c1 of the core [c2, c1]
    c1 = SQRT2 / 2.0
    c2 = SQRT2 - 1.0
    c3 = 2.0 - SQRT2
    rho_a = 1.0 / (2.0 * (c3 - c2))
    rho_c = SQRT2 * rho_a

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= c2) & (x < c3), rho_a, np.where((x >= c3) & (x <= c1), rho_c, 0.0))

    def cdf(x):
        x = np.asarray(x, dtype=float)
        lower = np.clip(x, c2, c3) - c2
        upper = np.clip(x, c3, c1) - c3
        return rho_a * lower + rho_c * upper

    return AnalyticDensity("tent-sqrt2", pdf, cdf)


# -- families -----------------------------------------------------------------


def _const(v: float) -> Callable:
    def d(x):
        return v if np.ndim(x) == 0 else np.full(np.shape(x), v)

    return d


def doubling() -> IntervalMap:
    half = 0.5
    branches = (
        Branch(0.0, half, True, lambda x: 2.0 * x, _const(2.0), lambda y: 0.5 * y, slope=2.0),
        Branch(half, 1.0, True, lambda x: 2.0 * x - 1.0, _const(2.0), lambda y: 0.5 * (y + 1.0),
               slope=2.0),
    )
    l2 = math.log(2.0)
    return IntervalMap(
        domain=(0.0, 1.0),
        branches=branches,
        family="doubling",
        kernel=(K.KIND_DOUBLING, np.zeros(1)),
        coding=Coding(np.array([0.0, 0.5]), np.array([0.5, 0.5]), np.array([False, False]),
                      np.array([0.5, 0.5])),
        density=_lebesgue(),
        oracles={"lyapunov": l2, "entropy": l2, "log_deriv_second_moment": l2 * l2, "sigma2": 0.0},
        vector_eval=lambda x: np.where(x <= 0.5, 2.0 * x, 2.0 * x - 1.0),
        vector_deriv=lambda x: np.full(np.shape(x), 2.0),
    )


def tent(s: float) -> IntervalMap:
    s = float(s)
    if not 1.0 < s <= 2.0:
        raise MalformedMapError(f"tent slope must lie in (1, 2], got {s}")
    branches = (
        Branch(0.0, 0.5, True, lambda x: s * x, _const(s), lambda y: y / s, slope=s),
        Branch(0.5, 1.0, False, lambda x: s * (1.0 - x), _const(-s), lambda y: 1.0 - y / s, slope=s),
    )
    coding = None
    density = None
    if s == 2.0:
        coding = Coding(np.array([0.0, 0.5]), np.array([0.5, 0.5]), np.array([False, True]),
                        np.array([0.5, 0.5]))
        density = _lebesgue()
    elif s == SQRT2:
        density = _tent_sqrt2_density()
    ls = math.log(s)
    return IntervalMap(
        domain=(0.0, 1.0),
        branches=branches,
        family="tent",
        params={"s": s},
        kernel=(K.KIND_TENT, np.array([s])),
        coding=coding,
        density=density,
        oracles={"lyapunov": ls, "entropy": ls, "log_deriv_second_moment": ls * ls, "sigma2": 0.0},
        vector_eval=lambda x: np.where(x <= 0.5, s * x, s * (1.0 - x)),
        vector_deriv=lambda x: np.where(x <= 0.5, s, -s),
    )


def logistic(a: float) -> IntervalMap:
    a = float(a)
    if not 2.0 < a <= 4.0:
        raise MalformedMapError(f"logistic parameter must lie in (2, 4], got {a}")

    def fwd(x):
        return a * x * (1.0 - x)

    def dfx(x):
        return a * (1.0 - 2.0 * x)

    def inv_left(y):
        # 1 - sqrt(1-u) written without cancellation for small u
        u = 4.0 * np.asarray(y, dtype=float) / a
        r = np.sqrt(np.clip(1.0 - u, 0.0, None))
        out = 0.5 * u / (1.0 + r)
        return float(out) if out.ndim == 0 else out

    def inv_right(y):
        out = 1.0 - np.asarray(inv_left(y))
        return float(out) if out.ndim == 0 else out

    branches = (
        Branch(0.0, 0.5, True, fwd, dfx, inv_left),
        Branch(0.5, 1.0, False, fwd, dfx, inv_right),
    )
    coding = None
    density = None
    oracles: dict = {}
    if a == 4.0:
        # tent(2) coding pushed through the conjugacy x = sin^2(pi y / 2)
        coding = Coding(np.array([0.0, 0.5]), np.array([0.5, 0.5]), np.array([False, True]),
                        np.array([0.5, 0.5]), conjugacy=lambda y: np.sin(0.5 * math.pi * y) ** 2)
        density = _arcsine()
        l2 = math.log(2.0)
        oracles = {"lyapunov": l2, "entropy": l2,
                   "log_deriv_second_moment": l2 * l2 + math.pi ** 2 / 12.0}
    return IntervalMap(
        domain=(0.0, 1.0),
        branches=branches,
        critical_points=(CriticalPoint(0.5, 2.0),),
        family="logistic",
        params={"a": a},
        kernel=(K.KIND_LOGISTIC, np.array([a])),
        coding=coding,
        density=density,
        oracles=oracles,
        vector_eval=lambda x: a * x * (1.0 - x),
        vector_deriv=lambda x: a * (1.0 - 2.0 * x),
    )


def skewlinear(widths) -> IntervalMap:
    w = np.asarray(widths, dtype=float)
    if w.ndim != 1 or len(w) < 2 or np.any(w <= 0):
        raise MalformedMapError("skewlinear needs at least two positive widths")
    if abs(w.sum() - 1.0) > 1e-12:
        raise MalformedMapError(f"skewlinear widths must sum to 1, got {w.sum()!r}")
    k = len(w)
    b = np.concatenate(([0.0], np.cumsum(w)))
    b[-1] = 1.0
    branches = []
    for i in range(k):
        lo, wi = float(b[i]), float(w[i])
        branches.append(
            Branch(float(b[i]), float(b[i + 1]), True,
                   lambda x, lo=lo, wi=wi: (x - lo) / wi,
                   _const(1.0 / wi),
                   lambda y, lo=lo, wi=wi: lo + wi * y,
                   slope=1.0 / wi)
        )
    inner = b[1:-1]
    lw = np.log(w)
    h = float(-(w * lw).sum())
    m2 = float((w * lw * lw).sum())

    def vec(x):
        i = np.searchsorted(inner, x, side="left")
        return (x - b[i]) / w[i]

    return IntervalMap(
        domain=(0.0, 1.0),
        branches=tuple(branches),
        family="skewlinear",
        params={"w": [float(v) for v in w]},
        kernel=(K.KIND_SKEW, np.concatenate(([float(k)], b, w))),
        coding=Coding(b[:-1].copy(), w.copy(), np.zeros(k, dtype=bool), w.copy()),
        density=_lebesgue(),
        oracles={"lyapunov": h, "entropy": h, "log_deriv_second_moment": m2, "sigma2": m2 - h * h},
        vector_eval=vec,
        vector_deriv=lambda x: 1.0 / w[np.searchsorted(inner, x, side="left")],
    )


GALLERY = {
    "doubling": (doubling, ()),
    "tent": (tent, ("s",)),
    "logistic": (logistic, ("a",)),
    "skewlinear": (skewlinear, ("w",)),
}


def build_map(family: str, params: dict | None = None) -> IntervalMap:
    params = dict(params or {})
    if family not in GALLERY:
        raise MalformedMapError(f"unknown map family {family!r}; known: {sorted(GALLERY)}")
    ctor, names = GALLERY[family]
    if "widths" in params and "w" not in params:
        params["w"] = params.pop("widths")
    missing = [n for n in names if n not in params]
    extra = [n for n in params if n not in names]
    if missing or extra:
        raise MalformedMapError(f"{family}: missing params {missing}, unexpected params {extra}")
    return ctor(*(params[n] for n in names))


def _split_top_level(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "{[":
            depth += 1
        elif ch in "}]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def parse_map_spec(text: str) -> IntervalMap:
    """Parse ``family = "tent", params = { s = 1.41 }`` (or the multi-line TOML form)."""
    lines = []
    for line in text.splitlines():
        lines.extend(_split_top_level(line))
    try:
        data = tomli.loads("\n".join(lines))
    except tomli.TOMLDecodeError as exc:
        raise MalformedMapError(f"cannot parse map spec: {exc}") from exc
    if "family" not in data:
        raise MalformedMapError("map spec needs a 'family' key")
    return build_map(data["family"], data.get("params", {}))


def describe_gallery() -> list[dict]:
    """Listing used by the ``gallery`` subcommand."""
    rows = []
    examples = [doubling(), tent(2.0), tent(SQRT2), logistic(4.0), skewlinear([1 / 3, 2 / 3])]
    for m in examples:
        rows.append({
            "tag": m.tag,
            "branches": m.n_branches,
            "critical_points": [(c.location, c.order) for c in m.critical_points],
            "density": m.density.name if m.density is not None else None,
            "exact_sampler": m.coding is not None,
            "oracles": dict(m.oracles),
        })
    return rows
