"""Piecewise-monotone interval maps.

An :class:`IntervalMap` is a closed domain cut into branches on which the
map is a strictly monotone homeomorphism onto its image. Points sitting
exactly on a shared branch endpoint are assigned to the *left* branch
everywhere in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from ..errors import AmbiguityError, CriticalOrbitError, DomainError, MalformedMapError

# |Df| below this is treated as a hit on a critical point
LOG_FLOOR = math.log(1e-300)
CRITICAL_GUARD = 1e-14


@dataclass(frozen=True, eq=False)
class Branch:
    """One monotone lap of the map, i.e. one cell of the level-1 partition."""

    left: float
    right: float
    increasing: bool
    forward: Callable
    derivative: Callable
    inverse: Callable
    slope: Optional[float] = None  # constant |Df| for affine branches

    @property
    def image(self) -> tuple[float, float]:
        a = float(self.forward(self.left))
        b = float(self.forward(self.right))
        return (a, b) if a <= b else (b, a)

    def image_of(self, lo: float, hi: float) -> tuple[float, float]:
        a = float(self.forward(lo))
        b = float(self.forward(hi))
        return (a, b) if a <= b else (b, a)

    def preimage_of(self, lo: float, hi: float) -> tuple[float, float]:
        """Pull an interval inside the image back into the branch."""
        a = float(self.inverse(lo))
        b = float(self.inverse(hi))
        a, b = (a, b) if a <= b else (b, a)
        return max(a, self.left), min(b, self.right)


@dataclass(frozen=True)
class CriticalPoint:
    location: float
    order: float


@dataclass(frozen=True, eq=False)
class Coding:
    """Affine inverse branches plus Bernoulli weights for exact orbit generation.

    Used for full-branch piecewise-linear maps, whose Lebesgue-typical
    orbits have i.i.d. branch symbols with probabilities equal to the
    branch widths. ``conjugacy`` (optional) maps the coded variable to the
    map's own coordinate, e.g. tent(2) -> logistic(4).
    """

    left: np.ndarray
    width: np.ndarray
    flip: np.ndarray
    probs: np.ndarray
    conjugacy: Optional[Callable] = None

    def lookahead(self, bits: int = 64) -> int:
        # enough symbols that the product of widths is below 2**-bits
        worst = float(np.max(self.width))
        return int(math.ceil(bits * math.log(2.0) / -math.log(worst))) + 1


@dataclass(frozen=True, eq=False)
class IntervalMap:
    """A piecewise-monotone self-map of a closed interval."""

    domain: tuple[float, float]
    branches: tuple[Branch, ...]
    critical_points: tuple[CriticalPoint, ...] = ()
    family: str = "custom"
    params: dict = field(default_factory=dict)
    kernel: Optional[tuple[int, np.ndarray]] = None
    coding: Optional[Coding] = None
    density: Optional[object] = None
    oracles: dict = field(default_factory=dict)
    vector_eval: Optional[Callable] = None
    vector_deriv: Optional[Callable] = None

    def __post_init__(self):
        if len(self.branches) == 0:
            raise MalformedMapError("a map needs at least one branch")
        lo, hi = self.domain
        if not lo < hi:
            raise MalformedMapError(f"empty domain {self.domain}")
        if self.branches[0].left != lo or self.branches[-1].right != hi:
            raise MalformedMapError("branches must cover the domain")
        for b0, b1 in zip(self.branches, self.branches[1:]):
            if b0.right != b1.left:
                raise MalformedMapError("branch intervals must be adjacent")
        for b in self.branches:
            if not b.left < b.right:
                raise MalformedMapError(f"degenerate branch [{b.left}, {b.right}]")
        object.__setattr__(
            self, "_interior", np.array([b.right for b in self.branches[:-1]], dtype=float)
        )

    # -- identification -----------------------------------------------------

    @property
    def tag(self) -> str:
        if not self.params:
            return self.family
        vals = []
        for v in self.params.values():
            if isinstance(v, (list, tuple)):
                vals.extend(repr(float(u)) for u in v)
            else:
                vals.append(repr(float(v)))
        return f"{self.family}({','.join(vals)})"

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def interior_boundaries(self) -> np.ndarray:
        return self._interior

    @property
    def max_critical_order(self) -> float:
        return max((c.order for c in self.critical_points), default=1.0)

    def __repr__(self):
        return f"IntervalMap({self.tag})"

    # -- evaluation -----------------------------------------------------------

    def _check_domain(self, x):
        lo, hi = self.domain
        arr = np.asarray(x, dtype=float)
        if np.any(~((arr >= lo) & (arr <= hi))):
            raise DomainError(f"point(s) outside domain [{lo}, {hi}]")
        return arr

    def branch_of(self, x):
        """Branch index; a shared endpoint belongs to the left branch."""
        return np.searchsorted(self._interior, x, side="left")

    def on_boundary(self, x: float) -> bool:
        i = int(np.searchsorted(self._interior, x, side="left"))
        return i < len(self._interior) and self._interior[i] == x

    def __call__(self, x):
        arr = self._check_domain(x)
        if self.vector_eval is not None:
            out = self.vector_eval(arr)
        else:
            idx = self.branch_of(arr)
            out = np.empty_like(arr)
            for i, b in enumerate(self.branches):
                m = idx == i
                if np.any(m):
                    out[m] = b.forward(arr[m])
        if np.ndim(x) == 0:
            return float(out)
        return out

    def eval_point(self, x: float) -> float:
        """Scalar f(x) without the domain check; the hot path for orbit loops."""
        b = self.branches[int(np.searchsorted(self._interior, x, side="left"))]
        return float(b.forward(x))

    def deriv(self, x, side: Optional[str] = None):
        """Df(x). On a boundary where f or Df jumps, ``side`` must be given."""
        arr = self._check_domain(x)
        if np.ndim(x) == 0:
            return self._deriv_scalar(float(arr), side)
        return np.array([self._deriv_scalar(float(v), side) for v in arr.ravel()]).reshape(arr.shape)

    def _deriv_scalar(self, x: float, side: Optional[str]) -> float:
        for c in self.critical_points:
            if abs(x - c.location) <= CRITICAL_GUARD:
                i = int(self.branch_of(x))
                return float(self.branches[i].derivative(x))
        i = int(self.branch_of(x))
        if self.on_boundary(x):
            if side is None:
                raise AmbiguityError(f"x={x} is a branch boundary; pass side='left' or 'right'")
            if side == "right":
                i += 1
        return float(self.branches[i].derivative(x))

    def log_abs_deriv(self, x) -> np.ndarray:
        """Vectorised log|Df| with the critical-point guard.

        Interior boundaries use the left branch, which is consistent with
        the tie-break used for orbits.
        """
        arr = np.asarray(x, dtype=float)
        if self.vector_deriv is not None:
            d = self.vector_deriv(arr)
        else:
            idx = self.branch_of(arr)
            d = np.empty_like(arr)
            for i, b in enumerate(self.branches):
                m = idx == i
                if np.any(m):
                    d[m] = b.derivative(arr[m])
        with np.errstate(divide="ignore"):
            out = np.log(np.abs(d))
        if np.any(out < LOG_FLOOR):
            bad = np.asarray(arr)[out < LOG_FLOOR].ravel()[0] if np.ndim(arr) else float(arr)
            raise CriticalOrbitError(f"log|Df| below log(1e-300) at x={bad!r}")
        return out

    # -- validation -----------------------------------------------------------

    def check_invariants(self, samples_per_branch: int = 64, tol: float = 1e-9) -> list[str]:
        """Sample-based check of monotonicity, self-mapping and critical points.

        Returns a list of violation messages (empty when the map is well formed).
        """
        problems = []
        lo, hi = self.domain
        for i, b in enumerate(self.branches):
            xs = np.linspace(b.left, b.right, samples_per_branch)
            ys = np.asarray(b.forward(xs), dtype=float)
            d = np.diff(ys)
            if b.increasing and np.any(d <= 0):
                problems.append(f"branch {i} not strictly increasing")
            if not b.increasing and np.any(d >= 0):
                problems.append(f"branch {i} not strictly decreasing")
            if np.any(ys < lo - tol) or np.any(ys > hi + tol):
                problems.append(f"branch {i} leaves the domain")
            inner = np.asarray(b.derivative(xs[1:-1]), dtype=float)
            if np.any(inner == 0):
                problems.append(f"branch {i} has Df = 0 in its interior")
        for c in self.critical_points:
            i = int(self.branch_of(c.location))
            if abs(float(self.branches[i].derivative(c.location))) > 1e-8:
                problems.append(f"critical point {c.location} has Df != 0")
            if not c.order > 1:
                problems.append(f"critical point {c.location} has order {c.order} <= 1")
        crit = {c.location for c in self.critical_points}
        for x in self._interior:
            i = int(self.branch_of(x))
            left_val = float(self.branches[i].forward(x))
            right_val = float(self.branches[i + 1].forward(x))
            continuous = abs(left_val - right_val) <= tol
            if continuous and x not in crit:
                # a turning point with one-sided slopes is allowed as a corner
                dl = float(self.branches[i].derivative(x))
                dr = float(self.branches[i + 1].derivative(x))
                if dl * dr > 0:
                    problems.append(f"boundary {x} is neither critical nor a discontinuity")
        return problems


def _estimate_order(f: Callable, c: float, scale: float) -> float:
    """Non-flatness order from |f(c+h)-f(c)| ~ h^l at two small offsets."""
    fc = float(f(c))
    h1, h2 = 1e-3 * scale, 1e-4 * scale
    v1 = max(abs(float(f(c + h1)) - fc), abs(float(f(c - h1)) - fc))
    v2 = max(abs(float(f(c + h2)) - fc), abs(float(f(c - h2)) - fc))
    if v1 <= 0 or v2 <= 0:
        return math.inf
    return math.log(v1 / v2) / math.log(h1 / h2)


def from_smooth(
    f: Callable,
    df: Callable,
    domain: tuple[float, float] = (0.0, 1.0),
    family: str = "smooth",
    params: Optional[dict] = None,
    grid: int = 4001,
) -> IntervalMap:
    """Build a map from a smooth f by root-finding Df = 0 on the domain interior.

    Each sign change of Df on a uniform grid is refined with Brent's method;
    the roots become critical points and branch boundaries.
    """
    lo, hi = domain
    xs = np.linspace(lo, hi, grid)
    d = np.asarray(df(xs), dtype=float)
    roots = []
    for k in range(1, grid - 1):
        if d[k] == 0.0:
            roots.append(float(xs[k]))
        elif d[k] * d[k + 1] < 0:
            roots.append(float(brentq(df, xs[k], xs[k + 1], xtol=1e-15, rtol=4e-16)))
    edges = [lo, *roots, hi]
    scale = hi - lo
    branches = []
    for a, b in zip(edges, edges[1:]):
        mid = 0.5 * (a + b)
        inc = float(df(mid)) > 0

        def inverse(y, a=a, b=b):
            y = np.asarray(y, dtype=float)
            fa, fb = float(f(a)), float(f(b))

            def one(v):
                if v == fa:
                    return a
                if v == fb:
                    return b
                return brentq(lambda t: f(t) - v, a, b, xtol=1e-15, rtol=4e-16)

            out = np.vectorize(one, otypes=[float])(y)
            return float(out) if out.ndim == 0 else out

        branches.append(
            Branch(left=a, right=b, increasing=inc, forward=f, derivative=df, inverse=inverse)
        )
    crit = tuple(CriticalPoint(r, _estimate_order(f, r, scale)) for r in roots)
    return IntervalMap(
        domain=(lo, hi),
        branches=tuple(branches),
        critical_points=crit,
        family=family,
        params=dict(params or {}),
    )
