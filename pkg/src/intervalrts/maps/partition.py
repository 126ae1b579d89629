"""Cylinder partitions P_n and itinerary-based cylinder lookup."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from ..errors import DomainError
from .core import IntervalMap


@dataclass(frozen=True)
class Cylinder:
    """A cell of P_n with its itinerary and the image f^n(Z).

    ``width`` is tracked separately from ``right - left``: pulling back
    through affine branches divides it by the slope, which keeps full
    relative precision even when the endpoints themselves cannot resolve
    the cell.
    """

    left: float
    right: float
    width: float
    itinerary: tuple[int, ...]
    image: tuple[float, float]
    ambiguous: bool = False

    @property
    def level(self) -> int:
        return len(self.itinerary)

    @property
    def interval(self) -> tuple[float, float]:
        return (self.left, self.right)

    def contains(self, x: float) -> bool:
        return self.left <= x <= self.right


@dataclass
class CylinderPartition:
    level: int
    cells: list[Cylinder]
    dropped: int = 0  # cells below machine resolution, discarded during refinement
    notes: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    @property
    def edges(self) -> np.ndarray:
        return np.array([c.left for c in self.cells] + [self.cells[-1].right])

    @property
    def max_width(self) -> float:
        return max(c.width for c in self.cells)

    def locate(self, x: float) -> Cylinder:
        """Cell containing x, with the left tie-break on shared endpoints."""
        lefts = np.array([c.left for c in self.cells])
        i = int(np.searchsorted(lefts, x, side="left")) - 1
        i = max(i, 0)
        return self.cells[i]


def _word_str(word: Sequence[int], k: int) -> str:
    return "".join(str(s) for s in word) if k <= 10 else "-".join(str(s) for s in word)


def _resolvable(lo: float, hi: float) -> bool:
    return hi - lo > np.spacing(max(abs(lo), abs(hi), 1e-300))


def trivial_partition(fmap: IntervalMap) -> CylinderPartition:
    lo, hi = fmap.domain
    return CylinderPartition(0, [Cylinder(lo, hi, hi - lo, (), (lo, hi))])


def branch_partition(fmap: IntervalMap) -> CylinderPartition:
    cells = [
        Cylinder(b.left, b.right, b.right - b.left, (i,), b.image)
        for i, b in enumerate(fmap.branches)
    ]
    return CylinderPartition(1, cells)


def push_forward(fmap: IntervalMap, word: Sequence[int], lo: float, hi: float) -> tuple[float, float]:
    """Image of [lo, hi] under f^len(word), following the given branches."""
    for s in word:
        b = fmap.branches[s]
        lo, hi = b.image_of(max(lo, b.left), min(hi, b.right))
    return lo, hi


def pull_back(fmap: IntervalMap, s: int, lo: float, hi: float, width: float) -> tuple[float, float, float]:
    """Preimage of [lo, hi] (assumed inside the image) under branch s, with width tracking."""
    b = fmap.branches[s]
    a, c = b.preimage_of(lo, hi)
    if b.slope is not None:
        w = width / b.slope
    else:
        w = c - a
    return a, c, w


def refine(fmap: IntervalMap, P: CylinderPartition) -> CylinderPartition:
    """P_{n+1} from P_n via P_{n+1} = P_1 ∨ f^{-1} P_n.

    A child is the pullback of a level-n cell through one branch, so each
    cell costs O(1) except those clipped by a branch image, whose image is
    recomputed along the itinerary.
    """
    children = []
    dropped = P.dropped
    for s, b in enumerate(fmap.branches):
        ilo, ihi = b.image
        for z in P.cells:
            lo, hi = max(z.left, ilo), min(z.right, ihi)
            if not lo < hi:
                continue
            clipped = lo != z.left or hi != z.right
            width = hi - lo if clipped else z.width
            a, c, w = pull_back(fmap, s, lo, hi, width)
            if not _resolvable(a, c):
                dropped += 1
                continue
            image = push_forward(fmap, z.itinerary, lo, hi) if clipped else z.image
            children.append(Cylinder(a, c, w, (s,) + z.itinerary, image))
    children.sort(key=lambda c: (c.left, c.right))
    return CylinderPartition(P.level + 1, children, dropped)


def partition(fmap: IntervalMap, n: int) -> CylinderPartition:
    P = trivial_partition(fmap)
    for _ in range(n):
        P = refine(fmap, P)
    return P


def itinerary(fmap: IntervalMap, x: float, n: int) -> tuple[tuple[int, ...], bool]:
    """First n branch symbols of x and whether a tie-break was needed."""
    lo, hi = fmap.domain
    if not lo <= x <= hi:
        raise DomainError(f"x={x} outside domain {fmap.domain}")
    word = []
    ambiguous = False
    crit = {c.location for c in fmap.critical_points}
    for _ in range(n):
        s = int(fmap.branch_of(x))
        if fmap.on_boundary(x) or x in crit:
            ambiguous = True
        word.append(s)
        x = fmap.eval_point(x)
    return tuple(word), ambiguous


def cylinder_from_symbols(fmap: IntervalMap, word: Sequence[int], ambiguous: bool = False) -> Cylinder:
    """Z_n for a given itinerary, by backward pullback (no partition needed)."""
    lo, hi = fmap.domain
    a, c, w = lo, hi, hi - lo
    for s in reversed(word):
        ilo, ihi = fmap.branches[s].image
        na, nc = max(a, ilo), min(c, ihi)
        if not na < nc:
            # empty cylinder: the word is not admissible
            return Cylinder(na, na, 0.0, tuple(word), (na, na), ambiguous)
        if na != a or nc != c:
            w = nc - na
        a, c, w = pull_back(fmap, s, na, nc, w)
    image = push_forward(fmap, word, a, c)
    return Cylinder(a, c, w, tuple(int(s) for s in word), image, ambiguous)


def cylinder_of(fmap: IntervalMap, x: float, n: int) -> Cylinder:
    """Z_n[x] by following the orbit of x."""
    word, amb = itinerary(fmap, x, n)
    return cylinder_from_symbols(fmap, word, amb)


def cylinder_from_orbit(fmap: IntervalMap, orbit: np.ndarray, n: int) -> Cylinder:
    """Z_n[orbit[0]] from precomputed orbit points (e.g. from an exact sampler)."""
    pts = np.asarray(orbit[:n], dtype=float)
    word = fmap.branch_of(pts)
    return cylinder_from_symbols(fmap, word.tolist())


def write_partitions_csv(path, partitions: Iterable[CylinderPartition], n_branches: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "cell_index", "left", "right", "itinerary"])
        for P in partitions:
            for i, c in enumerate(P.cells):
                w.writerow([P.level, i, repr(c.left), repr(c.right), _word_str(c.itinerary, n_branches)])


def lap_image(fmap: IntervalMap, word: Sequence[int], cell: Optional[Cylinder] = None) -> tuple[float, float]:
    """f^n(Z) for the cylinder with the given itinerary."""
    if cell is None:
        cell = cylinder_from_symbols(fmap, word)
    return cell.image
