"""Hofbauer tower (canonical Markov extension) of a piecewise-monotone map.

Domains are the distinct intervals f^n(Z_n), Z_n ∈ P_n, discovered
breadth-first from the base domain. Lifted points carry the domain they
live in; the x-coordinate is always advanced with the base map's own
scalar evaluator so that π∘f̂ = f∘π holds bit for bit.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from .errors import TowerConstructionError, TruncationError
from .maps.core import IntervalMap

EXCEEDED = -1  # sentinel for "no return within the horizon"


@dataclass(frozen=True)
class TowerDomain:
    id: int
    left: float
    right: float
    level: int
    witnesses: tuple[tuple[int, ...], ...]

    @property
    def width(self) -> float:
        return self.right - self.left

    @property
    def interval(self) -> tuple[float, float]:
        return (self.left, self.right)


@dataclass(frozen=True)
class TowerPoint:
    x: float
    domain_id: int
    tie_break: bool = False  # set when x sat on a branch boundary


@dataclass
class TowerGraph:
    map: IntervalMap
    domains: list[TowerDomain]
    edges: list[tuple[int, int, int]]
    succ: list[dict[int, int]]
    base_id: int = 0
    truncated: bool = False
    max_level_reached: int = 0
    frontier_size: int = 0
    tol: float = 1e-9
    unexpanded: frozenset = frozenset()

    @property
    def n_domains(self) -> int:
        return len(self.domains)

    def lift(self, x: float) -> TowerPoint:
        return TowerPoint(float(x), self.base_id)

    def out_degree(self, d: int) -> int:
        return len(self.succ[d])

    def to_dot(self) -> str:
        lines = ["digraph tower {"]
        for d in self.domains:
            lines.append(f'  {d.id} [label="{d.id}:[{d.left!r},{d.right!r}]@{d.level}"];')
        for a, b, s in self.edges:
            lines.append(f'  {a} -> {b} [label="{s}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def markov_defects(self) -> list[tuple[int, int, int, float]]:
        """Edges whose image f(D ∩ branch) differs from the target domain by more than tol."""
        bad = []
        for a, b, s in self.edges:
            D, T = self.domains[a], self.domains[b]
            br = self.map.branches[s]
            lo, hi = br.image_of(max(D.left, br.left), min(D.right, br.right))
            err = max(abs(lo - T.left), abs(hi - T.right))
            if err > _id_tol(self.tol, T.width):
                bad.append((a, b, s, err))
        return bad


def _id_tol(tol: float, width: float) -> float:
    return tol * max(width, 1e-6)


def _branch_signature(fmap: IntervalMap, lo: float, hi: float, tol: float) -> tuple[int, ...]:
    gap = _id_tol(tol, hi - lo)
    return tuple(
        i for i, b in enumerate(fmap.branches) if min(hi, b.right) - max(lo, b.left) > gap
    )


def build_tower(
    fmap: IntervalMap,
    max_level: int = 40,
    max_domains: int = 100_000,
    tol: float = 1e-9,
) -> TowerGraph:
    """Breadth-first construction; see module docstring.

    Two images are identified when both endpoints agree within
    ``tol * max(width, 1e-6)``. A merge that matches more than one existing
    domain, or that would join intervals meeting different branches, is
    rejected as inconsistent.
    """
    if max_level < 1:
        raise ValueError("max_level must be >= 1")
    if not tol > 0:
        raise ValueError("tol must be positive")
    lo, hi = fmap.domain
    domains = [TowerDomain(0, lo, hi, 0, ((),))]
    succ: list[dict[int, int]] = [{}]
    edges = []
    lefts = [lo]
    rights = [hi]
    witness_lists: list[list[tuple[int, ...]]] = [[()]]
    queue = deque([0])
    truncated = False
    unexpanded = set()
    max_level_reached = 0

    while queue:
        d = queue.popleft()
        D = domains[d]
        if D.level >= max_level:
            unexpanded.add(d)
            truncated = True
            continue
        for s in _branch_signature(fmap, D.left, D.right, tol):
            br = fmap.branches[s]
            a, b = br.image_of(max(D.left, br.left), min(D.right, br.right))
            t = _id_tol(tol, b - a)
            L = np.asarray(lefts)
            R = np.asarray(rights)
            match = np.nonzero((np.abs(L - a) <= t) & (np.abs(R - b) <= t))[0]
            if len(match) > 1:
                raise TowerConstructionError(
                    f"image [{a}, {b}] matches domains {match.tolist()} within tol={tol}"
                )
            word = witness_lists[d][0] + (s,)
            if len(match) == 1:
                m = int(match[0])
                T = domains[m]
                if _branch_signature(fmap, a, b, tol) != _branch_signature(fmap, T.left, T.right, tol):
                    raise TowerConstructionError(
                        f"identifying [{a}, {b}] with domain {m} changes its branch structure; tol too large"
                    )
                if len(witness_lists[m]) < 4:
                    witness_lists[m].append(word)
            else:
                if len(domains) >= max_domains:
                    truncated = True
                    unexpanded.add(d)
                    continue
                m = len(domains)
                domains.append(TowerDomain(m, a, b, D.level + 1, ()))
                lefts.append(a)
                rights.append(b)
                succ.append({})
                witness_lists.append([word])
                max_level_reached = max(max_level_reached, D.level + 1)
                queue.append(m)
            succ[d][s] = m
            edges.append((d, m, s))

    domains = [
        TowerDomain(D.id, D.left, D.right, D.level, tuple(witness_lists[D.id])) for D in domains
    ]
    return TowerGraph(
        map=fmap,
        domains=domains,
        edges=edges,
        succ=succ,
        truncated=truncated,
        max_level_reached=max_level_reached,
        frontier_size=len(unexpanded),
        tol=tol,
        unexpanded=frozenset(unexpanded),
    )


def tower_step(graph: TowerGraph, p: TowerPoint) -> TowerPoint:
    fmap = graph.map
    x = p.x
    s = int(fmap.branch_of(x))
    tie = fmap.on_boundary(x)
    nxt = graph.succ[p.domain_id]
    if s not in nxt and tie and (s + 1) in nxt:
        # x is the common endpoint of D and the next branch only
        s += 1
    if s not in nxt:
        if p.domain_id in graph.unexpanded:
            raise TruncationError(f"domain {p.domain_id} was not expanded (truncated tower)")
        raise TruncationError(f"no edge from domain {p.domain_id} along branch {s} for x={x!r}")
    return TowerPoint(fmap.eval_point(x), nxt[s], tie)


def project(p: TowerPoint) -> float:
    return p.x


def lifted_target(graph: TowerGraph, J: tuple[float, float], delta: float) -> dict[int, tuple[float, float]]:
    """Ĵ: copies of J in every domain that contains J's δ-scaled neighbourhood.

    Containment is tested as distance ≥ δ|J| from both ends of the domain.
    """
    a, b = J
    m = delta * (b - a)
    out = {}
    for D in graph.domains:
        if D.left <= a - m and b + m <= D.right:
            out[D.id] = (a, b)
    return out


def tower_first_return(
    graph: TowerGraph, target: dict[int, tuple[float, float]], p: TowerPoint, horizon: int
) -> int:
    """Least i in [1, horizon] with f̂^i(p) in the target, else EXCEEDED."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    q = p
    for i in range(1, horizon + 1):
        q = tower_step(graph, q)
        iv = target.get(q.domain_id)
        if iv is not None and iv[0] <= q.x <= iv[1]:
            return i
    return EXCEEDED


# -- lifted measure -----------------------------------------------------------


@dataclass
class LiftedMeasure:
    graph: TowerGraph
    grids: list[np.ndarray]  # bin edges per domain
    weights: list[np.ndarray]  # Cesàro-averaged mass per bin
    k: int
    lost: float  # mass that left through pruned edges, averaged like the weights
    retained_trace: list[float] = field(default_factory=list)
    tv_trace: list[float] = field(default_factory=list)
    status: str = "ok"

    @property
    def total_mass(self) -> float:
        return float(sum(w.sum() for w in self.weights))

    def project(self, edges: np.ndarray) -> np.ndarray:
        """Re-bin the summed domain weights onto base bins (uniform within each tower bin)."""
        out = np.zeros(len(edges) - 1)
        for g, w in zip(self.grids, self.weights):
            out += _rebin(g, w, edges)
        return out

    def to_rows(self):
        for d, (g, w) in enumerate(zip(self.grids, self.weights)):
            for j in range(len(w)):
                yield d, float(g[j]), float(g[j + 1]), float(w[j])


def _rebin(src_edges: np.ndarray, w: np.ndarray, dst_edges: np.ndarray) -> np.ndarray:
    # cumulative mass at dst edges, with mass spread uniformly inside each source bin
    cum = np.concatenate(([0.0], np.cumsum(w)))
    c = np.interp(dst_edges, src_edges, cum)
    return np.diff(c)


def _domain_grid(D: TowerDomain, max_bin: float) -> np.ndarray:
    n = max(1, int(math.ceil(D.width / max_bin - 1e-9)))
    g = np.linspace(D.left, D.right, n + 1)
    return g


def _edge_pieces(fmap, s, src: np.ndarray, dst: np.ndarray, lo: float, hi: float):
    """Split [lo, hi] ⊂ branch s into pieces each inside one source and one target bin."""
    br = fmap.branches[s]
    ilo, ihi = br.image_of(lo, hi)
    inner_dst = dst[(dst > ilo) & (dst < ihi)]
    pulled = np.asarray(br.inverse(inner_dst), dtype=float) if len(inner_dst) else np.empty(0)
    inner_src = src[(src > lo) & (src < hi)]
    cuts = np.unique(np.concatenate(([lo, hi], inner_src, pulled)))
    cuts = cuts[(cuts >= lo) & (cuts <= hi)]
    u, v = cuts[:-1], cuts[1:]
    keep = v > u
    u, v = u[keep], v[keep]
    mid = 0.5 * (u + v)
    j = np.clip(np.searchsorted(src, mid, side="right") - 1, 0, len(src) - 2)
    y = np.asarray(br.forward(mid), dtype=float)
    k = np.clip(np.searchsorted(dst, y, side="right") - 1, 0, len(dst) - 2)
    frac = (v - u) / (src[j + 1] - src[j])
    return j, k, frac


def tower_transfer_matrix(graph: TowerGraph, grids: list[np.ndarray]):
    """Sparse Ulam push-forward on the concatenated per-domain grids.

    Returns (matrix, offsets). Column sums fall short of one exactly by the
    fraction of each bin that leaves through pruned edges.
    """
    fmap = graph.map
    sizes = [len(g) - 1 for g in grids]
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    rows, cols, vals = [], [], []
    for a, b, s in graph.edges:
        D = graph.domains[a]
        br = fmap.branches[s]
        lo, hi = max(D.left, br.left), min(D.right, br.right)
        j, k, frac = _edge_pieces(fmap, s, grids[a], grids[b], lo, hi)
        rows.append(offsets[b] + k)
        cols.append(offsets[a] + j)
        vals.append(frac)
    n = int(offsets[-1])
    M = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    return M, offsets


def lift_measure(
    graph: TowerGraph,
    base_edges: np.ndarray,
    base_weights: np.ndarray,
    k: int,
    max_bin: float = 1e-3,
) -> LiftedMeasure:
    """Cesàro average μ̂_k = (1/k) Σ_{j<k} μ̂_0∘f̂^{-j} on per-domain Ulam grids.

    The base domain uses the grid of the supplied histogram so that k = 1
    reproduces it exactly.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    base_edges = np.asarray(base_edges, dtype=float)
    base_weights = np.asarray(base_weights, dtype=float)
    total = base_weights.sum()
    if not abs(total - 1.0) < 1e-9:
        raise ValueError(f"base histogram must be normalised, sum={total}")
    grids = []
    for D in graph.domains:
        grids.append(base_edges if D.id == graph.base_id else _domain_grid(D, max_bin))
    M, off = tower_transfer_matrix(graph, grids)
    v = np.zeros(int(off[-1]))
    v[off[graph.base_id] : off[graph.base_id + 1]] = base_weights
    acc = v.copy()
    retained, tv = [1.0], []
    prev_avg = acc.copy()
    for j in range(1, k):
        v = M @ v
        acc += v
        avg = acc / (j + 1)
        retained.append(float(avg.sum()))
        tv.append(0.5 * float(np.abs(avg - prev_avg).sum()))
        prev_avg = avg
    avg = acc / k
    weights = [avg[off[i] : off[i + 1]].copy() for i in range(len(grids))]
    lost = 1.0 - float(avg.sum())
    status = "warn" if graph.truncated and lost > 0.5 else "ok"
    return LiftedMeasure(graph, grids, weights, k, lost, retained, tv, status)


def write_measure_csv(path, lm: LiftedMeasure) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["domain_id", "bin_left", "bin_right", "weight"])
        for row in lm.to_rows():
            w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])
