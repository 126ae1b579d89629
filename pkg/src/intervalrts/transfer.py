"""Rychlik systems, their transfer operators and Ulam discretisation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse

from .errors import ConvergenceError, EstimationError, SchemeError
from .inducing import InducingScheme
from .maps.core import IntervalMap
from .maps.partition import pull_back

DEFAULT_BINS = 1 << 12


@dataclass(frozen=True, eq=False)
class RychlikBranch:
    """A branch Y_i -> F(Y_i) of a full-branch system, given by its inverse."""

    left: float
    right: float
    forward: Callable
    inverse: Callable  # F(Y_i) -> Y_i
    log_abs_deriv: Callable  # log|DF| on Y_i
    tau: int = 1
    image: Optional[tuple[float, float]] = None  # defaults to Y
    extension: Optional[tuple[float, float]] = None  # Z_i ⊃ Y_i


@dataclass(eq=False)
class RychlikSystem:
    """Base interval Y, branches and the potential Φ.

    The default potential is Φ = −δ log|DF| − shift·τ, which covers both
    φ_δ on a map and the induced potential with a pressure shift. A custom
    ``potential(i, y)`` overrides it.
    """

    Y: tuple[float, float]
    branches: list[RychlikBranch]
    delta: float = 1.0
    shift: float = 0.0
    potential: Optional[Callable] = None
    reference: str = "lebesgue"
    uncovered: float = 0.0

    def phi(self, i: int, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.potential is not None:
            return np.asarray(self.potential(i, y), dtype=float)
        br = self.branches[i]
        return -self.delta * np.asarray(br.log_abs_deriv(y), dtype=float) - self.shift * br.tau

    def with_potential(self, delta: float, shift: float = 0.0) -> "RychlikSystem":
        return RychlikSystem(self.Y, self.branches, delta, shift, None, self.reference, self.uncovered)

    @property
    def is_conformal(self) -> bool:
        """Φ is exactly the log-Jacobian of Lebesgue measure."""
        return self.potential is None and self.delta == 1.0 and self.shift == 0.0

    @classmethod
    def from_map(cls, fmap: IntervalMap, delta: float = 1.0, shift: float = 0.0, tol: float = 1e-12) -> "RychlikSystem":
        """The map's own branches, which must all be full (onto the domain)."""
        lo, hi = fmap.domain
        branches = []
        for i, b in enumerate(fmap.branches):
            a, c = b.image
            if abs(a - lo) > tol or abs(c - hi) > tol:
                raise SchemeError(f"branch {i} of {fmap.tag} is not full: image [{a}, {c}]")

            def lad(y, b=b):
                return np.log(np.abs(np.asarray(b.derivative(np.asarray(y, dtype=float)), dtype=float)))

            eta = 0.01 * (b.right - b.left)
            branches.append(
                RychlikBranch(b.left, b.right, b.forward, b.inverse, lad, 1, (lo, hi),
                              (b.left - eta, b.right + eta))
            )
        return cls((lo, hi), branches, delta, shift)

    @classmethod
    def from_scheme(cls, scheme: InducingScheme, delta: float = 1.0, shift: float = 0.0) -> "RychlikSystem":
        """Induced system F = f^τ on Y from an inducing scheme."""
        fmap = scheme.map
        Y = scheme.Y
        branches = []
        for i, br in enumerate(scheme.branches):
            image = (max(Y[0], _push(fmap, br.word, br.left, br.right)[0]),
                     min(Y[1], _push(fmap, br.word, br.left, br.right)[1]))
            ext = None
            if scheme.nbhd is not None:
                # pull Y' back along the extendible lap
                a, b = scheme.nbhd.Yp
                w = b - a
                for s in reversed(br.word):
                    a, b, w = pull_back(fmap, s, a, b, w)
                ext = (a, b)
            branches.append(
                RychlikBranch(
                    br.left, br.right,
                    forward=lambda y, i=i: scheme.evaluate(i, y),
                    inverse=lambda y, i=i: scheme.inverse(i, y),
                    log_abs_deriv=lambda y, i=i: scheme.log_abs_deriv(i, y),
                    tau=br.tau, image=image, extension=ext,
                )
            )
        return cls(Y, branches, delta, shift, uncovered=scheme.uncovered)


def _push(fmap, word, a, b):
    for s in word:
        m = fmap.branches[s]
        a, b = m.image_of(max(a, m.left), min(b, m.right))
    return a, b


@dataclass(eq=False)
class UlamOperator:
    """Bin-average discretisation of L acting on densities w.r.t. Lebesgue."""

    edges: np.ndarray
    matrix: sparse.csr_matrix
    remainder: float  # bound on the contribution of branches beyond the truncation
    n_branches: int

    @property
    def h(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(psi, dtype=float)


def ulam_operator(sys: RychlikSystem, n_bins: int = DEFAULT_BINS) -> UlamOperator:
    """Assemble A with (Aψ)_j = (1/h) Σ_i Σ_k ψ_k |B_k ∩ h_i(B_j)| e^{Φ_i} |DF_i|.

    |DF_i| on h_i(B_j) is taken as the secant |B_j|/|h_i(B_j)|; for the
    default potential e^{Φ}|DF| = |DF|^{1−δ} e^{−shift·τ}.
    """
    y0, y1 = sys.Y
    e = np.linspace(y0, y1, n_bins + 1)
    h = (y1 - y0) / n_bins
    rows, cols, vals = [], [], []
    sup_phi = -math.inf
    for i, br in enumerate(sys.branches):
        c, d = br.image if br.image is not None else sys.Y
        j0 = max(0, int(np.searchsorted(e, c, side="right")) - 1)
        j1 = min(n_bins, int(np.searchsorted(e, d, side="left")))
        js = np.arange(j0, j1)
        if len(js) == 0:
            continue
        lo = np.maximum(e[js], c)
        hi = np.minimum(e[js + 1], d)
        keep = hi > lo
        js, lo, hi = js[keep], lo[keep], hi[keep]
        pa = np.asarray(br.inverse(lo), dtype=float)
        pb = np.asarray(br.inverse(hi), dtype=float)
        u = np.minimum(pa, pb)
        v = np.maximum(pa, pb)
        plen = v - u
        ok = plen > 0
        js, lo, hi, u, v, plen = js[ok], lo[ok], hi[ok], u[ok], v[ok], plen[ok]
        sec = (hi - lo) / plen
        if sys.potential is None:
            weight = sec ** (1.0 - sys.delta) * math.exp(-sys.shift * br.tau)
            sup_phi = max(sup_phi, float(np.max(-sys.delta * np.log(sec) - sys.shift * br.tau)))
        else:
            ph = sys.phi(i, 0.5 * (u + v))
            weight = np.exp(ph) * sec
            sup_phi = max(sup_phi, float(np.max(ph)))
        kmin = np.clip(np.searchsorted(e, u, side="right") - 1, 0, n_bins - 1)
        kmax = np.clip(np.searchsorted(e, v, side="left") - 1, 0, n_bins - 1)
        span = int(np.max(kmax - kmin)) + 1
        for o in range(span):
            k = kmin + o
            m = k <= kmax
            kk = k[m]
            ov = np.minimum(v[m], e[kk + 1]) - np.maximum(u[m], e[kk])
            pos = ov > 0
            rows.append(js[m][pos])
            cols.append(kk[pos])
            vals.append(weight[m][pos] * ov[pos] / h)
    if rows:
        A = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_bins, n_bins)
        ).tocsr()
    else:
        A = sparse.csr_matrix((n_bins, n_bins))
    remainder = sys.uncovered * math.exp(sup_phi) if sys.uncovered > 0 and sup_phi > -math.inf else 0.0
    return UlamOperator(e, A, remainder, len(sys.branches))


def transfer_apply(op: UlamOperator, psi) -> np.ndarray:
    """Lψ on the grid (ψ given as bin averages)."""
    return op.apply(psi)


@dataclass
class DensityEstimate:
    edges: np.ndarray
    density: np.ndarray
    lambda1: float
    residual: float
    iterations: int
    trace: list[float] = field(default_factory=list)

    @property
    def h(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def l1_to(self, cdf: Callable) -> float:
        """L¹ distance to a reference density given by its (unnormalised) cdf on Y."""
        c = np.asarray(cdf(self.edges), dtype=float)
        mass = np.diff(c)
        ref = mass / (mass.sum() * self.h)
        return float(np.abs(self.density - ref).sum() * self.h)


def invariant_density(op: UlamOperator, tol: float = 1e-8, max_iter: int = 100_000) -> DensityEstimate:
    """Normalised power iteration; stops when ‖Aψ − λψ‖₁ < tol."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    h = op.h
    n = op.n_bins
    psi = np.full(n, 1.0 / (n * h))
    trace = []
    A = op.matrix
    for it in range(1, max_iter + 1):
        phi = A @ psi
        lam = float(phi.sum() * h)
        if not lam > 0:
            raise ConvergenceError("operator annihilated the iterate", trace)
        res = float(np.abs(phi - lam * psi).sum() * h)
        trace.append(res)
        psi = phi / lam
        if res < tol:
            return DensityEstimate(op.edges, psi, lam, res, it, trace)
    raise ConvergenceError(f"no convergence in {max_iter} iterations (residual {trace[-1]:.3g})", trace)


@dataclass(frozen=True)
class PressureEstimate:
    delta: float
    pressure: float
    residual: float
    remainder: float


def pressure_estimate(
    builder: Callable[[float], RychlikSystem],
    delta: float,
    n_bins: int = DEFAULT_BINS,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    remainder_tol: float = 1e-3,
) -> PressureEstimate:
    """log λ₁ of the Ulam operator for the potential φ_δ."""
    if not 0.0 <= delta <= 1.2:
        raise ValueError("delta must lie in [0, 1.2]")
    op = ulam_operator(builder(delta), n_bins)
    if op.remainder > remainder_tol:
        raise EstimationError(f"truncation remainder {op.remainder:.3g} exceeds {remainder_tol:g}")
    est = invariant_density(op, tol, max_iter)
    return PressureEstimate(float(delta), math.log(est.lambda1), est.residual, op.remainder)


def pressure_sweep(builder, deltas: Sequence[float], **kw) -> list[PressureEstimate]:
    return [pressure_estimate(builder, d, **kw) for d in deltas]


@dataclass
class RychlikReport:
    passed: bool
    extension_ok: bool
    sup_phi: float
    inf_abs_dF: float
    var_exp_phi: float
    violations: list[str] = field(default_factory=list)
    unresolved: int = 0  # branches narrower than the mesh can resolve, skipped


def check_rychlik(sys: RychlikSystem, mesh: int = 64) -> RychlikReport:
    """Mesh checks of the Rychlik conditions: extension (1), variation (2), expansion (3)."""
    if mesh < 2:
        raise ValueError("mesh must be >= 2")
    violations = []
    sup_phi = -math.inf
    inf_df = math.inf
    var = 0.0
    ext_ok = True
    unresolved = 0
    for i, br in enumerate(sys.branches):
        if br.right - br.left <= 1e3 * np.spacing(max(abs(br.left), abs(br.right))):
            # below float resolution: the mesh cannot see inside this branch
            unresolved += 1
            continue
        ys = br.left + (br.right - br.left) * (np.arange(mesh) + 0.5) / mesh
        with np.errstate(all="ignore"):
            fy = np.asarray(br.forward(ys), dtype=float)
        dy = np.diff(fy)
        if not (np.all(dy > 0) or np.all(dy < 0)):
            # F is monotone on Y_i by construction; failure means rounding
            # (e.g. an orbit grazing a critical point) swamps the branch
            unresolved += 1
            continue
        with np.errstate(divide="ignore"):
            ph = sys.phi(i, ys)
        k = int(np.argmax(ph))
        if ph[k] > sup_phi:
            sup_phi = float(ph[k])
            arg = (i, float(ys[k]))
        with np.errstate(divide="ignore"):
            inf_df = min(inf_df, float(np.exp(np.min(br.log_abs_deriv(ys)))))
        var += float(np.abs(np.diff(np.exp(ph))).sum())
        ext = br.extension
        if ext is None or not (ext[0] < br.left or ext[1] > br.right):
            ext_ok = False
            violations.append(f"(1) branch {i}: no extension interval beyond [{br.left}, {br.right}]")
            continue
        zs = np.linspace(ext[0], ext[1], 2 * mesh)
        try:
            with np.errstate(all="ignore"):
                fz = np.asarray(br.forward(zs), dtype=float)
        except Exception as exc:
            ext_ok = False
            violations.append(f"(1) branch {i}: not evaluable on its extension ({exc})")
            continue
        dz = np.diff(fz)
        if not (np.all(dz > 0) or np.all(dz < 0)) or not np.all(np.isfinite(fz)):
            ext_ok = False
            violations.append(f"(1) branch {i}: not monotone on extension [{ext[0]}, {ext[1]}]")
    if not sup_phi < 0:
        violations.append(f"(3) sup Φ = {sup_phi:.6g} >= 0 at branch {arg[0]}, y = {arg[1]!r}")
    if not math.isfinite(var):
        violations.append("(2) variation of e^Φ is not finite on the mesh")
    return RychlikReport(not violations, ext_ok, sup_phi, inf_df, var, violations, unresolved)


def write_density_csv(path, est: DensityEstimate) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "density"])
        for a, b, d in zip(est.edges[:-1], est.edges[1:], est.density):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(d))])


def write_pressure_csv(path, rows: Sequence[PressureEstimate]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta", "pressure", "residual"])
        for r in rows:
            w.writerow([repr(r.delta), repr(r.pressure), repr(r.residual)])
