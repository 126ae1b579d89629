"""Numba kernels for the orbit-heavy inner loops.

Everything here works on plain arrays so the Python layer can stay
readable. Map families are encoded as an integer kind plus a float64
parameter vector (see ``IntervalMap.kernel``).
"""

import numpy as np
from numba import njit

KIND_DOUBLING = 0
KIND_TENT = 1
KIND_LOGISTIC = 2
KIND_SKEW = 3


@njit(cache=True)
def step(kind, p, x):
    # left tie-break at interior boundaries, matching IntervalMap.branch_of
    if kind == KIND_DOUBLING:
        if x <= 0.5:
            return 2.0 * x
        return 2.0 * x - 1.0
    elif kind == KIND_TENT:
        if x <= 0.5:
            return p[0] * x
        return p[0] * (1.0 - x)
    elif kind == KIND_LOGISTIC:
        return p[0] * x * (1.0 - x)
    else:
        # p = [k, b_0, ..., b_k, w_1, ..., w_k]
        k = int(p[0])
        for i in range(k):
            if x <= p[2 + i] or i == k - 1:
                return (x - p[1 + i]) / p[2 + k + i]
    return x


@njit(cache=True)
def forward_orbit(kind, p, x0, out):
    """Fill ``out`` with x0, f(x0), ...; returns the point after the last one."""
    x = x0
    for k in range(out.shape[0]):
        out[k] = x
        x = step(kind, p, x)
    return x


@njit(cache=True)
def decode_backward(symbols, y_end, left, width, flip, out):
    """Backward recursion through inverse affine branches.

    ``symbols[k]`` is the branch of the k-th orbit point. Starting from
    ``y_end`` placed after the last symbol, each inverse branch contracts
    the accumulated rounding error, so ``out[k]`` is an orbit point whose
    forward image agrees with ``out[k+1]`` to machine precision.
    """
    y = y_end
    m = out.shape[0]
    for k in range(symbols.shape[0] - 1, -1, -1):
        s = symbols[k]
        if flip[s]:
            y = left[s] + width[s] * (1.0 - y)
        else:
            y = left[s] + width[s] * y
        if k < m:
            out[k] = y


@njit(cache=True)
def collect_returns(x, t0, lo, inv_bw, starts, ids, tl, tr, last, count, visits, out):
    """Record gaps between successive visits to many intervals at once.

    Bins of the domain index the targets overlapping them (CSR layout in
    ``starts``/``ids``) so a point only tests nearby targets. ``out[j]``
    receives at most ``out.shape[1]`` gaps for target j.
    """
    nb = starts.shape[0] - 1
    cap = out.shape[1]
    for k in range(x.shape[0]):
        xi = x[k]
        b = int((xi - lo) * inv_bw)
        if b < 0:
            b = 0
        elif b >= nb:
            b = nb - 1
        for q in range(starts[b], starts[b + 1]):
            j = ids[q]
            if tl[j] <= xi and xi <= tr[j]:
                t = t0 + k
                visits[j] += 1
                if last[j] >= 0 and count[j] < cap:
                    out[j, count[j]] = t - last[j]
                    count[j] += 1
                last[j] = t


@njit(cache=True)
def count_visits(x, a, b):
    c = 0
    for k in range(x.shape[0]):
        if a <= x[k] and x[k] <= b:
            c += 1
    return c


@njit(cache=True)
def first_hit(x, start, a, b):
    for k in range(start, x.shape[0]):
        if a <= x[k] and x[k] <= b:
            return k
    return -1


@njit(cache=True)
def induced_counts(x, t0, ya, yb, ua, ub, last_u, ycount, last_ycount, out_full, out_ind, cnt):
    """Return times to U measured in f-steps and in visits to Y (U inside Y).

    The induced count is the number of first-return-map steps between two
    visits to U, i.e. visits to Y strictly after the first and up to the
    second.
    """
    cap = out_full.shape[0]
    for k in range(x.shape[0]):
        xi = x[k]
        if ya <= xi and xi <= yb:
            ycount[0] += 1
            if ua <= xi and xi <= ub:
                t = t0 + k
                if last_u[0] >= 0 and cnt[0] < cap:
                    out_full[cnt[0]] = t - last_u[0]
                    out_ind[cnt[0]] = ycount[0] - last_ycount[0]
                    cnt[0] += 1
                last_u[0] = t
                last_ycount[0] = ycount[0]


def target_index(lo, hi, intervals, nbins=1 << 16):
    """CSR bin index of intervals for :func:`collect_returns`."""
    intervals = np.asarray(intervals, dtype=np.float64).reshape(-1, 2)
    bw = (hi - lo) / nbins
    first = np.clip(((intervals[:, 0] - lo) / bw).astype(np.int64), 0, nbins - 1)
    lastb = np.clip(((intervals[:, 1] - lo) / bw).astype(np.int64), 0, nbins - 1)
    per_bin = np.zeros(nbins, dtype=np.int64)
    for a, b in zip(first, lastb):
        per_bin[a : b + 1] += 1
    starts = np.concatenate(([0], np.cumsum(per_bin)))
    ids = np.empty(starts[-1], dtype=np.int64)
    fill = starts[:-1].copy()
    for j, (a, b) in enumerate(zip(first, lastb)):
        for q in range(a, b + 1):
            ids[fill[q]] = j
            fill[q] += 1
    return starts, ids, 1.0 / bw
