"""Numeric hot loops with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``CUTPREP_DISABLE_NUMBA`` is unset or ``0``.  Both paths are always
importable so they can be compared (see ``benchmarks/bench_kernels.py``).
"""
import os

import numpy as np

try:  # pragma: no cover - import guard
    import numba

    HAVE_NUMBA = True
except Exception:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("CUTPREP_DISABLE_NUMBA", "0") in ("", "0")


# ---------------------------------------------------------------------------
# 1D B-spline values and derivatives on one knot span
# ---------------------------------------------------------------------------

def _bspline_ders_loop(knots, p, spans, ts, nd):
    """Values and derivatives up to ``nd`` of the p+1 nonzero B-splines.

    Scalar-loop formulation of the classic triangular recurrence; compiled
    by numba when available.  Returns array (npts, nd+1, p+1).
    """
    npts = ts.shape[0]
    out = np.zeros((npts, nd + 1, p + 1))
    ndu = np.empty((p + 1, p + 1))
    left = np.empty(p + 1)
    right = np.empty(p + 1)
    a = np.empty((2, p + 1))
    for q in range(npts):
        span = spans[q]
        t = ts[q]
        ndu[0, 0] = 1.0
        for j in range(1, p + 1):
            left[j] = t - knots[span + 1 - j]
            right[j] = knots[span + j] - t
            saved = 0.0
            for r in range(j):
                ndu[j, r] = right[r + 1] + left[j - r]
                tmp = ndu[r, j - 1] / ndu[j, r]
                ndu[r, j] = saved + right[r + 1] * tmp
                saved = left[j - r] * tmp
            ndu[j, j] = saved
        for j in range(p + 1):
            out[q, 0, j] = ndu[j, p]
        for r in range(p + 1):
            s1 = 0
            s2 = 1
            a[0, 0] = 1.0
            for k in range(1, nd + 1):
                d = 0.0
                rk = r - k
                pk = p - k
                if r >= k:
                    a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                    d = a[s2, 0] * ndu[rk, pk]
                j1 = 1 if rk >= -1 else -rk
                j2 = k - 1 if r - 1 <= pk else p - r
                for j in range(j1, j2 + 1):
                    a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                    d += a[s2, j] * ndu[rk + j, pk]
                if r <= pk:
                    a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                    d += a[s2, k] * ndu[r, pk]
                out[q, k, r] = d
                s1, s2 = s2, s1
        fac = float(p)
        for k in range(1, nd + 1):
            for j in range(p + 1):
                out[q, k, j] *= fac
            fac *= p - k
    return out


def _bspline_ders_numpy(knots, p, spans, ts, nd):
    """Vectorized-over-points evaluation by differentiating lower-degree bases.

    Uses N_{i,k}' = k (N_{i,k-1}/(t_{i+k}-t_i) - N_{i+1,k-1}/(t_{i+k+1}-t_{i+1})).
    """
    ts = np.asarray(ts, dtype=float)
    spans = np.asarray(spans, dtype=np.int64)
    npts = ts.shape[0]
    # table[k] holds degree-k bases on the span, shape (npts, k+1), indices span-k..span
    table = [np.ones((npts, 1))]
    for k in range(1, p + 1):
        prev = table[-1]
        cur = np.zeros((npts, k + 1))
        for j in range(k + 1):
            i = spans - k + j  # global index of basis N_{i,k}
            if j >= 1:  # N_{i,k-1} lives at prev[:, j-1]
                den = knots[i + k] - knots[i]
                w = np.where(den > 0, (ts - knots[i]) / np.where(den > 0, den, 1.0), 0.0)
                cur[:, j] += w * prev[:, j - 1]
            if j <= k - 1:  # N_{i+1,k-1} lives at prev[:, j]
                den = knots[i + k + 1] - knots[i + 1]
                w = np.where(den > 0, (knots[i + k + 1] - ts) / np.where(den > 0, den, 1.0), 0.0)
                cur[:, j] += w * prev[:, j]
        table.append(cur)
    out = np.zeros((npts, nd + 1, p + 1))
    out[:, 0, :] = table[p]
    for d in range(1, nd + 1):
        if d > p:
            break
        # d-th derivative: coefficients on degree p-d bases via repeated differencing
        deg = p - d
        base = table[deg]  # (npts, deg+1) indices span-deg..span
        # coefficient matrix c[j, m]: N^{(d)}_{span-p+j,p} = sum_m c[j,m] N_{span-deg+m,deg}
        coef = np.zeros((npts, p + 1, deg + 1))
        # start with identity at degree p, differentiate d times
        cur_coef = np.zeros((npts, p + 1, p + 1))
        for j in range(p + 1):
            cur_coef[:, j, j] = 1.0
        cur_deg = p
        for _ in range(d):
            nxt = np.zeros((npts, p + 1, cur_deg))
            for m in range(cur_deg + 1):
                # basis N_{i,cur_deg}, i = span-cur_deg+m
                i = spans - cur_deg + m
                den1 = knots[i + cur_deg] - knots[i]
                den2 = knots[i + cur_deg + 1] - knots[i + 1]
                f1 = np.where(den1 > 0, cur_deg / np.where(den1 > 0, den1, 1.0), 0.0)
                f2 = np.where(den2 > 0, cur_deg / np.where(den2 > 0, den2, 1.0), 0.0)
                # N_{i,k-1} index in the lower set: m-1 ; N_{i+1,k-1}: m
                if m - 1 >= 0:
                    nxt[:, :, m - 1] += cur_coef[:, :, m] * f1[:, None]
                if m <= cur_deg - 1:
                    nxt[:, :, m] -= cur_coef[:, :, m] * f2[:, None]
            cur_coef = nxt
            cur_deg -= 1
        coef = cur_coef
        out[:, d, :] = np.einsum("qjm,qm->qj", coef, base)
    return out


# ---------------------------------------------------------------------------
# scatter-add of element matrices into a dense global matrix
# ---------------------------------------------------------------------------

def _scatter_loop(K, rows, cols, Ke):
    for a in range(rows.shape[0]):
        ra = rows[a]
        if ra < 0:
            continue
        for b in range(cols.shape[0]):
            cb = cols[b]
            if cb < 0:
                continue
            K[ra, cb] += Ke[a, b]


def _scatter_numpy(K, rows, cols, Ke):
    mr = rows >= 0
    mc = cols >= 0
    np.add.at(K, (rows[mr][:, None], cols[mc][None, :]), Ke[np.ix_(mr, mc)])


if HAVE_NUMBA:
    _bspline_ders_jit = numba.njit(cache=True)(_bspline_ders_loop)
    _scatter_jit = numba.njit(cache=True)(_scatter_loop)
else:  # pragma: no cover
    _bspline_ders_jit = None
    _scatter_jit = None


def bspline_ders(knots, p, spans, ts, nd, backend=None):
    """Nonzero 1D B-spline values/derivatives, shape (npts, nd+1, p+1)."""
    backend = backend or ("numba" if USE_NUMBA else "numpy")
    knots = np.ascontiguousarray(knots, dtype=float)
    spans = np.ascontiguousarray(np.atleast_1d(spans), dtype=np.int64)
    ts = np.ascontiguousarray(np.atleast_1d(ts), dtype=float)
    if backend == "numba":
        return _bspline_ders_jit(knots, int(p), spans, ts, int(nd))
    if backend == "loop":
        return _bspline_ders_loop(knots, int(p), spans, ts, int(nd))
    return _bspline_ders_numpy(knots, int(p), spans, ts, int(nd))


def scatter_add(K, rows, cols, Ke, backend=None):
    """K[rows, cols] += Ke, skipping negative indices; accumulates repeats."""
    backend = backend or ("numba" if USE_NUMBA else "numpy")
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    Ke = np.ascontiguousarray(Ke, dtype=float)
    if backend == "numba":
        _scatter_jit(K, rows, cols, Ke)
    else:
        _scatter_numpy(K, rows, cols, Ke)
