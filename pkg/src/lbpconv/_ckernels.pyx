# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: synchronous log-domain message update, per-edge quotient
residual and CSR matrix-vector product.

Every reduction runs in a fixed order so results do not depend on how the
caller schedules work.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

ctypedef cnp.int64_t idx_t

NAME = "cython"


cdef void _cavity_sums(const idx_t[::1] edge_card, const idx_t[::1] msg_off,
                       const idx_t[::1] cav_off, const idx_t[::1] cav_idx,
                       const double[::1] lam, double[::1] vf) noexcept nogil:
    cdef Py_ssize_t E = edge_card.shape[0]
    cdef Py_ssize_t e, q, s, c, o, oq
    for e in range(E):
        c = edge_card[e]
        o = msg_off[e]
        for s in range(c):
            vf[o + s] = 0.0
        for q in range(cav_off[e], cav_off[e + 1]):
            oq = msg_off[cav_idx[q]]
            for s in range(c):
                vf[o + s] += lam[oq + s]


cdef void _factor_updates(const idx_t[::1] edge_card, const idx_t[::1] msg_off,
                          const idx_t[::1] fac_edge_off, const double[::1] log_tables,
                          const idx_t[::1] tab_off, const double[::1] lam,
                          const double[::1] vf, double[::1] out, double damping,
                          double[::1] scratch, idx_t[::1] digits,
                          double[::1] mx, double[::1] acc) noexcept nogil:
    cdef Py_ssize_t F = fac_edge_off.shape[0] - 1
    cdef Py_ssize_t I, e0, k, p, m, t, T, t0, a, cp, stride, ep, o
    cdef double val, top
    for I in range(F):
        e0 = fac_edge_off[I]
        k = fac_edge_off[I + 1] - e0
        t0 = tab_off[I]
        T = tab_off[I + 1] - t0
        stride = 1
        for p in range(k):
            ep = e0 + p
            cp = edge_card[ep]
            o = msg_off[ep]
            for a in range(cp):
                mx[a] = -INFINITY
                acc[a] = 0.0
            for m in range(k):
                digits[m] = 0
            for t in range(T):
                val = log_tables[t0 + t]
                for m in range(k):
                    if m != p:
                        val += vf[msg_off[e0 + m] + digits[m]]
                scratch[t] = val
                a = digits[p]
                if val > mx[a]:
                    mx[a] = val
                # advance the mixed-radix counter, first member fastest
                for m in range(k):
                    digits[m] += 1
                    if digits[m] < edge_card[e0 + m]:
                        break
                    digits[m] = 0
            for t in range(T):
                a = (t // stride) % cp
                acc[a] += exp(scratch[t] - mx[a])
            top = -INFINITY
            for a in range(cp):
                val = mx[a] + log(acc[a])
                if damping > 0.0:
                    val = (1.0 - damping) * val + damping * lam[o + a]
                acc[a] = val
                if val > top:
                    top = val
            for a in range(cp):
                out[o + a] = acc[a] - top
            stride *= cp


def lbp_update(layout, const double[::1] lam, double[::1] out, double damping):
    """One synchronous update: ``out`` receives the gauge-fixed new messages."""
    cache = layout.cache
    bufs = cache.get("cython_buffers")
    if bufs is None:
        bufs = (
            np.empty(layout.size, dtype=np.float64),
            np.empty(max(layout.max_table, 1), dtype=np.float64),
            np.empty(max(layout.max_arity, 1), dtype=np.int64),
            np.empty(max(layout.max_card, 1), dtype=np.float64),
            np.empty(max(layout.max_card, 1), dtype=np.float64),
        )
        cache["cython_buffers"] = bufs
    cdef double[::1] vf = bufs[0]
    cdef double[::1] scratch = bufs[1]
    cdef idx_t[::1] digits = bufs[2]
    cdef double[::1] mx = bufs[3]
    cdef double[::1] acc = bufs[4]
    cdef const idx_t[::1] edge_card = layout.edge_card
    cdef const idx_t[::1] msg_off = layout.msg_off
    cdef const idx_t[::1] cav_off = layout.cav_off
    cdef const idx_t[::1] cav_idx = layout.cav_idx
    cdef const idx_t[::1] fac_edge_off = layout.fac_edge_off
    cdef const double[::1] log_tables = layout.log_tables
    cdef const idx_t[::1] tab_off = layout.tab_off
    with nogil:
        _cavity_sums(edge_card, msg_off, cav_off, cav_idx, lam, vf)
        _factor_updates(edge_card, msg_off, fac_edge_off, log_tables, tab_off,
                        lam, vf, out, damping, scratch, digits, mx, acc)


def quotient_residual(const double[::1] a, const double[::1] b, const idx_t[::1] msg_off):
    """Return (sum, max) over edges of half the range of ``a - b``."""
    cdef Py_ssize_t E = msg_off.shape[0] - 1
    cdef Py_ssize_t e, s
    cdef double d, lo, hi, local, total = 0.0, worst = 0.0
    with nogil:
        for e in range(E):
            lo = INFINITY
            hi = -INFINITY
            for s in range(msg_off[e], msg_off[e + 1]):
                d = a[s] - b[s]
                if d < lo:
                    lo = d
                if d > hi:
                    hi = d
            local = 0.5 * (hi - lo)
            total += local
            if local > worst:
                worst = local
    return total, worst


def csr_matvec(const idx_t[::1] indptr, const idx_t[::1] indices,
               const double[::1] data, const double[::1] v):
    """``A @ v`` for a CSR matrix, accumulating each row in stored order."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t r, q
    cdef double s
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for r in range(n):
            s = 0.0
            for q in range(indptr[r], indptr[r + 1]):
                s += data[q] * v[indices[q]]
            o[r] = s
    return out
