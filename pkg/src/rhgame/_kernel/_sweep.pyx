# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled better-response sweep. Keep in step with ``_sweep_py.py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _link_price(double v, int kind, double slope, const double[::1] bx,
                               const double[::1] by, const double[::1] bslopes) noexcept nogil:
    cdef Py_ssize_t n = bx.shape[0]
    cdef Py_ssize_t k = 0
    if kind == 0:
        return slope * v
    # index of the last breakpoint <= v, clipped to the segment range
    while k + 1 < n and bx[k + 1] <= v:
        k += 1
    if k > n - 2:
        k = n - 2
    return by[k] + bslopes[k] * (v - bx[k])


def sweep(double[:, :, ::1] x, double[:, ::1] lam, const cnp.int8_t[::1] active,
          const double[::1] mu, const cnp.int64_t[::1] offset, const cnp.int64_t[::1] eta,
          const cnp.int64_t[::1] apath_ptr, const cnp.int64_t[::1] apath_idx,
          const cnp.int64_t[::1] plink_ptr, const cnp.int64_t[::1] plink_idx,
          const cnp.int64_t[::1] plen, int price_kind, double slope,
          const double[::1] bx, const double[::1] by, const double[::1] bslopes,
          double kappa, int phase, int period, int gamma, double deadband):
    """Run ``gamma`` sweeps in place on ``x`` (agents, T, paths) and ``lam`` (T, links).

    Returns the number of swaps applied.
    """
    cdef Py_ssize_t n_agents = x.shape[0]
    cdef Py_ssize_t n_links = lam.shape[1]
    cdef int T = period
    cdef Py_ssize_t i, j, jb, ju, l, q, tb, tu, k, p0, rep
    cdef long a, b, shift, s_idx
    cdef double m, best, g, gap, d, xb, xu, acc
    cdef long pick_tb, pick_tu, pick_pb, pick_pu
    cdef double pick_gap
    cdef bint have
    cdef long swaps = 0
    cdef cnp.int64_t pb, pu

    kmax = max([apath_ptr[q + 1] - apath_ptr[q] for q in range(n_agents)] + [1])
    pp_arr = np.empty((T, kmax), dtype=np.float64)
    lp_arr = np.empty((T, max(1, n_links)), dtype=np.float64)
    cdef double[:, ::1] pp = pp_arr
    cdef double[:, ::1] lp = lp_arr

    with nogil:
        for rep in range(gamma):
            for i in range(n_agents):
                if not active[i]:
                    continue
                p0 = apath_ptr[i]
                k = apath_ptr[i + 1] - p0
                if k == 0:
                    continue
                m = mu[i]
                best = deadband
                have = False
                for s_idx in range(3):
                    shift = (s_idx - 1) * T
                    a = offset[i] - phase + shift
                    b = a + eta[i]
                    if a < 0:
                        a = 0
                    if b > T - 1:
                        b = T - 1
                    if a > b:
                        continue
                    for tb in range(a, b + 1):
                        for l in range(n_links):
                            lp[tb, l] = _link_price(lam[tb, l], price_kind, slope, bx, by, bslopes)
                        for j in range(k):
                            q = apath_idx[p0 + j]
                            acc = lp[tb, plink_idx[plink_ptr[q]]]
                            for l in range(plink_ptr[q] + 1, plink_ptr[q + 1]):
                                acc = acc + lp[tb, plink_idx[l]]
                            pp[tb, j] = acc
                    for tb in range(a, b + 1):
                        for tu in range(a, b + 1):
                            for jb in range(k):
                                xb = x[i, tb, apath_idx[p0 + jb]]
                                for ju in range(k):
                                    if tb == tu and jb == ju:
                                        continue
                                    xu = x[i, tu, apath_idx[p0 + ju]]
                                    gap = pp[tu, ju] - pp[tb, jb]
                                    g = gap * (m - xb)
                                    g = g * xu
                                    if g > best:
                                        best = g
                                        have = True
                                        pick_tb = tb
                                        pick_tu = tu
                                        pick_pb = apath_idx[p0 + jb]
                                        pick_pu = apath_idx[p0 + ju]
                                        pick_gap = gap
                if not have:
                    continue
                pb = pick_pb
                pu = pick_pu
                d = pick_gap / (kappa * <double>(plen[pb] + plen[pu]))
                if d < 0.0:
                    d = 0.0
                xb = x[i, pick_tb, pb]
                xu = x[i, pick_tu, pu]
                if m - xb < d:
                    d = m - xb
                if xu < d:
                    d = xu
                if not d > 0.0:
                    continue
                g = xb + d
                x[i, pick_tb, pb] = g if g < m else m
                g = xu - d
                x[i, pick_tu, pu] = g if g > 0.0 else 0.0
                for l in range(plink_ptr[pb], plink_ptr[pb + 1]):
                    lam[pick_tb, plink_idx[l]] += d
                for l in range(plink_ptr[pu], plink_ptr[pu + 1]):
                    lam[pick_tu, plink_idx[l]] -= d
                swaps += 1
    return swaps
