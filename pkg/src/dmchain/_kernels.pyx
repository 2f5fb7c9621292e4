# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: CSR matvec, Chebyshev recursion steps, bipartition sweep."""

from libc.string cimport memset

import numpy as np

from scipy.linalg.cython_lapack cimport zheev


def matvec_c(const long long[::1] indptr, const int[::1] indices,
             const double complex[::1] values, const double complex[::1] x,
             double complex[::1] out):
    cdef Py_ssize_t i, p, n = out.shape[0]
    cdef double complex acc
    for i in range(n):
        acc = 0
        for p in range(indptr[i], indptr[i + 1]):
            acc = acc + values[p] * x[indices[p]]
        out[i] = acc


def matvec_r(const long long[::1] indptr, const int[::1] indices,
             const double[::1] values, const double complex[::1] x,
             double complex[::1] out):
    cdef Py_ssize_t i, p, n = out.shape[0]
    cdef double complex acc
    for i in range(n):
        acc = 0
        for p in range(indptr[i], indptr[i + 1]):
            acc = acc + values[p] * x[indices[p]]
        out[i] = acc


def matvec_rr(const long long[::1] indptr, const int[::1] indices,
              const double[::1] values, const double[::1] x,
              double[::1] out):
    cdef Py_ssize_t i, p, n = out.shape[0]
    cdef double acc
    for i in range(n):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc = acc + values[p] * x[indices[p]]
        out[i] = acc


def norm_apply_c(const long long[::1] indptr, const int[::1] indices,
                 const double complex[::1] values, double inv_a, double shift,
                 const double complex[::1] x, double complex[::1] out):
    cdef Py_ssize_t i, p, n = out.shape[0]
    cdef double complex acc
    for i in range(n):
        acc = 0
        for p in range(indptr[i], indptr[i + 1]):
            acc = acc + values[p] * x[indices[p]]
        out[i] = inv_a * (acc - shift * x[i])


def norm_apply_r(const long long[::1] indptr, const int[::1] indices,
                 const double[::1] values, double inv_a, double shift,
                 const double complex[::1] x, double complex[::1] out):
    cdef Py_ssize_t i, p, n = out.shape[0]
    cdef double complex acc
    for i in range(n):
        acc = 0
        for p in range(indptr[i], indptr[i + 1]):
            acc = acc + values[p] * x[indices[p]]
        out[i] = inv_a * (acc - shift * x[i])


def norm_apply_rr(const long long[::1] indptr, const int[::1] indices,
                  const double[::1] values, double inv_a, double shift,
                  const double[::1] x, double[::1] out):
    cdef Py_ssize_t i, p, n = out.shape[0]
    cdef double acc
    for i in range(n):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc = acc + values[p] * x[indices[p]]
        out[i] = inv_a * (acc - shift * x[i])


def cheb_step_c(const long long[::1] indptr, const int[::1] indices,
                const double complex[::1] values, double inv_a, double shift,
                const double complex[::1] v, const double complex[::1] u,
                double complex[::1] out):
    # out = 2*((H v) - shift v)*inv_a - u; out may alias u, never v
    cdef Py_ssize_t i, p, n = out.shape[0]
    cdef double complex acc
    cdef double two_inv = 2.0 * inv_a
    for i in range(n):
        acc = 0
        for p in range(indptr[i], indptr[i + 1]):
            acc = acc + values[p] * v[indices[p]]
        out[i] = two_inv * (acc - shift * v[i]) - u[i]


def cheb_step_r(const long long[::1] indptr, const int[::1] indices,
                const double[::1] values, double inv_a, double shift,
                const double complex[::1] v, const double complex[::1] u,
                double complex[::1] out):
    cdef Py_ssize_t i, p, n = out.shape[0]
    cdef double complex acc
    cdef double two_inv = 2.0 * inv_a
    for i in range(n):
        acc = 0
        for p in range(indptr[i], indptr[i + 1]):
            acc = acc + values[p] * v[indices[p]]
        out[i] = two_inv * (acc - shift * v[i]) - u[i]


def cheb_step_rr(const long long[::1] indptr, const int[::1] indices,
                 const double[::1] values, double inv_a, double shift,
                 const double[::1] v, const double[::1] u,
                 double[::1] out):
    cdef Py_ssize_t i, p, n = out.shape[0]
    cdef double acc
    cdef double two_inv = 2.0 * inv_a
    for i in range(n):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc = acc + values[p] * v[indices[p]]
        out[i] = two_inv * (acc - shift * v[i]) - u[i]


def ggm_cut_sweep(const double complex[::1] amps,
                  const int[::1] row_small, const int[::1] group_id,
                  const int[::1] order, const long long[::1] offsets,
                  const int[::1] d_small, const int[::1] n_groups):
    """Largest squared Schmidt coefficient over a precomputed list of cuts.

    Entries for cut c live in [offsets[c], offsets[c+1]) of the flat arrays,
    sorted by environment configuration (group) so each group is one column of
    the cut's amplitude matrix.  Returns (max lambda^2, index of first cut
    attaining it).
    """
    cdef Py_ssize_t n_cuts = d_small.shape[0]
    cdef Py_ssize_t c, lo, hi, s, e, p, q
    cdef int d, dmax = 0, rp, rq, gid
    for c in range(n_cuts):
        if d_small[c] > dmax:
            dmax = d_small[c]

    G_arr = np.empty(dmax * dmax, dtype=np.complex128)
    w_arr = np.empty(dmax, dtype=np.float64)
    cdef int lwork = 4 * dmax if dmax > 0 else 1
    work_arr = np.empty(lwork, dtype=np.complex128)
    rwork_arr = np.empty(max(1, 3 * dmax - 2), dtype=np.float64)
    cdef double complex[::1] G = G_arr
    cdef double[::1] w = w_arr
    cdef double complex[::1] work = work_arr
    cdef double[::1] rwork = rwork_arr

    cdef char jobz = b'N'
    cdef char uplo = b'L'
    cdef int info, nn, ld
    cdef double best = -1.0
    cdef Py_ssize_t best_cut = 0
    cdef double complex mp, mq

    for c in range(n_cuts):
        d = d_small[c]
        lo = offsets[c]
        hi = offsets[c + 1]
        memset(&G[0], 0, d * d * sizeof(double complex))
        s = lo
        while s < hi:
            gid = group_id[s]
            e = s + 1
            while e < hi and group_id[e] == gid:
                e += 1
            for p in range(s, e):
                mp = amps[order[p]]
                rp = row_small[p]
                G[rp * (d + 1)] = G[rp * (d + 1)] + mp * mp.conjugate()
                for q in range(p + 1, e):
                    rq = row_small[q]
                    mq = amps[order[q]]
                    # lower triangle, column-major: (i >= j) stored at i + j*d
                    if rp >= rq:
                        G[rp + rq * d] = G[rp + rq * d] + mp * mq.conjugate()
                    else:
                        G[rq + rp * d] = G[rq + rp * d] + mq * mp.conjugate()
            s = e
        nn = d
        ld = d
        zheev(&jobz, &uplo, &nn, &G[0], &ld, &w[0], &work[0], &lwork, &rwork[0], &info)
        if info != 0:
            raise RuntimeError(f"zheev failed with info={info} on cut {c}")
        if w[d - 1] > best:
            best = w[d - 1]
            best_cut = c
    return best, best_cut
