# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled block kernels for the SIC-family detectors.

All work happens in the matched-filter domain: with ``z = H^H y`` and the
Gram matrix ``G = H^H H``, cancelling user k with symbol b updates the
residual matched outputs as ``zr -= G[:, k] * b``, and the residual norm of
a candidate list is ``|y|^2 - 2 Re(b^H z) + b^H G b`` (the constant
``|y|^2`` is dropped). Every row of a block is independent, so the loop
runs without the GIL.
"""

import numpy as np

from libc.math cimport fabs, INFINITY
from libc.string cimport memcpy

ctypedef double complex cplx


cdef struct Problem:
    int K
    int nc
    int n_group
    double d_th
    bint band
    bint check_imag
    const cplx* G
    const double* e
    const cplx* pts


cdef struct Scratch:
    cplx* zr
    cplx* zr2
    cplx* u
    cplx* u2
    cplx* b
    int* dec2
    int* order2
    int* best_dec
    int* best_order
    int* group
    int* group2
    int* rel
    int* unrel


cdef inline double abs2(cplx z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef inline int slice_idx(cplx u, const cplx* pts, int nc) noexcept nogil:
    cdef int m, best = 0
    cdef double d, bd = abs2(u - pts[0])
    for m in range(1, nc):
        d = abs2(u - pts[m])
        if d < bd:
            bd = d
            best = m
    return best


cdef inline bint reliable(const Problem* pr, cplx u) noexcept nogil:
    if pr.band:
        if fabs(u.real) < pr.d_th:
            return 0
        if pr.check_imag and fabs(u.imag) < pr.d_th:
            return 0
        return 1
    return abs2(u - pr.pts[slice_idx(u, pr.pts, pr.nc)]) < pr.d_th * pr.d_th


cdef inline void cancel(const Problem* pr, cplx* zr, int k, cplx b) noexcept nogil:
    cdef int j, K = pr.K
    for j in range(K):
        zr[j] = zr[j] - pr.G[j * K + k] * b


cdef void pick_group(const Problem* pr, const cplx* zr, const int* dec, int pos, int g,
                     const int* forced, int* group) noexcept nogil:
    cdef int t, k, s, best
    cdef double v, bv
    cdef bint taken
    if forced != NULL:
        for t in range(g):
            group[t] = forced[pos + t]
        return
    for t in range(g):
        best = -1
        bv = 0.0
        for k in range(pr.K):
            if dec[k] >= 0:
                continue
            taken = 0
            for s in range(t):
                if group[s] == k:
                    taken = 1
            if taken:
                continue
            if pos == 0:
                v = pr.e[k]
            else:
                v = abs2(zr[k]) / (pr.e[k] * pr.e[k])
            if best < 0 or v > bv:
                best = k
                bv = v
        group[t] = best


cdef void sic_stages(const Problem* pr, cplx* zr, int* dec, int* order, int pos,
                     const int* forced, int* group, cplx* u, int stage) noexcept nogil:
    cdef int g, t, k
    while pos < pr.K:
        g = pr.K - pos
        if stage < g:
            g = stage
        pick_group(pr, zr, dec, pos, g, forced, group)
        for t in range(g):
            k = group[t]
            u[t] = zr[k] / pr.e[k]
        for t in range(g):
            k = group[t]
            dec[k] = slice_idx(u[t], pr.pts, pr.nc)
        for t in range(g):
            k = group[t]
            cancel(pr, zr, k, pr.pts[dec[k]])
            order[pos + t] = k
        pos += g


cdef double metric(const Problem* pr, const cplx* z, const int* dec, cplx* b) noexcept nogil:
    cdef int j, k, K = pr.K
    cdef cplx acc
    cdef double m = 0.0
    for k in range(K):
        b[k] = pr.pts[dec[k]]
    for j in range(K):
        acc = 0
        for k in range(K):
            acc = acc + pr.G[j * K + k] * b[k]
        m += (b[j].conjugate() * acc).real - 2.0 * (b[j].conjugate() * z[j]).real
    return m


cdef void sic_one(const Problem* pr, Scratch* s, const cplx* z, const int* forced,
                  int* dec, int* order) noexcept nogil:
    cdef int k
    for k in range(pr.K):
        s.zr[k] = z[k]
        dec[k] = -1
    sic_stages(pr, s.zr, dec, order, 0, forced, s.group, s.u, pr.n_group)


cdef double gl_sic_one(const Problem* pr, Scratch* s, const cplx* z, const int* forced,
                       int* dec, int* order, int* branch, int* ncand) noexcept nogil:
    cdef int K = pr.K
    cdef int k, t, g, j, nq, ncomb, rem, pos = 0, bid = 0
    cdef double m, best

    for k in range(K):
        s.zr[k] = z[k]
        dec[k] = -1
    while pos < K:
        g = K - pos
        if pr.n_group < g:
            g = pr.n_group
        pick_group(pr, s.zr, dec, pos, g, forced, s.group)
        nq = 0
        for t in range(g):
            k = s.group[t]
            s.u[t] = s.zr[k] / pr.e[k]
            s.rel[t] = reliable(pr, s.u[t])
            if not s.rel[t]:
                s.unrel[nq] = k
                nq += 1
        if nq == 0:
            for t in range(g):
                k = s.group[t]
                dec[k] = slice_idx(s.u[t], pr.pts, pr.nc)
            for t in range(g):
                k = s.group[t]
                cancel(pr, s.zr, k, pr.pts[dec[k]])
                order[pos + t] = k
            pos += g
            continue

        for t in range(g):
            if s.rel[t]:
                dec[s.group[t]] = slice_idx(s.u[t], pr.pts, pr.nc)
        ncomb = 1
        for t in range(nq):
            ncomb *= pr.nc
        best = INFINITY
        for j in range(ncomb):
            memcpy(s.zr2, s.zr, K * sizeof(cplx))
            memcpy(s.dec2, dec, K * sizeof(int))
            memcpy(s.order2, order, pos * sizeof(int))
            # first unreliable user is the most significant digit
            rem = j
            for t in range(nq - 1, -1, -1):
                s.dec2[s.unrel[t]] = rem % pr.nc
                rem = rem // pr.nc
            for t in range(g):
                k = s.group[t]
                cancel(pr, s.zr2, k, pr.pts[s.dec2[k]])
                s.order2[pos + t] = k
            # branches are finished one user per stage
            sic_stages(pr, s.zr2, s.dec2, s.order2, pos + g, forced, s.group2, s.u2, 1)
            m = metric(pr, z, s.dec2, s.b)
            if m < best:
                best = m
                bid = j
                memcpy(s.best_dec, s.dec2, K * sizeof(int))
                memcpy(s.best_order, s.order2, K * sizeof(int))
        memcpy(dec, s.best_dec, K * sizeof(int))
        memcpy(order, s.best_order, K * sizeof(int))
        branch[0] = bid
        ncand[0] = ncomb
        return best

    branch[0] = 0
    ncand[0] = 1
    return metric(pr, z, dec, s.b)


cdef void mb_gl_sic_one(const Problem* pr, Scratch* s, const cplx* z,
                        int* bdec, int* border, double* bmetric, int* ord, int* cur, int* cand,
                        int* dec, int* order, int* branch, int* ncand) noexcept nogil:
    cdef int K = pr.K
    cdef int i, k, sh, b, base, bid, nc_
    cdef double m, m_cur, m_best
    cdef int* best_d

    bmetric[0] = gl_sic_one(pr, s, z, NULL, bdec, border, &bid, &nc_)
    for sh in range(1, K):
        for i in range(K):
            ord[i] = border[(i - sh + K) % K]
        bmetric[sh] = gl_sic_one(pr, s, z, ord, &bdec[sh * K], &border[sh * K], &bid, &nc_)
    for i in range(K):
        ord[i] = border[K - 1 - i]
    bmetric[K] = gl_sic_one(pr, s, z, ord, &bdec[K * K], &border[K * K], &bid, &nc_)

    base = 0
    for b in range(1, K + 1):
        if bmetric[b] < bmetric[base]:
            base = b
    memcpy(cur, &bdec[base * K], K * sizeof(int))
    m_cur = bmetric[base]
    best_d = s.best_dec
    for k in range(K):
        memcpy(best_d, cur, K * sizeof(int))
        m_best = m_cur
        for b in range(K + 1):
            if b == base or bdec[b * K + k] == cur[k]:
                continue
            memcpy(cand, cur, K * sizeof(int))
            cand[k] = bdec[b * K + k]
            m = metric(pr, z, cand, s.b)
            if m < m_best:
                m_best = m
                memcpy(best_d, cand, K * sizeof(int))
        memcpy(cur, best_d, K * sizeof(int))
        m_cur = m_best
    memcpy(dec, cur, K * sizeof(int))
    memcpy(order, &border[base * K], K * sizeof(int))
    branch[0] = base
    ncand[0] = K + 1


cdef void bind_scratch(Scratch* s, cplx[:, ::1] c, int[:, ::1] i) noexcept:
    s.zr = &c[0, 0]
    s.zr2 = &c[1, 0]
    s.u = &c[2, 0]
    s.u2 = &c[3, 0]
    s.b = &c[4, 0]
    s.dec2 = &i[0, 0]
    s.order2 = &i[1, 0]
    s.best_dec = &i[2, 0]
    s.best_order = &i[3, 0]
    s.group = &i[4, 0]
    s.group2 = &i[5, 0]
    s.rel = &i[6, 0]
    s.unrel = &i[7, 0]


def _prepare(Y, eff, points):
    Y = np.atleast_2d(np.asarray(Y, dtype=np.complex128))
    E = np.atleast_2d(np.asarray(eff, dtype=np.complex128))
    if Y.shape[1] != E.shape[1]:
        raise ValueError(f"observation length {Y.shape[1]} != signature length {E.shape[1]}")
    Z = np.ascontiguousarray(Y @ E.conj().T)
    G = np.ascontiguousarray(E.conj() @ E.T)
    e = np.array(G.diagonal().real, order="C")
    if np.any(e == 0):
        raise ValueError("zero-energy signature")
    pts = np.array(points, dtype=np.complex128, order="C")
    return Z, G, e, pts


def _forced_array(forced, K):
    if forced is None:
        return None
    f = np.ascontiguousarray(np.asarray(forced, dtype=np.int32))
    if sorted(f.tolist()) != list(range(K)):
        raise ValueError(f"forced ordering {f.tolist()} is not a permutation of 0..{K - 1}")
    return f


cdef void fill_problem(Problem* pr, cplx[:, ::1] G, double[::1] e, cplx[::1] pts,
                       int n_group, double d_th, bint band) noexcept:
    pr.K = e.shape[0]
    pr.nc = pts.shape[0]
    pr.n_group = n_group
    pr.d_th = d_th
    pr.band = band
    pr.check_imag = pr.nc == 4
    pr.G = &G[0, 0]
    pr.e = &e[0]
    pr.pts = &pts[0]


def _block(int mode, Y, eff, points, double d_th, int n_group, forced, bint full, grey="disc"):
    Z_, G_, e_, pts_ = _prepare(Y, eff, points)
    cdef cplx[:, ::1] Z = Z_
    cdef cplx[:, ::1] G = G_
    cdef double[::1] e = e_
    cdef cplx[::1] pts = pts_
    cdef int P = Z.shape[0]
    cdef int K = Z.shape[1]
    if not 1 <= n_group <= K:
        raise ValueError(f"n_group must be in [1, {K}], got {n_group}")
    f_ = _forced_array(forced, K)
    cdef int[::1] f
    cdef const int* fptr = NULL
    if f_ is not None:
        f = f_
        fptr = &f[0]

    dec_ = np.empty((P, K), dtype=np.int32)
    order_ = np.empty((P, K), dtype=np.int32)
    branch_ = np.zeros(P, dtype=np.int32)
    ncand_ = np.ones(P, dtype=np.int32)
    cdef int[:, ::1] dec = dec_
    cdef int[:, ::1] order = order_
    cdef int[::1] branch = branch_
    cdef int[::1] ncand = ncand_

    cdef cplx[:, ::1] wc = np.zeros((5, K), dtype=np.complex128)
    cdef int[:, ::1] wi = np.zeros((11, K), dtype=np.int32)
    bdec_ = np.zeros(((K + 1) * K,), dtype=np.int32)
    border_ = np.zeros(((K + 1) * K,), dtype=np.int32)
    bmet_ = np.zeros(K + 1, dtype=np.float64)
    cdef int[::1] bdec = bdec_
    cdef int[::1] border = border_
    cdef double[::1] bmet = bmet_

    cdef Problem pr
    cdef Scratch s
    if grey not in ("disc", "band"):
        raise ValueError(f"grey must be 'disc' or 'band', got {grey!r}")
    fill_problem(&pr, G, e, pts, n_group, d_th, grey == "band")
    bind_scratch(&s, wc, wi)
    cdef int p
    if P == 0:
        return (dec_, order_, branch_, ncand_) if full else dec_
    with nogil:
        for p in range(P):
            if mode == 0:
                sic_one(&pr, &s, &Z[p, 0], fptr, &dec[p, 0], &order[p, 0])
            elif mode == 1:
                gl_sic_one(&pr, &s, &Z[p, 0], fptr, &dec[p, 0], &order[p, 0],
                           &branch[p], &ncand[p])
            else:
                mb_gl_sic_one(&pr, &s, &Z[p, 0], &bdec[0], &border[0], &bmet[0],
                              &wi[8, 0], &wi[9, 0], &wi[10, 0],
                              &dec[p, 0], &order[p, 0], &branch[p], &ncand[p])
    if full:
        return dec_, order_, branch_, ncand_
    return dec_


def sic_block(Y, eff, points, n_group, forced=None, full=False):
    """Staged SIC on every row of ``Y``; returns ``(P, K)`` symbol indices."""
    return _block(0, Y, eff, points, 0.0, n_group, forced, full)


def glsic_block(Y, eff, points, d_th, n_group, forced=None, full=False, grey="disc"):
    """GL-SIC on every row of ``Y``.

    With ``full=True`` also returns the realized orderings, the winning
    branch index and the number of enumerated lists per row.
    """
    return _block(1, Y, eff, points, d_th, n_group, forced, full, grey)


def mbglsic_block(Y, eff, points, d_th, n_group, full=False, grey="disc"):
    return _block(2, Y, eff, points, d_th, n_group, None, full, grey)
