# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Same contracts and random-draw order as ``_fallback``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, ceil, M_PI, fabs
from libc.stdlib cimport malloc, free

ctypedef unsigned long long u64
ctypedef double complex cplx

cdef double P_FLOOR = 1e-14


cdef inline double _uniform(u64 key, u64 counter) noexcept nogil:
    cdef u64 z = key + (counter + 1) * <u64>0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EB
    z = z ^ (z >> 31)
    return <double>(z >> 11) * (1.0 / 9007199254740992.0)


cdef inline Py_ssize_t _pick(double* p, Py_ssize_t n, double u) noexcept nogil:
    cdef double total = 0.0, acc = 0.0, target
    cdef Py_ssize_t i, last = n - 1
    for i in range(n):
        if p[i] > P_FLOOR:
            total += p[i]
    for i in range(n - 1, -1, -1):
        if p[i] > P_FLOOR:
            last = i
            break
    target = u * total
    for i in range(n):
        if p[i] > P_FLOOR:
            acc += p[i]
            if acc > target:
                return i
    return last


cdef inline double _abs2(cplx z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef inline void _scaled(cplx* out, cplx* z, double d) noexcept nogil:
    """out = z / d without a complex division."""
    (<double*> out)[0] = (<double*> z)[0] / d
    (<double*> out)[1] = (<double*> z)[1] / d


cdef inline void _rowdot(cplx* out, cplx* row, cplx* v, Py_ssize_t n) noexcept nogil:
    cdef double* o = <double*> out
    cdef double* a = <double*> row
    cdef double* x = <double*> v
    cdef double re = 0.0, im = 0.0
    cdef Py_ssize_t j
    for j in range(n):
        re += a[2 * j] * x[2 * j] - a[2 * j + 1] * x[2 * j + 1]
        im += a[2 * j] * x[2 * j + 1] + a[2 * j + 1] * x[2 * j]
    o[0] = re
    o[1] = im


def walk_raw(cplx[:, :, ::1] bank, long long[:, ::1] keys, cplx[:, ::1] psi, int d_out,
             u64[::1] rng_keys, u64[::1] counters, long long[:, ::1] record):
    cdef Py_ssize_t R = keys.shape[0], n = keys.shape[1], dS = psi.shape[1]
    cdef Py_ssize_t D = bank.shape[1], nrec = record.shape[1]
    out_np = np.zeros((R, n), dtype=np.int64)
    states_np = np.zeros((R, nrec, dS), dtype=np.complex128)
    cdef long long[:, ::1] out = out_np
    cdef cplx[:, :, ::1] states = states_np
    cdef Py_ssize_t r, s, i, j, o, k, c
    cdef double norm
    cdef cplx* phi = <cplx*> malloc(D * sizeof(cplx))
    cdef double* pr = <double*> malloc(d_out * sizeof(double))
    try:
        with nogil:
            for r in range(R):
                for s in range(n + 1):
                    for c in range(nrec):
                        if record[r, c] == s:
                            for i in range(dS):
                                states[r, c, i] = psi[r, i]
                    if s == n:
                        break
                    k = keys[r, s]
                    for i in range(D):
                        _rowdot(&phi[i], &bank[k, i, 0], &psi[r, 0], dS)
                    for o in range(d_out):
                        pr[o] = 0.0
                    for i in range(dS):
                        for o in range(d_out):
                            pr[o] += _abs2(phi[i * d_out + o])
                    o = _pick(pr, d_out, _uniform(rng_keys[r], counters[r]))
                    counters[r] += 1
                    out[r, s] = o
                    norm = sqrt(pr[o])
                    for i in range(dS):
                        _scaled(&psi[r, i], &phi[i * d_out + o], norm)
    finally:
        free(phi)
        free(pr)
    return out_np, states_np


cdef inline void _matvec(cplx* out, cplx* m, Py_ssize_t ld, cplx* v, Py_ssize_t n,
                         bint adjoint) noexcept nogil:
    """out = M v (or M† v) for a row-major n×n matrix m."""
    # real arithmetic on the interleaved storage: C complex products are slow
    cdef double* o = <double*> out
    cdef double* a = <double*> m
    cdef double* x = <double*> v
    cdef Py_ssize_t i, j, k
    cdef double re, im, xr, xi
    if adjoint:
        for i in range(2 * n):
            o[i] = 0.0
        for j in range(n):
            xr = x[2 * j]
            xi = x[2 * j + 1]
            for i in range(n):
                k = 2 * (j * ld + i)
                o[2 * i] += a[k] * xr + a[k + 1] * xi
                o[2 * i + 1] += a[k] * xi - a[k + 1] * xr
    else:
        for i in range(n):
            re = 0.0
            im = 0.0
            for j in range(n):
                k = 2 * (i * ld + j)
                re += a[k] * x[2 * j] - a[k + 1] * x[2 * j + 1]
                im += a[k] * x[2 * j + 1] + a[k + 1] * x[2 * j]
            o[2 * i] = re
            o[2 * i + 1] = im


cdef Py_ssize_t _valest_one(cplx* V, long long* level, double* levels, Py_ssize_t L,
                            cplx* psi, Py_ssize_t D, cplx* c, double* pl,
                            u64 key, u64* counter) noexcept nogil:
    cdef Py_ssize_t i, a
    cdef double norm
    _matvec(c, V, D, psi, D, True)
    for a in range(L):
        pl[a] = 0.0
    for i in range(D):
        pl[level[i]] += _abs2(c[i])
    a = _pick(pl, L, _uniform(key, counter[0]))
    counter[0] += 1
    norm = sqrt(pl[a])
    for i in range(D):
        if level[i] != a:
            c[i] = 0
        else:
            _scaled(&c[i], &c[i], norm)
    _matvec(psi, V, D, c, D, False)
    return a


def valest_exact(cnp.ndarray V_, long long[::1] level, double[::1] levels, cplx[:, ::1] psi,
                 u64[::1] rng_keys, u64[::1] counters):
    cdef cplx[:, ::1] V = np.ascontiguousarray(V_, dtype=np.complex128)
    cdef Py_ssize_t R = psi.shape[0], D = psi.shape[1], L = levels.shape[0], r
    out_np = np.zeros(R)
    cdef double[::1] out = out_np
    cdef cplx* c = <cplx*> malloc(D * sizeof(cplx))
    cdef double* pl = <double*> malloc(L * sizeof(double))
    try:
        with nogil:
            for r in range(R):
                out[r] = levels[_valest_one(&V[0, 0], &level[0], &levels[0], L, &psi[r, 0], D,
                                            c, pl, rng_keys[r], &counters[r])]
    finally:
        free(c)
        free(pl)
    return out_np


def walk_persisted(cnp.ndarray V_, long long[::1] level, double[::1] levels,
                   cplx[:, :, ::1] ubank, long long[:, ::1] gbank, long long[:, ::1] xkeys,
                   cplx[:, ::1] psi, long long[::1] calls, double eta,
                   u64[::1] rng_keys, u64[::1] counters, long long[:, ::1] record):
    cdef cplx[:, ::1] V = np.ascontiguousarray(V_, dtype=np.complex128)
    cdef Py_ssize_t R = xkeys.shape[0], n = xkeys.shape[1], D = psi.shape[1]
    cdef Py_ssize_t L = levels.shape[0], nrec = record.shape[1]
    cdef Py_ssize_t G = int(np.max(gbank)) + 1 if gbank.shape[0] else 1
    group_np = np.zeros((R, n), dtype=np.int64)
    pb_np = np.zeros((R, n))
    pa_np = np.zeros((R, n))
    rounds_np = np.zeros((R, n), dtype=np.int64)
    failed_np = np.zeros((R, n), dtype=np.uint8)
    states_np = np.zeros((R, nrec, D), dtype=np.complex128)
    cdef long long[:, ::1] group = group_np
    cdef double[:, ::1] pbefore = pb_np
    cdef double[:, ::1] pafter = pa_np
    cdef long long[:, ::1] rounds = rounds_np
    cdef unsigned char[:, ::1] failed = failed_np
    cdef cplx[:, :, ::1] states = states_np
    cdef cplx* c = <cplx*> malloc(D * sizeof(cplx))
    cdef cplx* phi = <cplx*> malloc(D * sizeof(cplx))
    cdef double* pl = <double*> malloc((L if L > G else G) * sizeof(double))
    cdef unsigned char* good = <unsigned char*> malloc(L * sizeof(unsigned char))
    cdef Py_ssize_t r, s, i, a, x, g, cc
    cdef double p_prev, eps, norm, p_in, p_out
    cdef double two[2]
    cdef long long cap, nr
    cdef cplx* U
    cdef long long* grp
    try:
        with nogil:
            for r in range(R):
                for s in range(n + 1):
                    for cc in range(nrec):
                        if record[r, cc] == s:
                            for i in range(D):
                                states[r, cc, i] = psi[r, i]
                    if s == n:
                        break
                    a = _valest_one(&V[0, 0], &level[0], &levels[0], L, &psi[r, 0], D,
                                    c, pl, rng_keys[r], &counters[r])
                    p_prev = levels[a]
                    pbefore[r, s] = p_prev
                    x = xkeys[r, s]
                    U = &ubank[x, 0, 0]
                    grp = &gbank[x, 0]
                    _matvec(phi, U, D, &psi[r, 0], D, False)
                    for g in range(G):
                        pl[g] = 0.0
                    for i in range(D):
                        pl[grp[i]] += _abs2(phi[i])
                    g = _pick(pl, G, _uniform(rng_keys[r], counters[r]))
                    counters[r] += 1
                    group[r, s] = g
                    norm = sqrt(pl[g])
                    for i in range(D):
                        if grp[i] == g:
                            _scaled(&phi[i], &phi[i], norm)
                        else:
                            phi[i] = 0
                    _matvec(&psi[r, 0], U, D, phi, D, True)
                    # repair
                    eps = eta / ((calls[r] + 1) * M_PI) ** 2
                    cap = 64 * <long long> ceil(1.0 / eps)
                    for a in range(L):
                        good[a] = fabs(levels[a] - p_prev) < eps
                    nr = 0
                    while True:
                        _matvec(c, &V[0, 0], D, &psi[r, 0], D, True)
                        p_in = 0.0
                        p_out = 0.0
                        for i in range(D):
                            if good[level[i]]:
                                p_in += _abs2(c[i])
                            else:
                                p_out += _abs2(c[i])
                        two[0] = p_in
                        two[1] = p_out
                        g = _pick(two, 2, _uniform(rng_keys[r], counters[r]))
                        counters[r] += 1
                        norm = sqrt(two[g])
                        for i in range(D):
                            if (good[level[i]] != 0) == (g == 0):
                                _scaled(&c[i], &c[i], norm)
                            else:
                                c[i] = 0
                        _matvec(&psi[r, 0], &V[0, 0], D, c, D, False)
                        if g == 0:
                            break
                        nr += 1
                        _matvec(phi, U, D, &psi[r, 0], D, False)
                        p_in = 0.0
                        p_out = 0.0
                        for i in range(D):
                            if grp[i] == group[r, s]:
                                p_in += _abs2(phi[i])
                            else:
                                p_out += _abs2(phi[i])
                        two[0] = p_in
                        two[1] = p_out
                        g = _pick(two, 2, _uniform(rng_keys[r], counters[r]))
                        counters[r] += 1
                        norm = sqrt(two[g])
                        for i in range(D):
                            if (grp[i] == group[r, s]) == (g == 0):
                                _scaled(&phi[i], &phi[i], norm)
                            else:
                                phi[i] = 0
                        _matvec(&psi[r, 0], U, D, phi, D, True)
                        if nr >= cap:
                            failed[r, s] = 1
                            break
                    rounds[r, s] = nr
                    a = _valest_one(&V[0, 0], &level[0], &levels[0], L, &psi[r, 0], D,
                                    c, pl, rng_keys[r], &counters[r])
                    pafter[r, s] = levels[a]
                    calls[r] += 1
    finally:
        free(c)
        free(phi)
        free(pl)
        free(good)
    res = {"group": group_np, "p_before": pb_np, "p_after": pa_np,
           "rounds": rounds_np, "failed": failed_np}
    return res, states_np
