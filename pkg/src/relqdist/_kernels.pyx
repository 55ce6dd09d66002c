# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: the grouped bilinear form behind every scalar
product of sparse engine states.  Import of this module is optional; the
NumPy fallback in ``_kernels_fallback`` is interface-identical."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def group_dot(cnp.int64_t[::1] startsA, cnp.int64_t[::1] countsA,
              cnp.int64_t[::1] startsB, cnp.int64_t[::1] countsB,
              double[::1] wr,
              cnp.int64_t[::1] uidA, complex[::1] cvalsA,
              cnp.int64_t[::1] uidB, complex[::1] valsB,
              double[:, ::1] M):
    cdef Py_ssize_t k, i, j, ia0, ib0, na, nb
    cdef double complex total = 0
    cdef double complex acc, ca
    cdef Py_ssize_t ua
    for k in range(wr.shape[0]):
        ia0 = startsA[k]
        ib0 = startsB[k]
        na = countsA[k]
        nb = countsB[k]
        acc = 0
        for i in range(na):
            ca = cvalsA[ia0 + i]
            ua = uidA[ia0 + i]
            for j in range(nb):
                acc = acc + ca * valsB[ib0 + j] * M[ua, uidB[ib0 + j]]
        total = total + wr[k] * acc
    return complex(total)


def coalesce_sorted(cnp.int64_t[::1] keys, complex[::1] vals):
    cdef Py_ssize_t n = keys.shape[0]
    cdef Py_ssize_t i, nout = 0
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=complex)
    out_k = np.empty(n, dtype=np.int64)
    out_v = np.empty(n, dtype=complex)
    cdef cnp.int64_t[::1] ok = out_k
    cdef complex[::1] ov = out_v
    cdef cnp.int64_t cur = keys[0]
    cdef double complex acc = vals[0]
    for i in range(1, n):
        if keys[i] == cur:
            acc = acc + vals[i]
        else:
            ok[nout] = cur
            ov[nout] = acc
            nout += 1
            cur = keys[i]
            acc = vals[i]
    ok[nout] = cur
    ov[nout] = acc
    nout += 1
    return out_k[:nout], out_v[:nout]
