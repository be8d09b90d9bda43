# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled framer kernels. Same contracts as ``dsiso._pykernels``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def affine_framer(const double[:, :, ::1] Mp, const double[:, :, ::1] Mm,
                  const double[:, :, ::1] W, const double[:, ::1] lo, const double[:, ::1] hi,
                  const double[:, ::1] c_lo, const double[:, ::1] c_hi, const double[:, ::1] xi):
    cdef Py_ssize_t N = Mp.shape[0], p = Mp.shape[1], q = Mp.shape[2], r = W.shape[2]
    cdef Py_ssize_t a, i, j
    cdef double acc_lo, acc_hi, drive, mp, mm
    out_lo = np.empty((N, p), dtype=np.float64)
    out_hi = np.empty((N, p), dtype=np.float64)
    cdef double[:, ::1] olo = out_lo
    cdef double[:, ::1] ohi = out_hi
    with nogil:
        for a in range(N):
            for i in range(p):
                drive = 0.0
                for j in range(r):
                    drive = drive + W[a, i, j] * xi[a, j]
                acc_lo = 0.0
                acc_hi = 0.0
                for j in range(q):
                    mp = Mp[a, i, j]
                    mm = Mm[a, i, j]
                    acc_lo = acc_lo + mp * lo[a, j] - mm * hi[a, j]
                    acc_hi = acc_hi + mp * hi[a, j] - mm * lo[a, j]
                olo[a, i] = acc_lo + c_lo[a, i] + drive
                ohi[a, i] = acc_hi + c_hi[a, i] + drive
    return out_lo, out_hi


def neighborhood_intersect(const cnp.int64_t[::1] ptr, const cnp.int64_t[::1] src,
                           const double[:, ::1] cand_lo, const double[:, ::1] cand_hi):
    cdef Py_ssize_t N = ptr.shape[0] - 1, n = cand_lo.shape[1]
    cdef Py_ssize_t i, s, e, best_lo, best_hi
    cdef double vlo, vhi
    out_lo = np.empty((N, n), dtype=np.float64)
    out_hi = np.empty((N, n), dtype=np.float64)
    sel_lo = np.empty((N, n), dtype=np.int64)
    sel_hi = np.empty((N, n), dtype=np.int64)
    cdef double[:, ::1] olo = out_lo
    cdef double[:, ::1] ohi = out_hi
    cdef cnp.int64_t[:, ::1] slo = sel_lo
    cdef cnp.int64_t[:, ::1] shi = sel_hi
    with nogil:
        for i in range(N):
            for s in range(n):
                best_lo = ptr[i]
                best_hi = ptr[i]
                vlo = cand_lo[best_lo, s]
                vhi = cand_hi[best_hi, s]
                for e in range(ptr[i] + 1, ptr[i + 1]):
                    if cand_lo[e, s] > vlo:
                        vlo = cand_lo[e, s]
                        best_lo = e
                    if cand_hi[e, s] < vhi:
                        vhi = cand_hi[e, s]
                        best_hi = e
                olo[i, s] = vlo
                ohi[i, s] = vhi
                slo[i, s] = src[best_lo]
                shi[i, s] = src[best_hi]
    return out_lo, out_hi, sel_lo, sel_hi
