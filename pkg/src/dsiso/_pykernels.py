"""NumPy implementations of the framer kernels.

``affine_framer`` evaluates, for every agent ``a`` at once,

    lo' = Mp lo - Mm hi + c_lo + W xi
    hi' = Mp hi - Mm lo + c_hi + W xi

``neighborhood_intersect`` takes candidate framers laid out in CSR order
(``src[ptr[i]:ptr[i+1]]`` are the senders heard by node ``i``, self first)
and returns the elementwise max of lowers / min of uppers plus the sender
that attained each. Ties go to the earliest candidate.
"""
import numpy as np


def affine_framer(Mp, Mm, W, lo, hi, c_lo, c_hi, xi):
    drive = np.einsum("aij,aj->ai", W, xi)
    lo_out = np.einsum("aij,aj->ai", Mp, lo) - np.einsum("aij,aj->ai", Mm, hi) + c_lo + drive
    hi_out = np.einsum("aij,aj->ai", Mp, hi) - np.einsum("aij,aj->ai", Mm, lo) + c_hi + drive
    return lo_out, hi_out


def neighborhood_intersect(ptr, src, cand_lo, cand_hi):
    N = len(ptr) - 1
    n = cand_lo.shape[1]
    out_lo = np.empty((N, n))
    out_hi = np.empty((N, n))
    sel_lo = np.empty((N, n), dtype=np.int64)
    sel_hi = np.empty((N, n), dtype=np.int64)
    cols = np.arange(n)
    for i in range(N):
        a, b = ptr[i], ptr[i + 1]
        seg_lo = cand_lo[a:b]
        seg_hi = cand_hi[a:b]
        k_lo = np.argmax(seg_lo, axis=0)
        k_hi = np.argmin(seg_hi, axis=0)
        out_lo[i] = seg_lo[k_lo, cols]
        out_hi[i] = seg_hi[k_hi, cols]
        sel_lo[i] = src[a + k_lo]
        sel_hi[i] = src[a + k_hi]
    return out_lo, out_hi, sel_lo, sel_hi
