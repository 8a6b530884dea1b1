# cython: boundscheck=False, wraparound=False, cdivision=True
"""Native kernels for the quantization hot path.

Semantics are pinned by the pure-NumPy twin in ``_core_py``; both backends
must agree code-for-code (ties in the nearest-centroid scan resolve to the
smallest centroid index, scatter accumulation runs subspace-major then
batch-major).
"""

import numpy as np

cimport cython
from cython.parallel cimport prange
from libc.math cimport INFINITY


ctypedef fused floating:
    float
    double


@cython.boundscheck(False)
@cython.wraparound(False)
def nearest_centroids(floating[:, :, ::1] vecs,
                      floating[:, :, ::1] centroids,
                      int[::1] kmax,
                      int[:, ::1] out):
    """Exhaustive nearest-centroid scan per subspace.

    vecs: (B, D, S) query subvectors, centroids: (D, K, S), kmax: (D,)
    per-subspace cap on how many leading centroids may be used.
    Writes argmin indices into out (B, D); ties pick the smallest index.
    """
    cdef Py_ssize_t B = vecs.shape[0]
    cdef Py_ssize_t D = vecs.shape[1]
    cdef Py_ssize_t S = vecs.shape[2]
    cdef Py_ssize_t b, s, k, j, best
    cdef int km
    cdef floating dist, bestd, diff

    for b in prange(B, nogil=True, schedule="static"):
        for s in range(D):
            km = kmax[s]
            bestd = INFINITY
            best = 0
            for k in range(km):
                dist = 0
                for j in range(S):
                    diff = vecs[b, s, j] - centroids[s, k, j]
                    dist = dist + diff * diff
                if dist < bestd:
                    bestd = dist
                    best = k
            out[b, s] = best


@cython.boundscheck(False)
@cython.wraparound(False)
def scatter_codebook_grads(int[:, ::1] codes,
                           floating[:, :, ::1] grads,
                           floating[:, :, ::1] out):
    """Accumulate per-row gradients onto their assigned centroids.

    codes: (B, D), grads: (B, D, S), out: (D, K, S).
    out[s, codes[b, s], :] += grads[b, s, :], iterating b in ascending order
    within each subspace (threads split over subspaces, so writes never race).
    """
    cdef Py_ssize_t B = codes.shape[0]
    cdef Py_ssize_t D = codes.shape[1]
    cdef Py_ssize_t S = grads.shape[2]
    cdef Py_ssize_t b, s, j
    cdef int k

    for s in prange(D, nogil=True, schedule="static"):
        for b in range(B):
            k = codes[b, s]
            for j in range(S):
                out[s, k, j] += grads[b, s, j]
