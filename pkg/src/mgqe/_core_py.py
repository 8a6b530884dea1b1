"""Pure-NumPy twin of the native kernels in ``_core.pyx``.

Used automatically when the compiled extension is unavailable (or when
``MGQE_FORCE_PYTHON=1``). Both backends implement identical semantics; the
parity tests assert code-for-code agreement.
"""

import numpy as np

# Cap on the (B, D, K) distance tensor materialized per chunk, in elements.
_CHUNK_ELEMS = 8_000_000


def nearest_centroids(vecs: np.ndarray, centroids: np.ndarray, kmax: np.ndarray,
                      out: np.ndarray) -> None:
    """Exhaustive nearest-centroid scan per subspace.

    vecs: (B, D, S), centroids: (D, K, S), kmax: (D,) per-subspace cap.
    Writes argmin indices into out (B, D); ties pick the smallest index
    (np.argmin returns the first minimum).
    """
    B, D, S = vecs.shape
    K = centroids.shape[1]
    if B == 0:
        return
    full = bool(np.all(kmax == K))
    rows = max(1, _CHUNK_ELEMS // max(1, D * K * S))
    for lo in range(0, B, rows):
        hi = min(B, lo + rows)
        # (chunk, D, K, S) differences, reduced over the subspace dimension
        diff = vecs[lo:hi, :, None, :] - centroids[None, :, :, :]
        d2 = np.einsum("bdks,bdks->bdk", diff, diff)
        if not full:
            mask = np.arange(K)[None, :] >= np.asarray(kmax)[:, None]
            d2[:, mask] = np.inf
        out[lo:hi] = np.argmin(d2, axis=2)


def scatter_codebook_grads(codes: np.ndarray, grads: np.ndarray,
                           out: np.ndarray) -> None:
    """Accumulate per-row gradients onto their assigned centroids.

    codes: (B, D), grads: (B, D, S), out: (D, K, S). Matches the native
    kernel's accumulation order (subspace-major, batch ascending).
    """
    D = codes.shape[1]
    for s in range(D):
        np.add.at(out[s], codes[:, s], grads[:, s])
