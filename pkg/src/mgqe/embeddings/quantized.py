"""End-to-end quantized schemes: subspace codebooks, single-granularity
product quantization, and the multi-granular extension with frequency tiers.

A table row is split into D subspaces of dimension d/D. Each subspace owns K
learnable centroids; a row is represented by the index of its nearest centroid
per subspace. During training the raw rows exist alongside the codebooks and
gradients pass straight through the quantization; at freeze time the raw rows
are discarded and only integer codes plus codebooks remain.
"""

from dataclasses import dataclass

import numpy as np

from .. import backend
from ..params import Parameter
from .base import EmbeddingScheme, ServingModeError

CENTROID_NOISE_STD = 1e-3


class CodebookSet:
    """Per-subspace centroid tables: D subspaces x K centroids of dim d/D."""

    def __init__(self, table: np.ndarray, name: str = "codebook"):
        if table.ndim != 3:
            raise ValueError("codebook table must be (D, K, subdim)")
        if table.shape[1] < 1:
            raise ValueError("need at least one centroid per subspace")
        self.param = Parameter(name, table)

    @property
    def table(self) -> np.ndarray:
        return self.param.value

    @property
    def num_subspaces(self) -> int:
        return self.param.value.shape[0]

    @property
    def num_centroids(self) -> int:
        return self.param.value.shape[1]

    @property
    def subdim(self) -> int:
        return self.param.value.shape[2]

    @property
    def dim(self) -> int:
        return self.num_subspaces * self.subdim

    def size_bits(self) -> float:
        # K * D * (d/D) * 32 = 32*K*d
        return 32.0 * self.num_centroids * self.dim

    @classmethod
    def init_from_rows(cls, rows: np.ndarray, num_subspaces: int, num_centroids: int,
                       rng: np.random.Generator, name: str = "codebook") -> "CodebookSet":
        """Seed centroids from sampled table rows plus small noise.

        Sampling real rows keeps every centroid inside the data cloud, which
        avoids dead centroids under the tiny-variance table init.
        """
        n, d = rows.shape
        if d % num_subspaces != 0:
            raise ValueError(f"subspace count {num_subspaces} must divide dim {d}")
        subdim = d // num_subspaces
        idx = rng.integers(0, n, size=num_centroids)
        base = rows[idx].reshape(num_centroids, num_subspaces, subdim).transpose(1, 0, 2)
        noise = rng.normal(0.0, CENTROID_NOISE_STD,
                           size=(num_subspaces, num_centroids, subdim))
        table = np.ascontiguousarray((base + noise).astype(rows.dtype))
        return cls(table, name=name)


def quantize(e: np.ndarray, codebooks: CodebookSet, max_code=None) -> np.ndarray:
    """Nearest-centroid codes for one vector or a batch of vectors.

    e: (d,) or (B, d). max_code caps the number of usable leading centroids,
    either globally (int) or per subspace (length-D array); tiers pass their
    own cap here. Ties resolve to the smallest centroid index.
    """
    table = codebooks.table
    D, K, S = table.shape
    arr = np.asarray(e, dtype=table.dtype)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.shape[1] != D * S:
        raise ValueError(f"expected vectors of dim {D * S}, got {arr.shape[1]}")
    if max_code is None:
        kmax = np.full(D, K, dtype=np.int32)
    else:
        kmax = np.broadcast_to(np.asarray(max_code, dtype=np.int32), (D,)).copy()
        if kmax.min() < 1 or kmax.max() > K:
            raise ValueError("max_code entries must be in [1, K]")
    vecs = np.ascontiguousarray(arr.reshape(arr.shape[0], D, S))
    codes = np.empty((arr.shape[0], D), dtype=np.int32)
    backend.nearest_centroids(vecs, np.ascontiguousarray(table), kmax, codes)
    return codes[0] if single else codes


def decode(codebooks: CodebookSet, codes: np.ndarray) -> np.ndarray:
    """Concatenate the addressed centroids: (B, D) codes -> (B, d) rows."""
    table = codebooks.table
    D = table.shape[0]
    picked = table[np.arange(D)[None, :], codes]  # (B, D, S)
    return picked.reshape(codes.shape[0], D * table.shape[2])


@dataclass
class QuantizedCtx:
    """Training-forward context for straight-through backward and the VQ loss."""
    ids: np.ndarray
    unique_ids: np.ndarray
    inverse: np.ndarray
    counts: np.ndarray
    e_rows: np.ndarray   # raw rows, one per unique id
    q_rows: np.ndarray   # decoded nearest centroids, aligned with e_rows
    tier_sel: list       # per tier: indices into unique rows (None entries skipped)
    tier_codes: list     # per tier: (B_t, D_t) int32 codes


class _QuantizedBase(EmbeddingScheme):
    """Shared machinery for the single- and multi-granularity schemes."""

    def _tier_ranges(self):
        """Yield (tier_index, lo_id, hi_id, codebook, kmax) per tier."""
        raise NotImplementedError

    def _codebook_for_tier(self, t: int) -> CodebookSet:
        raise NotImplementedError

    def lookup(self, ids):
        if self.frozen:
            return self.lookup_serving(ids), None
        ids = self._check_ids(ids)
        uids, inverse, counts = np.unique(ids, return_inverse=True, return_counts=True)
        e_rows = self.raw.value[uids]
        q_rows = np.empty_like(e_rows)
        tier_sel, tier_codes = [], []
        for t, lo, hi, cb, kmax in self._tier_ranges():
            sel = np.nonzero((uids >= lo) & (uids < hi))[0]
            if sel.size == 0:
                tier_sel.append(None)
                tier_codes.append(None)
                continue
            codes = quantize(e_rows[sel], cb, max_code=kmax)
            q_rows[sel] = decode(cb, codes)
            tier_sel.append(sel)
            tier_codes.append(codes)
        ctx = QuantizedCtx(ids, uids, inverse, counts, e_rows, q_rows, tier_sel, tier_codes)
        return q_rows[inverse], ctx

    def backward(self, ctx, grad):
        # Straight-through: the raw rows receive the upstream gradient as-is.
        if ctx is None:
            raise ServingModeError("no training context (scheme is frozen)")
        buf = np.zeros_like(ctx.e_rows)
        np.add.at(buf, ctx.inverse, grad)
        self.raw.add_row_grad(ctx.unique_ids, buf)

    def vq_arrays(self, ctx):
        """Raw and quantized row batches the auxiliary loss operates on."""
        return ctx.e_rows, ctx.q_rows

    def accumulate_vq_grads(self, ctx, g_e: np.ndarray, g_q: np.ndarray) -> None:
        """Route VQ-loss gradients: g_e to raw rows, g_q to the codebooks."""
        self.raw.add_row_grad(ctx.unique_ids, g_e)
        for t, (sel, codes) in enumerate(zip(ctx.tier_sel, ctx.tier_codes)):
            if sel is None:
                continue
            cb = self._codebook_for_tier(t)
            D, _, S = cb.table.shape
            vals = np.ascontiguousarray(g_q[sel].reshape(sel.size, D, S))
            backend.scatter_codebook_grads(codes, vals, cb.param.ensure_grad())

    def lookup_serving(self, ids):
        ids = self._check_ids(ids)
        if not self.frozen:
            # decode-of-current-codes view while still training
            out, _ = self.lookup(ids)
            return out
        out = np.empty((ids.size, self.d), dtype=self.dtype)
        for t, lo, hi, cb, _ in self._tier_ranges():
            sel = np.nonzero((ids >= lo) & (ids < hi))[0]
            if sel.size == 0:
                continue
            codes = self.codes[t][ids[sel] - lo]
            out[sel] = decode(cb, codes)
        return out

    def freeze(self):
        if self.frozen:
            return self
        self.codes = []
        for t, lo, hi, cb, kmax in self._tier_ranges():
            rows = self.raw.value[lo:hi]
            self.codes.append(quantize(rows, cb, max_code=kmax))
        self.raw = None
        self.frozen = True
        return self

    def all_rows(self):
        if self.frozen:
            return self.lookup_serving(np.arange(self.n))
        out, _ = self.lookup(np.arange(self.n))
        return out


class DPQEmbedding(_QuantizedBase):
    """Product-quantized table with one capacity for every id.

    Serving size: n*D*log2(K) code bits plus 32*K*d codebook bits.
    """

    kind = "dpq"

    def __init__(self, n, d, num_subspaces, num_centroids, rng: np.random.Generator,
                 dtype=np.float32, init_std=0.01):
        super().__init__(n, d, dtype)
        if d % num_subspaces != 0:
            raise ValueError(f"subspace count {num_subspaces} must divide dim {d}")
        self.D = int(num_subspaces)
        self.K = int(num_centroids)
        raw = rng.normal(0.0, init_std, size=(n, d)).astype(self.dtype)
        self.raw = Parameter("raw", raw, sparse_rows=True)
        self.codebooks = CodebookSet.init_from_rows(self.raw.value, self.D, self.K, rng)
        self.codes: list[np.ndarray] | None = None

    def _tier_ranges(self):
        yield 0, 0, self.n, self.codebooks, self.K

    def _codebook_for_tier(self, t):
        return self.codebooks

    def parameters(self):
        if self.frozen:
            return []
        return [self.raw, self.codebooks.param]

    def size_bits(self):
        return {"codes": self.n * self.D * float(np.log2(self.K)),
                "codebook": self.codebooks.size_bits()}

    def codes_matrix(self) -> np.ndarray:
        """Frozen (n, D) code matrix (used by the code-similarity analysis)."""
        if not self.frozen:
            raise ServingModeError("codes are cached at freeze time")
        return self.codes[0]


class TierPartition:
    """Frequency-tier split of a frequency-ordered vocabulary.

    boundaries are cumulative end offsets (last one equals n); tier i covers
    ids [boundaries[i-1], boundaries[i]). Capacities must not increase from
    head to tail. The shared variant keeps one codebook sized for the head
    tier; tail tiers may only address its first K_i centroids.
    """

    VARIANTS = ("shared-vark", "unshared-vark", "unshared-vard")

    def __init__(self, boundaries, num_centroids, num_subspaces, variant="shared-vark"):
        self.boundaries = tuple(int(b) for b in boundaries)
        self.Ks = tuple(int(k) for k in num_centroids)
        self.Ds = tuple(int(x) for x in num_subspaces)
        self.variant = variant
        m = len(self.boundaries)
        if variant not in self.VARIANTS:
            raise ValueError(f"variant must be one of {self.VARIANTS}")
        if not (len(self.Ks) == len(self.Ds) == m) or m == 0:
            raise ValueError("boundaries, centroid counts and subspace counts must align")
        if any(b <= 0 for b in self.boundaries) or \
                any(a >= b for a, b in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("boundaries must be strictly increasing and positive")
        if any(a < b for a, b in zip(self.Ks, self.Ks[1:])):
            raise ValueError("per-tier centroid counts must be non-increasing")
        if any(a < b for a, b in zip(self.Ds, self.Ds[1:])):
            raise ValueError("per-tier subspace counts must be non-increasing")
        if variant != "unshared-vard" and len(set(self.Ds)) > 1:
            raise ValueError("variable subspace counts require the unshared-vard variant")
        if variant == "unshared-vard" and len(set(self.Ks)) > 1:
            raise ValueError("unshared-vard varies subspaces, not centroid counts")

    @property
    def num_tiers(self) -> int:
        return len(self.boundaries)

    @property
    def num_ids(self) -> int:
        return self.boundaries[-1]

    def tier_sizes(self) -> tuple[int, ...]:
        prev = (0,) + self.boundaries[:-1]
        return tuple(b - a for a, b in zip(prev, self.boundaries))

    def tier_of(self, ids: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.boundaries, ids, side="right")

    @classmethod
    def two_tier(cls, n: int, head_fraction: float = 0.10,
                 num_centroids=(256, 64), num_subspaces=64,
                 variant="shared-vark") -> "TierPartition":
        """Head/tail split at the top `head_fraction` of frequency-ordered ids."""
        if not (0.0 < head_fraction < 1.0):
            raise ValueError("head_fraction must be in (0, 1)")
        head = min(max(1, int(n * head_fraction)), n)
        if head == n:
            return cls((n,), num_centroids[:1], (num_subspaces,), variant)
        ds = (num_subspaces, num_subspaces) if np.isscalar(num_subspaces) else tuple(num_subspaces)
        return cls((head, n), num_centroids, ds, variant)


class MGQEEmbedding(_QuantizedBase):
    """Multi-granular quantized table: per-tier capacities over frequency tiers.

    All tiers share one raw training table. The shared variant also shares a
    single codebook, restricting tier i to its first K_i centroids; unshared
    variants keep per-tier codebooks with their own K_i (or subspace count D_i).
    """

    kind = "mgqe"

    def __init__(self, n, d, partition: TierPartition, rng: np.random.Generator,
                 dtype=np.float32, init_std=0.01):
        super().__init__(n, d, dtype)
        if partition.num_ids != n:
            raise ValueError(f"partition covers {partition.num_ids} ids, table has {n}")
        for Dt in partition.Ds:
            if d % Dt != 0:
                raise ValueError(f"subspace count {Dt} must divide dim {d}")
        self.partition = partition
        raw = rng.normal(0.0, init_std, size=(n, d)).astype(self.dtype)
        self.raw = Parameter("raw", raw, sparse_rows=True)
        self._codebooks: list[CodebookSet] = []
        if partition.variant == "shared-vark":
            cb = CodebookSet.init_from_rows(self.raw.value, partition.Ds[0],
                                            partition.Ks[0], rng)
            self._codebooks.append(cb)
        else:
            prev = 0
            for t, hi in enumerate(partition.boundaries):
                cb = CodebookSet.init_from_rows(self.raw.value[prev:hi], partition.Ds[t],
                                                partition.Ks[t], rng, name=f"codebook_t{t}")
                self._codebooks.append(cb)
                prev = hi
        self.codes: list[np.ndarray] | None = None

    def _tier_ranges(self):
        prev = 0
        for t, hi in enumerate(self.partition.boundaries):
            cb = self._codebook_for_tier(t)
            yield t, prev, hi, cb, self.partition.Ks[t]
            prev = hi

    def _codebook_for_tier(self, t):
        return self._codebooks[0] if self.partition.variant == "shared-vark" else self._codebooks[t]

    def parameters(self):
        if self.frozen:
            return []
        return [self.raw] + [cb.param for cb in self._codebooks]

    def size_bits(self):
        code_bits = 0.0
        for size, K, D in zip(self.partition.tier_sizes(), self.partition.Ks, self.partition.Ds):
            code_bits += size * D * float(np.log2(K))
        out = {"codes": code_bits}
        if self.partition.variant == "shared-vark":
            out["codebook"] = self._codebooks[0].size_bits()
        else:
            out["codebooks"] = float(sum(cb.size_bits() for cb in self._codebooks))
        return out

    def codes_matrix(self) -> np.ndarray:
        """Frozen (n, D) codes; requires every tier to share one subspace count."""
        if not self.frozen:
            raise ServingModeError("codes are cached at freeze time")
        if len(set(self.partition.Ds)) > 1:
            raise ValueError("code positions differ across tiers (variable subspaces)")
        return np.concatenate(self.codes, axis=0)


def groupwise_lookup(scheme: EmbeddingScheme, ids: np.ndarray) -> np.ndarray:
    """Batch lookup that splits ids by tier, processes each tier in one call,
    and reorders the rows back to the input order."""
    if scheme.frozen:
        return scheme.lookup_serving(ids)
    out, _ = scheme.lookup(ids)
    return out
