"""Uncompressed and post-hoc compressed table schemes: full, low-rank, scalar-quantized."""

from dataclasses import dataclass

import numpy as np

from ..params import Parameter
from .base import EmbeddingScheme, ServingModeError


@dataclass
class _RowsCtx:
    ids: np.ndarray
    rows: np.ndarray  # gathered input rows (P rows for low-rank)


class FullEmbedding(EmbeddingScheme):
    """One learned row per id; serving size 32*n*d bits."""

    kind = "full"

    def __init__(self, n, d, rng: np.random.Generator, dtype=np.float32, init_std=0.01):
        super().__init__(n, d, dtype)
        w = rng.normal(0.0, init_std, size=(n, d)).astype(self.dtype)
        self.table = Parameter("table", w, sparse_rows=True)

    def lookup(self, ids):
        if self.frozen:
            return self.lookup_serving(ids), None
        ids = self._check_ids(ids)
        return self.table.value[ids], _RowsCtx(ids, None)

    def lookup_serving(self, ids):
        ids = self._check_ids(ids)
        return self.table.value[ids]

    def backward(self, ctx, grad):
        if ctx is None:
            raise ServingModeError("no training context")
        self.table.add_row_grad(ctx.ids, grad)

    def parameters(self):
        return [self.table]

    def freeze(self):
        self.frozen = True
        return self

    def size_bits(self):
        return {"table": 32.0 * self.n * self.d}

    def all_rows(self):
        return self.table.value


class LowRankEmbedding(EmbeddingScheme):
    """Factored table W = P @ Q with rank r; serving size 32*n*r + 32*r*d bits."""

    kind = "lowrank"

    def __init__(self, n, d, r, rng: np.random.Generator, dtype=np.float32, init_std=0.01):
        super().__init__(n, d, dtype)
        if not (0 < r <= d):
            raise ValueError("rank must be in (0, d]")
        self.r = int(r)
        p = rng.normal(0.0, init_std, size=(n, r)).astype(self.dtype)
        # Q scaled so P @ Q matches the init variance of a full table
        q = rng.normal(0.0, 1.0 / np.sqrt(r), size=(r, d)).astype(self.dtype)
        self.p = Parameter("p", p, sparse_rows=True)
        self.q = Parameter("q", q)

    def lookup(self, ids):
        if self.frozen:
            return self.lookup_serving(ids), None
        ids = self._check_ids(ids)
        rows = self.p.value[ids]
        return rows @ self.q.value, _RowsCtx(ids, rows)

    def lookup_serving(self, ids):
        ids = self._check_ids(ids)
        return self.p.value[ids] @ self.q.value

    def backward(self, ctx, grad):
        if ctx is None:
            raise ServingModeError("no training context")
        self.p.add_row_grad(ctx.ids, grad @ self.q.value.T)
        self.q.add_grad(ctx.rows.T @ grad)

    def parameters(self):
        return [self.p, self.q]

    def freeze(self):
        self.frozen = True
        return self

    def size_bits(self):
        return {"factors_p": 32.0 * self.n * self.r, "factors_q": 32.0 * self.r * self.d}

    def all_rows(self):
        return self.p.value @ self.q.value


def _affine_quantize(w: np.ndarray, bits: int):
    """Per-dimension affine quantization: codes plus float64 column endpoints.

    Maps values to round((v-min)/(max-min)*(2^b-1)), ties rounding to even.
    A constant column quantizes to all-zero codes. All arithmetic runs in
    float64 so the half-step reconstruction bound holds exactly; the column
    endpoints are exact values taken from the table, so they stay losslessly
    representable in the table's own dtype.
    """
    if not (1 <= bits <= 16):
        raise ValueError("bits must be in [1, 16]")
    w = np.asarray(w, dtype=np.float64)
    mins = w.min(axis=0)
    maxs = w.max(axis=0)
    span = maxs - mins
    levels = (1 << bits) - 1
    scaled = np.where(span > 0, (w - mins) / np.where(span > 0, span, 1.0) * levels, 0.0)
    codes = np.clip(np.rint(scaled), 0, levels).astype(np.uint16)
    return codes, mins, maxs


class ScalarQuantizedEmbedding(EmbeddingScheme):
    """Full table during training; per-dimension b-bit buckets after freeze.

    Not end-to-end: quantization happens once at freeze time, so training
    gradients are exactly those of a full table.
    """

    kind = "sq"

    def __init__(self, n, d, bits, rng: np.random.Generator, dtype=np.float32, init_std=0.01):
        super().__init__(n, d, dtype)
        if not (1 <= bits <= 16):
            raise ValueError("bits must be in [1, 16]")
        self.bits = int(bits)
        w = rng.normal(0.0, init_std, size=(n, d)).astype(self.dtype)
        self.table = Parameter("table", w, sparse_rows=True)
        self.codes: np.ndarray | None = None
        self.mins: np.ndarray | None = None
        self.maxs: np.ndarray | None = None

    def _dequant(self, codes_rows: np.ndarray) -> np.ndarray:
        # float64 throughout: keeps |dequant - v| within half a step even for
        # columns whose offset dwarfs their span
        levels = (1 << self.bits) - 1
        step = (self.maxs - self.mins) / levels
        return self.mins + codes_rows.astype(np.float64) * step

    def lookup(self, ids):
        if self.frozen:
            return self.lookup_serving(ids), None
        ids = self._check_ids(ids)
        return self.table.value[ids], _RowsCtx(ids, None)

    def lookup_serving(self, ids):
        ids = self._check_ids(ids)
        if self.frozen:
            return self._dequant(self.codes[ids])
        return self.table.value[ids]

    def backward(self, ctx, grad):
        if ctx is None:
            raise ServingModeError("no training context")
        self.table.add_row_grad(ctx.ids, grad)

    def parameters(self):
        return [self.table] if self.table is not None else []

    def freeze(self):
        if not self.frozen:
            self.codes, self.mins, self.maxs = _affine_quantize(self.table.value, self.bits)
            self.table = None
            self.frozen = True
        return self

    def size_bits(self):
        # Per-dimension min/max overhead reported as its own line item so the
        # n*d*b term stays directly comparable.
        return {"codes": float(self.n * self.d * self.bits),
                "minmax_overhead": 64.0 * self.d}

    def all_rows(self):
        if self.frozen:
            return self._dequant(self.codes)
        return self.table.value


def scalar_quantize_table(w: np.ndarray, bits: int) -> ScalarQuantizedEmbedding:
    """Quantize an existing learned table; the result is already frozen."""
    w = np.asarray(w)
    if w.ndim != 2:
        raise ValueError("expected an (n, d) table")
    scheme = ScalarQuantizedEmbedding.__new__(ScalarQuantizedEmbedding)
    EmbeddingScheme.__init__(scheme, w.shape[0], w.shape[1], w.dtype)
    scheme.bits = int(bits)
    scheme.table = None
    scheme.codes, scheme.mins, scheme.maxs = _affine_quantize(w, bits)
    scheme.frozen = True
    return scheme
