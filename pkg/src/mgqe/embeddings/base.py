"""Embedding scheme contract shared by all five table variants.

Every scheme maps integer ids to d-dimensional rows through the same
forward/backward surface, so models never care which compression is in
play. Training-mode lookups return a context object that the backward
pass (and, for quantized schemes, the auxiliary quantization loss)
consumes. Frozen schemes are immutable and safe for concurrent reads.
"""

from abc import ABC, abstractmethod

import numpy as np

from ..params import Parameter


class ServingModeError(RuntimeError):
    """Raised when a training-only operation hits a frozen scheme."""


class EmbeddingScheme(ABC):
    """Base class: n rows of dimension d, trainable or frozen."""

    kind: str = "?"

    def __init__(self, n: int, d: int, dtype=np.float32):
        if n <= 0 or d <= 0:
            raise ValueError("n and d must be positive")
        self.n = int(n)
        self.d = int(d)
        self.dtype = np.dtype(dtype)
        self.frozen = False

    def _check_ids(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids)
        if ids.ndim != 1:
            ids = ids.reshape(-1)
        if ids.size and (ids.min() < 0 or ids.max() >= self.n):
            raise IndexError(f"id out of range [0, {self.n})")
        return ids

    @abstractmethod
    def lookup(self, ids: np.ndarray):
        """Training-mode forward: returns (rows (B, d), context)."""

    @abstractmethod
    def lookup_serving(self, ids: np.ndarray) -> np.ndarray:
        """Serving-mode forward: rows (B, d), no context retained."""

    @abstractmethod
    def backward(self, ctx, grad: np.ndarray) -> None:
        """Accumulate parameter gradients for a training-mode forward."""

    @abstractmethod
    def parameters(self) -> list[Parameter]: ...

    @abstractmethod
    def freeze(self) -> "EmbeddingScheme":
        """Switch to serving mode in place (idempotent); returns self."""

    @abstractmethod
    def size_bits(self) -> dict[str, float]:
        """Serving-size components in bits (exact formula values)."""

    @abstractmethod
    def all_rows(self) -> np.ndarray:
        """Materialize the full (n, d) table as served."""

    def total_size_bits(self) -> float:
        return float(sum(self.size_bits().values()))


def lookup_forward(scheme: EmbeddingScheme, ids: np.ndarray):
    """Uniform forward: (rows, ctx) while training, (rows, None) when frozen."""
    if scheme.frozen:
        return scheme.lookup_serving(ids), None
    return scheme.lookup(ids)


def lookup_backward(scheme: EmbeddingScheme, ctx, grad: np.ndarray) -> None:
    """Route upstream row gradients into the scheme's parameters."""
    if ctx is None:
        raise ServingModeError("backward requires a training-mode context")
    scheme.backward(ctx, grad)


def freeze_for_serving(scheme: EmbeddingScheme) -> EmbeddingScheme:
    """Drop training-only state and switch the scheme to decode-only lookups."""
    return scheme.freeze()
