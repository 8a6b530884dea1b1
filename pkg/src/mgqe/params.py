"""Trainable parameters with dense or sparse-row gradient accumulation."""

import numpy as np


class Parameter:
    """A named trainable array.

    Gradients accumulate either densely (``add_grad``) or as row batches
    (``add_row_grad``) for large embedding tables. The optimizer drains and
    clears both kinds on each step.
    """

    def __init__(self, name: str, value: np.ndarray, sparse_rows: bool = False):
        self.name = name
        self.value = value
        self.sparse_rows = sparse_rows
        self.grad: np.ndarray | None = None
        self.row_grads: list[tuple[np.ndarray, np.ndarray]] = []

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def add_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        return self.grad

    def add_row_grad(self, rows: np.ndarray, g: np.ndarray) -> None:
        self.row_grads.append((rows, g))

    def zero_grad(self) -> None:
        self.grad = None
        self.row_grads = []

    def has_grad(self) -> bool:
        return self.grad is not None or bool(self.row_grads)

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.value.shape}, dtype={self.value.dtype})"
