"""Optimization loop: losses, Adam with lazy sparse-row updates, negative
sampling, and deterministic epoch schedules."""

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .models import quantized_ctx_pairs


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 256
    learning_rate: float = 1e-3
    negatives_per_positive: int = 4
    vq_beta: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate < 0:
            raise ValueError("epochs/batch_size/learning_rate must be non-negative")
        if self.negatives_per_positive < 0 or self.vq_beta < 0:
            raise ValueError("negatives_per_positive and vq_beta must be non-negative")


@dataclass
class EpochStats:
    epoch: int
    task_loss: float
    vq_loss: float
    wall_ms: float


def bce_loss(logits: np.ndarray, labels: np.ndarray):
    """Numerically stable binary cross-entropy from logits.

    Returns (mean loss, gradient wrt logits).
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    per = np.maximum(logits, 0.0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))
    dlogits = (expit(logits) - labels) / logits.size
    return float(per.mean()), dlogits


def squared_loss(preds: np.ndarray, targets: np.ndarray):
    """Mean squared error and its gradient wrt the predictions."""
    preds = np.asarray(preds, dtype=np.float64)
    diff = preds - np.asarray(targets, dtype=np.float64)
    return float((diff * diff).mean()), 2.0 * diff / preds.size


def vq_loss(e: np.ndarray, q: np.ndarray, vq_beta: float):
    """Auxiliary quantization loss tying raw rows and their centroids.

    loss = mean(||sg(e) - q||^2) + vq_beta * mean(||e - sg(q)||^2); the first
    term's gradient moves the centroids, the second moves the raw rows.
    Returns (loss, grad_e, grad_q).
    """
    diff = e - q
    n = max(1, diff.size)
    mean_sq = float((diff * diff).sum() / n)
    grad_q = (-2.0 / n) * diff
    grad_e = (2.0 * vq_beta / n) * diff
    return (1.0 + vq_beta) * mean_sq, grad_e, grad_q


class Adam:
    """Adam with dense updates for small tensors and lazy row updates for
    embedding tables (only rows touched in the step move; bias correction
    uses the global step counter)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if not p.has_grad():
                continue
            if p.grad is not None and p.row_grads:
                # rare mixed case: fold the sparse rows into the dense grad
                for rows, g in p.row_grads:
                    np.add.at(p.grad, rows, g)
                p.row_grads = []
            if p.grad is not None:
                g = p.grad
                m *= self.beta1
                m += (1 - self.beta1) * g
                v *= self.beta2
                v += (1 - self.beta2) * (g * g)
                p.value -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            else:
                rows = np.concatenate([r for r, _ in p.row_grads])
                grads = np.concatenate([g for _, g in p.row_grads], axis=0)
                uniq, inv = np.unique(rows, return_inverse=True)
                agg = np.zeros((uniq.size,) + p.value.shape[1:], dtype=p.value.dtype)
                np.add.at(agg, inv, grads)
                m[uniq] = self.beta1 * m[uniq] + (1 - self.beta1) * agg
                v[uniq] = self.beta2 * v[uniq] + (1 - self.beta2) * (agg * agg)
                p.value[uniq] -= self.lr * (m[uniq] / bc1) / (np.sqrt(v[uniq] / bc2) + self.eps)
            p.zero_grad()


def sample_negatives(user_ids, seen_sets, num_items, k, rng):
    """Uniform unseen-item negatives, k per positive, resampled on collision."""
    negs = rng.integers(0, num_items, size=(user_ids.size, k))
    for b, u in enumerate(user_ids):
        seen = seen_sets[u]
        for j in range(k):
            while int(negs[b, j]) in seen:
                negs[b, j] = rng.integers(0, num_items)
    return negs


def _apply_vq(model_ctx, vq_beta: float) -> float:
    total = 0.0
    for scheme, ctx in quantized_ctx_pairs(model_ctx):
        e, q = scheme.vq_arrays(ctx)
        loss, g_e, g_q = vq_loss(e, q, vq_beta)
        scheme.accumulate_vq_grads(ctx, g_e.astype(e.dtype), g_q.astype(q.dtype))
        total += loss
    return total


def train_epoch(model, dataset, config: TrainConfig, rng: np.random.Generator,
                optimizer: Adam, epoch: int = 0) -> EpochStats:
    """One pass over shuffled positives with uniform negative sampling.

    Each positive contributes itself plus `negatives_per_positive` sampled
    unseen items; the step loss is binary cross-entropy plus the auxiliary
    quantization loss of every quantized scheme in the model.
    """
    t0 = time.perf_counter()
    users = dataset.train[:, 0]
    items = dataset.train[:, 1]
    seen = dataset.user_train_sets()
    k = config.negatives_per_positive
    perm = rng.permutation(users.size)
    loss_sum = 0.0
    examples = 0
    vq_sum = 0.0
    steps = 0
    for start in range(0, perm.size, config.batch_size):
        idx = perm[start:start + config.batch_size]
        u, i = users[idx], items[idx]
        if k > 0:
            negs = sample_negatives(u, seen, dataset.num_items, k, rng)
            batch_u = np.concatenate([u, np.repeat(u, k)])
            batch_i = np.concatenate([i, negs.reshape(-1)])
            labels = np.concatenate([np.ones(u.size), np.zeros(u.size * k)])
        else:
            batch_u, batch_i, labels = u, i, np.ones(u.size)
        logits, ctx = model.forward(batch_u, batch_i)
        loss, dlogits = bce_loss(logits, labels)
        model.backward(ctx, dlogits.astype(logits.dtype, copy=False))
        vq_sum += _apply_vq(ctx, config.vq_beta)
        optimizer.step()
        loss_sum += loss * labels.size
        examples += labels.size
        steps += 1
    wall = (time.perf_counter() - t0) * 1e3
    return EpochStats(epoch, loss_sum / max(1, examples), vq_sum / max(1, steps), wall)


def train_epoch_regression(model, dataset, config: TrainConfig,
                           rng: np.random.Generator, optimizer: Adam,
                           epoch: int = 0) -> EpochStats:
    """One pass over the shuffled training pairs of a relevance dataset with
    squared loss."""
    t0 = time.perf_counter()
    a, b, score = dataset.train_pairs()
    perm = rng.permutation(a.size)
    loss_sum = 0.0
    examples = 0
    vq_sum = 0.0
    steps = 0
    for start in range(0, perm.size, config.batch_size):
        idx = perm[start:start + config.batch_size]
        preds, ctx = model.forward(a[idx], b[idx])
        loss, dpreds = squared_loss(preds, score[idx])
        model.backward(ctx, dpreds.astype(preds.dtype, copy=False))
        vq_sum += _apply_vq(ctx, config.vq_beta)
        optimizer.step()
        loss_sum += loss * idx.size
        examples += idx.size
        steps += 1
    wall = (time.perf_counter() - t0) * 1e3
    return EpochStats(epoch, loss_sum / max(1, examples), vq_sum / max(1, steps), wall)


def fit(model, dataset, config: TrainConfig, rng: np.random.Generator | None = None,
        task: str = "item-rec", on_epoch=None) -> list[EpochStats]:
    """Run the full epoch schedule; returns per-epoch stats."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    step_fn = train_epoch if task == "item-rec" else train_epoch_regression
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    history = []
    for epoch in range(config.epochs):
        stats = step_fn(model, dataset, config, rng, optimizer, epoch=epoch)
        history.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
    return history
