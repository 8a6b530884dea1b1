"""Backbone recommenders: GMF, NeuMF, and a GMF-shaped item-to-item regressor.

All three consume embedding schemes through the uniform lookup contract, so
any compression scheme slots into any backbone. Forward passes return a
context object holding exactly the activations the analytic backward needs.
"""

from dataclasses import dataclass

import numpy as np

from .embeddings import lookup_backward, lookup_forward
from .embeddings.base import EmbeddingScheme
from .embeddings.quantized import _QuantizedBase
from .params import Parameter


def _glorot(rng, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


@dataclass
class GMFCtx:
    user_ctx: object
    item_ctx: object
    e_user: np.ndarray
    e_item: np.ndarray
    prod: np.ndarray
    scheme_ctxs: list


class GMFModel:
    """Generalized matrix factorization: a learned per-dimension weighting of
    the elementwise user-item embedding product."""

    def __init__(self, user_scheme: EmbeddingScheme, item_scheme: EmbeddingScheme,
                 rng: np.random.Generator, dtype=np.float32):
        if user_scheme.d != item_scheme.d:
            raise ValueError("user and item embedding dims must match")
        self.user_scheme = user_scheme
        self.item_scheme = item_scheme
        self.d = user_scheme.d
        self.dtype = np.dtype(dtype)
        self.weight = Parameter("gmf_weight",
                                rng.normal(0.0, 1.0 / np.sqrt(self.d),
                                           size=self.d).astype(self.dtype))
        self.bias = Parameter("gmf_bias", np.zeros(1, dtype=self.dtype))

    def forward(self, user_ids, item_ids):
        e_u, uctx = lookup_forward(self.user_scheme, user_ids)
        e_i, ictx = lookup_forward(self.item_scheme, item_ids)
        prod = e_u * e_i
        logits = prod @ self.weight.value + self.bias.value[0]
        ctx = GMFCtx(uctx, ictx, e_u, e_i, prod,
                     [(self.user_scheme, uctx), (self.item_scheme, ictx)])
        return logits, ctx

    def backward(self, ctx: GMFCtx, dlogits: np.ndarray):
        self.weight.add_grad(ctx.prod.T @ dlogits)
        self.bias.add_grad(np.array([dlogits.sum()], dtype=self.dtype))
        dprod = dlogits[:, None] * self.weight.value
        lookup_backward(self.user_scheme, ctx.user_ctx, dprod * ctx.e_item)
        lookup_backward(self.item_scheme, ctx.item_ctx, dprod * ctx.e_user)

    def score_pairs(self, user_ids, item_ids):
        e_u = self.user_scheme.lookup_serving(user_ids)
        e_i = self.item_scheme.lookup_serving(item_ids)
        return (e_u * e_i) @ self.weight.value + self.bias.value[0]

    def dense_parameters(self):
        return [self.weight, self.bias]

    def schemes(self):
        return [("user", self.user_scheme), ("item", self.item_scheme)]

    def parameters(self):
        params = list(self.dense_parameters())
        for _, s in self.schemes():
            params.extend(s.parameters())
        return params

    def freeze(self):
        for _, s in self.schemes():
            s.freeze()
        return self


@dataclass
class NeuMFCtx:
    gmf_user_ctx: object
    gmf_item_ctx: object
    mlp_user_ctx: object
    mlp_item_ctx: object
    e_gu: np.ndarray
    e_gi: np.ndarray
    x0: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray
    z3: np.ndarray
    a3: np.ndarray
    fused: np.ndarray
    scheme_ctxs: list


class NeuMFModel:
    """GMF tower fused with a pyramid MLP tower; each tower owns its own
    user and item embedding tables (both compressed by the scheme under test)."""

    def __init__(self, gmf_user, gmf_item, mlp_user, mlp_item,
                 rng: np.random.Generator, dtype=np.float32):
        dims = {s.d for s in (gmf_user, gmf_item, mlp_user, mlp_item)}
        if len(dims) != 1:
            raise ValueError("all four embedding tables must share one dim")
        self.d = gmf_user.d
        self.dtype = np.dtype(dtype)
        self.gmf_user, self.gmf_item = gmf_user, gmf_item
        self.mlp_user, self.mlp_item = mlp_user, mlp_item
        d = self.d
        widths = [2 * d, d, max(1, d // 2), max(1, d // 4)]
        self.w1 = Parameter("mlp_w1", _glorot(rng, widths[0], widths[1], self.dtype))
        self.b1 = Parameter("mlp_b1", np.zeros(widths[1], dtype=self.dtype))
        self.w2 = Parameter("mlp_w2", _glorot(rng, widths[1], widths[2], self.dtype))
        self.b2 = Parameter("mlp_b2", np.zeros(widths[2], dtype=self.dtype))
        self.w3 = Parameter("mlp_w3", _glorot(rng, widths[2], widths[3], self.dtype))
        self.b3 = Parameter("mlp_b3", np.zeros(widths[3], dtype=self.dtype))
        self.fusion = Parameter("fusion",
                                rng.normal(0.0, 1.0 / np.sqrt(d + widths[3]),
                                           size=d + widths[3]).astype(self.dtype))
        self.bias = Parameter("neumf_bias", np.zeros(1, dtype=self.dtype))

    def _towers(self, user_ids, item_ids, serving: bool):
        if serving:
            e_gu = self.gmf_user.lookup_serving(user_ids)
            e_gi = self.gmf_item.lookup_serving(item_ids)
            e_mu = self.mlp_user.lookup_serving(user_ids)
            e_mi = self.mlp_item.lookup_serving(item_ids)
            return e_gu, e_gi, e_mu, e_mi, None, None, None, None
        e_gu, guc = lookup_forward(self.gmf_user, user_ids)
        e_gi, gic = lookup_forward(self.gmf_item, item_ids)
        e_mu, muc = lookup_forward(self.mlp_user, user_ids)
        e_mi, mic = lookup_forward(self.mlp_item, item_ids)
        return e_gu, e_gi, e_mu, e_mi, guc, gic, muc, mic

    def forward(self, user_ids, item_ids):
        e_gu, e_gi, e_mu, e_mi, guc, gic, muc, mic = self._towers(user_ids, item_ids, False)
        x0 = np.concatenate([e_mu, e_mi], axis=1)
        z1 = x0 @ self.w1.value + self.b1.value
        a1 = np.maximum(z1, 0)
        z2 = a1 @ self.w2.value + self.b2.value
        a2 = np.maximum(z2, 0)
        z3 = a2 @ self.w3.value + self.b3.value
        a3 = np.maximum(z3, 0)
        fused = np.concatenate([e_gu * e_gi, a3], axis=1)
        logits = fused @ self.fusion.value + self.bias.value[0]
        ctx = NeuMFCtx(guc, gic, muc, mic, e_gu, e_gi, x0, z1, a1, z2, a2, z3, a3, fused,
                       [(self.gmf_user, guc), (self.gmf_item, gic),
                        (self.mlp_user, muc), (self.mlp_item, mic)])
        return logits, ctx

    def backward(self, ctx: NeuMFCtx, dlogits: np.ndarray):
        d = self.d
        self.fusion.add_grad(ctx.fused.T @ dlogits)
        self.bias.add_grad(np.array([dlogits.sum()], dtype=self.dtype))
        dfused = dlogits[:, None] * self.fusion.value
        dgmf_vec, da3 = dfused[:, :d], dfused[:, d:]

        dz3 = da3 * (ctx.z3 > 0)
        self.w3.add_grad(ctx.a2.T @ dz3)
        self.b3.add_grad(dz3.sum(axis=0))
        da2 = dz3 @ self.w3.value.T
        dz2 = da2 * (ctx.z2 > 0)
        self.w2.add_grad(ctx.a1.T @ dz2)
        self.b2.add_grad(dz2.sum(axis=0))
        da1 = dz2 @ self.w2.value.T
        dz1 = da1 * (ctx.z1 > 0)
        self.w1.add_grad(ctx.x0.T @ dz1)
        self.b1.add_grad(dz1.sum(axis=0))
        dx0 = dz1 @ self.w1.value.T

        lookup_backward(self.gmf_user, ctx.gmf_user_ctx, dgmf_vec * ctx.e_gi)
        lookup_backward(self.gmf_item, ctx.gmf_item_ctx, dgmf_vec * ctx.e_gu)
        lookup_backward(self.mlp_user, ctx.mlp_user_ctx, dx0[:, :d])
        lookup_backward(self.mlp_item, ctx.mlp_item_ctx, dx0[:, d:])

    def score_pairs(self, user_ids, item_ids):
        e_gu, e_gi, e_mu, e_mi, *_ = self._towers(user_ids, item_ids, True)
        x0 = np.concatenate([e_mu, e_mi], axis=1)
        a1 = np.maximum(x0 @ self.w1.value + self.b1.value, 0)
        a2 = np.maximum(a1 @ self.w2.value + self.b2.value, 0)
        a3 = np.maximum(a2 @ self.w3.value + self.b3.value, 0)
        fused = np.concatenate([e_gu * e_gi, a3], axis=1)
        return fused @ self.fusion.value + self.bias.value[0]

    def dense_parameters(self):
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3,
                self.fusion, self.bias]

    def schemes(self):
        return [("gmf_user", self.gmf_user), ("gmf_item", self.gmf_item),
                ("mlp_user", self.mlp_user), ("mlp_item", self.mlp_item)]

    def parameters(self):
        params = list(self.dense_parameters())
        for _, s in self.schemes():
            params.extend(s.parameters())
        return params

    def freeze(self):
        for _, s in self.schemes():
            s.freeze()
        return self


class Item2ItemModel:
    """GMF-shaped pairwise regressor: one shared item table, raw real scores."""

    def __init__(self, item_scheme: EmbeddingScheme, rng: np.random.Generator,
                 dtype=np.float32):
        self.item_scheme = item_scheme
        self.d = item_scheme.d
        self.dtype = np.dtype(dtype)
        self.weight = Parameter("i2i_weight",
                                rng.normal(0.0, 1.0 / np.sqrt(self.d),
                                           size=self.d).astype(self.dtype))
        self.bias = Parameter("i2i_bias", np.zeros(1, dtype=self.dtype))

    def forward(self, a_ids, b_ids):
        e_a, actx = lookup_forward(self.item_scheme, a_ids)
        e_b, bctx = lookup_forward(self.item_scheme, b_ids)
        prod = e_a * e_b
        preds = prod @ self.weight.value + self.bias.value[0]
        ctx = GMFCtx(actx, bctx, e_a, e_b, prod,
                     [(self.item_scheme, actx), (self.item_scheme, bctx)])
        return preds, ctx

    def backward(self, ctx: GMFCtx, dpreds: np.ndarray):
        self.weight.add_grad(ctx.prod.T @ dpreds)
        self.bias.add_grad(np.array([dpreds.sum()], dtype=self.dtype))
        dprod = dpreds[:, None] * self.weight.value
        lookup_backward(self.item_scheme, ctx.user_ctx, dprod * ctx.e_item)
        lookup_backward(self.item_scheme, ctx.item_ctx, dprod * ctx.e_user)

    def score_pairs(self, a_ids, b_ids):
        e_a = self.item_scheme.lookup_serving(a_ids)
        e_b = self.item_scheme.lookup_serving(b_ids)
        return (e_a * e_b) @ self.weight.value + self.bias.value[0]

    def dense_parameters(self):
        return [self.weight, self.bias]

    def schemes(self):
        return [("item", self.item_scheme)]

    def parameters(self):
        return list(self.dense_parameters()) + self.item_scheme.parameters()

    def freeze(self):
        self.item_scheme.freeze()
        return self


def quantized_ctx_pairs(ctx) -> list:
    """(scheme, lookup-context) pairs for quantized schemes in a model context."""
    return [(s, c) for s, c in ctx.scheme_ctxs
            if isinstance(s, _QuantizedBase) and c is not None]
