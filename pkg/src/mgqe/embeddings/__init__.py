"""Embedding schemes with a uniform lookup-forward / lookup-backward contract."""

from .base import (
    EmbeddingScheme,
    ServingModeError,
    freeze_for_serving,
    lookup_backward,
    lookup_forward,
)
from .dense import (
    FullEmbedding,
    LowRankEmbedding,
    ScalarQuantizedEmbedding,
    scalar_quantize_table,
)
from .quantized import (
    CodebookSet,
    DPQEmbedding,
    MGQEEmbedding,
    QuantizedCtx,
    TierPartition,
    _QuantizedBase,
    decode,
    groupwise_lookup,
    quantize,
)

__all__ = [
    "CodebookSet",
    "DPQEmbedding",
    "EmbeddingScheme",
    "FullEmbedding",
    "LowRankEmbedding",
    "MGQEEmbedding",
    "QuantizedCtx",
    "ScalarQuantizedEmbedding",
    "ServingModeError",
    "TierPartition",
    "decode",
    "freeze_for_serving",
    "groupwise_lookup",
    "lookup_backward",
    "lookup_forward",
    "quantize",
    "scalar_quantize_table",
]
