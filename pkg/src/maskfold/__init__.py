"""Desk-scale transformer inference runtime.

Three acceleration mechanisms on a plain numpy backend, each verified against
a naive explicit-mask reference:

* attention masking by index comparison inside the softmax (no mask tensors),
* power-of-two folding of work rows larger than the per-unit cap,
* preallocated decoding caches plus a scope-aware reusing buffer pool.
"""

from .attention import (
    AttentionScores,
    fused_causal_softmax,
    fused_padding_softmax,
    fused_step_softmax,
    mha_forward,
)
from .bench import BenchmarkSpec, Report, memory_report, run_benchmark
from .core import (
    BatchDescriptor,
    ConfigError,
    ModelConfig,
    make_batch,
    make_tensor,
    validate_config,
)
from .folding import FoldingPlan, map_index, plan_folding, sub_block_indices
from .memory import (
    ActivationCaches,
    AllocationLog,
    BufferHandle,
    BufferPool,
    CacheOverflowError,
    KVCache,
    PoolError,
    activation_elements,
    buffer_bound,
    kv_cache_elements,
    preallocate_caches,
)
from .reference import reference_generate
from .runtime import (
    GenerationRequest,
    Phase,
    RunTrace,
    decoder_layer_forward,
    encoder_layer_forward,
    generate,
)
from .weights import (
    LayerWeights,
    ModelWeights,
    load_weights,
    random_weights,
    save_weights,
)

__all__ = [
    "AttentionScores",
    "ActivationCaches",
    "AllocationLog",
    "BatchDescriptor",
    "BenchmarkSpec",
    "BufferHandle",
    "BufferPool",
    "CacheOverflowError",
    "ConfigError",
    "FoldingPlan",
    "GenerationRequest",
    "KVCache",
    "LayerWeights",
    "ModelConfig",
    "ModelWeights",
    "Phase",
    "PoolError",
    "Report",
    "RunTrace",
    "activation_elements",
    "buffer_bound",
    "decoder_layer_forward",
    "encoder_layer_forward",
    "fused_causal_softmax",
    "fused_padding_softmax",
    "fused_step_softmax",
    "generate",
    "kv_cache_elements",
    "load_weights",
    "make_batch",
    "make_tensor",
    "map_index",
    "memory_report",
    "mha_forward",
    "plan_folding",
    "preallocate_caches",
    "random_weights",
    "reference_generate",
    "run_benchmark",
    "save_weights",
    "sub_block_indices",
    "validate_config",
]
