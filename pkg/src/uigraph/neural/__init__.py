"""Neural kernels with reverse-mode autodiff, fusion blocks, and the toy decoder."""

from .autodiff import AutodiffTape, Tensor, grad_check, tensor
from .kernels import (
    GcaBlock,
    ResamplerBlock,
    attention,
    fusion_layer,
    gca,
    gcn_forward,
    layer_norm,
    resample,
)
from .model import (
    Model,
    ModelConfig,
    TrainSample,
    build_prompt,
    decode_step,
    detokenize,
    encode_bytes,
    greedy_decode,
    load_checkpoint,
    patch_means,
    run_inference_pipeline,
    save_checkpoint,
    train_toy,
)

__all__ = [
    "AutodiffTape",
    "Tensor",
    "grad_check",
    "tensor",
    "GcaBlock",
    "ResamplerBlock",
    "attention",
    "fusion_layer",
    "gca",
    "gcn_forward",
    "layer_norm",
    "resample",
    "Model",
    "ModelConfig",
    "TrainSample",
    "build_prompt",
    "decode_step",
    "detokenize",
    "encode_bytes",
    "greedy_decode",
    "load_checkpoint",
    "patch_means",
    "run_inference_pipeline",
    "save_checkpoint",
    "train_toy",
]
