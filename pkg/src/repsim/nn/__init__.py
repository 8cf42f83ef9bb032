"""Minimal differentiable substrate: layers, encoders, Adam, gradient checks."""

from .encoders import (
    ENCODER_KINDS,
    AttentionStack,
    BiGRUStack,
    ConvStack,
    EncoderSpec,
    GRUStack,
    build_encoder,
)
from .gradcheck import grad_check
from .layers import (
    AttentionBlock,
    Conv1DLayer,
    GRULayer,
    LayerNorm,
    Linear,
    apply_length_mask,
    length_mask,
    reverse_padded,
    sigmoid,
    sinusoidal_positions,
)
from .params import ParamStore, adam_step, add_grad, uniform_init

__all__ = [
    "ENCODER_KINDS",
    "EncoderSpec",
    "GRUStack",
    "BiGRUStack",
    "AttentionStack",
    "ConvStack",
    "build_encoder",
    "grad_check",
    "Linear",
    "GRULayer",
    "LayerNorm",
    "AttentionBlock",
    "Conv1DLayer",
    "sigmoid",
    "length_mask",
    "apply_length_mask",
    "reverse_padded",
    "sinusoidal_positions",
    "ParamStore",
    "adam_step",
    "add_grad",
    "uniform_init",
]
