"""Encoder stacks assembled from the primitive layers.

Four kinds: gru (causal), causal-attention, bidirectional-attention, conv.
All take a padded (B, T, input_dim) batch plus lengths, produce (B, T, H)
with activations beyond each length zeroed, and support full reverse-mode
backward through the same cache.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, NumericalError, ShapeError
from .layers import (
    AttentionBlock,
    Conv1DLayer,
    GRULayer,
    LayerNorm,
    Linear,
    apply_length_mask,
    length_mask,
    reverse_padded,
    sinusoidal_positions,
)
from .params import ParamStore

ENCODER_KINDS = ("gru", "causal-attention", "bidirectional-attention", "conv")


@dataclass(frozen=True)
class EncoderSpec:
    kind: str
    layers: int = 3
    hidden: int = 512
    input_dim: int = 80
    bidirectional: bool = False  # gru only; hidden splits across directions
    heads: int = 4
    conv_kernel: int = 3
    conv_stride: int = 1
    conv_causal: bool = True

    def __post_init__(self) -> None:
        if self.kind not in ENCODER_KINDS:
            raise ConfigError(f"unknown encoder kind {self.kind!r}")
        if self.layers < 1:
            raise ConfigError("layers must be >= 1")
        if self.bidirectional and self.kind != "gru":
            raise ConfigError("bidirectional flag applies to gru encoders only")
        if self.bidirectional and self.hidden % 2:
            raise ConfigError("bidirectional hidden must be even")
        if "attention" in self.kind and self.hidden % self.heads:
            raise ConfigError("hidden must be divisible by heads")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, blob: str) -> "EncoderSpec":
        return cls(**json.loads(blob))


def _check_batch(x: np.ndarray, lengths: np.ndarray, input_dim: int) -> np.ndarray:
    if x.ndim != 3 or x.shape[2] != input_dim:
        raise ShapeError(f"expected (B, T, {input_dim}) batch, got {x.shape}")
    lengths = np.asarray(lengths)
    if lengths.shape != (x.shape[0],):
        raise ShapeError(f"lengths shape {lengths.shape} != batch size {x.shape[0]}")
    if lengths.max(initial=0) > x.shape[1] or lengths.min(initial=1) < 1:
        raise ShapeError("lengths must lie in [1, T]")
    return lengths


class GRUStack:
    def __init__(self, name: str, spec: EncoderSpec):
        self.spec = spec
        self.output_dim = spec.hidden
        dims = [spec.input_dim] + [spec.hidden] * spec.layers
        self.layers = [
            GRULayer(f"{name}.gru{i}", dims[i], dims[i + 1]) for i in range(spec.layers)
        ]

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        for layer in self.layers:
            layer.init_params(store, rng)

    def forward(self, store: ParamStore, x: np.ndarray, lengths: np.ndarray):
        lengths = _check_batch(x, lengths, self.spec.input_dim)
        caches = []
        h = x
        for layer in self.layers:
            h, cache = layer.forward(store, h)
            h = apply_length_mask(h, lengths)
            caches.append(cache)
        if not np.all(np.isfinite(h)):
            raise NumericalError("non-finite activations in recurrent stack")
        return h, (caches, lengths)

    def backward(self, store: ParamStore, grads, cache, dy: np.ndarray):
        caches, lengths = cache
        mask = length_mask(lengths, dy.shape[1])[:, :, None]
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(store, grads, c, dy * mask)
        return dy


class BiGRUStack:
    """Stacked bidirectional GRU; each direction gets hidden/2 units."""

    def __init__(self, name: str, spec: EncoderSpec):
        if spec.hidden % 2:
            raise ConfigError("bidirectional hidden must be even")
        self.spec = spec
        self.output_dim = spec.hidden
        half = spec.hidden // 2
        dims = [spec.input_dim] + [spec.hidden] * spec.layers
        self.fw = [GRULayer(f"{name}.fw{i}", dims[i], half) for i in range(spec.layers)]
        self.bw = [GRULayer(f"{name}.bw{i}", dims[i], half) for i in range(spec.layers)]

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        for f, b in zip(self.fw, self.bw):
            f.init_params(store, rng)
            b.init_params(store, rng)

    def forward(self, store: ParamStore, x: np.ndarray, lengths: np.ndarray):
        lengths = _check_batch(x, lengths, self.spec.input_dim)
        caches = []
        h = x
        for f, b in zip(self.fw, self.bw):
            yf, cf = f.forward(store, h)
            rev_in = reverse_padded(h, lengths)
            yb_rev, cb = b.forward(store, rev_in)
            yb = reverse_padded(yb_rev, lengths)
            h = apply_length_mask(np.concatenate([yf, yb], axis=-1), lengths)
            caches.append((cf, cb))
        if not np.all(np.isfinite(h)):
            raise NumericalError("non-finite activations in bidirectional stack")
        return h, (caches, lengths)

    def backward(self, store: ParamStore, grads, cache, dy: np.ndarray):
        caches, lengths = cache
        half = self.spec.hidden // 2
        mask = length_mask(lengths, dy.shape[1])[:, :, None]
        for f, b, (cf, cb) in zip(reversed(self.fw), reversed(self.bw), reversed(caches)):
            dy = dy * mask
            dyf = dy[:, :, :half]
            dyb = reverse_padded(dy[:, :, half:], lengths)
            dx_f = f.backward(store, grads, cf, dyf)
            dx_b = reverse_padded(b.backward(store, grads, cb, dyb), lengths)
            dy = dx_f + dx_b
        return dy


class AttentionStack:
    """Pre-norm self-attention encoder with sinusoidal positions.

    causal=True masks future keys (decoder-style); otherwise attention is
    full within each sequence's valid length.
    """

    def __init__(self, name: str, spec: EncoderSpec, causal: bool):
        self.spec = spec
        self.causal = causal
        self.output_dim = spec.hidden
        self.proj = Linear(f"{name}.in", spec.input_dim, spec.hidden)
        self.blocks = [
            AttentionBlock(f"{name}.blk{i}", spec.hidden, spec.heads)
            for i in range(spec.layers)
        ]
        self.final_ln = LayerNorm(f"{name}.lnf", spec.hidden)

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        self.proj.init_params(store, rng)
        for blk in self.blocks:
            blk.init_params(store, rng)
        self.final_ln.init_params(store, rng)

    def _allowed(self, lengths: np.ndarray, T: int) -> np.ndarray:
        valid_keys = length_mask(lengths, T)[:, None, None, :]
        if not self.causal:
            return valid_keys
        causal = np.tril(np.ones((T, T), dtype=bool))[None, None, :, :]
        return valid_keys & causal

    def forward(self, store: ParamStore, x: np.ndarray, lengths: np.ndarray):
        lengths = _check_batch(x, lengths, self.spec.input_dim)
        T = x.shape[1]
        h, c_proj = self.proj.forward(store, x)
        h = h + sinusoidal_positions(T, self.spec.hidden, h.dtype)
        allowed = self._allowed(lengths, T)
        caches = []
        for blk in self.blocks:
            h, c = blk.forward(store, h, allowed)
            caches.append(c)
        h, c_ln = self.final_ln.forward(store, h)
        y = apply_length_mask(h, lengths)
        if not np.all(np.isfinite(y)):
            raise NumericalError("non-finite activations in attention stack")
        return y, (c_proj, caches, c_ln, lengths)

    def backward(self, store: ParamStore, grads, cache, dy: np.ndarray):
        c_proj, caches, c_ln, lengths = cache
        dy = dy * length_mask(lengths, dy.shape[1])[:, :, None]
        dy = self.final_ln.backward(store, grads, c_ln, dy)
        for blk, c in zip(reversed(self.blocks), reversed(caches)):
            dy = blk.backward(store, grads, c, dy)
        return self.proj.backward(store, grads, c_proj, dy)


class ConvStack:
    """Strided 1-D conv stack with ReLU after every layer."""

    def __init__(self, name: str, spec: EncoderSpec):
        self.spec = spec
        self.output_dim = spec.hidden
        dims = [spec.input_dim] + [spec.hidden] * spec.layers
        self.layers = [
            Conv1DLayer(
                f"{name}.conv{i}",
                dims[i],
                dims[i + 1],
                kernel=spec.conv_kernel,
                stride=spec.conv_stride,
                causal=spec.conv_causal,
            )
            for i in range(spec.layers)
        ]

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        for layer in self.layers:
            layer.init_params(store, rng)

    def forward(self, store: ParamStore, x: np.ndarray, lengths: np.ndarray):
        lengths = _check_batch(x, lengths, self.spec.input_dim)
        caches = []
        h = x
        for layer in self.layers:
            y, c_conv = layer.forward(store, h)
            lengths = (lengths - 1) // layer.stride + 1
            relu_mask = y > 0
            h = apply_length_mask(np.maximum(y, 0.0), lengths)
            caches.append((c_conv, relu_mask, lengths))
        if not np.all(np.isfinite(h)):
            raise NumericalError("non-finite activations in conv stack")
        return h, caches

    def backward(self, store: ParamStore, grads, cache, dy: np.ndarray):
        for layer, (c_conv, relu_mask, lengths) in zip(reversed(self.layers), reversed(cache)):
            dy = dy * length_mask(lengths, dy.shape[1])[:, :, None]
            dy = layer.backward(store, grads, c_conv, dy * relu_mask)
        return dy


def build_encoder(name: str, spec: EncoderSpec):
    if spec.kind == "gru":
        return BiGRUStack(name, spec) if spec.bidirectional else GRUStack(name, spec)
    if spec.kind == "causal-attention":
        return AttentionStack(name, spec, causal=True)
    if spec.kind == "bidirectional-attention":
        return AttentionStack(name, spec, causal=False)
    if spec.kind == "conv":
        return ConvStack(name, spec)
    raise ConfigError(f"unknown encoder kind {spec.kind!r}")
