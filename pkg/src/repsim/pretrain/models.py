"""The three self-supervised objectives with reverse-mode gradients.

All models share one calling convention:

    loss, tape = model.loss(batch, step_seed)   # step_seed drives masks/negatives
    grads = model.backward(tape)                # tape is single-use

Losses are means over valid positions, accumulated in float64 regardless of
the parameter dtype. Padded frames never contribute to a loss or gradient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import (
    ContractError,
    DegenerateBatchError,
    DegenerateMaskError,
    NumericalError,
    ProposalUnsatisfiableError,
)
from ..nn.encoders import EncoderSpec, build_encoder
from ..nn.layers import Linear, apply_length_mask, length_mask, reverse_padded
from ..nn.params import ParamStore, add_grad, uniform_init
from .configs import APC, CPC, MIXED_SPK, MPC, WITHIN_SPK, ModelConfig

log = logging.getLogger("repsim.pretrain")


@dataclass
class Batch:
    x: np.ndarray  # (B, T, input_dim), zero beyond lengths
    lengths: np.ndarray  # (B,)

    @classmethod
    def from_sequences(cls, frames_list: list[np.ndarray], dtype=np.float32) -> "Batch":
        lengths = np.array([f.shape[0] for f in frames_list], dtype=np.int64)
        B, T = len(frames_list), int(lengths.max())
        x = np.zeros((B, T, frames_list[0].shape[1]), dtype=dtype)
        for i, f in enumerate(frames_list):
            x[i, : f.shape[0]] = f
        return cls(x=x, lengths=lengths)


class Tape:
    """Single-use record of one forward pass."""

    def __init__(self, payload):
        self.payload = payload
        self._used = False

    def consume(self):
        if self._used:
            raise ContractError("tape already consumed; rerun the forward pass")
        self._used = True
        return self.payload


def _check_loss(value: float) -> float:
    if not np.isfinite(value):
        raise NumericalError(f"non-finite loss {value}")
    return float(value)


class ApcModel:
    """Predict the frame `shift` steps ahead with L1 regression on a causal encoder."""

    def __init__(self, config: ModelConfig, store: ParamStore, rng: np.random.Generator):
        if config.encoder.kind not in ("gru", "causal-attention"):
            raise ContractError("forward prediction requires a causal encoder")
        self.config = config
        self.store = store
        self.shift = config.apc_shift
        self.directions = ("fw", "bw") if config.directional_pair else ("fw",)
        self.encoders = {}
        self.heads = {}
        for d in self.directions:
            self.encoders[d] = build_encoder(f"{d}.enc", config.encoder)
            self.encoders[d].init_params(store, rng)
            self.heads[d] = Linear(f"{d}.head", config.encoder.hidden, config.encoder.input_dim)
            self.heads[d].init_params(store, rng)

    def _directional_loss(self, direction: str, x: np.ndarray, lengths: np.ndarray):
        n = self.shift
        usable = lengths > n
        if not usable.any():
            raise DegenerateBatchError(f"no sequence longer than shift {n}")
        if not usable.all():
            log.warning("apc: skipping %d sequence(s) shorter than shift+1", (~usable).sum())
        enc, c_enc = self.encoders[direction].forward(self.store, x, lengths)
        pred, c_head = self.heads[direction].forward(self.store, enc)
        B, T, D = x.shape
        # valid prediction positions: t such that t + n < length
        pos = np.arange(T)[None, :]
        valid = (pos + n < lengths[:, None]) & usable[:, None]
        target = np.zeros_like(pred)
        target[:, : T - n] = x[:, n:]
        residual = np.where(valid[:, :, None], target - pred, np.array(0.0, dtype=x.dtype))
        count = int(valid.sum()) * D
        loss = _check_loss(np.abs(residual, dtype=np.float64).sum() / count)
        return loss, (direction, c_enc, c_head, residual, count)

    def loss(self, batch: Batch, step_seed=0) -> tuple[float, Tape]:
        x, lengths = batch.x, batch.lengths
        parts = []
        total = 0.0
        for d in self.directions:
            xd = reverse_padded(x, lengths) if d == "bw" else x
            loss_d, part = self._directional_loss(d, xd, lengths)
            total += loss_d
            parts.append((part, lengths))
        return total / len(self.directions), Tape(parts)

    def backward(self, tape: Tape) -> dict[str, np.ndarray]:
        parts = tape.consume()
        grads: dict[str, np.ndarray] = {}
        scale = 1.0 / len(self.directions)
        for (direction, c_enc, c_head, residual, count), lengths in parts:
            dpred = (-np.sign(residual) / count * scale).astype(residual.dtype)
            denc = self.heads[direction].backward(self.store, grads, c_head, dpred)
            self.encoders[direction].backward(self.store, grads, c_enc, denc)
        return grads

    def representations(self, x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        outs = []
        for d in self.directions:
            xd = reverse_padded(x, lengths) if d == "bw" else x
            enc, _ = self.encoders[d].forward(self.store, xd, lengths)
            if d == "bw":
                enc = reverse_padded(enc, lengths)
            outs.append(enc)
        return outs[0] if len(outs) == 1 else np.concatenate(outs, axis=-1)


def mpc_mask(
    lengths: np.ndarray, T: int, span: int, fraction: float, seed
) -> np.ndarray:
    """Boolean (B, T) mask of span-masked positions, at least one per utterance."""
    rng = np.random.default_rng(seed)
    B = len(lengths)
    mask = np.zeros((B, T), dtype=bool)
    for b in range(B):
        L = int(lengths[b])
        target = max(1, int(round(fraction * L)))
        n_spans = max(1, -(-target // span))
        starts = rng.integers(0, max(1, L - span + 1), size=n_spans)
        for s in starts:
            mask[b, s : min(s + span, L)] = True
    return mask


class MpcModel:
    """Reconstruct zeroed input spans with L1 loss using a bidirectional encoder."""

    def __init__(self, config: ModelConfig, store: ParamStore, rng: np.random.Generator):
        enc_spec = config.encoder
        if enc_spec.kind == "causal-attention" or (
            enc_spec.kind == "gru" and not enc_spec.bidirectional
        ):
            raise ContractError("masked prediction requires a bidirectional encoder")
        self.config = config
        self.store = store
        self.encoder = build_encoder("enc", enc_spec)
        self.encoder.init_params(store, rng)
        self.head = Linear("head", enc_spec.hidden, enc_spec.input_dim)
        self.head.init_params(store, rng)

    def loss(self, batch: Batch, step_seed=0) -> tuple[float, Tape]:
        x, lengths = batch.x, batch.lengths
        B, T, D = x.shape
        mask = mpc_mask(
            lengths, T, self.config.mpc_mask_span, self.config.mpc_mask_fraction, step_seed
        )
        if not mask.any():
            raise DegenerateMaskError("mask policy selected no frames")
        x_masked = np.where(mask[:, :, None], np.array(0.0, dtype=x.dtype), x)
        enc, c_enc = self.encoder.forward(self.store, x_masked, lengths)
        pred, c_head = self.head.forward(self.store, enc)
        residual = np.where(mask[:, :, None], x - pred, np.array(0.0, dtype=x.dtype))
        count = int(mask.sum()) * D
        loss = _check_loss(np.abs(residual, dtype=np.float64).sum() / count)
        return loss, Tape((c_enc, c_head, residual, count))

    def backward(self, tape: Tape) -> dict[str, np.ndarray]:
        c_enc, c_head, residual, count = tape.consume()
        grads: dict[str, np.ndarray] = {}
        dpred = (-np.sign(residual) / count).astype(residual.dtype)
        denc = self.head.backward(self.store, grads, c_head, dpred)
        self.encoder.backward(self.store, grads, c_enc, denc)
        return grads

    def representations(self, x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        enc, _ = self.encoder.forward(self.store, x, lengths)
        return enc


def infonce_terms(
    s_pos: np.ndarray, s_neg: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-term softmax contrastive loss and the probabilities backward needs.

    s_pos: (M,) positive scores; s_neg: (M, N) negative scores. Each term is
    -log(exp(s_pos) / (exp(s_pos) + sum exp(s_neg))), always >= 0.
    """
    m = np.maximum(s_pos, s_neg.max(axis=1))
    e_pos = np.exp(s_pos - m)
    e_neg = np.exp(s_neg - m[:, None])
    denom = e_pos + e_neg.sum(axis=1)
    losses = np.log(denom) - (s_pos - m)
    return losses, e_pos / denom, e_neg / denom[:, None]


def _sample_distinct_rows(
    rng: np.random.Generator, n_rows: int, n_cols: int, pool: int
) -> np.ndarray:
    """Per-row uniform sample of n_cols distinct values from range(pool).

    Sparse case: redraw rows containing duplicates (cheap when pool is much
    larger than n_cols). Dense case: smallest-n random keys, which stays
    uniform over subsets and never rejects.
    """
    if n_cols > pool:
        raise NumericalError(f"cannot draw {n_cols} distinct values from {pool}")
    if 16 * n_cols >= pool:
        keys = rng.random((n_rows, pool))
        return np.argpartition(keys, n_cols - 1, axis=1)[:, :n_cols]
    out = rng.integers(0, pool, size=(n_rows, n_cols))
    if n_cols <= 1:
        return out
    for _ in range(64):
        s = np.sort(out, axis=1)
        bad = (s[:, 1:] == s[:, :-1]).any(axis=1)
        if not bad.any():
            return out
        out[bad] = rng.integers(0, pool, size=(int(bad.sum()), n_cols))
    raise NumericalError("negative sampling failed to find distinct rows")


class CpcModel:
    """Contrastive future-frame prediction with a negative-sample proposal.

    z: per-frame encodings (linear projection, or the conv stack's output
    for the conv variant, where context and frame encoding coincide).
    c: context encoder output. Scores are bilinear, one matrix per step.
    """

    def __init__(self, config: ModelConfig, store: ParamStore, rng: np.random.Generator):
        if config.cpc_proposal not in (MIXED_SPK, WITHIN_SPK):
            raise ContractError(f"unknown proposal {config.cpc_proposal!r}")
        self.config = config
        self.store = store
        self.K = config.cpc_horizon
        self.N = config.cpc_negatives
        self.proposal = config.cpc_proposal
        enc_spec = config.encoder
        H = enc_spec.hidden
        self.conv_variant = enc_spec.kind == "conv"
        if self.conv_variant:
            self.frame = None
            self.context = build_encoder("ctx", enc_spec)
            self.context.init_params(store, rng)
        else:
            self.frame = Linear("frame", enc_spec.input_dim, H)
            self.frame.init_params(store, rng)
            ctx_spec = EncoderSpec(
                kind=enc_spec.kind,
                layers=enc_spec.layers,
                hidden=H,
                input_dim=H,
                bidirectional=enc_spec.bidirectional,
            )
            self.context = build_encoder("ctx", ctx_spec)
            self.context.init_params(store, rng)
        store.add("score.Wk", uniform_init(rng, (self.K, H, H), H))

    def _sample_terms(self, lengths: np.ndarray, T: int, seed):
        """Term grid (b, t, k) with positive and negative frame indices.

        Returns per-batch flat arrays over valid terms plus (terms, N)
        negative indices into the (B*T) flattened frame axis.
        """
        rng = np.random.default_rng(seed)
        B = len(lengths)
        K, N = self.K, self.N
        total_valid = int(lengths.sum())
        b_list, t_list, k_list, neg_list = [], [], [], []
        skipped = 0
        for b in range(B):
            L = int(lengths[b])
            if self.proposal == WITHIN_SPK and L < N + K + 1:
                skipped += 1
                continue
            if L < 2:
                skipped += 1
                continue
            ts, ks = [], []
            for k in range(1, K + 1):
                if L - k <= 0:
                    continue
                t = np.arange(L - k)
                ts.append(t)
                ks.append(np.full(L - k, k))
            if not ts:
                skipped += 1
                continue
            t_arr = np.concatenate(ts)
            k_arr = np.concatenate(ks)
            n_terms = t_arr.size

            if self.proposal == WITHIN_SPK:
                pos_local = t_arr + k_arr
                # Draw in [0, L-1) and skip over the positive index afterwards;
                # the shift is strictly monotone per row, so distinctness of the
                # raw draws carries over.
                raw = _sample_distinct_rows(rng, n_terms, N, L - 1)
                local = raw + (raw >= pos_local[:, None])
                neg = b * T + local
            else:
                pool = total_valid - L
                if pool < N:
                    raise ProposalUnsatisfiableError(
                        "mixed-speaker proposal needs at least "
                        f"{N} frames outside the utterance, have {pool}"
                    )
                raw = _sample_distinct_rows(rng, n_terms, N, pool)
                neg = self._map_other(raw, b, lengths, T)
            b_list.append(np.full(n_terms, b))
            t_list.append(t_arr)
            k_list.append(k_arr)
            neg_list.append(neg)
        if skipped:
            if self.proposal == MIXED_SPK and B == 1:
                raise ProposalUnsatisfiableError(
                    "mixed-speaker proposal needs more than one utterance per batch"
                )
            log.warning("cpc: skipped %d too-short utterance(s)", skipped)
        if not b_list:
            if self.proposal == MIXED_SPK and B == 1:
                raise ProposalUnsatisfiableError(
                    "mixed-speaker proposal needs more than one utterance per batch"
                )
            raise DegenerateBatchError("no utterance admits any contrastive term")
        return (
            np.concatenate(b_list),
            np.concatenate(t_list),
            np.concatenate(k_list),
            np.concatenate(neg_list, axis=0),
        )

    @staticmethod
    def _map_other(raw: np.ndarray, b: int, lengths: np.ndarray, T: int) -> np.ndarray:
        """Map draws over 'all valid frames of other utterances' to flat indices."""
        starts = np.concatenate([[0], np.cumsum(lengths)])
        own_start, own_len = starts[b], int(lengths[b])
        vpos = np.where(raw < own_start, raw, raw + own_len)
        # virtual position -> (utterance, time)
        u = np.searchsorted(starts, vpos, side="right") - 1
        t = vpos - starts[u]
        return u * T + t

    def _encode(self, x: np.ndarray, lengths: np.ndarray):
        if self.conv_variant:
            ctx, c_ctx = self.context.forward(self.store, x, lengths)
            return ctx, ctx, (None, c_ctx)
        z_raw, c_frame = self.frame.forward(self.store, x)
        z = apply_length_mask(z_raw, lengths)
        ctx, c_ctx = self.context.forward(self.store, z, lengths)
        return z, ctx, (c_frame, c_ctx)

    def loss(self, batch: Batch, step_seed=0) -> tuple[float, Tape]:
        x, lengths = batch.x, batch.lengths
        B, T, _ = x.shape
        if self.proposal == MIXED_SPK and B < 2:
            raise ProposalUnsatisfiableError(
                "mixed-speaker proposal needs more than one utterance per batch"
            )
        min_len = int(lengths.min())
        if self.K >= max(int(lengths.max()), 1):
            raise DegenerateBatchError(f"horizon {self.K} >= longest sequence")
        z, ctx, caches = self._encode(x, lengths)
        H = z.shape[-1]
        W = self.store["score.Wk"]

        b_idx, t_idx, k_idx, neg_idx = self._sample_terms(lengths, T, step_seed)
        z_flat = z.reshape(B * T, H)
        # v[m] = W[k_m] @ c[b_m, t_m]
        c_rows = ctx[b_idx, t_idx]
        v = np.empty_like(c_rows)
        for k in range(1, self.K + 1):
            sel = k_idx == k
            if sel.any():
                v[sel] = c_rows[sel] @ W[k - 1].T
        pos_flat = b_idx * T + t_idx + k_idx
        s_pos = np.einsum("mh,mh->m", z_flat[pos_flat], v)
        z_neg = z_flat[neg_idx]  # (M, N, H)
        s_neg = np.einsum("mnh,mh->mn", z_neg, v)

        losses, p_pos, p_neg = infonce_terms(s_pos, s_neg)
        M = losses.size
        loss = _check_loss(float(np.sum(losses, dtype=np.float64)) / M)
        payload = (
            caches,
            (b_idx, t_idx, k_idx, pos_flat, neg_idx),
            (p_pos, p_neg),
            (z, ctx, z_flat, z_neg, v, c_rows),
            (B, T, H, M),
            lengths,
        )
        return loss, Tape(payload)

    def backward(self, tape: Tape) -> dict[str, np.ndarray]:
        caches, idxs, probs, acts, dims, lengths = tape.consume()
        c_frame, c_ctx = caches
        b_idx, t_idx, k_idx, pos_flat, neg_idx = idxs
        p_pos, p_neg = probs
        z, ctx, z_flat, z_neg, v, c_rows = acts
        B, T, H, M = dims
        W = self.store["score.Wk"]
        grads: dict[str, np.ndarray] = {}

        ds_pos = ((p_pos - 1.0) / M).astype(z.dtype)
        ds_neg = (p_neg / M).astype(z.dtype)

        dv = ds_pos[:, None] * z_flat[pos_flat] + np.einsum("mn,mnh->mh", ds_neg, z_neg)
        dz_flat = np.zeros_like(z_flat)
        np.add.at(dz_flat, pos_flat, ds_pos[:, None] * v)
        np.add.at(
            dz_flat,
            neg_idx.reshape(-1),
            (ds_neg[:, :, None] * v[:, None, :]).reshape(-1, H),
        )

        # v = W[k] c  =>  dW[k] += dv c^T, dc += W[k]^T dv
        dW = np.zeros_like(W)
        dc_rows = np.empty_like(c_rows)
        for k in range(1, self.K + 1):
            sel = k_idx == k
            if not sel.any():
                continue
            dW[k - 1] = dv[sel].T @ c_rows[sel]
            dc_rows[sel] = dv[sel] @ W[k - 1]
        add_grad(grads, "score.Wk", dW)
        dctx = np.zeros_like(ctx)
        np.add.at(dctx, (b_idx, t_idx), dc_rows)

        dz = dz_flat.reshape(B, T, H)
        if self.conv_variant:
            self.context.backward(self.store, grads, c_ctx, dctx + dz)
        else:
            dz_total = dz + self.context.backward(self.store, grads, c_ctx, dctx)
            dz_total = dz_total * length_mask(lengths, T)[:, :, None]
            self.frame.backward(self.store, grads, c_frame, dz_total)
        return grads

    def representations(self, x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        _, ctx, _ = self._encode(x, lengths)
        return ctx


def build_model(config: ModelConfig, seed: int, dtype=np.float32):
    """Instantiate a model with seeded parameter initialization."""
    store = ParamStore(dtype)
    rng = np.random.default_rng([seed, 3])
    if config.objective == APC:
        model = ApcModel(config, store, rng)
    elif config.objective == MPC:
        model = MpcModel(config, store, rng)
    elif config.objective == CPC:
        model = CpcModel(config, store, rng)
    else:
        raise ContractError(f"unknown objective {config.objective!r}")
    return model
