"""Differentiable layers: linear, GRU, self-attention block, 1-D convolution.

Each layer follows the same functional contract:

    forward(store, x, ...) -> (y, cache)
    backward(store, grads, cache, dy) -> dx

Caches hold exactly the intermediates backward needs and live outside the
layer object, so a frozen ParamStore can serve concurrent forward passes.
Gradients accumulate into a plain dict via add_grad.
"""

from __future__ import annotations

import numpy as np

from .params import ParamStore, add_grad, uniform_init


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Clipping at 60 keeps exp in range; the tail error is below 1e-26.
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def length_mask(lengths: np.ndarray, max_len: int) -> np.ndarray:
    """(B, T) boolean validity mask from per-sequence lengths."""
    return np.arange(max_len)[None, :] < np.asarray(lengths)[:, None]


def apply_length_mask(x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Zero activations beyond each sequence's length."""
    mask = length_mask(lengths, x.shape[1])
    return np.where(mask[:, :, None], x, np.array(0.0, dtype=x.dtype))


def reverse_padded(x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Reverse each sequence's valid prefix, leaving tail padding in place."""
    B, T = x.shape[0], x.shape[1]
    t = np.arange(T)[None, :]
    lens = np.asarray(lengths)[:, None]
    idx = np.where(t < lens, lens - 1 - t, t)
    return np.take_along_axis(x, idx[:, :, None].astype(np.int64), axis=1)


class Linear:
    def __init__(self, name: str, d_in: int, d_out: int):
        self.name = name
        self.d_in = d_in
        self.d_out = d_out

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        store.add(f"{self.name}.W", uniform_init(rng, (self.d_in, self.d_out), self.d_in))
        store.add(f"{self.name}.b", np.zeros(self.d_out))

    def forward(self, store: ParamStore, x: np.ndarray):
        y = x @ store[f"{self.name}.W"] + store[f"{self.name}.b"]
        return y, x

    def backward(self, store: ParamStore, grads, cache, dy: np.ndarray):
        x = cache
        x2 = x.reshape(-1, self.d_in)
        dy2 = dy.reshape(-1, self.d_out)
        add_grad(grads, f"{self.name}.W", x2.T @ dy2)
        add_grad(grads, f"{self.name}.b", dy2.sum(axis=0))
        return dy @ store[f"{self.name}.W"].T


class GRULayer:
    """Single-direction GRU: z/r sigmoid gates, tanh candidate,
    h' = (1 - z) * h + z * tanh(Wc x + Uc (r * h) + bc)."""

    def __init__(self, name: str, d_in: int, hidden: int):
        self.name = name
        self.d_in = d_in
        self.hidden = hidden

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        H = self.hidden
        store.add(f"{self.name}.W", uniform_init(rng, (self.d_in, 3 * H), self.d_in))
        store.add(f"{self.name}.U", uniform_init(rng, (H, 2 * H), H))
        store.add(f"{self.name}.Uc", uniform_init(rng, (H, H), H))
        store.add(f"{self.name}.b", np.zeros(3 * H))

    def forward(self, store: ParamStore, x: np.ndarray):
        B, T, _ = x.shape
        H = self.hidden
        W = store[f"{self.name}.W"]
        U = store[f"{self.name}.U"]
        Uc = store[f"{self.name}.Uc"]
        b = store[f"{self.name}.b"]

        xw = x.reshape(B * T, -1) @ W
        xw += b
        xw = xw.reshape(B, T, 3 * H)

        h = np.zeros((B, H), dtype=x.dtype)
        hs = np.empty((B, T, H), dtype=x.dtype)
        z_all = np.empty((B, T, H), dtype=x.dtype)
        r_all = np.empty((B, T, H), dtype=x.dtype)
        hc_all = np.empty((B, T, H), dtype=x.dtype)
        hprev_all = np.empty((B, T, H), dtype=x.dtype)
        rh_all = np.empty((B, T, H), dtype=x.dtype)
        for t in range(T):
            gz = h @ U
            z = sigmoid(xw[:, t, :H] + gz[:, :H])
            r = sigmoid(xw[:, t, H : 2 * H] + gz[:, H:])
            rh = r * h
            hc = np.tanh(xw[:, t, 2 * H :] + rh @ Uc)
            hprev_all[:, t] = h
            h = (1.0 - z) * h + z * hc
            hs[:, t] = h
            z_all[:, t] = z
            r_all[:, t] = r
            hc_all[:, t] = hc
            rh_all[:, t] = rh
        cache = (x, z_all, r_all, hc_all, hprev_all, rh_all)
        return hs, cache

    def backward(self, store: ParamStore, grads, cache, dy: np.ndarray):
        x, z_all, r_all, hc_all, hprev_all, rh_all = cache
        B, T, _ = x.shape
        H = self.hidden
        W = store[f"{self.name}.W"]
        U = store[f"{self.name}.U"]
        Uc = store[f"{self.name}.Uc"]

        da3 = np.zeros((B, T, 3 * H), dtype=x.dtype)
        carry = np.zeros((B, H), dtype=x.dtype)
        for t in range(T - 1, -1, -1):
            z = z_all[:, t]
            r = r_all[:, t]
            hc = hc_all[:, t]
            hprev = hprev_all[:, t]
            dh = dy[:, t] + carry
            dz = dh * (hc - hprev)
            dhc = dh * z
            dhprev = dh * (1.0 - z)
            dac = dhc * (1.0 - hc * hc)
            drh = dac @ Uc.T
            dr = drh * hprev
            dhprev += drh * r
            daz = dz * z * (1.0 - z)
            dar = dr * r * (1.0 - r)
            da3[:, t, :H] = daz
            da3[:, t, H : 2 * H] = dar
            da3[:, t, 2 * H :] = dac
            carry = dhprev + daz @ U[:, :H].T + dar @ U[:, H:].T

        x2 = x.reshape(B * T, -1)
        da2 = da3.reshape(B * T, 3 * H)
        add_grad(grads, f"{self.name}.W", x2.T @ da2)
        add_grad(grads, f"{self.name}.b", da2.sum(axis=0))
        hp2 = hprev_all.reshape(B * T, H)
        add_grad(grads, f"{self.name}.U", hp2.T @ da2[:, : 2 * H])
        add_grad(grads, f"{self.name}.Uc", rh_all.reshape(B * T, H).T @ da2[:, 2 * H :])
        return da3 @ W.T


class LayerNorm:
    EPS = 1e-5

    def __init__(self, name: str, dim: int):
        self.name = name
        self.dim = dim

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        store.add(f"{self.name}.g", np.ones(self.dim))
        store.add(f"{self.name}.b", np.zeros(self.dim))

    def forward(self, store: ParamStore, x: np.ndarray):
        mu = x.mean(axis=-1, keepdims=True)
        var = np.square(x - mu).mean(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.EPS)
        xhat = (x - mu) * inv_std
        y = xhat * store[f"{self.name}.g"] + store[f"{self.name}.b"]
        return y, (xhat, inv_std)

    def backward(self, store: ParamStore, grads, cache, dy: np.ndarray):
        xhat, inv_std = cache
        g = store[f"{self.name}.g"]
        axes = tuple(range(dy.ndim - 1))
        add_grad(grads, f"{self.name}.g", (dy * xhat).sum(axis=axes))
        add_grad(grads, f"{self.name}.b", dy.sum(axis=axes))
        dxhat = dy * g
        mean_dxhat = dxhat.mean(axis=-1, keepdims=True)
        mean_dxhat_xhat = (dxhat * xhat).mean(axis=-1, keepdims=True)
        return inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)


def sinusoidal_positions(T: int, dim: int, dtype) -> np.ndarray:
    pos = np.arange(T, dtype=np.float64)[:, None]
    i = np.arange(dim // 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * i / dim)
    pe = np.zeros((T, dim))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : dim - dim // 2])
    return pe.astype(dtype)


class AttentionBlock:
    """Pre-norm block: x + MHA(LN(x)) then x + FFN(LN(x)). ReLU feed-forward."""

    NEG = -1e30

    def __init__(self, name: str, hidden: int, heads: int = 4, ffn_mult: int = 4):
        if hidden % heads:
            raise ValueError(f"hidden {hidden} not divisible by heads {heads}")
        self.name = name
        self.hidden = hidden
        self.heads = heads
        self.d_head = hidden // heads
        self.ln1 = LayerNorm(f"{name}.ln1", hidden)
        self.ln2 = LayerNorm(f"{name}.ln2", hidden)
        self.qkv = Linear(f"{name}.qkv", hidden, 3 * hidden)
        self.proj = Linear(f"{name}.proj", hidden, hidden)
        self.ff1 = Linear(f"{name}.ff1", hidden, ffn_mult * hidden)
        self.ff2 = Linear(f"{name}.ff2", ffn_mult * hidden, hidden)

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        for sub in (self.ln1, self.qkv, self.proj, self.ln2, self.ff1, self.ff2):
            sub.init_params(store, rng)

    def _split_heads(self, x: np.ndarray) -> np.ndarray:
        B, T, _ = x.shape
        return x.reshape(B, T, self.heads, self.d_head).transpose(0, 2, 1, 3)

    def _merge_heads(self, x: np.ndarray) -> np.ndarray:
        B, nh, T, dh = x.shape
        return x.transpose(0, 2, 1, 3).reshape(B, T, nh * dh)

    def forward(self, store: ParamStore, x: np.ndarray, allowed: np.ndarray):
        """allowed: broadcastable boolean (B or 1, 1, Tq, Tk) attention mask."""
        n1, c_ln1 = self.ln1.forward(store, x)
        qkv, c_qkv = self.qkv.forward(store, n1)
        q, k, v = np.split(qkv, 3, axis=-1)
        q = self._split_heads(q)
        k = self._split_heads(k)
        v = self._split_heads(v)
        scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(self.d_head).astype(x.dtype)
        scores = np.where(allowed, scores, np.array(self.NEG, dtype=x.dtype))
        scores -= scores.max(axis=-1, keepdims=True)
        exps = np.exp(scores)
        alpha = exps / exps.sum(axis=-1, keepdims=True)
        ctx = self._merge_heads(alpha @ v)
        att, c_proj = self.proj.forward(store, ctx)
        mid = x + att

        n2, c_ln2 = self.ln2.forward(store, mid)
        f1, c_ff1 = self.ff1.forward(store, n2)
        relu = np.maximum(f1, 0.0)
        f2, c_ff2 = self.ff2.forward(store, relu)
        out = mid + f2
        cache = (c_ln1, c_qkv, q, k, v, alpha, c_proj, c_ln2, c_ff1, f1, c_ff2)
        return out, cache

    def backward(self, store: ParamStore, grads, cache, dy: np.ndarray):
        c_ln1, c_qkv, q, k, v, alpha, c_proj, c_ln2, c_ff1, f1, c_ff2 = cache
        dmid = dy.copy()
        drelu = self.ff2.backward(store, grads, c_ff2, dy)
        df1 = drelu * (f1 > 0)
        dn2 = self.ff1.backward(store, grads, c_ff1, df1)
        dmid += self.ln2.backward(store, grads, c_ln2, dn2)

        dx = dmid.copy()
        dctx = self.proj.backward(store, grads, c_proj, dmid)
        dctx = self._split_heads(dctx)
        dalpha = dctx @ v.transpose(0, 1, 3, 2)
        dv = alpha.transpose(0, 1, 3, 2) @ dctx
        dscores = alpha * (dalpha - (dalpha * alpha).sum(axis=-1, keepdims=True))
        dscores /= np.sqrt(self.d_head).astype(dy.dtype)
        dq = dscores @ k
        dk = dscores.transpose(0, 1, 3, 2) @ q
        dqkv = np.concatenate(
            [self._merge_heads(dq), self._merge_heads(dk), self._merge_heads(dv)],
            axis=-1,
        )
        dn1 = self.qkv.backward(store, grads, c_qkv, dqkv)
        dx += self.ln1.backward(store, grads, c_ln1, dn1)
        return dx


class Conv1DLayer:
    """1-D convolution over time; causal (left) or centered same padding."""

    def __init__(
        self,
        name: str,
        d_in: int,
        d_out: int,
        kernel: int = 3,
        stride: int = 1,
        causal: bool = True,
    ):
        self.name = name
        self.d_in = d_in
        self.d_out = d_out
        self.kernel = kernel
        self.stride = stride
        self.causal = causal

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        fan_in = self.kernel * self.d_in
        store.add(f"{self.name}.W", uniform_init(rng, (fan_in, self.d_out), fan_in))
        # Nonzero bias keeps ReLU pre-activations off the exact kink even when
        # a receptive field is entirely zero (padding, dead units upstream).
        store.add(f"{self.name}.b", uniform_init(rng, (self.d_out,), fan_in))

    def _pads(self) -> tuple[int, int]:
        if self.causal:
            return self.kernel - 1, 0
        left = (self.kernel - 1) // 2
        return left, self.kernel - 1 - left

    def out_length(self, length: int) -> int:
        left, right = self._pads()
        return (length + left + right - self.kernel) // self.stride + 1

    def forward(self, store: ParamStore, x: np.ndarray):
        B, T, _ = x.shape
        left, right = self._pads()
        xp = np.pad(x, ((0, 0), (left, right), (0, 0)))
        T_out = self.out_length(T)
        idx = self.stride * np.arange(T_out)[:, None] + np.arange(self.kernel)[None, :]
        windows = xp[:, idx, :].reshape(B, T_out, self.kernel * self.d_in)
        y = windows @ store[f"{self.name}.W"] + store[f"{self.name}.b"]
        return y, (windows, T)

    def backward(self, store: ParamStore, grads, cache, dy: np.ndarray):
        windows, T = cache
        B, T_out, _ = dy.shape
        W = store[f"{self.name}.W"]
        win2 = windows.reshape(B * T_out, -1)
        dy2 = dy.reshape(B * T_out, -1)
        add_grad(grads, f"{self.name}.W", win2.T @ dy2)
        add_grad(grads, f"{self.name}.b", dy2.sum(axis=0))
        dwin = (dy2 @ W.T).reshape(B, T_out, self.kernel, self.d_in)
        left, right = self._pads()
        dxp = np.zeros((B, T + left + right, self.d_in), dtype=dy.dtype)
        base = self.stride * np.arange(T_out)
        for j in range(self.kernel):
            # For fixed kernel offset the target indices are distinct.
            dxp[:, base + j, :] += dwin[:, :, j, :]
        return dxp[:, left : left + T, :]
