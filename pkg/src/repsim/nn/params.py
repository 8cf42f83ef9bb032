"""Named parameter tensors with Adam state.

A ParamStore owns every trainable array of one model plus the optimizer
moments. Training mutates it through adam_step only; forward passes treat
it as read-only, so extraction from a frozen store is thread-safe.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, NumericalError, ShapeError


class ParamStore:
    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise ContractError(f"parameter {name!r} registered twice")
        arr = np.ascontiguousarray(value, dtype=self.dtype)
        self.params[name] = arr
        self._m[name] = np.zeros_like(arr)
        self._v[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(p) for name, p in self.params.items()}

    def clone_values(self) -> dict[str, np.ndarray]:
        return {name: p.copy() for name, p in self.params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, arr in values.items():
            if name not in self.params:
                raise ContractError(f"unknown parameter {name!r}")
            if self.params[name].shape != arr.shape:
                raise ShapeError(
                    f"{name}: shape {arr.shape} != expected {self.params[name].shape}"
                )
            self.params[name] = np.ascontiguousarray(arr, dtype=self.dtype)


def add_grad(grads: dict[str, np.ndarray], name: str, delta: np.ndarray) -> None:
    """Accumulate into a gradient dict (layers may fire more than once)."""
    if name in grads:
        grads[name] += delta
    else:
        grads[name] = np.array(delta, copy=True)


def adam_step(
    store: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update; missing gradients are treated as zero."""
    for name, g in grads.items():
        if name not in store.params:
            raise ContractError(f"gradient for unknown parameter {name!r}")
        if g.shape != store.params[name].shape:
            raise ShapeError(
                f"{name}: gradient shape {g.shape} != parameter {store.params[name].shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name!r}")
    store.step += 1
    t = store.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in store.params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        p -= (lr / bc1) * m / (np.sqrt(v / bc2) + eps)


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)
