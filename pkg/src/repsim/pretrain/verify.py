"""Model-level gradient verification against central finite differences."""

from __future__ import annotations

import numpy as np

from ..nn.gradcheck import grad_check
from .configs import ModelConfig, model_config
from .models import Batch, build_model


def grad_check_model(
    config: ModelConfig,
    T: int = 12,
    batch_size: int = 2,
    seed: int = 5,
    h: float = 1e-5,
    equal_lengths: bool = False,
) -> dict[str, float]:
    """Max relative gradient error per parameter tensor for one model config.

    Runs in float64; the loss closure fixes the data, the mask/negative seed,
    and the parameter store, so repeated evaluations are deterministic.
    """
    rng = np.random.default_rng([seed, 99])
    model = build_model(config, seed=seed, dtype=np.float64)
    lengths = [T] * batch_size if equal_lengths else [T - min(i, T // 3) for i in range(batch_size)]
    frames = [rng.normal(size=(L, config.encoder.input_dim)) for L in lengths]
    batch = Batch.from_sequences(frames, dtype=np.float64)
    step_seed = [seed, 4, 0]

    def loss_and_grads():
        loss, tape = model.loss(batch, step_seed)
        return loss, model.backward(tape)

    def loss_only():
        loss, _ = model.loss(batch, step_seed)
        return loss

    return grad_check(loss_and_grads, loss_only, model.store, h=h)


def toy_config(name: str, hidden: int = 16) -> ModelConfig:
    """Grid config at toy scale; CPC negative count shrunk so the
    within-utterance proposal fits a 12-frame sequence."""
    overrides = {}
    if name.startswith("cpc"):
        overrides["cpc_negatives"] = 6
    return model_config(name, hidden=hidden, **overrides)


def check_one(
    name: str,
    hidden: int = 16,
    T: int = 12,
    batch_size: int = 2,
    seed: int = 5,
) -> tuple[str, float, float]:
    """Worker-friendly single-model check: (name, worst vector error,
    worst per-element error)."""
    report = grad_check_model(toy_config(name, hidden), T=T, batch_size=batch_size, seed=seed)
    worst_norm = max(e.norm_rel for e in report.values())
    worst_elem = max(e.max_elem_rel for e in report.values())
    return name, worst_norm, worst_elem
