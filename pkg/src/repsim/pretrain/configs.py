"""The nine-model grid: objectives, building blocks, directionality.

Model names are fixed identifiers; a name fully determines the objective,
the encoder kind, and the directionality. `hidden` is the total
representation width; fw+bw pairs and bidirectional encoders split it in
half per direction.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

from ..errors import ConfigError
from ..nn.encoders import EncoderSpec

APC, MPC, CPC = "apc", "mpc", "cpc"
MIXED_SPK, WITHIN_SPK = "mixed_spk", "within_spk"


@dataclass(frozen=True)
class ModelConfig:
    name: str
    objective: str
    encoder: EncoderSpec  # per-direction spec when directional_pair is set
    directional_pair: bool = False  # fw+bw: two independently trained models
    apc_shift: int = 3
    mpc_mask_span: int = 7
    mpc_mask_fraction: float = 0.15
    cpc_horizon: int = 3
    cpc_negatives: int = 10
    cpc_proposal: str | None = None

    @property
    def representation_dim(self) -> int:
        return self.encoder.hidden * (2 if self.directional_pair else 1)

    def to_dict(self) -> dict:
        out = asdict(self)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        obj = dict(obj)
        obj["encoder"] = EncoderSpec(**obj["encoder"])
        return cls(**obj)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, blob: str) -> "ModelConfig":
        return cls.from_dict(json.loads(blob))


# name -> (objective, encoder kind, directional_pair, bidirectional, proposal, layers)
_GRID: dict[str, tuple] = {
    "apc-fw-rnn": (APC, "gru", False, False, None, 3),
    "apc-fw+bw-rnn": (APC, "gru", True, False, None, 3),
    "apc-fw-trf": (APC, "causal-attention", False, False, None, 3),
    "apc-fw+bw-trf": (APC, "causal-attention", True, False, None, 3),
    "mpc-birnn": (MPC, "gru", False, True, None, 3),
    "mpc-trf": (MPC, "bidirectional-attention", False, False, None, 3),
    "cpc-mixed_spk-rnn": (CPC, "gru", False, False, MIXED_SPK, 3),
    "cpc-within_spk-rnn": (CPC, "gru", False, False, WITHIN_SPK, 3),
    "cpc-within_spk-cnn": (CPC, "conv", False, False, WITHIN_SPK, 5),
}

MODEL_NAMES = tuple(_GRID)

# Models compared in the loss/error correlation study: one per objective
# flavour, matched on the GRU building block.
SWEEP_MODEL_NAMES = (
    "apc-fw-rnn",
    "mpc-birnn",
    "cpc-mixed_spk-rnn",
    "cpc-within_spk-rnn",
)


def model_config(
    name: str,
    hidden: int = 512,
    input_dim: int = 80,
    **overrides,
) -> ModelConfig:
    """Build the grid entry `name` at the requested total hidden width."""
    if name not in _GRID:
        raise ConfigError(f"unknown model name {name!r}; known: {', '.join(MODEL_NAMES)}")
    objective, kind, pair, bidir, proposal, layers = _GRID[name]
    enc_hidden = hidden // 2 if pair else hidden
    if pair and hidden % 2:
        raise ConfigError(f"{name}: hidden must be even for fw+bw models")
    encoder = EncoderSpec(
        kind=kind,
        layers=layers,
        hidden=enc_hidden,
        input_dim=input_dim,
        bidirectional=bidir,
    )
    config = ModelConfig(
        name=name,
        objective=objective,
        encoder=encoder,
        directional_pair=pair,
        cpc_proposal=proposal,
    )
    if overrides:
        config = replace(config, **overrides)
    return config
