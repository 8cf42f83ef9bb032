"""Self-supervised objectives, the model grid, training and extraction."""

from .checkpoint import Checkpoint
from .configs import (
    APC,
    CPC,
    MIXED_SPK,
    MODEL_NAMES,
    MPC,
    SWEEP_MODEL_NAMES,
    WITHIN_SPK,
    ModelConfig,
    model_config,
)
from .extract import extract_representations, model_from_checkpoint, write_representations
from .models import (
    ApcModel,
    Batch,
    CpcModel,
    MpcModel,
    Tape,
    build_model,
    infonce_terms,
    mpc_mask,
)
from .trainer import (
    LossRow,
    TrainResult,
    bucket_batches,
    data_hours_tag,
    sweep_checkpoint_steps,
    train,
)

__all__ = [
    "Checkpoint",
    "APC",
    "MPC",
    "CPC",
    "MIXED_SPK",
    "WITHIN_SPK",
    "MODEL_NAMES",
    "SWEEP_MODEL_NAMES",
    "ModelConfig",
    "model_config",
    "extract_representations",
    "model_from_checkpoint",
    "write_representations",
    "ApcModel",
    "MpcModel",
    "CpcModel",
    "Batch",
    "Tape",
    "build_model",
    "infonce_terms",
    "mpc_mask",
    "LossRow",
    "TrainResult",
    "bucket_batches",
    "data_hours_tag",
    "sweep_checkpoint_steps",
    "train",
]
