"""Two-tower audiovisual model: embedding towers, fusion heads, loss."""

from .spec import ModelSpec, Modality, HeadType
from .network import (
    init_parameters,
    parameter_count,
    embed_visual,
    embed_audio,
    predict_static,
    predict_recurrent,
    forward,
    compute_loss,
    loss_and_grads,
)
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "ModelSpec",
    "Modality",
    "HeadType",
    "init_parameters",
    "parameter_count",
    "embed_visual",
    "embed_audio",
    "predict_static",
    "predict_recurrent",
    "forward",
    "compute_loss",
    "loss_and_grads",
    "save_checkpoint",
    "load_checkpoint",
]
