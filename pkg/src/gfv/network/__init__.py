"""Twin-branch embedding network: model, loss, training, checkpointing."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import EMBEDDING_LENGTH, ArchitectureConfig, TrainConfig
from .gradcheck import CHECK_ARCH, gradient_check, gradient_check_sweep, make_check_instance
from .loss import contrastive_batch, contrastive_loss, mismatch_count, pair_distance
from .model import (
    SiameseParams,
    backward_batch,
    embed_pair,
    forward_batch,
    forward_branch,
    init_params,
)
from .train import Adam, LossTrace, train

__all__ = [
    "EMBEDDING_LENGTH",
    "ArchitectureConfig",
    "TrainConfig",
    "SiameseParams",
    "Adam",
    "LossTrace",
    "CHECK_ARCH",
    "init_params",
    "forward_branch",
    "forward_batch",
    "backward_batch",
    "embed_pair",
    "pair_distance",
    "mismatch_count",
    "contrastive_loss",
    "contrastive_batch",
    "train",
    "gradient_check",
    "gradient_check_sweep",
    "make_check_instance",
    "save_checkpoint",
    "load_checkpoint",
]
