from .hough import VoteParams, hough_vote
from .losses import loss_ce, loss_dice, loss_dir, total_loss
from .model import (
    AffordanceNet,
    AffordancePrediction,
    ModelConfig,
    load_affordance_checkpoint,
    save_affordance_checkpoint,
)
from .train import TrainConfig, TrainingDiverged, train

__all__ = [
    "AffordanceNet",
    "AffordancePrediction",
    "ModelConfig",
    "TrainConfig",
    "TrainingDiverged",
    "VoteParams",
    "hough_vote",
    "load_affordance_checkpoint",
    "loss_ce",
    "loss_dice",
    "loss_dir",
    "save_affordance_checkpoint",
    "total_loss",
    "train",
]
