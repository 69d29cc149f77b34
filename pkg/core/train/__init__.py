"""Joint training: configuration, schedule, optimizer, checkpoints and the loop."""

from core.train.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from core.train.config import TrainConfig
from core.train.optimizer import TrainState, global_grad_norm, optimizer_step
from core.train.schedule import lr_at
from core.train.trainer import Trainer, TrainResult, joint_loss, load_model

__all__ = [
    "Checkpoint", "load_checkpoint", "save_checkpoint", "TrainConfig", "TrainState", "global_grad_norm",
    "optimizer_step", "lr_at", "Trainer", "TrainResult", "joint_loss", "load_model",
]
