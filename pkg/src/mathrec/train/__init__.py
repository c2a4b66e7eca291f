from mathrec.train.checkpoint import TrainingState, load_checkpoint, save_checkpoint
from mathrec.train.config import TrainConfig, apply_overrides, load_train_config
from mathrec.train.data import Batch, FormulaDataset, epoch_batches, load_image
from mathrec.train.loop import TrainResult, step_losses, train_loop
from mathrec.train.schedule import lr_schedule

__all__ = [
    "Batch", "FormulaDataset", "TrainConfig", "TrainResult", "TrainingState", "apply_overrides",
    "epoch_batches", "load_checkpoint", "load_image", "load_train_config", "lr_schedule",
    "save_checkpoint", "step_losses", "train_loop",
]
