from .schemas import (
    Checkpoint, CheckpointMeta, EpochRecord, TrainConfig, TrainProfile, TrainResult, TrainSample,
)
from .sampler import SampleDrawer, calibration_rows, draw_sample
from .checkpoint import MAGIC, VERSION, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .trainer import batch_gradients, evaluate_loss, reduce_batch, sample_gradient, train, train_ensemble
from .schedule import CheckpointSchedule, calibration_end_for, train_yearly
