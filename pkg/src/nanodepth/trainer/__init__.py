from .loop import (
    EvalPoint,
    TrainingDiverged,
    TrainResult,
    fit_output_range,
    holdout_set,
    median_baseline_rmse,
    predict,
    train,
)
from .optim import AdamState, adam_step, l1_loss
from .scenes import SceneConfig, generate_scene, make_batch, shade
