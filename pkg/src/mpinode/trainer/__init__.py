"""Training: samplers, schedules, optimizer, the shooting loop and the structured fit."""
from ..sampling import ICSamplerSpec, sample_ics
from .loop import (
    HISTORY_COLUMNS,
    METHODS,
    BatchResult,
    Frozen,
    TrainConfig,
    TrainingState,
    TrainResult,
    batch_objective,
    init_state,
    read_history,
    save_best,
    train,
    train_epoch,
    truth_states,
    validation_mse,
    write_history,
)
from .optim import OptimizerState, adam_step, clip_gradient, cosine_lr
from .schedules import (
    EXPANDING,
    FULL_WINDOW,
    SLIDING,
    segment_bounds,
    split_segments,
    uniform_grid,
    window_schedule,
)
from .structured import collocation_loss_and_grad, fit_structured, relative_errors
