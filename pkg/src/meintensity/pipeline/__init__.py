"""Training, evaluation, ablation and synthetic-data pipeline."""

from .data import ClipSample, load_frame, make_dataset, split
from .synthetic import SyntheticSpec, generate_synthetic, read_ground_truth, write_ground_truth
from .training import (
    VARIANTS,
    AblationRow,
    AblationSpec,
    TrainConfig,
    TrainingDiverged,
    TrainResult,
    evaluate,
    predict_all,
    read_log,
    run_ablation_suite,
    train,
)


def truth_on_grid(samples, truth):
    """Sample per-frame ground truth at each clip's resampled source indices."""
    return {s.clip_id: truth[s.clip_id][list(s.plan.source_indices)] for s in samples}
