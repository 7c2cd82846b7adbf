"""Spatio-temporal multi-subgraph GCN for 3D human motion prediction."""

__version__ = "0.1.0"

from .checkpoint import load_checkpoint, save_checkpoint
from .config import AblationSpec, TrainConfig
from .dct import dct_forward, dct_inverse
from .graph import MultiSubgraphLayer, SubgraphKernel, adjacency_divergence, init_layer
from .losses import HorizonTable, evaluate_horizons, loss_l1, loss_st, loss_total, pose_error
from .model import ForwardResult, ModelConfig, StmsModel, model_forward
from .motion import (
    MotionSequence,
    Pose,
    Sample,
    SynthSpec,
    load_canonical,
    pad_observation,
    save_canonical,
    synthesize_motion,
    window_sequence,
)
from .train import gradient_check, run_ablation, train

__all__ = [
    "AblationSpec", "ForwardResult", "HorizonTable", "ModelConfig", "MotionSequence",
    "MultiSubgraphLayer", "Pose", "Sample", "StmsModel", "SubgraphKernel", "SynthSpec",
    "TrainConfig", "adjacency_divergence", "dct_forward", "dct_inverse", "evaluate_horizons",
    "gradient_check", "init_layer", "load_canonical", "load_checkpoint", "loss_l1", "loss_st",
    "loss_total", "model_forward", "pad_observation", "pose_error", "run_ablation",
    "save_canonical", "save_checkpoint", "synthesize_motion", "train", "window_sequence",
]
