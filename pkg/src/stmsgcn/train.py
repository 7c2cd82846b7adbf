"""Training loop, finite-difference gradient check and ablation runner."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import torch

from .checkpoint import Checkpoint, checkpoint_from_model
from .config import AblationSpec, TrainConfig
from .losses import HorizonTable, LossBreakdown, evaluate_horizons, loss_l1, loss_st, loss_total, model_predictor
from .model import ModelConfig, StmsModel, pad_batch
from .motion import MotionSequence, Sample, SynthSpec, load_canonical, synthesize_motion, window_sequence

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "l1", "l_st", "l_con_s", "l_con_t", "total", "lr")


class TrainingError(RuntimeError):
    pass


class NonFiniteLossError(TrainingError):
    pass


def torch_dtype(precision: str) -> torch.dtype:
    return {"single": torch.float32, "double": torch.float64}[precision]


def load_sequence(dataset) -> MotionSequence:
    if isinstance(dataset, MotionSequence):
        return dataset
    if isinstance(dataset, str):
        return load_canonical(dataset)
    return synthesize_motion(dataset)


def build_samples(config: TrainConfig, dataset=None) -> list[Sample]:
    seq = load_sequence(config.dataset if dataset is None else dataset)
    m = config.model
    if (seq.J, seq.D) != (m.J, m.D):
        raise TrainingError(f"dataset has J={seq.J}, D={seq.D}; model expects J={m.J}, D={m.D}")
    samples = window_sequence(seq, m.T_p, m.T_f, config.stride)
    if config.max_samples is not None:
        samples = samples[:config.max_samples]
    if not samples:
        raise TrainingError(
            f"dataset of {len(seq)} frames yields no window of {m.T_p}+{m.T_f} frames"
        )
    return samples


def stack_samples(samples: Sequence[Sample], dtype: torch.dtype) -> tuple[torch.Tensor, torch.Tensor]:
    observed = torch.as_tensor(np.stack([s.observed.data for s in samples]), dtype=dtype)
    target = torch.as_tensor(np.stack([s.full() for s in samples]), dtype=dtype)
    return observed, target


def compute_loss(model: StmsModel, observed: torch.Tensor, target: torch.Tensor,
                 w_st: float, w_con: float, constraint: str = "A", squared: bool = True) -> LossBreakdown:
    """Forward pass plus every loss component.

    Components are always measured (for logging); only weighted ones enter
    ``total``. With ``constraint='none'`` the adjacency penalty is reported.
    """
    result = model(pad_batch(observed, model.config.T_f))
    l1 = loss_l1(result, target, squared)
    if result.temporal_preds and result.spatial_preds:
        l_st = loss_st(result.temporal_preds, result.spatial_preds, squared)
    else:
        l_st = l1.new_zeros(())
        w_st = 0.0
    if constraint == "none":
        w_con = 0.0
    l_con_s, l_con_t = model.consistency_penalties("A" if constraint == "none" else constraint)
    return loss_total(l1, l_st, l_con_s, l_con_t, w_st, w_con)


@dataclass
class EpochLog:
    epoch: int
    l1: float
    l_st: float
    l_con_s: float
    l_con_t: float
    total: float
    lr: float

    def row(self) -> list:
        return [getattr(self, c) for c in LOG_COLUMNS]


def log_to_csv(rows: Sequence[EpochLog]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_COLUMNS)
    for r in rows:
        writer.writerow([r.epoch] + [repr(float(v)) for v in r.row()[1:]])
    return buf.getvalue()


@dataclass
class TrainResult:
    model: StmsModel
    log: list[EpochLog]
    steps: int
    config: TrainConfig
    samples: list[Sample] = field(repr=False, default_factory=list)

    def checkpoint(self) -> Checkpoint:
        return checkpoint_from_model(self.model, self.steps, self.config.to_dict())


def make_optimizer(name: str, params, lr: float) -> torch.optim.Optimizer:
    if name == "sgd":
        return torch.optim.SGD(params, lr=lr)
    if name == "adam":
        return torch.optim.Adam(params, lr=lr)
    raise ValueError(f"unknown optimizer {name!r}")


def train(config: TrainConfig, samples: Sequence[Sample] | None = None) -> TrainResult:
    """Mini-batch gradient descent on the weighted total loss.

    Data order and initialization derive from ``config.seed`` alone. Each
    epoch's logged losses are the means over its batches, measured before the
    corresponding update.
    """
    samples = list(samples) if samples is not None else build_samples(config)
    if not samples:
        raise TrainingError("empty dataset")
    dtype = torch_dtype(config.precision)
    model = StmsModel(config.effective_model, seed=config.seed, dtype=dtype)
    observed, target = stack_samples(samples, dtype)
    w_st, w_con = config.effective_weights
    constraint = config.ablation.effective_constraint
    rng = np.random.default_rng(config.seed)
    params = list(model.parameters())
    lr = config.learning_rate
    optimizer = make_optimizer(config.optimizer, params, lr)
    history: list[EpochLog] = []
    steps = 0
    n = len(samples)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        sums = np.zeros(5)
        batches = 0
        for start in range(0, n, config.batch_size):
            idx = torch.as_tensor(order[start:start + config.batch_size])
            loss = compute_loss(model, observed[idx], target[idx], w_st, w_con, constraint, config.squared_loss)
            values = loss.components()
            for name, v in values.items():
                if not math.isfinite(v):
                    raise NonFiniteLossError(f"epoch {epoch}, step {steps + 1}: loss component {name} is {v}")
            optimizer.zero_grad(set_to_none=True)
            loss.total.backward()
            optimizer.step()
            sums += [values[k] for k in ("l1", "l_st", "l_con_s", "l_con_t", "total")]
            batches += 1
            steps += 1
        mean = sums / batches
        history.append(EpochLog(epoch, *mean.tolist(), lr))
        log.debug("epoch %d total %.6f l1 %.6f", epoch, mean[4], mean[0])
        lr *= config.lr_decay
        for group in optimizer.param_groups:
            group["lr"] = lr
    return TrainResult(model, history, steps, config, list(samples))


# --- gradient check ------------------------------------------------------------

DESK_MODEL = ModelConfig(T_p=3, T_f=2, J=2, D=2, C=4, L=2, K=2)


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_parameter: str
    per_parameter: dict[str, float]
    max_abs_error: float

    @property
    def checked(self) -> list[str]:
        return list(self.per_parameter)


def gradient_check(config: ModelConfig = DESK_MODEL, seed: int = 0, epsilon: float = 1e-6,
                   w_st: float = 0.1, w_con: float = 0.1, constraint: str = "A",
                   squared: bool = True) -> GradCheckResult:
    """Compare autograd against central differences of the total loss, in double precision.

    The model is built with random (non-zero) decoders so every parameter
    receives gradient signal.

    The relative error of a parameter tensor is
    ``||g_auto - g_fd|| / max(||g_auto||, ||g_fd||)`` (0 when both vanish);
    parameters outside the autograd graph are not checked.
    """
    if not 1e-8 <= epsilon <= 1e-4:
        raise ValueError(f"epsilon must lie in [1e-8, 1e-4], got {epsilon}")
    model = StmsModel(replace(config, decoder_init="random"), seed=seed, dtype=torch.float64)
    seq = synthesize_motion(_gradcheck_synth(config, seed))
    sample = window_sequence(seq, config.T_p, config.T_f)[0]
    observed, target = stack_samples([sample], torch.float64)

    def total() -> torch.Tensor:
        return compute_loss(model, observed, target, w_st, w_con, constraint, squared).total

    params = dict(model.named_parameters())
    for p in params.values():
        p.grad = None
    total().backward()
    per_param: dict[str, float] = {}
    max_abs = 0.0
    with torch.no_grad():
        for name, p in params.items():
            if p.grad is None:
                continue
            analytic = p.grad.detach().clone().reshape(-1)
            numeric = torch.empty_like(analytic)
            flat = p.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + epsilon
                up = total().item()
                flat[i] = orig - epsilon
                down = total().item()
                flat[i] = orig
                numeric[i] = (up - down) / (2 * epsilon)
            diff = torch.linalg.vector_norm(analytic - numeric).item()
            scale = max(torch.linalg.vector_norm(analytic).item(), torch.linalg.vector_norm(numeric).item())
            per_param[name] = diff / scale if scale > 0 else 0.0
            max_abs = max(max_abs, (analytic - numeric).abs().max().item())
    worst = max(per_param, key=per_param.get)
    return GradCheckResult(per_param[worst], worst, per_param, max_abs)


def _gradcheck_synth(config: ModelConfig, seed: int):
    return SynthSpec(J=config.J, D=config.D, frames=config.T, seed=seed)


# --- ablations -------------------------------------------------------------------

@dataclass
class AblationRun:
    spec: AblationSpec
    table: HorizonTable
    log: list[EpochLog]
    n_parameters: int
    model: StmsModel = field(repr=False)


def run_ablation(base: TrainConfig, specs: Sequence[AblationSpec], horizons_ms: Sequence[float],
                 samples: Sequence[Sample] | None = None,
                 eval_samples: Sequence[Sample] | None = None) -> list[AblationRun]:
    """Train one model per spec on identical data and seed, then evaluate each.

    Single-branch specs are evaluated on that branch's last-layer output.
    """
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise ValueError("ablation spec labels must be unique")
    samples = list(samples) if samples is not None else build_samples(base)
    eval_samples = list(eval_samples) if eval_samples is not None else samples
    runs = []
    for spec in specs:
        result = train(base.with_ablation(spec), samples)
        table = evaluate_horizons(model_predictor(result.model), eval_samples, horizons_ms)
        n_params = sum(p.numel() for p in result.model.parameters())
        runs.append(AblationRun(spec, table, result.log, n_params, result.model))
        log.info("ablation %s: average %.4f mm", spec.label, table.average)
    return runs


def ablation_csv(runs: Sequence[AblationRun]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["spec", "horizon_ms", "frame_index", "mpjpe_mm"])
    for run in runs:
        for row in run.table.csv_rows():
            writer.writerow([run.spec.label] + row)
    return buf.getvalue()


def desk_config(**overrides) -> TrainConfig:
    """Small synthetic run used by the overfit and pipeline checks."""
    model = DESK_MODEL
    base = TrainConfig(
        model=model,
        dataset=SynthSpec(J=model.J, D=model.D, frames=40, seed=0),
        max_samples=2,
        batch_size=2,
        epochs=500,
    )
    return replace(base, **overrides)
