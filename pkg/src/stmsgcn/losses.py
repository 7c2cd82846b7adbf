"""Training losses and the MPJPE horizon protocol."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from .model import ForwardResult, model_forward
from .motion import Sample


class InvalidHorizonError(ValueError):
    pass


def pose_error(pred, gt, squared: bool = False):
    """Mean over every (sample, frame, joint) of the joint position distance.

    Works on torch tensors (differentiable, returns a 0-d tensor) or numpy
    arrays (returns a float). ``squared=True`` averages squared distances.
    """
    if tuple(pred.shape) != tuple(gt.shape):
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    if not isinstance(pred, torch.Tensor) or not isinstance(gt, torch.Tensor):
        diff = np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64)
        sq = (diff ** 2).sum(axis=-1)
        return float(sq.mean() if squared else np.sqrt(sq).mean())
    diff = pred - gt
    if squared:
        return (diff ** 2).sum(dim=-1).mean()
    return torch.linalg.vector_norm(diff, dim=-1).mean()


def loss_l1(result: ForwardResult, target, squared: bool = False):
    """Final-output error over the whole padded horizon, observed frames included."""
    return pose_error(result.final, target, squared)


def loss_st(temporal_preds: Sequence, spatial_preds: Sequence, squared: bool = False):
    """Cross-branch discrepancy summed over layers."""
    if len(temporal_preds) != len(spatial_preds):
        raise ValueError(f"layer count mismatch: {len(temporal_preds)} vs {len(spatial_preds)}")
    if not temporal_preds:
        raise ValueError("loss_st needs at least one layer")
    total = pose_error(temporal_preds[0], spatial_preds[0], squared)
    for t, s in zip(temporal_preds[1:], spatial_preds[1:]):
        total = total + pose_error(t, s, squared)
    return total


@dataclass
class LossBreakdown:
    l1: torch.Tensor
    l_st: torch.Tensor
    l_con_s: torch.Tensor
    l_con_t: torch.Tensor
    total: torch.Tensor
    w_st: float
    w_con: float

    def components(self) -> dict[str, float]:
        return {name: float(getattr(self, name).detach()) for name in ("l1", "l_st", "l_con_s", "l_con_t", "total")}


def loss_total(l1, l_st, l_con_s, l_con_t, w_st: float, w_con: float) -> LossBreakdown:
    """``l1 + w_st * l_st + w_con * (l_con_s + l_con_t)``.

    Terms with a zero weight are left out of the sum (and of the autograd
    graph), so a zero-weight total is the very same object as ``l1``.
    """
    total = l1
    if w_st != 0:
        total = total + w_st * l_st
    if w_con != 0:
        total = total + w_con * (l_con_s + l_con_t)
    return LossBreakdown(l1, l_st, l_con_s, l_con_t, total, w_st, w_con)


# --- horizon evaluation ----------------------------------------------------

def horizon_frame(horizon_ms: float, frame_rate_hz: float) -> int:
    """1-based future-frame index for a horizon, rounding half up."""
    return int(math.floor(horizon_ms / 1000.0 * frame_rate_hz + 0.5))


@dataclass(frozen=True)
class HorizonRow:
    horizon_ms: float
    frame_index: int
    mpjpe_mm: float


@dataclass(frozen=True)
class HorizonTable:
    rows: tuple[HorizonRow, ...]

    @property
    def average(self) -> float:
        return float(np.mean([r.mpjpe_mm for r in self.rows]))

    def csv_rows(self) -> list[list[str]]:
        out = [[_fmt_ms(r.horizon_ms), str(r.frame_index), f"{r.mpjpe_mm:.6f}"] for r in self.rows]
        out.append(["average", "", f"{self.average:.6f}"])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["horizon_ms", "frame_index", "mpjpe_mm"])
        writer.writerows(self.csv_rows())
        return buf.getvalue()


def _fmt_ms(ms: float) -> str:
    return str(int(ms)) if float(ms).is_integer() else repr(float(ms))


Predictor = Callable[[Sample], np.ndarray]


def evaluate_horizons(predictor: Predictor, samples: Sequence[Sample],
                      horizons_ms: Sequence[float]) -> HorizonTable:
    """MPJPE at single future frames, averaged over samples.

    ``predictor(sample)`` returns the predicted future, shape (T_f, J, D).
    Honest predictors only read ``sample.observed``.
    """
    if not samples:
        raise ValueError("no samples to evaluate")
    horizons = [float(h) for h in horizons_ms]
    if not horizons:
        raise InvalidHorizonError("no horizons given")
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise InvalidHorizonError(f"horizons must be strictly increasing: {horizons}")
    rate, T_f = samples[0].observed.frame_rate_hz, samples[0].T_f
    if any(s.observed.frame_rate_hz != rate or s.T_f != T_f for s in samples):
        raise ValueError("samples disagree on frame rate or T_f")
    frames = [horizon_frame(h, rate) for h in horizons]
    for h, f in zip(horizons, frames):
        if not 1 <= f <= T_f:
            raise InvalidHorizonError(
                f"horizon {h} ms maps to future frame {f} at {rate} Hz, outside 1..{T_f}"
            )
    preds = np.stack([np.asarray(predictor(s), dtype=np.float64) for s in samples])
    truth = np.stack([s.future.data for s in samples])
    if preds.shape != truth.shape:
        raise ValueError(f"predictor returned shape {preds.shape[1:]}, expected {truth.shape[1:]}")
    rows = tuple(
        HorizonRow(h, f, pose_error(preds[:, f - 1], truth[:, f - 1]))
        for h, f in zip(horizons, frames)
    )
    return HorizonTable(rows)


def oracle_predictor(sample: Sample) -> np.ndarray:
    return sample.future.data


def zero_velocity_predictor(sample: Sample) -> np.ndarray:
    return np.repeat(sample.observed.data[-1:], sample.T_f, axis=0)


def model_predictor(model, output: str = "spatial") -> Predictor:
    def predict(sample: Sample) -> np.ndarray:
        with torch.no_grad():
            full = model_forward(model, sample.observed).output(output)
        return full[model.config.T_p:].to(torch.float64).numpy()

    return predict
