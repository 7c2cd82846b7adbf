"""Dual-branch multi-subgraph GCN predictor.

The temporal branch treats the ``T_p + T_f`` padded frames as graph nodes; the
spatial branch treats the ``J * D`` coordinate trajectories as nodes and works
on their DCT coefficients. Each branch is an L-deep stack of
:class:`~stmsgcn.graph.MultiSubgraphLayer` encoders whose every intermediate
representation is decoded by one shared single-kernel GCN and added back to the
padded input.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .dct import dct_forward, dct_inverse
from .graph import ADJACENCY_NOISE, MultiSubgraphLayer, SubgraphKernel, adjacency_divergence, weight_divergence
from .motion import MotionSequence, pad_observation


class ConfigMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    T_p: int = 10
    T_f: int = 10
    J: int = 4
    D: int = 3
    C: int = 64
    L: int = 4
    K: int = 4
    dct_truncation: int | None = None
    temporal: bool = True
    spatial: bool = True
    adjacency_noise: float = ADJACENCY_NOISE
    decoder_init: str = "zero"

    def __post_init__(self):
        # D is not restricted to 2/3 here: the network is agnostic to coordinate width
        for name in ("T_p", "T_f", "J", "D", "C", "L", "K"):
            if getattr(self, name) < 1:
                raise ValueError(f"model.{name} must be >= 1, got {getattr(self, name)}")
        if self.dct_truncation is not None and not 1 <= self.dct_truncation <= self.T:
            raise ValueError(f"model.dct_truncation must lie in [1, {self.T}]")
        if self.decoder_init not in ("zero", "random"):
            raise ValueError(f"model.decoder_init must be zero or random, got {self.decoder_init!r}")
        if not (self.temporal or self.spatial):
            raise ValueError("at least one branch must be enabled")

    @property
    def T(self) -> int:
        return self.T_p + self.T_f

    @property
    def n_coords(self) -> int:
        return self.J * self.D

    @property
    def n_dct(self) -> int:
        return self.dct_truncation or self.T

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class Embedding(nn.Module):
    """Row-wise ``W2 relu(W1 x + b1) + b2``."""

    def __init__(self, d_in: int, C: int):
        super().__init__()
        self.fc1 = nn.Linear(d_in, C)
        self.fc2 = nn.Linear(C, C)

    def reset_parameters(self, generator: torch.Generator) -> None:
        with torch.no_grad():
            for fc in (self.fc1, self.fc2):
                bound = 1.0 / math.sqrt(fc.in_features)
                for p in (fc.weight, fc.bias):
                    u = torch.rand(p.shape, generator=generator, dtype=torch.float64)
                    p.copy_((2 * u - 1) * bound)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(torch.relu(self.fc1(x)))


def frame_embed(embed: Embedding, x: torch.Tensor) -> torch.Tensor:
    return embed(x)


class _Branch(nn.Module):
    def __init__(self, n_nodes: int, d_in: int, d_out: int, cfg: ModelConfig):
        super().__init__()
        self.embed = Embedding(d_in, cfg.C)
        self.encoders = nn.ModuleList(
            MultiSubgraphLayer(n_nodes, cfg.C, cfg.C, cfg.K) for _ in range(cfg.L)
        )
        self.decoder = SubgraphKernel(n_nodes, cfg.C, d_out, activation="identity")

    def reset_parameters(self, generator: torch.Generator, noise: float, decoder_init: str) -> None:
        self.embed.reset_parameters(generator)
        for layer in self.encoders:
            layer.reset_parameters(generator, noise)
        self.decoder.reset_parameters(generator, noise)
        if decoder_init == "zero":
            with torch.no_grad():
                self.decoder.weight.zero_()

    def encode(self, x: torch.Tensor) -> list[torch.Tensor]:
        h = self.embed(x)
        states = []
        for layer in self.encoders:
            h = layer(h)
            states.append(h)
        return states

    def consistency(self, target: str) -> torch.Tensor:
        zero = self.decoder.weight.new_zeros(())
        total = zero
        for layer in self.encoders:
            if target in ("A", "both"):
                total = total + adjacency_divergence(layer)
            if target in ("W", "both"):
                total = total + weight_divergence(layer)
        return total


class TemporalBranch(_Branch):
    def __init__(self, cfg: ModelConfig):
        super().__init__(cfg.T, cfg.n_coords, cfg.n_coords, cfg)

    def forward(self, padded: torch.Tensor) -> list[torch.Tensor]:
        B, T, J, D = padded.shape
        x = padded.reshape(B, T, J * D)
        return [self.decoder(m).reshape(B, T, J, D) + padded for m in self.encode(x)]


class SpatialBranch(_Branch):
    def __init__(self, cfg: ModelConfig):
        super().__init__(cfg.n_coords, cfg.n_dct, cfg.n_dct, cfg)
        self.n_dct = cfg.n_dct

    def forward(self, padded: torch.Tensor) -> list[torch.Tensor]:
        B, T, J, D = padded.shape
        x = padded.reshape(B, T, J * D).transpose(1, 2)
        coeffs = dct_forward(x, self.n_dct)
        preds = []
        for m in self.encode(coeffs):
            traj = dct_inverse(self.decoder(m), T)
            preds.append(traj.transpose(1, 2).reshape(B, T, J, D) + padded)
        return preds


@dataclass
class ForwardResult:
    """Per-layer predictions, each shaped (..., T_p + T_f, J, D).

    A disabled branch contributes an empty list.
    """

    temporal_preds: list[torch.Tensor] = field(default_factory=list)
    spatial_preds: list[torch.Tensor] = field(default_factory=list)

    @property
    def final(self) -> torch.Tensor:
        return (self.spatial_preds or self.temporal_preds)[-1]

    def output(self, which: str = "spatial") -> torch.Tensor:
        if which == "spatial":
            return self.final
        if which == "temporal":
            return (self.temporal_preds or self.spatial_preds)[-1]
        if which == "fusion":
            if not (self.temporal_preds and self.spatial_preds):
                raise ValueError("fusion output needs both branches")
            return 0.5 * (self.temporal_preds[-1] + self.spatial_preds[-1])
        raise ValueError(f"unknown output {which!r}")


class StmsModel(nn.Module):
    def __init__(self, config: ModelConfig, seed: int = 0, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config
        self.temporal = TemporalBranch(config) if config.temporal else None
        self.spatial = SpatialBranch(config) if config.spatial else None
        self.to(dtype)
        self.reset_parameters(seed)

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def reset_parameters(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        for branch in (self.temporal, self.spatial):
            if branch is not None:
                branch.reset_parameters(gen, self.config.adjacency_noise, self.config.decoder_init)

    def zero_decoders(self) -> None:
        with torch.no_grad():
            for branch in self.branches():
                branch.decoder.adjacency.zero_()
                branch.decoder.weight.zero_()

    def branches(self) -> list[_Branch]:
        return [b for b in (self.temporal, self.spatial) if b is not None]

    def forward(self, padded: torch.Tensor) -> ForwardResult:
        cfg = self.config
        if padded.shape[-3:] != (cfg.T, cfg.J, cfg.D):
            raise ConfigMismatchError(
                f"expected padded input (..., {cfg.T}, {cfg.J}, {cfg.D}), got {tuple(padded.shape)}"
            )
        lead = padded.shape[:-3]
        x = padded.reshape(-1, cfg.T, cfg.J, cfg.D)

        def unflatten(preds):
            return [p.reshape(*lead, cfg.T, cfg.J, cfg.D) for p in preds]

        return ForwardResult(
            temporal_preds=unflatten(self.temporal(x)) if self.temporal is not None else [],
            spatial_preds=unflatten(self.spatial(x)) if self.spatial is not None else [],
        )

    def consistency_penalties(self, target: str = "A") -> tuple[torch.Tensor, torch.Tensor]:
        """(spatial, temporal) homogeneous-information penalties summed over layers.

        ``target`` is one of ``none``, ``A`` (adjacency), ``W`` (weights), ``both``.
        """
        if target not in ("none", "A", "W", "both"):
            raise ValueError(f"unknown constraint target {target!r}")
        zero = next(self.parameters()).new_zeros(())
        con_s = self.spatial.consistency(target) if self.spatial is not None else zero
        con_t = self.temporal.consistency(target) if self.temporal is not None else zero
        return con_s, con_t


def pad_batch(observed: torch.Tensor, T_f: int) -> torch.Tensor:
    """Tensor version of :func:`pad_observation` over shape (..., T_p, J, D)."""
    last = observed[..., -1:, :, :]
    reps = [1] * observed.dim()
    reps[-3] = T_f
    return torch.cat([observed, last.repeat(*reps)], dim=-3)


def model_forward(model: StmsModel, observed) -> ForwardResult:
    """Pad ``observed`` (a MotionSequence or a (..., T_p, J, D) array) and run both branches."""
    cfg = model.config
    if isinstance(observed, MotionSequence):
        if (len(observed), observed.J, observed.D) != (cfg.T_p, cfg.J, cfg.D):
            raise ConfigMismatchError(
                f"observed sequence is ({len(observed)}, {observed.J}, {observed.D}), "
                f"model expects ({cfg.T_p}, {cfg.J}, {cfg.D})"
            )
        padded = torch.tensor(pad_observation(observed, cfg.T_f).data, dtype=model.dtype)
    else:
        obs = torch.as_tensor(np.array(observed) if not isinstance(observed, torch.Tensor) else observed,
                              dtype=model.dtype)
        if obs.shape[-3:] != (cfg.T_p, cfg.J, cfg.D):
            raise ConfigMismatchError(
                f"observed window has shape {tuple(obs.shape)}, model expects (..., {cfg.T_p}, {cfg.J}, {cfg.D})"
            )
        padded = pad_batch(obs, cfg.T_f)
    return model(padded)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
