"""Graph convolution kernels with free, dense, learnable adjacency."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import torch
from torch import nn

ACTIVATIONS = {
    "relu": torch.relu,
    "identity": lambda x: x,
}

ADJACENCY_NOISE = 1e-2


class DimensionError(ValueError):
    pass


class SubgraphKernel(nn.Module):
    """``act(A @ x @ W)`` over ``n_nodes`` graph nodes; no bias, no normalization."""

    def __init__(self, n_nodes: int, c_in: int, c_out: int, activation: str = "relu"):
        super().__init__()
        if min(n_nodes, c_in, c_out) < 1:
            raise DimensionError(f"non-positive kernel shape ({n_nodes}, {c_in}, {c_out})")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.n_nodes, self.c_in, self.c_out = n_nodes, c_in, c_out
        self.activation = activation
        self.adjacency = nn.Parameter(torch.eye(n_nodes))
        self.weight = nn.Parameter(torch.zeros(c_in, c_out))

    def reset_parameters(self, generator: torch.Generator, noise: float = ADJACENCY_NOISE) -> None:
        with torch.no_grad():
            bound = 1.0 / math.sqrt(self.c_in)
            w = torch.rand(self.c_in, self.c_out, generator=generator, dtype=torch.float64)
            self.weight.copy_((2 * w - 1) * bound)
            a = torch.rand(self.n_nodes, self.n_nodes, generator=generator, dtype=torch.float64)
            self.adjacency.copy_(torch.eye(self.n_nodes, dtype=torch.float64) + noise * (2 * a - 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-2:] != (self.n_nodes, self.c_in):
            raise DimensionError(
                f"kernel expects (..., {self.n_nodes}, {self.c_in}) input, got {tuple(x.shape)}"
            )
        return ACTIVATIONS[self.activation](self.adjacency @ x @ self.weight)

    def extra_repr(self) -> str:
        return f"n_nodes={self.n_nodes}, c_in={self.c_in}, c_out={self.c_out}, activation={self.activation}"


class MultiSubgraphLayer(nn.Module):
    """K parallel kernels on the same input, outputs averaged elementwise."""

    def __init__(self, n_nodes: int, c_in: int, c_out: int, K: int, activation: str = "relu"):
        super().__init__()
        if K < 1:
            raise DimensionError(f"K must be >= 1, got {K}")
        self.kernels = nn.ModuleList(SubgraphKernel(n_nodes, c_in, c_out, activation) for _ in range(K))

    @property
    def K(self) -> int:
        return len(self.kernels)

    def reset_parameters(self, generator: torch.Generator, noise: float = ADJACENCY_NOISE) -> None:
        for kernel in self.kernels:
            kernel.reset_parameters(generator, noise)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.stack([kernel(x) for kernel in self.kernels]).mean(dim=0)


def kernel_forward(kernel: SubgraphKernel, x: torch.Tensor) -> torch.Tensor:
    return kernel(x)


def layer_forward(layer: MultiSubgraphLayer, x: torch.Tensor) -> torch.Tensor:
    return layer(x)


def _pairwise_sq_frobenius(mats: list[torch.Tensor]) -> torch.Tensor:
    total = torch.zeros((), dtype=mats[0].dtype, device=mats[0].device)
    for a, b in itertools.combinations(mats, 2):
        total = total + ((a - b) ** 2).sum()
    return total


def adjacency_divergence(layer: MultiSubgraphLayer) -> torch.Tensor:
    """Sum over unordered kernel pairs of ``||A_k - A_u||_F^2``."""
    return _pairwise_sq_frobenius([k.adjacency for k in layer.kernels])


def weight_divergence(layer: MultiSubgraphLayer) -> torch.Tensor:
    """Same pairwise penalty applied to the feature transforms W."""
    return _pairwise_sq_frobenius([k.weight for k in layer.kernels])


@dataclass(frozen=True)
class LayerShape:
    N: int
    C_in: int
    C_out: int
    K: int


def init_layer(shape: LayerShape, seed: int, noise: float = ADJACENCY_NOISE,
               dtype: torch.dtype = torch.float64) -> MultiSubgraphLayer:
    """Uniform(+-1/sqrt(C_in)) weights, identity-plus-noise adjacencies, one draw per kernel."""
    if min(shape.N, shape.C_in, shape.C_out, shape.K) < 1:
        raise DimensionError(f"non-positive layer shape {shape}")
    layer = MultiSubgraphLayer(shape.N, shape.C_in, shape.C_out, shape.K).to(dtype)
    layer.reset_parameters(torch.Generator().manual_seed(seed), noise)
    return layer
