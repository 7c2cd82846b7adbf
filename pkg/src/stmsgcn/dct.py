"""Orthonormal DCT-II / DCT-III along the last (time) axis.

Both transforms are plain matrix products with a precomputed basis so they work
on numpy arrays and on torch tensors (where autograd passes straight through).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import torch


@lru_cache(maxsize=64)
def _basis(T: int) -> np.ndarray:
    k = np.arange(T)[:, None]
    t = np.arange(T)[None, :]
    basis = np.sqrt(2.0 / T) * np.cos(np.pi * (2 * t + 1) * k / (2 * T))
    basis[0] /= np.sqrt(2.0)
    basis.flags.writeable = False
    return basis


def dct_matrix(T: int, n_coeffs: int | None = None) -> np.ndarray:
    """Row k holds the k-th orthonormal DCT-II basis vector; shape (n_coeffs, T)."""
    if T < 1:
        raise ValueError(f"trajectory length must be >= 1, got {T}")
    n = T if n_coeffs is None else n_coeffs
    if not 1 <= n <= T:
        raise ValueError(f"n_coeffs must lie in [1, {T}], got {n}")
    return _basis(T)[:n]


def _as_operand(basis: np.ndarray, x):
    if isinstance(x, torch.Tensor):
        return torch.tensor(basis, dtype=x.dtype, device=x.device)
    return basis.astype(np.result_type(x, np.float32), copy=False)


def dct_forward(traj, n_coeffs: int | None = None):
    """Transform each row (last axis = time) to its first ``n_coeffs`` coefficients."""
    T = traj.shape[-1]
    basis = _as_operand(dct_matrix(T, n_coeffs), traj)
    return traj @ basis.T


def dct_inverse(coeffs, T: int | None = None):
    """Inverse of :func:`dct_forward`; missing high-frequency coefficients are taken as zero.

    ``T`` defaults to the number of coefficients (no truncation).
    """
    n = coeffs.shape[-1]
    T = n if T is None else T
    basis = _as_operand(dct_matrix(T, n), coeffs)
    return coeffs @ basis
