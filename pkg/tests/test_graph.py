import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from stmsgcn.graph import (
    DimensionError,
    LayerShape,
    MultiSubgraphLayer,
    SubgraphKernel,
    adjacency_divergence,
    init_layer,
    weight_divergence,
)


def kernel_with(A, W, activation="relu"):
    A, W = torch.tensor(A, dtype=torch.float64), torch.tensor(W, dtype=torch.float64)
    k = SubgraphKernel(A.shape[0], W.shape[0], W.shape[1], activation).double()
    with torch.no_grad():
        k.adjacency.copy_(A)
        k.weight.copy_(W)
    return k


def layer_with(pairs):
    A0, W0 = np.asarray(pairs[0][0]), np.asarray(pairs[0][1])
    layer = MultiSubgraphLayer(A0.shape[0], W0.shape[0], W0.shape[1], len(pairs)).double()
    with torch.no_grad():
        for kernel, (A, W) in zip(layer.kernels, pairs):
            kernel.adjacency.copy_(torch.tensor(A, dtype=torch.float64))
            kernel.weight.copy_(torch.tensor(W, dtype=torch.float64))
    return layer


def x64(v):
    return torch.tensor(v, dtype=torch.float64)


class TestKernel:
    def test_hand_example(self):
        k = kernel_with([[1, 1], [0, 1]], [[2]])
        np.testing.assert_array_equal(k(x64([[1], [-3]])).detach(), [[0], [0]])

    def test_identity_on_nonnegative(self):
        x = x64([[1.0, 2.0], [0.5, 0.0], [3.0, 4.0]])
        k = kernel_with(np.eye(3), np.eye(2))
        assert torch.equal(k(x), x)

    def test_identity_activation_keeps_sign(self):
        k = kernel_with([[1, 1], [0, 1]], [[2]], activation="identity")
        np.testing.assert_array_equal(k(x64([[1], [-3]])).detach(), [[-4], [-6]])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            kernel_with(np.eye(2), np.eye(3))(x64(np.ones((2, 2))))

    def test_batched_input(self):
        rng = np.random.default_rng(0)
        A, W = rng.normal(size=(3, 3)), rng.normal(size=(2, 4))
        k = kernel_with(A, W)
        xs = rng.normal(size=(5, 3, 2))
        expected = np.maximum(np.einsum("ij,bjc,ck->bik", A, xs, W), 0)
        np.testing.assert_allclose(k(x64(xs)).detach(), expected, atol=1e-12)


class TestLayer:
    def test_scalar_average(self):
        layer = layer_with([([[2.0]], [[2.0]]), ([[5.0]], [[2.0]])])
        assert layer(x64([[1.0]])).item() == 7.0

    def test_single_kernel_is_the_kernel(self):
        rng = np.random.default_rng(1)
        A, W = rng.normal(size=(3, 3)), rng.normal(size=(2, 2))
        x = x64(rng.normal(size=(3, 2)))
        assert torch.equal(layer_with([(A, W)])(x), kernel_with(A, W)(x))

    def test_identical_kernels(self):
        rng = np.random.default_rng(2)
        A, W = rng.normal(size=(4, 4)), rng.normal(size=(3, 2))
        x = x64(rng.normal(size=(4, 3)))
        np.testing.assert_allclose(layer_with([(A, W)] * 3)(x).detach(), kernel_with(A, W)(x).detach(),
                                   atol=1e-14)

    def test_rejects_zero_kernels(self):
        with pytest.raises(DimensionError):
            MultiSubgraphLayer(2, 2, 2, 0)


class TestDivergence:
    def test_single_kernel_zero(self):
        assert adjacency_divergence(init_layer(LayerShape(3, 2, 2, 1), seed=0)).item() == 0.0

    def test_identical_kernels_zero(self):
        layer = layer_with([(np.eye(2), np.eye(2))] * 3)
        assert adjacency_divergence(layer).item() == 0.0

    def test_scalar_pair(self):
        layer = layer_with([([[2.0]], [[1.0]]), ([[5.0]], [[1.0]])])
        assert adjacency_divergence(layer).item() == 9.0

    def test_weight_divergence(self):
        layer = layer_with([([[2.0]], [[1.0]]), ([[2.0]], [[3.0]]), ([[2.0]], [[0.0]])])
        # (1-3)^2 + (1-0)^2 + (3-0)^2
        assert weight_divergence(layer).item() == 14.0
        assert adjacency_divergence(layer).item() == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 5), st.integers(1, 4), st.integers(0, 10_000), st.floats(-3, 3))
    def test_permutation_invariant_and_homogeneous(self, K, N, seed, c):
        rng = np.random.default_rng(seed)
        mats = [rng.normal(size=(N, N)) for _ in range(K)]
        base = adjacency_divergence(layer_with([(A, np.eye(1)) for A in mats])).item()
        order = rng.permutation(K)
        permuted = adjacency_divergence(layer_with([(mats[i], np.eye(1)) for i in order])).item()
        scaled = adjacency_divergence(layer_with([(c * A, np.eye(1)) for A in mats])).item()
        assert permuted == pytest.approx(base, rel=1e-12, abs=1e-12)
        assert scaled == pytest.approx(c * c * base, rel=1e-10, abs=1e-10)
        assert base >= 0

    def test_brute_force_sum(self):
        rng = np.random.default_rng(3)
        mats = [rng.normal(size=(3, 3)) for _ in range(4)]
        expected = sum(((mats[i] - mats[j]) ** 2).sum() for i in range(4) for j in range(i + 1, 4))
        got = adjacency_divergence(layer_with([(A, np.eye(2)) for A in mats])).item()
        assert got == pytest.approx(expected, rel=1e-12)


class TestInit:
    def test_deterministic(self):
        a, b = init_layer(LayerShape(3, 2, 4, 3), 7), init_layer(LayerShape(3, 2, 4, 3), 7)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)

    def test_kernels_differ(self):
        layer = init_layer(LayerShape(3, 2, 4, 2), 0)
        k0, k1 = layer.kernels
        assert not torch.equal(k0.weight, k1.weight)
        assert not torch.equal(k0.adjacency, k1.adjacency)

    def test_ranges(self):
        layer = init_layer(LayerShape(5, 16, 8, 3), 1, noise=0.05)
        for k in layer.kernels:
            assert k.weight.abs().max() <= 0.25
            assert (k.adjacency - torch.eye(5, dtype=torch.float64)).abs().max() <= 0.05

    def test_zero_noise_gives_identity(self):
        layer = init_layer(LayerShape(4, 2, 2, 2), 0, noise=0.0)
        for k in layer.kernels:
            assert torch.equal(k.adjacency, torch.eye(4, dtype=torch.float64))

    def test_invalid_shape(self):
        with pytest.raises(DimensionError):
            init_layer(LayerShape(0, 2, 2, 2), 0)


def numeric_grad(f, p, eps=1e-6):
    g = torch.zeros_like(p)
    flat, gflat = p.data.view(-1), g.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = f().item()
        flat[i] = orig - eps
        lo = f().item()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return g


def test_layer_gradient_matches_finite_differences():
    torch.manual_seed(0)
    layer = init_layer(LayerShape(3, 2, 2, 2), seed=4, noise=0.3)
    x = torch.randn(3, 2, dtype=torch.float64)
    probe = torch.randn(3, 2, dtype=torch.float64)

    def f():
        return (layer(x) * probe).sum() + adjacency_divergence(layer)

    layer.zero_grad()
    f().backward()
    for p in layer.parameters():
        num = numeric_grad(f, p)
        assert torch.allclose(p.grad, num, rtol=1e-6, atol=1e-8)
