"""Network evaluation and per-region affine propagation."""

from __future__ import annotations

import numpy as np
import pytest

from splc.activations import abs_act, identity, leaky_relu, pwl, relu
from splc.errors import ModelError
from splc.network import (
    ActivationState,
    CpwlNetwork,
    SliceAffine,
    activation_state,
    advance_affine,
    avgpool2d_layer,
    conv2d_layer,
    dense_layer,
    flatten_layer,
    forward,
    forward_batch,
    structured_forward,
)


def random_mlp(rng, dims, activation=relu):
    layers = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        act = activation() if i < len(dims) - 2 else identity()
        layers.append(dense_layer(rng.normal(size=(b, a)), rng.normal(size=b), act))
    return CpwlNetwork(layers)


class TestForward:
    def test_identity_network(self):
        net = CpwlNetwork([dense_layer(np.eye(2), np.zeros(2), identity())])
        assert np.array_equal(forward(net, [1.0, 2.0])[-1], [1.0, 2.0])

    def test_single_relu_layer(self):
        net = CpwlNetwork([dense_layer([[1.0, -1.0]], [0.0], relu())])
        assert forward(net, [3.0, 1.0])[-1] == pytest.approx([2.0])

    def test_two_layer_against_hand_rolled_oracle(self):
        rng = np.random.default_rng(2024)
        w1, b1 = rng.normal(size=(3, 4)), rng.normal(size=3)
        w2, b2 = rng.normal(size=(2, 3)), rng.normal(size=2)
        net = CpwlNetwork([dense_layer(w1, b1, relu()), dense_layer(w2, b2, identity())])
        x = rng.normal(size=4)
        hidden = np.maximum(w1 @ x + b1, 0.0)
        expected = w2 @ hidden + b2
        out = forward(net, x)
        assert len(out) == 2
        assert np.max(np.abs(out[-1] - expected)) <= 1e-12
        assert np.max(np.abs(out[0] - hidden)) <= 1e-12

    def test_dimension_mismatch_reports_layer(self):
        with pytest.raises(ModelError, match="layer 0"):
            CpwlNetwork(
                [dense_layer(np.eye(3), np.zeros(3)), dense_layer(np.eye(2), np.zeros(2))]
            )

    def test_bad_input_shape_rejected(self):
        net = CpwlNetwork([dense_layer(np.eye(2), np.zeros(2))])
        with pytest.raises(ModelError):
            forward(net, [1.0, 2.0, 3.0])
        with pytest.raises(ModelError):
            forward(net, [np.nan, 0.0])

    def test_forward_batch_matches_single(self):
        rng = np.random.default_rng(5)
        net = random_mlp(rng, [4, 6, 5, 2])
        X = rng.normal(size=(9, 4))
        batch = forward_batch(net, X)
        for i in range(len(X)):
            assert np.max(np.abs(batch[i] - forward(net, X[i])[-1])) <= 1e-12

    def test_structured_forward_matches_lowered_mlp(self):
        rng = np.random.default_rng(6)
        net = random_mlp(rng, [5, 8, 3])
        x = rng.normal(size=5)
        assert np.max(np.abs(structured_forward(net, x) - forward(net, x)[-1])) <= 1e-12

    def test_structured_forward_matches_lowered_convnet(self):
        rng = np.random.default_rng(7)
        net = CpwlNetwork(
            [
                conv2d_layer(
                    rng.normal(size=(4, 1, 3, 3)), rng.normal(size=4),
                    input_shape=(1, 8, 8), stride=(1, 1), padding=(1, 1), activation=relu(),
                ),
                avgpool2d_layer((2, 2), input_shape=(4, 8, 8)),
                conv2d_layer(
                    rng.normal(size=(3, 4, 3, 3)), rng.normal(size=3),
                    input_shape=(4, 4, 4), stride=(2, 2), padding=(0, 0), activation=relu(),
                ),
                flatten_layer((3, 1, 1)),
                dense_layer(rng.normal(size=(2, 3)), rng.normal(size=2)),
            ]
        )
        for _ in range(3):
            x = rng.normal(size=net.input_dim)
            assert np.max(np.abs(structured_forward(net, x) - forward(net, x)[-1])) <= 1e-10


class TestActivationState:
    def test_relu_state_signs(self):
        net = CpwlNetwork([dense_layer(np.eye(2), np.zeros(2), relu())])
        state = activation_state(net, [3.0, -1.0])
        assert np.array_equal(state.segments[0], [1, 0])
        slopes, offsets = state.pairs(net)[0]
        assert np.array_equal(slopes, [1.0, 0.0])
        assert np.array_equal(offsets, [0.0, 0.0])

    def test_state_equality(self):
        net = CpwlNetwork([dense_layer(np.eye(2), np.zeros(2), relu())])
        a = activation_state(net, [1.0, -1.0])
        b = activation_state(net, [2.0, -0.5])  # same orthant
        c = activation_state(net, [-1.0, 1.0])
        assert a == b
        assert a != c

    def test_pwl_segments_multiway(self):
        act = pwl([-1.0, 1.0], [0.0, 1.0, 0.0])
        net = CpwlNetwork([dense_layer(np.eye(3), np.zeros(3), act)])
        state = activation_state(net, [-2.0, 0.0, 5.0])
        assert np.array_equal(state.segments[0], [0, 1, 2])


class TestAdvanceAffine:
    def test_all_active_relu_is_identity_composition(self):
        layer = dense_layer(np.eye(3), np.zeros(3), relu())
        prev = SliceAffine(A=np.arange(6.0).reshape(3, 2), b=np.array([1.0, -1.0, 0.5]))
        out = advance_affine(prev, layer, np.array([1, 1, 1]))
        assert np.array_equal(out.A, prev.A)
        assert np.array_equal(out.b, prev.b)

    def test_all_dead_relu_zeroes_the_map(self):
        rng = np.random.default_rng(8)
        layer = dense_layer(rng.normal(size=(3, 3)), rng.normal(size=3), relu())
        prev = SliceAffine(A=rng.normal(size=(3, 2)), b=rng.normal(size=3))
        out = advance_affine(prev, layer, np.array([0, 0, 0]))
        assert np.array_equal(out.A, np.zeros((3, 2)))
        assert np.array_equal(out.b, np.zeros(3))

    def test_advance_matches_forward_at_probe_point(self):
        rng = np.random.default_rng(9)
        net = random_mlp(rng, [2, 5, 4])  # slice = full input plane, T = I
        u0 = rng.normal(size=2)
        state = activation_state(net, u0)
        aff = SliceAffine(A=np.eye(2), b=np.zeros(2))
        for layer, seg in zip(net.layers, state.segments):
            aff = advance_affine(aff, layer, seg)
        assert np.max(np.abs(aff(u0) - forward(net, u0)[-1])) <= 1e-10

    def test_relu_reduction_matches_literal_product_formula(self):
        """Binary-mask product form computed independently, entrywise."""
        rng = np.random.default_rng(10)
        w1, b1 = rng.normal(size=(5, 2)), rng.normal(size=5)
        w2, b2 = rng.normal(size=(4, 5)), rng.normal(size=4)
        net = CpwlNetwork([dense_layer(w1, b1, relu()), dense_layer(w2, b2, relu())])
        u0 = rng.normal(size=2)
        state = activation_state(net, u0)
        q1 = state.segments[0].astype(np.float64)
        q2 = state.segments[1].astype(np.float64)
        A_lit = np.diag(q2) @ w2 @ np.diag(q1) @ w1
        b_lit = np.diag(q2) @ (w2 @ (np.diag(q1) @ b1) + b2)
        aff = SliceAffine(A=np.eye(2), b=np.zeros(2))
        for layer, seg in zip(net.layers, state.segments):
            aff = advance_affine(aff, layer, seg)
        assert np.max(np.abs(aff.A - A_lit)) <= 1e-12
        assert np.max(np.abs(aff.b - b_lit)) <= 1e-12

    def test_advance_through_conv_layers(self):
        rng = np.random.default_rng(14)
        net = CpwlNetwork(
            [
                conv2d_layer(
                    rng.normal(size=(2, 1, 3, 3)), rng.normal(size=2),
                    input_shape=(1, 4, 4), padding=(1, 1), activation=relu(),
                ),
                flatten_layer((2, 4, 4)),
                dense_layer(rng.normal(size=(3, 32)), rng.normal(size=3)),
            ]
        )
        # slice through input space: x = T u + c
        T = np.linalg.qr(rng.normal(size=(16, 2)))[0]
        c = rng.normal(size=16)
        u0 = rng.normal(size=2) * 0.1
        x0 = T @ u0 + c
        state = activation_state(net, x0)
        aff = SliceAffine(A=T, b=c)
        for layer, seg in zip(net.layers, state.segments):
            aff = advance_affine(aff, layer, seg)
        assert np.max(np.abs(aff(u0) - forward(net, x0)[-1])) <= 1e-10

    def test_abs_and_leaky_states_advance_correctly(self):
        rng = np.random.default_rng(15)
        for act in (abs_act, lambda: leaky_relu(0.1)):
            net = CpwlNetwork(
                [
                    dense_layer(rng.normal(size=(4, 2)), rng.normal(size=4), act()),
                    dense_layer(rng.normal(size=(2, 4)), rng.normal(size=2)),
                ]
            )
            u0 = rng.normal(size=2)
            state = activation_state(net, u0)
            aff = SliceAffine(A=np.eye(2), b=np.zeros(2))
            for layer, seg in zip(net.layers, state.segments):
                aff = advance_affine(aff, layer, seg)
            assert np.max(np.abs(aff(u0) - forward(net, u0)[-1])) <= 1e-10

    def test_state_length_mismatch_rejected(self):
        layer = dense_layer(np.eye(3), np.zeros(3), relu())
        prev = SliceAffine(A=np.eye(3)[:, :2], b=np.zeros(3))
        with pytest.raises(ModelError):
            advance_affine(prev, layer, np.array([1, 1]))
