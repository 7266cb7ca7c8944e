import numpy as np
import pytest

from qproto import nn as qnn


class TestForward:
    def test_zero_parameters_give_zero_embeddings(self):
        mlp = qnn.Mlp([4, 3, 2])
        out, _ = mlp.forward(np.random.default_rng(0).normal(size=(5, 4)))
        np.testing.assert_array_equal(out, np.zeros((5, 2)))

    def test_identity_layer_passes_input_through(self):
        mlp = qnn.Mlp.identity(3)
        x = np.array([[1.0, -2.0, 0.5]])
        out, _ = mlp.forward(x)
        np.testing.assert_array_equal(out, x)

    def test_two_layer_net_matches_hand_matrix_algebra(self):
        rng = np.random.default_rng(1)
        mlp = qnn.Mlp.init_random([3, 4, 2], seed=7)
        x = rng.normal(size=3)
        out, _ = mlp.forward(x)
        hidden = np.maximum(mlp.weights[0] @ x + mlp.biases[0], 0.0)
        expected = mlp.weights[1] @ hidden + mlp.biases[1]
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_no_relu_on_final_layer(self):
        mlp = qnn.Mlp([2, 2])
        mlp.weights[0] = -np.eye(2)
        out, _ = mlp.forward(np.array([[1.0, 2.0]]))
        np.testing.assert_array_equal(out, [[-1.0, -2.0]])

    def test_width_mismatch_rejected(self):
        with pytest.raises(qnn.NnError, match="input width"):
            qnn.Mlp([3, 2]).forward(np.zeros((1, 4)))

    def test_deterministic_given_parameters(self):
        mlp = qnn.Mlp.init_random([3, 5, 2], seed=3)
        x = np.random.default_rng(2).normal(size=(4, 3))
        a, _ = mlp.forward(x)
        b, _ = mlp.forward(x)
        np.testing.assert_array_equal(a, b)


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        mlp = qnn.Mlp.init_random([3, 4, 2], seed=5)
        x = np.random.default_rng(3).normal(size=(2, 3))
        _, cache = mlp.forward(x)
        grads, d_x = mlp.backward(cache, np.zeros((2, 2)))
        for g in grads:
            np.testing.assert_array_equal(g, np.zeros_like(g))
        np.testing.assert_array_equal(d_x, np.zeros_like(x))

    def test_single_linear_layer_closed_form(self):
        mlp = qnn.Mlp.init_random([3, 2], seed=9)
        rng = np.random.default_rng(4)
        x = rng.normal(size=(5, 3))
        upstream = rng.normal(size=(5, 2))
        _, cache = mlp.forward(x)
        grads, d_x = mlp.backward(cache, upstream)
        np.testing.assert_allclose(grads[0], upstream.T @ x, atol=1e-12)
        np.testing.assert_allclose(grads[1], upstream.sum(axis=0), atol=1e-12)
        np.testing.assert_allclose(d_x, upstream @ mlp.weights[0], atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        mlp = qnn.Mlp.init_random([3, 4, 4, 2], seed=11)
        x = rng.normal(size=(3, 3))
        target = rng.normal(size=(3, 2))

        def loss():
            out, _ = mlp.forward(x)
            return 0.5 * float(((out - target) ** 2).sum())

        out, cache = mlp.forward(x)
        grads, d_x = mlp.backward(cache, out - target)
        h = 1e-6
        for p, g in zip(mlp.parameters(), grads):
            flat_p, flat_g = p.ravel(), g.ravel()
            for i in range(flat_p.size):
                keep = flat_p[i]
                flat_p[i] = keep + h
                plus = loss()
                flat_p[i] = keep - h
                minus = loss()
                flat_p[i] = keep
                assert flat_g[i] == pytest.approx((plus - minus) / (2 * h), rel=1e-5, abs=1e-8)

    def test_stale_cache_rejected(self):
        mlp = qnn.Mlp.init_random([2, 2], seed=1)
        _, cache = mlp.forward(np.zeros((1, 2)))
        mlp.mark_updated()
        with pytest.raises(qnn.NnError, match="stale"):
            mlp.backward(cache, np.zeros((1, 2)))


class TestDistance:
    def test_coincident_points(self):
        a = np.array([0.3, -1.0])
        assert qnn.distance(a, a, "euclidean") == 0.0
        assert qnn.distance(a, a, "cosine") == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_unit_vectors(self):
        a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        assert qnn.distance(a, b, "euclidean") == 2.0  # squared L2
        assert qnn.distance(a, b, "cosine") == pytest.approx(1.0)

    def test_antipodal_cosine(self):
        assert qnn.distance([1.0, 0.0], [-1.0, 0.0], "cosine") == pytest.approx(2.0)

    def test_cosine_zero_vector_rejected(self):
        with pytest.raises(qnn.NnError, match="zero vector"):
            qnn.distance([0.0, 0.0], [1.0, 0.0], "cosine")

    def test_cosine_invariant_to_positive_rescaling(self):
        rng = np.random.default_rng(7)
        a, b = rng.normal(size=4), rng.normal(size=4)
        assert qnn.distance(a, b, "cosine") == pytest.approx(
            qnn.distance(3.5 * a, b, "cosine"), abs=1e-12
        )

    def test_euclidean_nonnegative_and_definite(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            a, b = rng.normal(size=3), rng.normal(size=3)
            d = qnn.distance(a, b, "euclidean")
            assert d >= 0.0
            assert (d == 0.0) == bool(np.all(a == b))

    def test_unknown_metric(self):
        with pytest.raises(qnn.NnError, match="unknown metric"):
            qnn.distance([1.0], [1.0], "manhattan")


class TestOptimizer:
    def test_sgd_step(self):
        p = [np.array([0.0])]
        qnn.optimizer_step(p, [np.array([1.0])], qnn.OptimizerState("sgd", lr=0.1))
        assert p[0][0] == pytest.approx(-0.1)

    def test_adam_first_step_magnitude_is_lr(self):
        for g in (1e-4, 1.0, 1e4):
            p = [np.array([0.0])]
            qnn.optimizer_step(p, [np.array([g])], qnn.OptimizerState("adam", lr=1e-3))
            assert abs(p[0][0]) == pytest.approx(1e-3, rel=1e-3)

    def test_zero_grads_leave_params_unchanged(self):
        p = [np.array([1.0, -2.0])]
        state = qnn.OptimizerState("adam", lr=0.1)
        qnn.optimizer_step(p, [np.array([1.0, 1.0])], state)
        snapshot = p[0].copy()
        m_before = state.m[0].copy()
        qnn.optimizer_step(p, [np.zeros(2)], state)
        assert not np.array_equal(state.m[0], m_before)  # moments decay
        np.testing.assert_allclose(p[0], snapshot, atol=2e-2)
        qnn.optimizer_step([np.array([5.0])], [np.zeros(1)], qnn.OptimizerState("sgd", lr=0.1))

    def test_nan_gradients_abort(self):
        with pytest.raises(qnn.NnError, match="non-finite"):
            qnn.optimizer_step(
                [np.zeros(2)], [np.array([1.0, np.nan])], qnn.OptimizerState("sgd", lr=0.1)
            )

    def test_unknown_optimizer(self):
        with pytest.raises(qnn.NnError):
            qnn.OptimizerState("rmsprop", lr=0.1)


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        mlp = qnn.Mlp.init_random([5, 4, 3], seed=42)
        path = tmp_path / "net.qpnn"
        qnn.save_checkpoint(path, mlp)
        loaded = qnn.load_checkpoint(path)
        assert loaded.widths == mlp.widths
        for a, b in zip(loaded.parameters(), mlp.parameters()):
            np.testing.assert_array_equal(a, b)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.qpnn"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(qnn.NnError, match="magic"):
            qnn.load_checkpoint(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        mlp = qnn.Mlp([2, 2])
        path = tmp_path / "net.qpnn"
        qnn.save_checkpoint(path, mlp)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(qnn.NnError, match="trailing"):
            qnn.load_checkpoint(path)


def test_init_is_seeded_and_fan_in_scaled():
    a = qnn.Mlp.init_random([100, 50], seed=1)
    b = qnn.Mlp.init_random([100, 50], seed=1)
    c = qnn.Mlp.init_random([100, 50], seed=2)
    np.testing.assert_array_equal(a.weights[0], b.weights[0])
    assert not np.array_equal(a.weights[0], c.weights[0])
    limit = np.sqrt(6.0 / 100)
    assert np.abs(a.weights[0]).max() <= limit
    np.testing.assert_array_equal(a.biases[0], np.zeros(50))
