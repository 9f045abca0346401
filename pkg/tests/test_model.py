import numpy as np
import pytest

from krmap.errors import BatchTooSmallError, InvalidDimensionError, InvalidInputError
from krmap.model import (
    BN_EPS,
    ModelState,
    clone_model,
    forward,
    init_model,
    models_equal,
)


class TestInit:
    def test_determinism(self):
        a = init_model(8, 42)
        b = init_model(8, 42)
        assert models_equal(a, b)

    def test_different_seeds_differ(self):
        a = init_model(8, 1)
        b = init_model(8, 2)
        assert not models_equal(a, b)

    def test_kernel_defaults_to_plain_t(self):
        st = init_model(8, 42)
        assert (st.kernel.alpha, st.kernel.beta) == (1.0, 1.0)

    def test_rejects_dimension_below_two(self):
        with pytest.raises(InvalidDimensionError):
            init_model(1, 7)

    def test_layer_shapes(self):
        st = init_model(5, 0)
        shapes = [w.shape for w in st.mlp.weights]
        assert shapes == [(5, 5), (5, 5), (5, 5), (2, 5)]
        assert all(b.shape == (5,) for b in st.mlp.biases[:3])
        assert st.mlp.biases[3].shape == (2,)

    def test_float32_representable(self):
        st = init_model(6, 3)
        for w in st.mlp.weights:
            assert np.array_equal(w, w.astype(np.float32).astype(np.float64))


class TestForward:
    def test_inference_duplicated_row_identical(self):
        st = init_model(4, 0)
        st.mode = "inference"
        x = np.array([0.3, -1.2, 0.7, 2.0])
        out = forward(st, np.stack([x, x]))
        assert np.array_equal(out[0], out[1])

    def test_inference_batch_independence(self):
        st = init_model(4, 0)
        st.mode = "inference"
        rng = np.random.default_rng(1)
        batch = rng.standard_normal((10, 4))
        full = forward(st, batch)
        single = forward(st, batch[3:4])
        assert np.array_equal(full[3], single[0])

    def test_train_mode_needs_two_rows(self):
        st = init_model(4, 0)
        with pytest.raises(BatchTooSmallError):
            forward(st, np.zeros((1, 4)))

    def test_rejects_nonfinite(self):
        st = init_model(4, 0)
        bad = np.zeros((2, 4))
        bad[1, 2] = np.inf
        with pytest.raises(InvalidInputError):
            forward(st, bad)

    def test_rejects_wrong_width(self):
        st = init_model(4, 0)
        with pytest.raises(InvalidInputError):
            forward(st, np.zeros((2, 5)))

    def test_matches_independent_layer_by_layer_evaluation(self):
        rng = np.random.default_rng(7)
        st = init_model(6, 11)
        X = rng.standard_normal((5, 6))

        # train mode: batch statistics
        h = X.copy()
        for layer in range(3):
            z = h @ st.mlp.weights[layer].T + st.mlp.biases[layer]
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            xhat = (z - mu) / np.sqrt(var + BN_EPS)
            a = st.mlp.gammas[layer] * xhat + st.mlp.shifts[layer]
            h = np.maximum(a, 0.0)
        expected = h @ st.mlp.weights[3].T + st.mlp.biases[3]
        assert np.allclose(forward(st, X), expected, rtol=0, atol=0)

        # inference mode: running statistics
        st.mode = "inference"
        h = X.copy()
        for layer in range(3):
            z = h @ st.mlp.weights[layer].T + st.mlp.biases[layer]
            xhat = (z - st.mlp.running_mean[layer]) / np.sqrt(
                st.mlp.running_var[layer] + BN_EPS
            )
            a = st.mlp.gammas[layer] * xhat + st.mlp.shifts[layer]
            h = np.maximum(a, 0.0)
        expected = h @ st.mlp.weights[3].T + st.mlp.biases[3]
        assert np.allclose(forward(st, X), expected, rtol=0, atol=0)

    def test_inference_deterministic_bitwise(self):
        st = init_model(5, 2)
        st.mode = "inference"
        rng = np.random.default_rng(3)
        X = rng.standard_normal((7, 5))
        assert np.array_equal(forward(st, X), forward(st, X))

    def test_output_finite(self):
        st = init_model(8, 5)
        rng = np.random.default_rng(4)
        X = rng.standard_normal((16, 8)) * 100
        assert np.all(np.isfinite(forward(st, X)))


class TestClone:
    def test_clone_is_equal_but_independent(self):
        st = init_model(4, 9)
        cp = clone_model(st)
        assert models_equal(st, cp)
        cp.mlp.weights[0][0, 0] += 1.0
        assert not models_equal(st, cp)
