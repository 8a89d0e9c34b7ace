"""Tests for the numpy autoencoder."""
import math
from unittest.mock import patch

import numpy as np
import pytest

from src.errors import DataError, TrainingError
from src.learning.autoencoder import (
    fit_scaler,
    forward,
    gradient_check,
    init_parameters,
    loss_gradients,
    model_from_dict,
    model_to_dict,
    reconstruction_error,
    reconstruction_errors,
    train,
)
from src.models.schemas import Activation, Optimizer, Topology, TrainConfig


def _samples(n=120, d=6, seed=0):
    rng = np.random.default_rng(seed)
    latent = rng.normal(size=(n, 2))
    mixing = rng.normal(size=(2, d))
    return latent @ mixing + 0.1 * rng.normal(size=(n, d)) + 5.0


@pytest.fixture(scope="module")
def trained():
    cfg = TrainConfig(epochs=40, batch_size=16, seed=3, early_stop_patience=0, validation_fraction=0.0)
    return train(_samples(), Topology.default(6), cfg)


class TestGradients:
    """Tests for backpropagation."""

    @pytest.mark.parametrize("activation", [Activation.TANH, Activation.RELU, Activation.SIGMOID])
    @pytest.mark.parametrize("seed", range(4))
    def test_gradient_check_small_topologies(self, activation, seed):
        """Backprop agrees with central differences on random small networks."""
        d = 3 + seed
        topology = Topology.default(d, activation)
        assert gradient_check(topology, seed=seed) < 1e-4

    def test_deeper_topology(self):
        """Gradient check also holds with three hidden layers of custom widths."""
        topology = Topology.from_hidden(8, [5, 3, 2], Activation.TANH)
        assert gradient_check(topology, seed=9) < 1e-4

    def test_linear_network_matches_closed_form(self):
        """For identity activations the gradients equal the analytic expressions."""
        topology = Topology(layer_sizes=[3, 2, 3], activation=Activation.IDENTITY)
        rng = np.random.default_rng(5)
        weights, biases = init_parameters(topology, rng)
        biases = [rng.normal(size=b.shape) for b in biases]
        s = rng.normal(size=(7, 3))

        loss, grad_w, grad_b = loss_gradients(weights, biases, Activation.IDENTITY, s)

        n = s.shape[0]
        hidden = s @ weights[0].T + biases[0]
        diff = hidden @ weights[1].T + biases[1] - s
        assert loss == pytest.approx(np.sum(diff ** 2) / n, abs=1e-12)
        back = diff @ weights[1]
        np.testing.assert_allclose(grad_w[1], 2.0 / n * diff.T @ hidden, rtol=0, atol=1e-10)
        np.testing.assert_allclose(grad_b[1], 2.0 / n * diff.sum(axis=0), rtol=0, atol=1e-10)
        np.testing.assert_allclose(grad_w[0], 2.0 / n * back.T @ s, rtol=0, atol=1e-10)
        np.testing.assert_allclose(grad_b[0], 2.0 / n * back.sum(axis=0), rtol=0, atol=1e-10)


class TestScaler:
    """Tests for fit_scaler."""

    def test_constant_feature(self):
        """Zero-variance features get std 1 and are flagged."""
        scaler = fit_scaler([[1.0, 2.0], [1.0, 4.0], [1.0, 6.0]])
        assert scaler.std[0] == 1.0
        assert scaler.constant.tolist() == [True, False]
        np.testing.assert_allclose(scaler.transform([1.0, 4.0]), [0.0, 0.0])

    def test_needs_two_samples(self):
        """A single sample cannot define a scale."""
        with pytest.raises(DataError):
            fit_scaler([[1.0, 2.0]])


class TestTraining:
    """Tests for train."""

    def test_same_seed_same_weights(self):
        """A fixed seed gives bitwise-identical models."""
        cfg = TrainConfig(epochs=15, batch_size=16, seed=7)
        one = train(_samples(), Topology.default(6), cfg)
        two = train(_samples(), Topology.default(6), cfg)
        for a, b in zip(one.weights + one.biases, two.weights + two.biases):
            assert np.array_equal(a, b)

    def test_loss_does_not_increase(self, trained):
        """Best-parameter restoration never returns something worse than the start."""
        assert trained.meta.final_loss <= trained.meta.initial_loss
        assert trained.meta.epochs == 40
        assert len(trained.meta.loss_history) == 40

    def test_sgd_optimizer(self):
        """Plain minibatch SGD trains too."""
        cfg = TrainConfig(epochs=10, batch_size=16, optimizer=Optimizer.SGD, learning_rate=0.01, validation_fraction=0.0)
        model = train(_samples(), Topology.default(6), cfg)
        assert model.meta.final_loss <= model.meta.initial_loss

    def test_early_stopping(self):
        """Training stops once the monitored loss stalls for the patience window."""
        cfg = TrainConfig(epochs=500, batch_size=16, early_stop_patience=3, seed=1)
        with patch("src.learning.autoencoder._mean_loss", return_value=1.0):
            model = train(_samples(), Topology.default(6), cfg)
        assert model.meta.epochs == 3
        assert model.meta.best_epoch == 0

    def test_too_few_samples(self):
        """Fewer samples than one batch is a data error."""
        with pytest.raises(DataError, match="too few"):
            train(_samples(n=10), Topology.default(6), TrainConfig(batch_size=32))

    def test_dimension_mismatch(self):
        """Samples must match the topology's input size."""
        with pytest.raises(DataError, match="input size"):
            train(_samples(d=5), Topology.default(6), TrainConfig(batch_size=16))

    def test_zero_epochs_returns_initial_parameters(self):
        """epochs = 0 gives back the seeded initial weights untouched."""
        topology = Topology.default(6)
        cfg = TrainConfig(epochs=0, batch_size=16, seed=5, validation_fraction=0.0)
        model = train(_samples(), topology, cfg)
        weights, biases = init_parameters(topology, np.random.default_rng(5))
        for a, b in zip(model.weights + model.biases, weights + biases):
            assert np.array_equal(a, b)
        assert model.meta.epochs == 0
        assert model.meta.loss_history == ()
        assert model.meta.final_loss == model.meta.initial_loss

    def test_full_batch_descent_is_monotone(self):
        """One SGD step per epoch on the whole set with a small rate never raises the loss."""
        cfg = TrainConfig(
            epochs=30, batch_size=120, optimizer=Optimizer.SGD, learning_rate=0.005,
            seed=2, early_stop_patience=0, validation_fraction=0.0,
        )
        model = train(_samples(), Topology.default(6), cfg)
        losses = [model.meta.initial_loss] + list(model.meta.loss_history)
        assert len(losses) == 31
        for before, after in zip(losses, losses[1:]):
            assert after <= before

    def test_learns_linear_manifold(self):
        """A 2-D linear manifold in 8-D is reconstructed through a width-2 bottleneck."""
        rng = np.random.default_rng(11)
        x = rng.normal(size=(500, 2)) @ rng.normal(size=(2, 8)) + 3.0
        cfg = TrainConfig(
            epochs=300, batch_size=32, learning_rate=0.01, seed=0, early_stop_patience=0, validation_fraction=0.0,
        )
        model = train(x, Topology.from_hidden(8, [4, 2]), cfg)
        residual = np.mean(reconstruction_errors(model, x) ** 2)
        total = np.mean(np.sum(model.scaler.transform(x) ** 2, axis=1))
        assert residual / total <= 0.1

    def test_non_finite_loss_reports_epoch(self):
        """Divergence raises TrainingError carrying the epoch."""
        with patch("src.learning.autoencoder._mean_loss", return_value=math.nan):
            with pytest.raises(TrainingError) as excinfo:
                train(_samples(), Topology.default(6), TrainConfig(epochs=5, batch_size=16))
        assert excinfo.value.epoch == 1


class TestReconstruction:
    """Tests for forward and reconstruction errors."""

    def test_batch_matches_single(self, trained):
        """Row-wise errors equal the single-vector computation."""
        x = _samples(n=5, seed=1)
        batch = reconstruction_errors(trained, x)
        for row, error in zip(x, batch):
            assert reconstruction_error(trained, row) == pytest.approx(error, abs=1e-12)

    def test_error_is_standardized_distance(self, trained):
        """epsilon is the norm of the standardized residual."""
        x = _samples(n=1, seed=2)[0]
        expected = np.linalg.norm(trained.scaler.transform(x) - trained.scaler.transform(forward(trained, x)))
        assert reconstruction_error(trained, x) == pytest.approx(expected, rel=1e-9)

    def test_dimension_checked(self, trained):
        """Wrong-length inputs are rejected."""
        with pytest.raises(DataError, match="dimension"):
            reconstruction_error(trained, np.ones(5))

    def test_non_finite_input(self, trained):
        """NaN inputs are rejected."""
        x = np.ones(6)
        x[2] = np.nan
        with pytest.raises(DataError, match="component 2"):
            reconstruction_error(trained, x)

    def test_forward_matches_layer_by_layer(self, trained):
        """forward is standardize, dense tanh layers, a linear output layer, then unstandardize."""
        x = _samples(n=20, seed=6)
        a = (x - trained.scaler.mean) / trained.scaler.std
        last = len(trained.weights) - 1
        for i, (w, b) in enumerate(zip(trained.weights, trained.biases)):
            a = a @ w.T + b
            if i < last:
                a = np.tanh(a)
        expected = a * trained.scaler.std + trained.scaler.mean
        np.testing.assert_allclose(forward(trained, x), expected, rtol=0, atol=1e-10)

    def test_model_document_is_exact(self, trained):
        """Serialized models reproduce errors to the last bit."""
        held_out = _samples(n=100, seed=4)
        restored = model_from_dict(model_to_dict(trained))
        assert np.array_equal(reconstruction_errors(restored, held_out), reconstruction_errors(trained, held_out))
