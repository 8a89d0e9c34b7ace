"""Dense feedforward autoencoder written directly against numpy.

Weights are stored (out, in) per layer and applied to row batches as
``X @ W.T + b``. Hidden layers use the topology's activation, the output layer
is linear. All training and error computations happen in standardized feature
space (see ``Scaler``).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import DataError, TrainingError
from src.models.schemas import Activation, Optimizer, Topology, TrainConfig
from src.storage import decode_floats, encode_floats

logger = logging.getLogger(__name__)

Parameters = Tuple[List[np.ndarray], List[np.ndarray]]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Scaler:
    """Per-feature standardization fitted on training samples."""
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.mean.shape[0])

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, s: np.ndarray) -> np.ndarray:
        return np.asarray(s, dtype=np.float64) * self.std + self.mean

    @classmethod
    def identity(cls, d: int) -> "Scaler":
        return cls(mean=_frozen(np.zeros(d)), std=_frozen(np.ones(d)), constant=np.zeros(d, dtype=bool))


@dataclass(frozen=True)
class TrainingMeta:
    seed: int
    epochs: int
    initial_loss: float
    final_loss: float
    best_epoch: int = 0
    loss_history: Tuple[float, ...] = ()


@dataclass(frozen=True)
class AutoencoderModel:
    """Trained (or hand-built) network together with its scaler."""
    topology: Topology
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    scaler: Scaler
    meta: TrainingMeta = field(default_factory=lambda: TrainingMeta(seed=0, epochs=0, initial_loss=math.nan, final_loss=math.nan))

    def __post_init__(self):
        sizes = self.topology.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError(f"expected {len(sizes) - 1} weight layers for topology {sizes}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
                raise ValueError(
                    f"layer {i}: weight {w.shape} / bias {b.shape} do not match {sizes[i]} -> {sizes[i + 1]}"
                )
        if self.scaler.dimension != sizes[0]:
            raise ValueError(f"scaler dimension {self.scaler.dimension} != input size {sizes[0]}")
        if np.any(self.scaler.std <= 0):
            raise ValueError("scaler std components must be > 0")

    @property
    def dimension(self) -> int:
        return self.topology.input_size


def fit_scaler(samples: Sequence[Sequence[float]]) -> Scaler:
    """
    Fit per-feature mean and population std.

    Features with zero variance are stored with std = 1 and flagged constant.

    Args:
        samples: At least two vectors of equal dimension

    Returns:
        Scaler
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError(f"fit_scaler needs at least 2 samples, got {0 if x.ndim != 2 else x.shape[0]}")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std == 0.0
    std = np.where(constant, 1.0, std)
    return Scaler(mean=_frozen(mean), std=_frozen(std), constant=np.array(constant, dtype=bool))


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation == Activation.TANH:
        return np.tanh(z)
    if activation == Activation.RELU:
        return np.maximum(z, 0.0)
    if activation == Activation.SIGMOID:
        return 1.0 / (1.0 + np.exp(-z))
    return z


def _activation_derivative(z: np.ndarray, a: np.ndarray, activation: Activation) -> np.ndarray:
    if activation == Activation.TANH:
        return 1.0 - a * a
    if activation == Activation.RELU:
        return (z > 0.0).astype(np.float64)
    if activation == Activation.SIGMOID:
        return a * (1.0 - a)
    return np.ones_like(z)


def init_parameters(topology: Topology, rng: np.random.Generator) -> Parameters:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    sizes = topology.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def network_output(
    weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], activation: Activation, s: np.ndarray
) -> np.ndarray:
    """Run standardized rows through the network; returns standardized reconstructions."""
    a = s
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w.T + b
        a = z if i == last else _activate(z, activation)
    return a


def loss_gradients(
    weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], activation: Activation, s: np.ndarray
) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """
    Loss = mean over rows of ||s - f(s)||^2, with its gradients by backpropagation.

    Args:
        weights: Per-layer (out, in) matrices
        biases: Per-layer vectors
        activation: Hidden activation
        s: (n, D) standardized batch

    Returns:
        (loss, weight gradients, bias gradients)
    """
    n = s.shape[0]
    inputs = [s]
    pre = []
    last = len(weights) - 1
    a = s
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w.T + b
        pre.append(z)
        a = z if i == last else _activate(z, activation)
        inputs.append(a)

    diff = a - s
    loss = float(np.sum(diff * diff) / n)

    grad_w: List[Optional[np.ndarray]] = [None] * len(weights)
    grad_b: List[Optional[np.ndarray]] = [None] * len(weights)
    delta = 2.0 * diff / n
    for i in range(last, -1, -1):
        grad_w[i] = delta.T @ inputs[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i]) * _activation_derivative(pre[i - 1], inputs[i], activation)
    return loss, grad_w, grad_b


def _mean_loss(weights, biases, activation, s: np.ndarray) -> float:
    if s.shape[0] == 0:
        return math.nan
    diff = network_output(weights, biases, activation, s) - s
    return float(np.sum(diff * diff) / s.shape[0])


def _check_input(model: AutoencoderModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.dimension:
        raise DataError(f"input dimension {x.shape[-1]} does not match model dimension {model.dimension}")
    if not np.all(np.isfinite(x)):
        bad = int(np.argwhere(~np.isfinite(np.atleast_2d(x)))[0][1])
        raise DataError(f"input component {bad} is not finite")
    return x


def reconstruct_scaled(model: AutoencoderModel, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(standardized input, standardized reconstruction) for a vector or row batch."""
    x = _check_input(model, x)
    s = model.scaler.transform(np.atleast_2d(x))
    r = network_output(model.weights, model.biases, model.topology.activation, s)
    if x.ndim == 1:
        return s[0], r[0]
    return s, r


def forward(model: AutoencoderModel, x: np.ndarray) -> np.ndarray:
    """Reconstruction of ``x`` in the original (normalized) units."""
    _, r = reconstruct_scaled(model, x)
    return model.scaler.inverse_transform(r)


def reconstruction_error(model: AutoencoderModel, z: np.ndarray) -> float:
    """Euclidean distance between the standardized sample and its standardized reconstruction."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise DataError("reconstruction_error expects a single vector; use reconstruction_errors for batches")
    s, r = reconstruct_scaled(model, z)
    return float(np.linalg.norm(s - r))


def reconstruction_errors(model: AutoencoderModel, samples: np.ndarray) -> np.ndarray:
    """Row-wise reconstruction errors of an (n, D) batch."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise DataError("reconstruction_errors expects an (n, D) array")
    if samples.shape[0] == 0:
        return np.zeros(0)
    s, r = reconstruct_scaled(model, samples)
    return np.linalg.norm(s - r, axis=1)


class _Adam:
    def __init__(self, weights, biases, lr: float):
        self.lr = lr
        self.step = 0
        self.m = [np.zeros_like(p) for p in list(weights) + list(biases)]
        self.v = [np.zeros_like(p) for p in list(weights) + list(biases)]

    def update(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        self.step += 1
        c1 = 1.0 - ADAM_BETA1 ** self.step
        c2 = 1.0 - ADAM_BETA2 ** self.step
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g
            p -= self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + ADAM_EPS)


def train(samples: Sequence[Sequence[float]], topology: Topology, cfg: TrainConfig) -> AutoencoderModel:
    """
    Fit a scaler and train the autoencoder by minibatch backpropagation.

    Shuffling, the validation split and initialization all come from one
    ``numpy.random.default_rng(cfg.seed)`` stream, so a fixed seed gives
    bitwise-identical weights. Early stopping watches the validation loss (the
    training loss when the split is empty) and restores the best parameters seen,
    the initial ones included.

    Args:
        samples: (n, D) normalized vectors
        topology: Network shape, input size D
        cfg: Optimisation settings

    Returns:
        AutoencoderModel
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("training samples must form an (n, D) array")
    n, d = x.shape
    minimum = max(2, cfg.batch_size)
    if n < minimum:
        raise DataError(f"too few training samples: {n} < {minimum} (max(2, batch_size))")
    if d != topology.input_size:
        raise DataError(f"topology input size {topology.input_size} does not match sample dimension {d}")
    if not np.all(np.isfinite(x)):
        raise DataError("training samples contain non-finite values")

    scaler = fit_scaler(x)
    s = scaler.transform(x)
    rng = np.random.default_rng(cfg.seed)
    weights, biases = init_parameters(topology, rng)
    activation = topology.activation

    n_val = int(math.floor(n * cfg.validation_fraction))
    split = rng.permutation(n)
    val_rows = np.sort(split[:n_val])
    train_rows = np.sort(split[n_val:])
    s_train, s_val = s[train_rows], s[val_rows]

    initial_loss = _mean_loss(weights, biases, activation, s_train)
    monitored = (lambda: _mean_loss(weights, biases, activation, s_val)) if n_val else (
        lambda: _mean_loss(weights, biases, activation, s_train)
    )
    best_score = monitored()
    best = ([w.copy() for w in weights], [b.copy() for b in biases])
    best_epoch = 0
    stale = 0
    history: List[float] = []
    adam = _Adam(weights, biases, cfg.learning_rate) if cfg.optimizer == Optimizer.ADAM else None

    epochs_run = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(s_train.shape[0])
        for start in range(0, s_train.shape[0], cfg.batch_size):
            batch = s_train[order[start:start + cfg.batch_size]]
            _, grad_w, grad_b = loss_gradients(weights, biases, activation, batch)
            params = weights + biases
            grads = grad_w + grad_b
            if adam is not None:
                adam.update(params, grads)
            else:
                for p, g in zip(params, grads):
                    p -= cfg.learning_rate * g
        epochs_run = epoch

        epoch_loss = _mean_loss(weights, biases, activation, s_train)
        if not math.isfinite(epoch_loss):
            raise TrainingError(f"non-finite training loss at epoch {epoch}", epoch=epoch)
        history.append(epoch_loss)
        score = monitored()
        logger.debug(f"epoch {epoch}: loss={epoch_loss:.6g} monitored={score:.6g}")

        if score < best_score:
            best_score = score
            best = ([w.copy() for w in weights], [b.copy() for b in biases])
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if cfg.early_stop_patience and stale >= cfg.early_stop_patience:
                logger.debug(f"Early stop at epoch {epoch}, best epoch {best_epoch}")
                break

    weights, biases = best
    final_loss = _mean_loss(weights, biases, activation, s_train)
    logger.info(
        f"Trained autoencoder {topology.layer_sizes} on {n} samples: {epochs_run} epochs, "
        f"loss {initial_loss:.6g} -> {final_loss:.6g}"
    )
    return AutoencoderModel(
        topology=topology,
        weights=tuple(_frozen(w) for w in weights),
        biases=tuple(_frozen(b) for b in biases),
        scaler=scaler,
        meta=TrainingMeta(
            seed=cfg.seed,
            epochs=epochs_run,
            initial_loss=initial_loss,
            final_loss=final_loss,
            best_epoch=best_epoch,
            loss_history=tuple(history),
        ),
    )


def _min_hidden_margin(weights, biases, s: np.ndarray) -> float:
    a = s
    margin = math.inf
    for w, b in zip(weights[:-1], biases[:-1]):
        z = a @ w.T + b
        margin = min(margin, float(np.min(np.abs(z))))
        a = np.maximum(z, 0.0)
    return margin


def gradient_check(topology: Topology, seed: int, n_samples: int = 4, h: float = 1e-5) -> float:
    """
    Largest relative difference between backprop and central-difference gradients.

    Relative error per parameter is |a - n| / max(|a| + |n|, 1e-4). For relu
    networks inputs are re-drawn until every hidden pre-activation sits at least
    1e-3 away from the kink.

    Args:
        topology: Small network (D <= 8 keeps this fast)
        seed: Seed for weights, biases and inputs
        n_samples: Rows in the random check batch
        h: Finite-difference step

    Returns:
        Maximum relative error over all parameters
    """
    rng = np.random.default_rng(seed)
    d = topology.input_size
    weights, biases = init_parameters(topology, rng)
    biases = [rng.normal(0.0, 0.1, size=b.shape) for b in biases]
    s = rng.normal(size=(n_samples, d))
    if topology.activation == Activation.RELU:
        for _ in range(1000):
            if _min_hidden_margin(weights, biases, s) > 1e-3:
                break
            s = rng.normal(size=(n_samples, d))
        else:
            raise TrainingError("could not draw relu inputs away from the kink")

    _, grad_w, grad_b = loss_gradients(weights, biases, topology.activation, s)
    worst = 0.0
    for params, grads in ((weights, grad_w), (biases, grad_b)):
        for p, g in zip(params, grads):
            for idx in np.ndindex(p.shape):
                original = p[idx]
                p[idx] = original + h
                plus = _mean_loss(weights, biases, topology.activation, s)
                p[idx] = original - h
                minus = _mean_loss(weights, biases, topology.activation, s)
                p[idx] = original
                numeric = (plus - minus) / (2.0 * h)
                analytic = g[idx]
                rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-4)
                worst = max(worst, rel)
    return worst


def model_to_dict(model: AutoencoderModel) -> Dict[str, Any]:
    """Self-describing document; every float hex-encoded."""
    return {
        "topology": {"layer_sizes": list(model.topology.layer_sizes), "activation": model.topology.activation.value},
        "weights": [encode_floats(w) for w in model.weights],
        "biases": [encode_floats(b) for b in model.biases],
        "scaler": {
            "mean": encode_floats(model.scaler.mean),
            "std": encode_floats(model.scaler.std),
            "constant": [bool(c) for c in model.scaler.constant],
        },
        "training_meta": {
            "seed": model.meta.seed,
            "epochs": model.meta.epochs,
            "initial_loss": encode_floats(model.meta.initial_loss),
            "final_loss": encode_floats(model.meta.final_loss),
            "best_epoch": model.meta.best_epoch,
            "loss_history": encode_floats(list(model.meta.loss_history)),
        },
    }


def model_from_dict(doc: Dict[str, Any]) -> AutoencoderModel:
    topo = doc["topology"]
    topology = Topology(layer_sizes=topo["layer_sizes"], activation=Activation(topo["activation"]))
    sizes = topology.layer_sizes
    weights = tuple(
        _frozen(np.array(decode_floats(w), dtype=np.float64).reshape(sizes[i + 1], sizes[i]))
        for i, w in enumerate(doc["weights"])
    )
    biases = tuple(_frozen(np.array(decode_floats(b), dtype=np.float64)) for b in doc["biases"])
    sc = doc["scaler"]
    scaler = Scaler(
        mean=_frozen(np.array(decode_floats(sc["mean"]))),
        std=_frozen(np.array(decode_floats(sc["std"]))),
        constant=np.array(sc["constant"], dtype=bool),
    )
    meta = doc["training_meta"]
    return AutoencoderModel(
        topology=topology,
        weights=weights,
        biases=biases,
        scaler=scaler,
        meta=TrainingMeta(
            seed=int(meta["seed"]),
            epochs=int(meta["epochs"]),
            initial_loss=decode_floats(meta["initial_loss"]),
            final_loss=decode_floats(meta["final_loss"]),
            best_epoch=int(meta.get("best_epoch", 0)),
            loss_history=tuple(decode_floats(meta.get("loss_history", []))),
        ),
    )
