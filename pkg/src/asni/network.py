"""Dense feedforward network with per-layer multiplicative-noise hooks,
hand-rolled backpropagation, and minibatch SGD.

The forward recursion at layer l is

    ytil^(l-1) = r^(l-1) * y^(l-1)        (Hadamard, r from the noise spec)
    z^(l)      = ytil^(l-1) W^(l)^T + b^(l)
    y^(l)      = sigma^(l)(z^(l))

Noise realizations are sampled once per forward pass and treated as
constants on the backward path, exactly as in standard dropout training.
"""

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import metrics as metrics_mod
from .data import batches
from .linalg import psd_factor
from .noise import NoiseKind, NoiseSample, apply_noise, sample_for_layer


class Activation(Enum):
    RELU = "relu"
    IDENTITY = "identity"
    SOFTMAX_HEAD = "softmax_head"


class Loss(Enum):
    SQUARED = "squared"
    CROSS_ENTROPY = "cross_entropy"


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: Activation

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dimensions must be >= 1")


@dataclass
class Network:
    layers: list
    weights: list
    biases: list
    loss: Loss

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        for spec, w, b in zip(self.layers, self.weights, self.biases):
            if w.shape != (spec.out_dim, spec.in_dim):
                raise ValueError(f"weight shape {w.shape} != {(spec.out_dim, spec.in_dim)}")
            if b.shape != (spec.out_dim,):
                raise ValueError(f"bias shape {b.shape} != {(spec.out_dim,)}")

    @property
    def depth(self):
        return len(self.layers)

    @property
    def dims(self):
        return [self.layers[0].in_dim] + [l.out_dim for l in self.layers]

    def copy(self):
        return Network(
            layers=list(self.layers),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            loss=self.loss,
        )


@dataclass
class ForwardTrace:
    """Everything the backward pass needs: per-layer pre-activations,
    post-activations, noisy inputs, and the noise realizations themselves."""

    ys: list        # y^(0) .. y^(H); y^(0) is the input batch
    ytils: list     # noisy layer inputs ytil^(0) .. ytil^(H-1)
    zs: list        # pre-activations z^(1) .. z^(H)
    noises: list    # NoiseSample per layer input


@dataclass
class Gradients:
    dw: list
    db: list


def init_network(dims, loss, rng, activations=None):
    """Fresh network with scaled-Gaussian weights and zero biases.

    RELU layers use std sqrt(2/in_dim); other layers sqrt(1/in_dim). The
    default activation stack is RELU everywhere except the head, which is
    SOFTMAX_HEAD under cross-entropy and IDENTITY under squared loss.
    """
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    if activations is None:
        head = Activation.SOFTMAX_HEAD if loss == Loss.CROSS_ENTROPY else Activation.IDENTITY
        activations = [Activation.RELU] * (len(dims) - 2) + [head]
    if len(activations) != len(dims) - 1:
        raise ValueError("one activation per layer required")
    layers, weights, biases = [], [], []
    for i, act in enumerate(activations):
        fan_in, fan_out = dims[i], dims[i + 1]
        std = np.sqrt(2.0 / fan_in) if act == Activation.RELU else np.sqrt(1.0 / fan_in)
        layers.append(LayerSpec(fan_in, fan_out, act))
        weights.append(std * rng.standard_normal((fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(layers=layers, weights=weights, biases=biases, loss=loss)


def _activate(z, act):
    if act == Activation.RELU:
        return np.maximum(z, 0.0)
    # SOFTMAX_HEAD emits logits; the softmax lives inside the loss.
    return z


def _activation_grad(z, act):
    if act == Activation.RELU:
        return (z > 0.0).astype(np.float64)
    return None  # identity-like: gradient passes through


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _as_targets(y, out_dim):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] != out_dim:
        raise ValueError(f"target width {y.shape[1]} != output width {out_dim}")
    return y


def loss_value(outputs, targets, loss):
    """Mean per-example loss; squared error sums over output coordinates."""
    t = _as_targets(targets, outputs.shape[1])
    if loss == Loss.SQUARED:
        return float(np.mean(np.sum((outputs - t) ** 2, axis=1)))
    if loss == Loss.CROSS_ENTROPY:
        shifted = outputs - outputs.max(axis=1, keepdims=True)
        log_z = np.log(np.sum(np.exp(shifted), axis=1))
        return float(np.mean(log_z - np.sum(shifted * t, axis=1)))
    raise ValueError(f"unhandled loss {loss}")


def forward_fixed(net, x, noise_samples):
    """Forward pass with an externally supplied noise realization per layer.

    ``noise_samples`` is a list of length depth; entries may be NoiseSample,
    a raw matrix, or None (= no noise at that layer). This is the common core
    of training forward passes and of finite-difference gradient oracles,
    which must re-evaluate the loss under frozen noise.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.layers[0].in_dim:
        raise ValueError(f"input shape {x.shape} does not match input dim {net.layers[0].in_dim}")
    if len(noise_samples) != net.depth:
        raise ValueError("one noise entry per layer required")
    ys, ytils, zs, noises = [x], [], [], []
    y = x
    for l, spec in enumerate(net.layers):
        sample = noise_samples[l]
        if sample is None:
            sample = NoiseSample(r=np.ones_like(y), layer=l)
        elif isinstance(sample, np.ndarray):
            sample = NoiseSample(r=sample, layer=l)
        ytil = apply_noise(y, sample)
        z = ytil @ net.weights[l].T + net.biases[l]
        y = _activate(z, spec.activation)
        noises.append(sample)
        ytils.append(ytil)
        zs.append(z)
        ys.append(y)
    return ForwardTrace(ys=ys, ytils=ytils, zs=zs, noises=noises)


def forward_train(net, batch_x, noise_spec, rng, sni_factor=None):
    """Training forward pass: samples this batch's noise and keeps the trace.

    ASNI re-estimates each layer's activation covariance from the batch at
    every call; the fixed-covariance regime expects ``sni_factor`` to be the
    factor of its Sigma, computed once at setup (see ``train``).
    """
    x = np.asarray(batch_x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.layers[0].in_dim:
        raise ValueError(f"input shape {x.shape} does not match input dim {net.layers[0].in_dim}")
    if noise_spec.kind == NoiseKind.SNI_FIXED and sni_factor is None:
        sni_factor = psd_factor(noise_spec.fixed_sigma)
    ys, ytils, zs, noises = [x], [], [], []
    y = x
    for l, spec in enumerate(net.layers):
        sample = sample_for_layer(rng, noise_spec, l, y, sigma_factor=sni_factor)
        ytil = apply_noise(y, sample)
        z = ytil @ net.weights[l].T + net.biases[l]
        y = _activate(z, spec.activation)
        noises.append(sample)
        ytils.append(ytil)
        zs.append(z)
        ys.append(y)
    return ForwardTrace(ys=ys, ytils=ytils, zs=zs, noises=noises)


def forward_eval(net, x):
    """Deterministic forward pass, no noise; returns logits or regression values."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.layers[0].in_dim:
        raise ValueError(f"input shape {x.shape} does not match input dim {net.layers[0].in_dim}")
    y = x
    for l, spec in enumerate(net.layers):
        y = _activate(y @ net.weights[l].T + net.biases[l], spec.activation)
    return y


def backward(net, trace, batch_y):
    """Exact gradients of the sampled (noise held fixed) minibatch loss.

    The noise mask multiplies the activation gradient on the way down
    exactly as it multiplied the activations on the way up.
    """
    n = trace.ys[0].shape[0]
    outputs = trace.ys[-1]
    t = _as_targets(batch_y, outputs.shape[1])
    head = net.layers[-1]
    if net.loss == Loss.SQUARED:
        g_y = 2.0 * (outputs - t) / n
        act_grad = _activation_grad(trace.zs[-1], head.activation)
        g_z = g_y if act_grad is None else g_y * act_grad
    elif net.loss == Loss.CROSS_ENTROPY:
        if head.activation != Activation.SOFTMAX_HEAD:
            raise ValueError("cross-entropy loss requires a SOFTMAX_HEAD final layer")
        g_z = (_softmax(outputs) - t) / n
    else:
        raise ValueError(f"unhandled loss {net.loss}")

    dw = [None] * net.depth
    db = [None] * net.depth
    for l in range(net.depth - 1, -1, -1):
        dw[l] = g_z.T @ trace.ytils[l]
        db[l] = g_z.sum(axis=0)
        if l > 0:
            g_ytil = g_z @ net.weights[l]
            g_y = trace.noises[l].r * g_ytil
            act_grad = _activation_grad(trace.zs[l - 1], net.layers[l - 1].activation)
            g_z = g_y if act_grad is None else g_y * act_grad
    return Gradients(dw=dw, db=db)


def sgd_step(net, grads, lr):
    """In-place plain SGD update: theta <- theta - lr * grad."""
    if lr <= 0:
        raise ValueError("lr must be > 0")
    for l in range(net.depth):
        net.weights[l] -= lr * grads.dw[l]
        net.biases[l] -= lr * grads.db[l]
    return net


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int
    lr: float
    eval_every: int = 0          # SGD steps between metric records; 0 = final only
    max_steps: int = 0           # hard cap on SGD steps; 0 = epochs decide
    eval_train_samples: int = 2000
    corr_samples: int = 1000
    compute_silhouette: bool = False
    silhouette_samples: int = 1000

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 2 or self.lr <= 0:
            raise ValueError("epochs >= 1, batch_size >= 2 and lr > 0 required")


def _class_labels(y):
    y = np.asarray(y)
    if y.ndim == 2 and y.shape[1] > 1:
        return np.argmax(y, axis=1)
    return (np.ravel(y) > 0).astype(int)


def _evaluate(net, train_set, test_set, cfg, iteration):
    x_tr = train_set.x[: cfg.eval_train_samples]
    y_tr = train_set.y[: cfg.eval_train_samples]
    train_loss = loss_value(forward_eval(net, x_tr), y_tr, net.loss)
    test_out = forward_eval(net, test_set.x)
    test_loss = loss_value(test_out, test_set.y, net.loss)
    test_acc = metrics_mod.accuracy(test_out, test_set.y)

    record = metrics_mod.MetricsRecord(
        iteration=iteration,
        train_loss=train_loss,
        test_loss=test_loss,
        test_accuracy=test_acc,
    )
    # Hidden-representation diagnostics on a fixed test slice.
    x_mon = test_set.x[: cfg.corr_samples]
    if net.depth >= 2 and x_mon.shape[0] >= 2:
        y = x_mon
        hidden = []
        for l, spec in enumerate(net.layers):
            y = _activate(y @ net.weights[l].T + net.biases[l], spec.activation)
            if l < net.depth - 1:
                hidden.append(y)
        if len(hidden) >= 1:
            record.corr_norm_l1 = metrics_mod.correlation_norm(hidden[0])
            record.zero_frac_l1 = metrics_mod.zero_fraction(hidden[0])
        if len(hidden) >= 2:
            record.corr_norm_l2 = metrics_mod.correlation_norm(hidden[1])
            record.zero_frac_l2 = metrics_mod.zero_fraction(hidden[1])
        if cfg.compute_silhouette and len(hidden) >= 1:
            pts = hidden[-1][: cfg.silhouette_samples]
            labels = _class_labels(test_set.y)[: pts.shape[0]]
            if np.unique(labels).size >= 2:
                record.silhouette = metrics_mod.silhouette(pts, labels)
    return record


def train(net, train_set, test_set, noise_spec, cfg, rng, sink=None):
    """Minibatch SGD over shuffled epochs; emits MetricsRecords at cadence.

    Returns (net, records). The network is updated in place. Raises
    DivergenceError as soon as a minibatch loss stops being finite.
    """
    sni_factor = None
    if noise_spec.kind == NoiseKind.SNI_FIXED:
        sni_factor = psd_factor(noise_spec.fixed_sigma)

    records = []

    def emit(iteration):
        rec = _evaluate(net, train_set, test_set, cfg, iteration)
        records.append(rec)
        if sink is not None:
            sink(rec)

    step = 0
    done = False
    for _ in range(cfg.epochs):
        if done:
            break
        for bx, by in batches(train_set, cfg.batch_size, rng):
            trace = forward_train(net, bx, noise_spec, rng, sni_factor=sni_factor)
            batch_loss = loss_value(trace.ys[-1], by, net.loss)
            if not np.isfinite(batch_loss):
                raise DivergenceError(f"non-finite minibatch loss at step {step}")
            grads = backward(net, trace, by)
            sgd_step(net, grads, cfg.lr)
            step += 1
            if cfg.eval_every > 0 and step % cfg.eval_every == 0:
                emit(step)
            if cfg.max_steps and step >= cfg.max_steps:
                done = True
                break
    if not records or records[-1].iteration != step:
        emit(step)
    return net, records


def save_network(net, path, meta=None):
    """Flat JSON parameter dump: layer dims, activations, row-major weights.

    ``meta`` (e.g. config hash and seed) is stored verbatim for provenance.
    """
    payload = {
        "dims": net.dims,
        "activations": [l.activation.value for l in net.layers],
        "loss": net.loss.value,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    if meta:
        payload["meta"] = meta
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_network(path):
    with open(path) as fh:
        payload = json.load(fh)
    dims = payload["dims"]
    acts = [Activation(a) for a in payload["activations"]]
    layers = [LayerSpec(dims[i], dims[i + 1], acts[i]) for i in range(len(acts))]
    return Network(
        layers=layers,
        weights=[np.asarray(w, dtype=np.float64) for w in payload["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in payload["biases"]],
        loss=Loss(payload["loss"]),
    )
