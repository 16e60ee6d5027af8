import os
from pathlib import Path

import numpy as np
import pytest

from asni.linalg import make_rng

MNIST_FILES = (
    "train-images-idx3-ubyte", "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte",
)


@pytest.fixture
def rng():
    return make_rng(1234)


def mnist_dir():
    """Directory with real MNIST IDX files, or None.

    Looked up via $ASNI_MNIST_DIR, then ./data/mnist. The files themselves
    are user-supplied (see scripts/fetch_mnist.py); MNIST-scale acceptance
    tests skip when they are absent.
    """
    candidates = []
    if os.environ.get("ASNI_MNIST_DIR"):
        candidates.append(Path(os.environ["ASNI_MNIST_DIR"]))
    candidates.append(Path(__file__).resolve().parent.parent / "data" / "mnist")
    for base in candidates:
        if all((base / f).exists() or (base / (f + ".gz")).exists() for f in MNIST_FILES):
            return base
    return None


def random_psd(rng, d, rank=None):
    a = rng.standard_normal((d, rank or d))
    return a @ a.T


def fd_gradients(net, x, y, noise_rs, coords, h=1e-5):
    """Central finite differences of the frozen-noise loss at given coords.

    Each coordinate is ("w"|"b", layer_index, numpy_index). The noise
    realization is held fixed across all evaluations, which is exactly the
    function the analytic backward pass differentiates.
    """
    from asni.network import forward_fixed, loss_value

    def loss_at():
        trace = forward_fixed(net, x, noise_rs)
        return loss_value(trace.ys[-1], y, net.loss)

    out = []
    for kind, layer, idx in coords:
        arr = net.weights[layer] if kind == "w" else net.biases[layer]
        orig = arr[idx]
        arr[idx] = orig + h
        up = loss_at()
        arr[idx] = orig - h
        down = loss_at()
        arr[idx] = orig
        out.append((up - down) / (2.0 * h))
    return np.array(out)


def pick_coords(net, rng, count):
    """Random parameter coordinates spread over every layer, biases included."""
    coords = []
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        for i in range(b.size):
            coords.append(("b", layer, i))
        for _ in range(max(1, count // (2 * len(net.weights)))):
            i = int(rng.integers(w.shape[0]))
            j = int(rng.integers(w.shape[1]))
            coords.append(("w", layer, (i, j)))
    while len(coords) < count:
        layer = int(rng.integers(len(net.weights)))
        w = net.weights[layer]
        coords.append(("w", layer, (int(rng.integers(w.shape[0])), int(rng.integers(w.shape[1])))))
    return coords[:max(count, len(coords))]


def max_relative_gradient_error(net, x, y, noise_rs, rng, count=100):
    from asni.network import backward, forward_fixed

    trace = forward_fixed(net, x, noise_rs)
    grads = backward(net, trace, y)
    coords = pick_coords(net, rng, count)
    fd = fd_gradients(net, x, y, noise_rs, coords)
    analytic = np.array([
        grads.dw[layer][idx] if kind == "w" else grads.db[layer][idx]
        for kind, layer, idx in coords
    ])
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
    return float(np.max(np.abs(analytic - fd) / denom)), len(coords)
