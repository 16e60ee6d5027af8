"""Multiplicative noise generators: i.i.d. dropout variants, fixed-covariance
structured noise (SNI), and adaptive structured noise (ASNI).

All Gaussian regimes produce mean-one noise, so evaluation needs neither
resampling nor rescaling. Bernoulli dropout uses the inverted convention
(kept entries scaled by 1/p) for the same reason.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .linalg import _check_matrix


class NoiseKind(Enum):
    NONE = "none"
    IID_BERNOULLI = "iid_bernoulli"
    IID_GAUSSIAN = "iid_gaussian"
    SNI_FIXED = "sni_fixed"
    ASNI = "asni"


@dataclass(frozen=True)
class NoiseSpec:
    """Which noise regime to apply, with what strength, on which layers.

    ``lam`` is the Gaussian strength (noise covariance is lam * Sigma),
    ``p`` the Bernoulli keep probability, ``fixed_sigma`` the per-layer
    covariance block for the fixed-covariance regime, ``layer_mask`` the set
    of layer-input indices (0 = network input) that receive noise, or None
    for all of them.
    """

    kind: NoiseKind
    lam: float = 0.0
    p: float = 1.0
    fixed_sigma: np.ndarray | None = None
    shared_per_batch: bool = False
    layer_mask: frozenset | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must be in (0, 1]")
        if (self.fixed_sigma is not None) != (self.kind == NoiseKind.SNI_FIXED):
            raise ValueError("fixed_sigma is required iff kind is SNI_FIXED")
        if self.fixed_sigma is not None:
            sigma = _check_matrix(self.fixed_sigma, "fixed_sigma")
            if sigma.shape[0] != sigma.shape[1] or not np.allclose(sigma, sigma.T):
                raise ValueError("fixed_sigma must be square symmetric")
            object.__setattr__(self, "fixed_sigma", sigma)
        if self.layer_mask is not None:
            object.__setattr__(self, "layer_mask", frozenset(int(i) for i in self.layer_mask))

    def applies_to(self, layer):
        if self.kind == NoiseKind.NONE:
            return False
        return self.layer_mask is None or layer in self.layer_mask

    def label(self):
        """Short human-readable tag used in file names and report tables."""
        if self.kind == NoiseKind.NONE:
            return "none"
        if self.kind == NoiseKind.IID_BERNOULLI:
            return f"{self.kind.value}_p{self.p:g}"
        return f"{self.kind.value}_lam{self.lam:g}"

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "lam": self.lam,
            "p": self.p,
            "fixed_sigma": None if self.fixed_sigma is None else self.fixed_sigma.tolist(),
            "shared_per_batch": self.shared_per_batch,
            "layer_mask": None if self.layer_mask is None else sorted(self.layer_mask),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=NoiseKind(d["kind"]),
            lam=float(d.get("lam", 0.0)),
            p=float(d.get("p", 1.0)),
            fixed_sigma=None if d.get("fixed_sigma") is None else np.asarray(d["fixed_sigma"], dtype=np.float64),
            shared_per_batch=bool(d.get("shared_per_batch", False)),
            layer_mask=None if d.get("layer_mask") is None else frozenset(d["layer_mask"]),
        )


@dataclass
class NoiseSample:
    """One multiplicative noise realization: one row per minibatch example."""

    r: np.ndarray
    layer: int = 0


def sample_iid_bernoulli(rng, n, d, p):
    """Inverted dropout mask: entries are 1/p with probability p, else 0."""
    if not 0.0 < p <= 1.0:
        raise ValueError("p must be in (0, 1]")
    r = (rng.random((n, d)) < p).astype(np.float64) / p
    return NoiseSample(r=r)


def sample_iid_gaussian(rng, n, d, lam):
    """Entries i.i.d. N(1, lam)."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if lam == 0.0:
        return NoiseSample(r=np.ones((n, d)))
    r = 1.0 + np.sqrt(lam) * rng.standard_normal((n, d))
    return NoiseSample(r=r)


def sample_sni_fixed(rng, n, sigma_factor, lam):
    """Rows r_i = 1 + sqrt(lam) * U eps_i with eps_i ~ N(0, I), U U^T = Sigma.

    ``sigma_factor`` is the precomputed factor U (d x k), typically from
    ``linalg.psd_factor`` done once at setup.
    """
    u = _check_matrix(sigma_factor, "sigma_factor")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    d, k = u.shape
    if lam == 0.0:
        return NoiseSample(r=np.ones((n, d)))
    eps = rng.standard_normal((n, k))
    r = 1.0 + np.sqrt(lam) * (eps @ u.T)
    return NoiseSample(r=r)


def sample_asni(rng, batch_activations, lam, shared_per_batch=False):
    """Adaptive structured noise from the minibatch's own covariance.

    With Ytil the batch activations centered and divided by sqrt(n), each
    row is r_i = 1 + sqrt(lam) * Ytil^T eps_i, eps_i ~ N(0, I_n), so that
    Cov(r_i) = lam * Ytil^T Ytil, the lam-scaled empirical covariance --
    without ever forming the d x d matrix. In shared mode a single such row
    is reused for the whole batch, trading gradient variance for speed.
    """
    a = _check_matrix(batch_activations, "batch_activations")
    n, d = a.shape
    if n < 2:
        raise ValueError("ASNI needs a batch of at least 2 examples")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if lam == 0.0:
        return NoiseSample(r=np.ones((n, d)))
    ytil = (a - a.mean(axis=0)) / np.sqrt(n)
    if shared_per_batch:
        eps = rng.standard_normal((1, n))
        row = 1.0 + np.sqrt(lam) * (eps @ ytil)
        r = np.repeat(row, n, axis=0)
    else:
        eps = rng.standard_normal((n, n))
        r = 1.0 + np.sqrt(lam) * (eps @ ytil)
    return NoiseSample(r=r)


def apply_noise(activations, sample):
    """Hadamard product of activations with the noise rows."""
    a = _check_matrix(activations, "activations")
    if a.shape != sample.r.shape:
        raise ValueError(f"noise shape {sample.r.shape} does not match activations {a.shape}")
    return a * sample.r


def sample_for_layer(rng, spec, layer, activations, sigma_factor=None):
    """Dispatch one layer's noise for the given spec.

    Layers outside the spec's mask (and the NONE regime) get the exact
    all-ones matrix. ``sigma_factor`` carries the precomputed factor for
    the fixed-covariance regime.
    """
    a = _check_matrix(activations, "activations")
    n, d = a.shape
    if not spec.applies_to(layer):
        return NoiseSample(r=np.ones((n, d)), layer=layer)
    if spec.kind == NoiseKind.IID_BERNOULLI:
        out = sample_iid_bernoulli(rng, n, d, spec.p)
    elif spec.kind == NoiseKind.IID_GAUSSIAN:
        out = sample_iid_gaussian(rng, n, d, spec.lam)
    elif spec.kind == NoiseKind.SNI_FIXED:
        if sigma_factor is None:
            raise ValueError("SNI_FIXED needs a precomputed sigma_factor")
        if sigma_factor.shape[0] != d:
            raise ValueError(
                f"fixed_sigma is {sigma_factor.shape[0]}-dimensional but layer {layer} has width {d}"
            )
        out = sample_sni_fixed(rng, n, sigma_factor, spec.lam)
    elif spec.kind == NoiseKind.ASNI:
        out = sample_asni(rng, a, spec.lam, spec.shared_per_batch)
    else:
        raise ValueError(f"unhandled noise kind {spec.kind}")
    out.layer = layer
    return out
