"""Structured multiplicative noise injection for dense feedforward networks.

Training-time regularization by mean-one multiplicative noise whose
covariance is fixed a priori or re-estimated per minibatch from the layer's
own activations, plus the numerical machinery to verify the induced
closed-form penalties and reproduce the synthetic and MNIST benchmarks.
"""

from .data import Dataset, FeatureRole, MadelonConfig, batches, gen_madelon, load_mnist_idx, standardize
from .linalg import (
    covariance,
    haar_rotation,
    make_rng,
    matmul,
    psd_factor,
    sample_standard_gaussian,
    whitening_matrix,
)
from .metrics import MetricsRecord, accuracy, correlation_norm, silhouette, zero_fraction
from .network import (
    Activation,
    DivergenceError,
    ForwardTrace,
    Gradients,
    LayerSpec,
    Loss,
    Network,
    TrainConfig,
    backward,
    forward_eval,
    forward_fixed,
    forward_train,
    init_network,
    sgd_step,
    train,
)
from .noise import (
    NoiseKind,
    NoiseSample,
    NoiseSpec,
    apply_noise,
    sample_asni,
    sample_iid_bernoulli,
    sample_iid_gaussian,
    sample_sni_fixed,
)
from .theory import (
    LossKind,
    PenaltyReport,
    SigmaKind,
    curvature_matrix,
    hadamard_penalty,
    mc_noisy_squared_loss,
    rotation_invariants,
    second_order_residual,
    whitening_equivalence,
)

__version__ = "0.1.0"
