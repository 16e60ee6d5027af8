"""Seeded linear-algebra and sampling substrate shared by all modules.

Matrices are plain 2-D float64 numpy arrays (row-major); randomness always
flows through an explicit ``numpy.random.Generator`` so that every caller is
a pure function of (seed, arguments).
"""

import warnings

import numpy as np

DEFAULT_JITTER = 1e-10
DEFAULT_EIG_CLAMP = 1e-8


def make_rng(seed):
    """Deterministic generator: same seed, same call sequence, same stream."""
    return np.random.default_rng(seed)


def _check_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def matmul(a, b):
    """Matrix product with an explicit shape contract."""
    a = _check_matrix(a, "a")
    b = _check_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def covariance(x):
    """Sample covariance C = (1/n) sum_i (x_i - mean)(x_i - mean)^T.

    Centers internally and uses the 1/n normalization. The result is
    symmetrized exactly so downstream eigendecompositions never see
    asymmetric rounding noise.
    """
    x = _check_matrix(x, "x")
    if x.shape[0] < 1:
        raise ValueError("covariance needs at least one row")
    xc = x - x.mean(axis=0)
    c = (xc.T @ xc) / x.shape[0]
    return (c + c.T) / 2.0


def psd_factor(sigma, jitter=DEFAULT_JITTER):
    """Cholesky factor U with U U^T = sigma, for symmetric PSD sigma.

    Semidefinite inputs are handled by escalating an additive diagonal
    jitter (jitter, 10*jitter, ... up to 1e6*jitter) until the Cholesky
    succeeds.

    Raises numpy.linalg.LinAlgError if no escalation level factorizes.
    """
    sigma = _check_matrix(sigma, "sigma")
    d = sigma.shape[0]
    if sigma.shape[1] != d:
        raise ValueError(f"sigma must be square, got {sigma.shape}")
    if not np.allclose(sigma, sigma.T, atol=1e-10, rtol=1e-10):
        raise ValueError("sigma must be symmetric")
    eye = np.eye(d)
    for level in [0.0] + [jitter * 10.0**k for k in range(7)]:
        try:
            return np.linalg.cholesky(sigma + level * eye)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError(
        f"matrix not factorizable even with jitter {jitter:g}*1e6"
    )


def sample_standard_gaussian(rng, rows, cols):
    """rows x cols matrix of i.i.d. N(0, 1) entries."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    return rng.standard_normal((rows, cols))


def haar_rotation(rng, d):
    """Haar-distributed orthogonal d x d matrix.

    QR of a Gaussian matrix, with the R diagonal's signs folded into Q so
    the distribution is exactly Haar rather than QR-convention dependent.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    g = rng.standard_normal((d, d))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def whitening_matrix(c, eps=DEFAULT_EIG_CLAMP):
    """ZCA pair (Z, Z_inv) = (C^{-1/2}, C^{1/2}) by symmetric eigendecomposition.

    Eigenvalues below ``eps`` are clamped to ``eps``; a RuntimeWarning is
    emitted in that case since the whitening is then only approximate on
    the deficient subspace.
    """
    c = _check_matrix(c, "c")
    if c.shape[0] != c.shape[1]:
        raise ValueError(f"c must be square, got {c.shape}")
    evals, evecs = np.linalg.eigh((c + c.T) / 2.0)
    if np.any(evals < eps):
        warnings.warn(
            f"covariance effectively rank deficient: {int(np.sum(evals < eps))} "
            f"eigenvalue(s) clamped to {eps:g}",
            RuntimeWarning,
            stacklevel=2,
        )
        evals = np.maximum(evals, eps)
    z = (evecs / np.sqrt(evals)) @ evecs.T
    z_inv = (evecs * np.sqrt(evals)) @ evecs.T
    return (z + z.T) / 2.0, (z_inv + z_inv.T) / 2.0
