"""Closed-form penalties and Monte Carlo oracles for the regularization
identities induced by mean-one multiplicative Gaussian noise on a linear
model.

For squared error and noise R ~ N(1, lam * Sigma) on centered inputs, the
expected noisy objective equals the plain objective plus the Hadamard
penalty lam * w^T (C . Sigma) w; for a general twice-differentiable loss the
penalty becomes (lam/2) * w^T (J(w) . Sigma) w up to o(lam). The functions
here evaluate both sides independently so the identities can be tested.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .linalg import covariance, psd_factor, whitening_matrix

_STDERR_FLOOR = np.finfo(np.float64).tiny


def _stderr_floor(mean_value):
    # a float64 mean is not resolved better than ~1e-15 relative: keep the
    # reported uncertainty above that so exactness tests stay meaningful
    return max(abs(mean_value) * 1e-15, _STDERR_FLOOR)


class SigmaKind(Enum):
    IDENTITY = "identity"
    DATA_COV = "data_cov"


class LossKind(Enum):
    SQUARED = "squared"
    LOGISTIC = "logistic"


@dataclass
class PenaltyReport:
    plain_loss: float
    penalty: float
    mc_objective: float
    mc_stderr: float


@dataclass
class ResidualPoint:
    """Second-order expansion error at one noise strength."""

    lam: float
    mc_objective: float
    mc_stderr: float
    correction: float
    residual: float

    @property
    def ratio(self):
        return self.residual / self.lam if self.lam > 0 else 0.0


def _prep(w, x, y):
    w = np.ravel(np.asarray(w, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    y = np.ravel(np.asarray(y, dtype=np.float64))
    if x.ndim != 2 or x.shape[1] != w.size or x.shape[0] != y.size:
        raise ValueError(f"inconsistent shapes: w {w.shape}, x {x.shape}, y {y.shape}")
    return w, x, y


def hadamard_penalty(w, c, sigma, lam):
    """lam * w^T (C . Sigma) w = lam * sum_ij C_ij Sigma_ij w_i w_j."""
    w = np.ravel(np.asarray(w, dtype=np.float64))
    c = np.asarray(c, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if c.shape != (w.size, w.size) or sigma.shape != c.shape:
        raise ValueError("c and sigma must be d x d matching w")
    return float(lam * (w @ ((c * sigma) @ w)))


def _pointwise_loss(pred, y, loss_kind):
    if loss_kind == LossKind.SQUARED:
        return (pred - y) ** 2
    if loss_kind == LossKind.LOGISTIC:
        return np.logaddexp(0.0, -y * pred)
    raise ValueError(f"unhandled loss kind {loss_kind}")


def _chunk_sizes(total, n, width):
    block = max(1, int(4_000_000 / max(1, n * width)))
    sizes = [block] * (total // block)
    if total % block:
        sizes.append(total % block)
    return sizes


def mc_noisy_squared_loss(rng, w, x, y, sigma_factor, lam, num_draws=100_000):
    """Monte Carlo estimate of the mean-one-noise squared-loss objective.

    Inputs are centered internally, matching the assumption under which the
    closed-form decomposition holds; the report carries the plain loss and
    the Hadamard penalty of the same centered data for comparison. With
    lam = 0 no sampling happens and the estimate is exactly the plain loss.
    """
    w, x, y = _prep(w, x, y)
    if num_draws < 1_000:
        raise ValueError("num_draws must be >= 1000")
    u = np.asarray(sigma_factor, dtype=np.float64)
    x = x - x.mean(axis=0)
    n = x.shape[0]
    base = x @ w
    plain = float(np.mean((base - y) ** 2))
    penalty = hadamard_penalty(w, covariance(x), u @ u.T, lam)
    if lam == 0.0:
        return PenaltyReport(plain, penalty, plain, _stderr_floor(plain))

    # Per point i the noisy prediction is base_i + sqrt(lam) * eps_i . (U^T (w . x_i)),
    # so the U^T projection of each row can be taken once, outside the draw loop.
    proj = (x * w) @ u
    sqrt_lam = np.sqrt(lam)
    draws = np.empty(num_draws)
    pos = 0
    for block in _chunk_sizes(num_draws, n, u.shape[1]):
        eps = rng.standard_normal((block, n, u.shape[1]))
        shift = np.einsum("bnk,nk->bn", eps, proj)
        pred = base + sqrt_lam * shift
        draws[pos : pos + block] = np.mean((pred - y) ** 2, axis=1)
        pos += block
    mc = float(draws.mean())
    stderr = float(np.std(draws, ddof=1) / np.sqrt(num_draws))
    return PenaltyReport(plain, penalty, mc, max(stderr, _stderr_floor(mc)))


def curvature_matrix(w, x, y, loss_kind):
    """J(w) = (1/N) sum_i l''_{y_i}(w^T x_i) x_i x_i^T.

    Squared loss has l'' = 2 everywhere; logistic loss (labels in {-1,+1})
    has l'' = s(1-s) with s the sigmoid of the margin.
    """
    w, x, y = _prep(w, x, y)
    if loss_kind == LossKind.SQUARED:
        weights = np.full(x.shape[0], 2.0)
    elif loss_kind == LossKind.LOGISTIC:
        margins = y * (x @ w)
        s = 1.0 / (1.0 + np.exp(-margins))
        weights = s * (1.0 - s)
    else:
        raise ValueError(f"unhandled loss kind {loss_kind}")
    j = (x.T * weights) @ x / x.shape[0]
    return (j + j.T) / 2.0


def second_order_residual(rng, w, x, y, sigma, lambda_grid, num_draws=1_000_000,
                          loss_kind=LossKind.LOGISTIC):
    """Deviation of the noisy objective from plain + (lam/2) w^T (J . Sigma) w.

    Returns one ResidualPoint per grid value; residual/lam -> 0 as lam -> 0
    is the o(lam) statement under test. Plain Monte Carlo noise would swamp
    that signal at small lam, so the estimator stacks three standard
    variance reductions, none of which biases the estimate: antithetic noise
    pairs (the odd-order terms cancel exactly within a pair), draws shared
    across the whole grid, and a control variate subtracting the
    exactly-zero-mean second-order fluctuation (lam/2) * mean_i l''_i *
    (shift_i^2 - E shift_i^2).
    """
    w, x, y = _prep(w, x, y)
    sigma = np.asarray(sigma, dtype=np.float64)
    x = x - x.mean(axis=0)
    n = x.shape[0]
    u = psd_factor(sigma)
    base = x @ w
    plain = float(np.mean(_pointwise_loss(base, y, loss_kind)))
    j = curvature_matrix(w, x, y, loss_kind)
    if loss_kind == LossKind.SQUARED:
        second_deriv = np.full(n, 2.0)
    else:
        s = 1.0 / (1.0 + np.exp(-y * base))
        second_deriv = s * (1.0 - s)

    lams = [float(l) for l in lambda_grid]
    corrections = {l: 0.5 * l * float(w @ ((j * sigma) @ w)) for l in lams}
    pairs = max(1, (num_draws + 1) // 2)
    sums = {l: 0.0 for l in lams}
    sq_sums = {l: 0.0 for l in lams}
    proj = (x * w) @ u
    expected_sq = np.sum(proj**2, axis=1)
    for block in _chunk_sizes(pairs, n, u.shape[1]):
        eps = rng.standard_normal((block, n, u.shape[1]))
        shift = np.einsum("bnk,nk->bn", eps, proj)
        control = ((shift**2 - expected_sq) * second_deriv).mean(axis=1)
        for l in lams:
            if l == 0.0:
                continue
            root = np.sqrt(l)
            up = np.mean(_pointwise_loss(base + root * shift, y, loss_kind), axis=1)
            down = np.mean(_pointwise_loss(base - root * shift, y, loss_kind), axis=1)
            vals = (up + down) / 2.0 - (l / 2.0) * control
            sums[l] += float(vals.sum())
            sq_sums[l] += float((vals**2).sum())

    out = []
    for l in lams:
        if l == 0.0:
            out.append(ResidualPoint(0.0, plain, _stderr_floor(plain), 0.0, 0.0))
            continue
        mean = sums[l] / pairs
        var = max(0.0, sq_sums[l] / pairs - mean**2) * pairs / max(1, pairs - 1)
        stderr = max(np.sqrt(var / pairs), _stderr_floor(mean))
        residual = abs(mean - plain - corrections[l])
        out.append(ResidualPoint(l, mean, stderr, corrections[l], residual))
    return out


def whitening_equivalence(w, x, y, lam):
    """Both sides of the all-ones-covariance noise / ridge-on-whitened-data
    identity, evaluated on internally centered inputs.

    lhs: plain squared loss + lam * w^T C w (the closed-form penalty at
    Sigma = 1 1^T). rhs: squared loss of the whitened problem, with inputs
    mapped by C^{-1/2} and weights by C^{1/2}, plus the plain ridge
    lam * ||w_tilde||^2. Raises numpy.linalg.LinAlgError when C is singular
    (condition number above 1e6).
    """
    w, x, y = _prep(w, x, y)
    x = x - x.mean(axis=0)
    c = covariance(x)
    evals = np.linalg.eigvalsh(c)
    if evals[0] <= 0 or evals[-1] / evals[0] > 1e6:
        raise np.linalg.LinAlgError("data covariance is singular or too ill-conditioned")
    z, z_inv = whitening_matrix(c, eps=evals[-1] * 1e-12)
    plain = float(np.mean((x @ w - y) ** 2))
    lhs = plain + lam * float(w @ (c @ w))
    x_white = x @ z
    w_white = z_inv @ w
    rhs = float(np.mean((x_white @ w_white - y) ** 2)) + lam * float(w_white @ w_white)
    return lhs, rhs


def rotation_invariants(x, sigma_kind):
    """Entrywise nonnegativity of C . Sigma and its rotation-invariant sum.

    The sum is trace(C) for Sigma = I and ||C||_F^2 for Sigma = C; both are
    spectral quantities, hence unchanged under any rotation of the points.
    """
    x = np.asarray(x, dtype=np.float64)
    c = covariance(x)
    if sigma_kind == SigmaKind.IDENTITY:
        hadamard = np.diag(np.diag(c))
    elif sigma_kind == SigmaKind.DATA_COV:
        hadamard = c * c
    else:
        raise ValueError(f"unhandled sigma kind {sigma_kind}")
    nonneg = bool(np.all(hadamard >= -1e-12))
    return nonneg, float(hadamard.sum())
