import numpy as np
import pytest

from asni.linalg import make_rng, psd_factor
from asni.noise import (
    NoiseKind,
    NoiseSample,
    NoiseSpec,
    apply_noise,
    sample_asni,
    sample_for_layer,
    sample_iid_bernoulli,
    sample_iid_gaussian,
    sample_sni_fixed,
)


class TestSpec:
    def test_lambda_nonnegative(self):
        with pytest.raises(ValueError):
            NoiseSpec(kind=NoiseKind.IID_GAUSSIAN, lam=-0.1)

    def test_p_range(self):
        with pytest.raises(ValueError):
            NoiseSpec(kind=NoiseKind.IID_BERNOULLI, p=0.0)

    def test_fixed_sigma_required_iff_sni(self):
        with pytest.raises(ValueError):
            NoiseSpec(kind=NoiseKind.SNI_FIXED, lam=1.0)
        with pytest.raises(ValueError):
            NoiseSpec(kind=NoiseKind.ASNI, lam=1.0, fixed_sigma=np.eye(2))

    def test_layer_mask(self):
        spec = NoiseSpec(kind=NoiseKind.ASNI, lam=1.0, layer_mask={0})
        assert spec.applies_to(0) and not spec.applies_to(1)
        assert NoiseSpec(kind=NoiseKind.ASNI, lam=1.0).applies_to(3)
        assert not NoiseSpec(kind=NoiseKind.NONE).applies_to(0)

    def test_dict_roundtrip(self):
        spec = NoiseSpec(kind=NoiseKind.SNI_FIXED, lam=0.3, fixed_sigma=np.eye(3),
                         shared_per_batch=True, layer_mask={1, 2})
        back = NoiseSpec.from_dict(spec.to_dict())
        assert back.kind == spec.kind and back.lam == spec.lam
        assert back.shared_per_batch and back.layer_mask == spec.layer_mask
        assert np.array_equal(back.fixed_sigma, spec.fixed_sigma)


class TestBernoulli:
    def test_keep_all(self, rng):
        assert np.array_equal(sample_iid_bernoulli(rng, 8, 5, 1.0).r, np.ones((8, 5)))

    def test_zero_fraction(self):
        r = sample_iid_bernoulli(make_rng(3), 1000, 100, 0.5).r
        assert 0.494 <= np.mean(r == 0.0) <= 0.506

    def test_mean_one(self):
        r = sample_iid_bernoulli(make_rng(4), 1000, 100, 0.5).r
        assert 0.99 <= r.mean() <= 1.01

    def test_values_exact(self, rng):
        r = sample_iid_bernoulli(rng, 200, 50, 0.25).r
        assert set(np.unique(r)) <= {0.0, 4.0}


class TestIidGaussian:
    def test_lambda_zero(self, rng):
        assert np.array_equal(sample_iid_gaussian(rng, 6, 4, 0.0).r, np.ones((6, 4)))

    def test_variance(self):
        r = sample_iid_gaussian(make_rng(5), 1000, 100, 0.25).r
        assert 0.245 <= r.var() <= 0.255

    def test_mean(self):
        r = sample_iid_gaussian(make_rng(6), 1000, 100, 0.25).r
        assert 0.995 <= r.mean() <= 1.005


class TestSniFixed:
    def test_lambda_zero(self, rng):
        assert np.array_equal(sample_sni_fixed(rng, 5, np.eye(3), 0.0).r, np.ones((5, 3)))

    def test_identity_sigma_uncorrelated(self):
        r = sample_sni_fixed(make_rng(7), 100_000, np.eye(4), 1.0).r
        emp = np.cov(r.T, bias=True)
        off = emp - np.diag(np.diag(emp))
        assert np.max(np.abs(off)) <= 0.01

    def test_all_ones_sigma_perfectly_correlated(self, rng):
        # Sigma = 1 1^T factors as the all-ones column: every row is constant.
        factor = np.ones((6, 1))
        r = sample_sni_fixed(rng, 50, factor, 0.7).r
        assert np.max(np.abs(r - r[:, :1])) == 0.0


class TestAsni:
    def test_lambda_zero(self, rng):
        batch = rng.standard_normal((10, 3))
        assert np.array_equal(sample_asni(rng, batch, 0.0).r, np.ones((10, 3)))

    def test_constant_batch(self, rng):
        batch = np.tile([2.0, -1.0, 0.5], (16, 1))
        assert np.array_equal(sample_asni(rng, batch, 1.5).r, np.ones((16, 3)))

    def test_batch_too_small(self, rng):
        with pytest.raises(ValueError):
            sample_asni(rng, np.ones((1, 4)), 0.5)

    def test_covariance_matches_target(self):
        # Empirical covariance over many factorized draws matches lam * Ytil^T Ytil
        # within 5 sigma bands of the covariance estimator.
        rng = make_rng(11)
        n, d, lam = 64, 8, 0.8
        batch = rng.standard_normal((n, d)) @ (np.eye(d) + 0.4)
        ytil = (batch - batch.mean(axis=0)) / np.sqrt(n)
        target = lam * (ytil.T @ ytil)
        draws = 10_000
        rows = np.concatenate(
            [sample_asni(rng, batch, lam).r - 1.0 for _ in range(draws // n + 1)], axis=0
        )[:draws]
        emp = rows.T @ rows / draws  # mean is known to be 0 by construction
        band = 5.0 * np.sqrt(
            (np.outer(np.diag(target), np.diag(target)) + target**2) / draws
        )
        assert np.all(np.abs(emp - target) <= band)

    def test_factorized_matches_dense_route(self):
        # Same first two moments as sampling through an explicit factor of
        # the dense batch covariance.
        rng = make_rng(13)
        n, d, lam = 32, 5, 1.0
        batch = rng.standard_normal((n, d)) * np.linspace(0.5, 2.0, d)
        ytil = (batch - batch.mean(axis=0)) / np.sqrt(n)
        sigma_hat = ytil.T @ ytil
        u = psd_factor(sigma_hat)
        draws = 12_000
        fact = np.concatenate(
            [sample_asni(rng, batch, lam).r for _ in range(draws // n + 1)], axis=0
        )[:draws]
        dense = sample_sni_fixed(rng, draws, u, lam).r
        assert np.max(np.abs(fact.mean(axis=0) - dense.mean(axis=0))) <= 0.05
        cov_f = np.cov(fact.T, bias=True)
        cov_d = np.cov(dense.T, bias=True)
        band = 5.0 * np.sqrt(
            2 * (np.outer(np.diag(lam * sigma_hat), np.diag(lam * sigma_hat))
                 + (lam * sigma_hat) ** 2) / draws
        )
        assert np.all(np.abs(cov_f - cov_d) <= band)

    def test_shared_rows_identical(self, rng):
        batch = rng.standard_normal((40, 6))
        r = sample_asni(rng, batch, 0.9, shared_per_batch=True).r
        assert all(np.array_equal(r[0], row) for row in r)


class TestApplyNoise:
    def test_ones_identity(self, rng):
        a = rng.standard_normal((7, 4))
        out = apply_noise(a, NoiseSample(r=np.ones_like(a)))
        assert np.array_equal(out, a)

    def test_hand_example(self):
        out = apply_noise(np.array([[2.0, 3.0]]), NoiseSample(r=np.array([[0.5, 2.0]])))
        assert np.array_equal(out, np.array([[1.0, 6.0]]))

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            apply_noise(rng.standard_normal((3, 3)), NoiseSample(r=np.ones((3, 4))))


class TestDispatch:
    def test_masked_layer_gets_ones(self, rng):
        spec = NoiseSpec(kind=NoiseKind.IID_GAUSSIAN, lam=2.0, layer_mask={1})
        batch = rng.standard_normal((8, 3))
        assert np.array_equal(sample_for_layer(rng, spec, 0, batch).r, np.ones((8, 3)))
        assert not np.array_equal(sample_for_layer(rng, spec, 1, batch).r, np.ones((8, 3)))

    def test_mean_one_invariant(self):
        # All Gaussian regimes and inverted Bernoulli are mean-one: empirical
        # means over many entries sit inside 5 sigma bands.
        rng = make_rng(17)
        batch = rng.standard_normal((64, 10))
        cases = [
            NoiseSpec(kind=NoiseKind.IID_GAUSSIAN, lam=0.5),
            NoiseSpec(kind=NoiseKind.IID_BERNOULLI, p=0.5),
            NoiseSpec(kind=NoiseKind.ASNI, lam=0.5),
        ]
        for spec in cases:
            total, count = 0.0, 0
            for _ in range(400):
                r = sample_for_layer(rng, spec, 0, batch).r
                total += r.sum()
                count += r.size
            sigma_bound = 5.0 * 2.0 / np.sqrt(count)  # entry std <= ~2 in these setups
            assert abs(total / count - 1.0) <= sigma_bound

    def test_sni_fixed_width_checked(self, rng):
        spec = NoiseSpec(kind=NoiseKind.SNI_FIXED, lam=0.5, fixed_sigma=np.eye(4))
        with pytest.raises(ValueError):
            sample_for_layer(rng, spec, 0, rng.standard_normal((8, 3)),
                             sigma_factor=psd_factor(np.eye(4)))
