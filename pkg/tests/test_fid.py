import numpy as np
import pytest
import scipy.linalg

from skullkit import fixtures
from skullkit.fid import (FeatureMatrix, FeatureStats, FidMode, feature_stats,
                          fid, fid_breakdown, load_features, matrix_sqrt_psd,
                          random_projection_features, save_features)


def oracle_covariance(arr):
    """Two-pass loop covariance with the N-1 divisor."""
    n, k = arr.shape
    mu = [sum(arr[i][j] for i in range(n)) / n for j in range(k)]
    cov = [[0.0] * k for _ in range(k)]
    for a in range(k):
        for b in range(k):
            cov[a][b] = sum((arr[i][a] - mu[a]) * (arr[i][b] - mu[b])
                            for i in range(n)) / (n - 1)
    return np.asarray(mu), np.asarray(cov)


def oracle_fid_standard(r, s):
    """Dense linear-algebra route through scipy's general sqrtm."""
    diff = r.mu - s.mu
    cross = scipy.linalg.sqrtm(r.sigma @ s.sigma)
    return float(diff @ diff + np.trace(r.sigma + s.sigma - 2 * np.real(cross)))


class TestFeatureStats:
    def test_identical_rows_zero_cov(self):
        stats = feature_stats(FeatureMatrix(np.array([[1.0, 2.0], [1.0, 2.0]])))
        assert np.allclose(stats.sigma, 0.0)

    def test_hand_arithmetic(self):
        stats = feature_stats(FeatureMatrix(np.array([[0.0, 0.0], [2.0, 0.0]])))
        assert np.allclose(stats.mu, [1.0, 0.0])
        assert np.allclose(stats.sigma, [[2.0, 0.0], [0.0, 0.0]])

    def test_random_matches_two_pass_oracle(self, rng):
        arr = rng.normal(size=(100, 5))
        stats = feature_stats(FeatureMatrix(arr))
        mu, cov = oracle_covariance(arr)
        assert np.max(np.abs(stats.mu - mu)) < 1e-10
        assert np.max(np.abs(stats.sigma - cov)) < 1e-10

    def test_requires_two_rows(self):
        with pytest.raises(ValueError):
            FeatureMatrix(np.ones((1, 4)))


class TestMatrixSqrt:
    def test_identity(self):
        assert np.allclose(matrix_sqrt_psd(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        assert np.allclose(matrix_sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_random_psd_reconstructs(self, rng):
        b = rng.normal(size=(8, 8))
        a = b @ b.T
        s = matrix_sqrt_psd(a)
        assert np.linalg.norm(s @ s - a) / np.linalg.norm(a) < 1e-6
        assert np.allclose(s, s.T)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            matrix_sqrt_psd(np.array([[1.0, 5.0], [0.0, 1.0]]))


class TestFid:
    def test_identical_stats_zero(self, rng):
        stats = feature_stats(FeatureMatrix(rng.normal(size=(50, 4))))
        assert abs(fid(stats, stats, FidMode.STANDARD)) < 1e-6
        assert abs(fid(stats, stats, "paper_literal")) < 1e-6

    def test_mean_shift_only(self, rng):
        arr = rng.normal(size=(200, 6))
        d = np.arange(1.0, 7.0) / 10.0
        a = feature_stats(FeatureMatrix(arr))
        b = feature_stats(FeatureMatrix(arr + d))
        score = fid_breakdown(a, b, FidMode.STANDARD)
        assert score.total == pytest.approx(float(d @ d), abs=1e-8)
        assert score.trace_term == pytest.approx(0.0, abs=1e-8)

    def test_standard_matches_scipy_oracle(self, rng):
        a = feature_stats(FeatureMatrix(rng.normal(size=(60, 4))))
        b = feature_stats(FeatureMatrix(rng.normal(0.5, 1.3, size=(80, 4))))
        assert fid(a, b) == pytest.approx(oracle_fid_standard(a, b), abs=1e-8)

    def test_symmetry(self, rng):
        a = feature_stats(FeatureMatrix(rng.normal(size=(40, 5))))
        b = feature_stats(FeatureMatrix(rng.normal(1.0, 2.0, size=(40, 5))))
        assert fid(a, b) == pytest.approx(fid(b, a), abs=1e-6)

    def test_non_negative(self, rng):
        for _ in range(5):
            a = feature_stats(FeatureMatrix(rng.normal(size=(30, 3))))
            b = feature_stats(FeatureMatrix(rng.normal(0.2, 1.5, size=(30, 3))))
            assert fid(a, b) > -1e-9

    def test_translation_invariance(self, rng):
        arr_a = rng.normal(size=(50, 4))
        arr_b = rng.normal(0.3, 1.2, size=(50, 4))
        shift = np.array([5.0, -3.0, 2.0, 100.0])
        base = fid(feature_stats(FeatureMatrix(arr_a)),
                   feature_stats(FeatureMatrix(arr_b)))
        moved = fid(feature_stats(FeatureMatrix(arr_a + shift)),
                    feature_stats(FeatureMatrix(arr_b + shift)))
        assert moved == pytest.approx(base, abs=1e-8)

    def test_scaling_quadratic(self, rng):
        arr_a = rng.normal(size=(50, 4))
        arr_b = rng.normal(0.3, 1.2, size=(50, 4))
        base = fid(feature_stats(FeatureMatrix(arr_a)),
                   feature_stats(FeatureMatrix(arr_b)))
        scaled = fid(feature_stats(FeatureMatrix(3.0 * arr_a)),
                     feature_stats(FeatureMatrix(3.0 * arr_b)))
        assert scaled == pytest.approx(9.0 * base, rel=1e-8)

    def test_elementwise_mode_diagonal_form(self, rng):
        a = feature_stats(FeatureMatrix(rng.normal(size=(40, 3))))
        b = feature_stats(FeatureMatrix(rng.normal(0.1, 0.8, size=(40, 3))))
        score = fid_breakdown(a, b, FidMode.ELEMENTWISE)
        dr, ds = np.diag(a.sigma), np.diag(b.sigma)
        expected_trace = float(np.sum((np.sqrt(dr) - np.sqrt(ds)) ** 2))
        assert score.trace_term == pytest.approx(expected_trace, rel=1e-12)

    def test_modes_agree_for_diagonal_covariance(self, rng):
        # independent coordinates: the matrix and element-wise forms coincide
        arr = rng.normal(size=(5000, 3)) * np.array([1.0, 2.0, 0.5])
        a = feature_stats(FeatureMatrix(arr))
        assert fid_breakdown(a, a, "standard").total == pytest.approx(
            fid_breakdown(a, a, "paper_literal").total, abs=1e-9)

    def test_dimension_mismatch(self, rng):
        a = feature_stats(FeatureMatrix(rng.normal(size=(10, 3))))
        b = feature_stats(FeatureMatrix(rng.normal(size=(10, 4))))
        with pytest.raises(ValueError):
            fid(a, b)


class TestLoadFeatures:
    def test_fixture_values(self, tmp_path):
        arr = np.array([[1, 2, 3], [4, 5, 6]], dtype=np.float32)
        np.save(tmp_path / "f.npy", arr)
        fm = load_features(tmp_path / "f.npy")
        assert np.array_equal(fm.features, arr)

    def test_roundtrip_bit_exact(self, tmp_path, rng):
        fm = FeatureMatrix(rng.normal(size=(20, 8)).astype(np.float32))
        save_features(fm, tmp_path / "g.npy")
        back = load_features(tmp_path / "g.npy")
        assert np.array_equal(back.features, fm.features)

    def test_large_fixture_stats(self, tmp_path, rng):
        arr = rng.normal(size=(10_000, 1_000)).astype(np.float32)
        np.save(tmp_path / "big.npy", arr)
        stats = feature_stats(load_features(tmp_path / "big.npy"))
        assert stats.mu.shape == (1_000,)
        assert stats.sigma.shape == (1_000, 1_000)

    def test_malformed(self, tmp_path):
        np.save(tmp_path / "one_d.npy", np.zeros(5, dtype=np.float32))
        with pytest.raises(ValueError):
            load_features(tmp_path / "one_d.npy")


def test_random_projection_features_deterministic(proxy_set):
    a = random_projection_features(proxy_set[:10], k=16, seed=3)
    b = random_projection_features(proxy_set[:10], k=16, seed=3)
    assert np.array_equal(a.features, b.features)
    assert a.features.shape == (10, 16)
