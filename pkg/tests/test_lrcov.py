import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gapclt import asymcov, fcn, linproc, lrcov, mc
from gapclt.exceptions import DegenerateError, DomainError
from gapclt.io import read_matrix_csv, read_metadata


class TestPieces:
    def test_bartlett(self):
        np.testing.assert_allclose(lrcov.bartlett([-2, -0.5, 0, 0.25, 1, 3]),
                                   [0, 0.5, 1, 0.75, 0, 0])

    def test_default_bandwidth(self):
        assert lrcov.default_bandwidth(100_000) == 69
        assert lrcov.default_bandwidth(8) == 3
        assert lrcov.default_bandwidth(200_000) == 87
        with pytest.raises(DomainError):
            lrcov.default_bandwidth(7)

    def test_kernel_spec(self):
        assert lrcov.KernelSpec(5).max_lag(100) == 4
        assert lrcov.KernelSpec(4.5).max_lag(100) == 4
        assert lrcov.KernelSpec(500).max_lag(10) == 9
        with pytest.raises(DomainError):
            lrcov.KernelSpec(0.5)

    def test_sample_lag_cov_loop(self, rng):
        Y = rng.standard_normal((2, 30))
        D = Y - Y.mean(axis=1, keepdims=True)
        G = np.zeros((2, 2))
        for t in range(28):
            G += np.outer(D[:, t], D[:, t + 2])
        np.testing.assert_allclose(lrcov.sample_lag_cov(Y, 2), G / 30)
        np.testing.assert_allclose(lrcov.sample_lag_cov(Y, -2), G.T / 30)
        with pytest.raises(DomainError):
            lrcov.sample_lag_cov(Y, 30)


class TestEstimate:
    def test_hand_example(self):
        est = lrcov.lr_cov_estimate(np.array([1.0, 2.0, 3.0, 4.0]), 2)
        assert est.sigma_hat[0, 0] == pytest.approx(1.5625)
        assert est.n_lags == 1

    def test_ar1(self):
        x = linproc.simulate(linproc.make_ar1(0.6), 100_000, 0)
        assert lrcov.lr_cov_estimate(x).sigma_hat[0, 0] == pytest.approx(6.25, rel=0.1)

    def test_iid(self):
        x = np.random.default_rng(0).standard_normal(100_000)
        assert lrcov.lr_cov_estimate(x).sigma_hat[0, 0] == pytest.approx(1.0, rel=0.1)

    def test_corr_and_degenerate(self):
        est = lrcov.lr_cov_estimate(np.vstack([np.arange(20.0), -np.arange(20.0)]), 3)
        np.testing.assert_allclose(est.corr(), [[1, -1], [-1, 1]], atol=1e-12)
        with pytest.raises(DegenerateError):
            lrcov.cov_to_corr(np.diag([1.0, 0.0]))

    def test_export(self, tmp_path, rng):
        est = lrcov.lr_cov_estimate(rng.standard_normal((3, 100)), 4)
        lrcov.export_estimate(est, tmp_path / "s.csv", tmp_path / "s.meta", {"seed": 3})
        M, labels = read_matrix_csv(tmp_path / "s.csv")
        np.testing.assert_array_equal(M, est.sigma_hat)
        assert labels == ["c1", "c2", "c3"]
        meta = read_metadata(tmp_path / "s.meta")
        assert meta["bandwidth"] == "4" and meta["seed"] == "3"

    def test_toy_model_high_persistence_with_wide_bandwidth(self):
        # with a bandwidth far above the default the estimator reaches the
        # theta = 0.99 closed form; the default bandwidth is covered by the
        # acceptance suite
        rng = np.random.default_rng(0)
        W = rng.standard_normal((1, 6, 1))
        net = fcn.FcnSpec(1, [fcn.ConvLayer(W, np.zeros(6))])
        _, C, _ = mc.single_path_corr(linproc.make_ar1(0.99), net, 200_000, 1, bandwidth=3000)
        R = asymcov.corr_gap_onelayer(W[0], 0.99)
        assert np.max(np.abs(C - R)) < 0.07


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(1.0, 40.0), st.integers(2, 4), st.integers(10, 80))
def test_estimate_is_psd(seed, b, m, T):
    Y = np.random.default_rng(seed).standard_normal((m, T)).cumsum(axis=1)
    S = lrcov.lr_cov_estimate(Y, b).sigma_hat
    np.testing.assert_array_equal(S, S.T)
    assert np.linalg.eigvalsh(S).min() >= -1e-10 * np.trace(S)
