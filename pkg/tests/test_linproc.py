import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gapclt import linproc
from gapclt.exceptions import DomainError, ResourceError, StructureError


class TestConstruction:
    def test_ar1_rejects_unit_root(self):
        for th in (1.0, -1.0, 1.5):
            with pytest.raises(DomainError):
                linproc.make_ar1(th)

    def test_ma1_accepts_any_finite_theta(self):
        assert linproc.make_ma1(3.0).theta == 3.0
        with pytest.raises(DomainError):
            linproc.make_ma1(float("nan"))

    def test_explicit_dimension_mismatch(self):
        with pytest.raises(StructureError):
            linproc.make_linear([np.eye(2)], linproc.InnovationSpec(dim=3))

    def test_unknown_law(self):
        with pytest.raises(DomainError):
            linproc.InnovationSpec(law="cauchy")

    def test_default_truncation_is_minimal(self):
        for th in (0.1, 0.6, 0.9, 0.99, -0.7):
            L = linproc.default_truncation(th)
            a = abs(th)
            assert a ** (L + 1) / (1 - a) < 1e-12
            assert L == 0 or a ** L / (1 - a) >= 1e-12

    def test_truncation_tail_bound(self):
        spec = linproc.make_ar1(0.9)
        assert spec.tail_bound() < 1e-12
        # geometric series of |theta|^j
        assert spec.coefficient_norm_sum() == pytest.approx(10.0, rel=1e-10)


class TestAutocov:
    def test_ar1_closed_form(self):
        spec = linproc.make_ar1(0.6, sigma=2.0)
        assert linproc.autocov(spec, 0)[0, 0] == pytest.approx(4 / 0.64)
        assert linproc.autocov(spec, 3)[0, 0] == pytest.approx(4 * 0.216 / 0.64)

    def test_ma1(self):
        spec = linproc.make_ma1(0.5)
        assert linproc.autocov(spec, 0)[0, 0] == pytest.approx(1.25)
        assert linproc.autocov(spec, 1)[0, 0] == pytest.approx(0.5)
        assert linproc.autocov(spec, 2)[0, 0] == 0.0

    def test_explicit_negative_lag_transposes(self, rng):
        A = rng.standard_normal((3, 2, 2))
        spec = linproc.make_linear(A)
        np.testing.assert_allclose(linproc.autocov(spec, -1), linproc.autocov(spec, 1).T)
        # Gamma(1) = A_0 A_1^T + A_1 A_2^T
        np.testing.assert_allclose(linproc.autocov(spec, 1), A[0] @ A[1].T + A[1] @ A[2].T)

    def test_non_gaussian_variance_unnormalized(self):
        u = linproc.InnovationSpec(law="uniform", normalize=False, scale=2.0)
        lap = linproc.InnovationSpec(law="laplace", normalize=False, scale=0.5)
        assert u.variance == pytest.approx(4 / 3)
        assert lap.variance == pytest.approx(0.5)


class TestSimulate:
    def test_reproducible(self):
        spec = linproc.make_ar1(0.6)
        np.testing.assert_array_equal(linproc.simulate(spec, 500, 3),
                                      linproc.simulate(spec, 500, 3))
        assert not np.array_equal(linproc.simulate(spec, 500, 3),
                                  linproc.simulate(spec, 500, 4))

    @pytest.mark.parametrize("law", ["gaussian", "uniform", "laplace"])
    def test_ar1_moments(self, law):
        spec = linproc.make_ar1(0.6, innovations=linproc.InnovationSpec(law=law))
        x = linproc.simulate(spec, 200_000, 11)[0]
        assert x.var() == pytest.approx(1 / 0.64, rel=0.05)
        r1 = np.corrcoef(x[:-1], x[1:])[0, 1]
        assert r1 == pytest.approx(0.6, abs=0.02)

    def test_stationary_start(self):
        # first value across many paths has the stationary variance
        spec = linproc.make_ar1(0.9)
        x0 = np.array([linproc.simulate(spec, 1, s)[0, 0] for s in range(4000)])
        assert x0.var() == pytest.approx(1 / 0.19, rel=0.08)

    def test_ma1_lag_structure(self):
        x = linproc.simulate(linproc.make_ma1(0.6), 200_000, 5)[0]
        assert np.mean(x[:-1] * x[1:]) == pytest.approx(0.6, abs=0.02)
        assert abs(np.mean(x[:-2] * x[2:])) < 0.02

    def test_multivariate_shape(self, rng):
        spec = linproc.make_linear(rng.standard_normal((2, 3, 3)))
        assert linproc.simulate(spec, 10, 0).shape == (3, 10)

    def test_resource_guard(self):
        with pytest.raises(ResourceError):
            linproc.simulate(linproc.make_ar1(0.5), 3 * 10**9, 0)

    def test_length_must_be_positive(self):
        with pytest.raises(DomainError):
            linproc.simulate(linproc.make_ar1(0.5), 0, 0)

    def test_csv_round_trip(self, tmp_path):
        X = linproc.simulate(linproc.make_linear(np.eye(2)[None]), 7, 1)
        path = tmp_path / "s.csv"
        linproc.write_series_csv(path, X)
        assert path.read_text().splitlines()[0] == "x1,x2"
        np.testing.assert_array_equal(linproc.read_series_csv(path), X)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.95, 0.95), st.integers(0, 6))
def test_ar1_autocov_matches_truncated_expansion(theta, h):
    spec = linproc.make_ar1(theta)
    A = spec.coefficients()[:, 0, 0]
    direct = float(np.sum(A[:A.size - h] * A[h:]))
    assert linproc.autocov(spec, h)[0, 0] == pytest.approx(direct, rel=1e-9, abs=1e-11)
