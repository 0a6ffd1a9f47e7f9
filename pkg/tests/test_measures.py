import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from src.errors import DimensionMismatchError, SingularCovarianceError, SizeExceededError, TooFewSamplesError
from src.measures import (
    EmpiricalMeasure,
    domination_check,
    dual_walpha_lp,
    gaussian_kl,
    moment_norm,
    read_points_csv,
    relative_entropy,
    wasserstein_alpha,
    wasserstein_k,
    weighted_variation_lp,
    write_points_csv,
)
from src.measures.entropy import _knn_replicates
from src.measures.transport import EXACT_MAX_SIZE
from src.moduli import log_power_modulus, power_modulus


def _cloud(rng, n, d, weighted=False):
    points = rng.normal(size=(n, d))
    if not weighted:
        return EmpiricalMeasure.uniform(points)
    w = rng.uniform(0.1, 1.0, size=n)
    return EmpiricalMeasure(points, w / w.sum())


class TestEmpiricalMeasure:

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            EmpiricalMeasure(np.zeros((2, 1)), np.array([0.7, 0.7]))

    def test_push_forward_shifts(self):
        mu = EmpiricalMeasure.uniform([[0.0], [1.0]])
        shifted = mu.push_forward(lambda x: np.ones_like(x), eps=0.5)
        np.testing.assert_allclose(shifted.points[:, 0], [0.5, 1.5])

    def test_csv_round_trip_keeps_weights(self, tmp_path):
        mu = EmpiricalMeasure(np.array([[0.0, 1.0], [2.0, 3.0]]), np.array([0.25, 0.75]))
        write_points_csv(tmp_path / 'mu.csv', mu)
        back = read_points_csv(tmp_path / 'mu.csv')
        np.testing.assert_array_equal(back.points, mu.points)
        np.testing.assert_array_equal(back.weights, mu.weights)

    def test_headerless_csv_is_uniform(self, tmp_path):
        np.savetxt(tmp_path / 'pts.csv', np.array([[1.0], [2.0], [3.0]]), delimiter=',')
        mu = read_points_csv(tmp_path / 'pts.csv')
        assert mu.n == 3 and mu.dim == 1
        np.testing.assert_allclose(mu.weights, 1.0 / 3.0)


class TestMomentNorm:

    def test_dirac_at_origin(self):
        assert moment_norm(EmpiricalMeasure.dirac([0.0, 0.0]), 3.0) == 0.0

    def test_dirac_radius_three(self):
        assert moment_norm(EmpiricalMeasure.dirac([3.0]), 2.0) == pytest.approx(3.0)

    def test_two_point(self):
        assert moment_norm(EmpiricalMeasure.uniform([[-1.0], [1.0]]), 4.0) == pytest.approx(1.0)

    def test_rejects_k_below_one(self):
        with pytest.raises(ValueError):
            moment_norm(EmpiricalMeasure.dirac([1.0]), 0.5)


class TestWassersteinK:

    def test_self_distance_zero(self):
        mu = _cloud(np.random.default_rng(1), 20, 2)
        for k in (1.0, 2.0, 3.0):
            assert wasserstein_k(mu, mu, k)[0] == pytest.approx(0.0, abs=1e-12)

    def test_diracs(self):
        x, y = np.array([1.0, 2.0, -1.0]), np.array([0.0, 0.5, 1.0])
        for k in (1.0, 2.0, 4.0):
            value, _ = wasserstein_k(EmpiricalMeasure.dirac(x), EmpiricalMeasure.dirac(y), k)
            assert value == pytest.approx(np.linalg.norm(x - y), rel=1e-12)

    def test_matches_assignment_oracle(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
        cost = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        rows, cols = linear_sum_assignment(cost)
        oracle = np.sqrt(cost[rows, cols].mean())
        value, plan = wasserstein_k(EmpiricalMeasure.uniform(a), EmpiricalMeasure.uniform(b), 2.0, 'exact')
        assert value == pytest.approx(oracle, abs=1e-10)
        assert max(plan.row_residual, plan.col_residual) <= 1e-8

    @pytest.mark.parametrize('k', [1.0, 2.0, 3.5])
    def test_quantile_agrees_with_exact(self, k):
        rng = np.random.default_rng(3)
        mu, nu = _cloud(rng, 37, 1, weighted=True), _cloud(rng, 64, 1, weighted=True)
        quantile, plan = wasserstein_k(mu, nu, k, 'quantile1d')
        exact, _ = wasserstein_k(mu, nu, k, 'exact')
        assert quantile == pytest.approx(exact, abs=1e-10)
        assert max(plan.row_residual, plan.col_residual) <= 1e-12

    def test_auto_picks_quantile_in_one_dim(self):
        rng = np.random.default_rng(4)
        _, plan = wasserstein_k(_cloud(rng, 5, 1), _cloud(rng, 5, 1))
        assert plan.method == 'quantile1d'

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(5)
        with pytest.raises(DimensionMismatchError):
            wasserstein_k(_cloud(rng, 4, 1), _cloud(rng, 4, 2))

    def test_exact_size_limit(self):
        n = int(np.sqrt(EXACT_MAX_SIZE)) + 1
        mu = EmpiricalMeasure.uniform(np.zeros((n, 2)))
        with pytest.raises(SizeExceededError):
            wasserstein_k(mu, mu, 2.0, 'exact')

    def test_entropic_error_shrinks_with_reg(self):
        rng = np.random.default_rng(6)
        mu, nu = _cloud(rng, 32, 2), _cloud(rng, 32, 2)
        exact, _ = wasserstein_k(mu, nu, 2.0, 'exact')
        errors = [abs(wasserstein_k(mu, nu, 2.0, 'entropic', reg=reg)[0] - exact) for reg in (1.0, 0.1, 0.01)]
        assert errors[0] > errors[1] > errors[2]


class TestWassersteinAlpha:

    def test_diracs(self):
        m = power_modulus(1.0, 0.5)
        x, y = np.array([0.3, -1.2]), np.array([2.0, 0.1])
        value = wasserstein_alpha(EmpiricalMeasure.dirac(x), EmpiricalMeasure.dirac(y), m)
        assert value == pytest.approx(float(m(np.linalg.norm(x - y))), abs=1e-10)

    def test_identical_measures(self):
        mu = _cloud(np.random.default_rng(7), 12, 3)
        assert wasserstein_alpha(mu, mu, log_power_modulus(1.0, 1.0)) == pytest.approx(0.0, abs=1e-12)

    def test_matches_dual_lp(self):
        rng = np.random.default_rng(8)
        mu, nu = _cloud(rng, 16, 1), _cloud(rng, 16, 1)
        m = power_modulus(1.0, 0.5)
        assert wasserstein_alpha(mu, nu, m) == pytest.approx(dual_walpha_lp(mu, nu, m), abs=1e-8)

    def test_rejects_quantile(self):
        rng = np.random.default_rng(9)
        with pytest.raises(ValueError):
            wasserstein_alpha(_cloud(rng, 4, 1), _cloud(rng, 4, 1), power_modulus(), 'quantile1d')


class TestMetricAxioms:

    def test_random_triples(self):
        rng = np.random.default_rng(10)
        m = power_modulus(1.0, 0.5)
        for trial in range(200):
            d = int(rng.integers(1, 4))
            a, b, c = (_cloud(rng, int(rng.integers(2, 33)), d, weighted=bool(trial % 2)) for _ in range(3))
            for dist in (lambda p, q: wasserstein_k(p, q, 2.0, 'exact')[0],
                         lambda p, q: wasserstein_alpha(p, q, m, 'exact')):
                ab, ba, bc, ac = dist(a, b), dist(b, a), dist(b, c), dist(a, c)
                assert ab >= 0.0
                assert ab == pytest.approx(ba, abs=1e-9)
                assert ac <= ab + bc + 1e-9
                assert dist(a, a) <= 1e-8


class TestDomination:

    def test_variation_lp_closed_form(self):
        mu = EmpiricalMeasure.uniform([[0.0], [1.0]])
        nu = EmpiricalMeasure.uniform([[1.0], [2.0]])
        # signed masses 1/2, 0, -1/2 on {0, 1, 2}
        assert weighted_variation_lp(mu, nu, 2.0) == pytest.approx(0.5 * 1.0 + 0.5 * 5.0)

    def test_sampled_pairs(self):
        rng = np.random.default_rng(11)
        m = power_modulus(1.0, 0.5)
        for _ in range(20):
            check = domination_check(_cloud(rng, 10, 2), _cloud(rng, 12, 2), m, k=2.0)
            assert check.passed


class TestRelativeEntropy:

    def test_gaussian_identical(self):
        assert gaussian_kl([0.0], [[1.0]], [0.0], [[1.0]]) == pytest.approx(0.0, abs=1e-14)

    def test_gaussian_shift(self):
        t, x, y = 0.5, 1.0, -0.5
        assert gaussian_kl([x], [[t]], [y], [[t]]) == pytest.approx((x - y) ** 2 / (2 * t))

    def test_gaussian_singular(self):
        with pytest.raises(SingularCovarianceError):
            gaussian_kl([0.0, 0.0], np.eye(2), [0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]])

    def test_knn_unit_shift(self):
        rng = np.random.default_rng(12)
        est = relative_entropy(rng.normal(1.0, 1.0, size=5000), rng.normal(0.0, 1.0, size=5000))
        assert est.value == pytest.approx(0.5, abs=0.1)
        assert 0.0 < est.stderr < 0.1

    def test_knn_jackknife_replicates_match_refits(self):
        rng = np.random.default_rng(13)
        p, q = rng.normal(0.5, 1.0, size=(60, 2)), rng.normal(0.0, 1.2, size=(55, 2))
        rep = _knn_replicates(p, q, 4)
        for i in (0, 17, 59):
            refit = relative_entropy(np.delete(p, i, axis=0), q).value
            assert rep.leave_p[i] == pytest.approx(refit, abs=1e-10)
        for j in (0, 30, 54):
            refit = relative_entropy(p, np.delete(q, j, axis=0)).value
            assert rep.leave_q[j] == pytest.approx(refit, abs=1e-10)

    @pytest.mark.slow
    def test_knn_stderr_is_calibrated(self):
        estimates = [relative_entropy(rng.normal(1.0, 1.0, size=2000), rng.normal(0.0, 1.0, size=2000))
                     for rng in (np.random.default_rng(s) for s in range(50))]
        values = np.array([e.value for e in estimates])
        stderr = np.array([e.stderr for e in estimates])
        assert 0.5 <= stderr.mean() / values.std(ddof=1) <= 2.0
        assert np.mean(np.abs(values - 0.5) <= 2 * stderr) >= 0.8

    def test_knn_too_few(self):
        with pytest.raises(TooFewSamplesError):
            relative_entropy(np.zeros(10), np.zeros(10))

    def test_gaussian_through_dispatch(self):
        est = relative_entropy(None, None, estimator='gaussian',
                               params={'mean_p': [1.0], 'cov_p': [[1.0]], 'mean_q': [0.0], 'cov_q': [[1.0]]})
        assert est.value == pytest.approx(0.5)
