import numpy as np
import pytest

from src.errors import ConfigInvalidError, InvariantViolationError, MissingIncrementsError, TooFewSamplesError
from src.girsanov import (
    GirsanovWeights,
    bridge_eta,
    eta_between_flows,
    exponential_bound_check,
    martingale_check,
    second_moment_log,
    weight_path,
)
from src.measures import EmpiricalMeasure
from src.models import CoefficientModel, GeneralB1, build_model
from src.simulation import FrozenFlow, SimConfig, simulate_mckean_vlasov


def _dirac_flow(times, values):
    return FrozenFlow(times, tuple(EmpiricalMeasure.dirac([v]) for v in values))


def _bm_bundle(n, dt=0.1, t_end=1.0, seed=1, **kwargs):
    cfg = SimConfig(n_particles=n, dt=dt, t_end=t_end, seed=seed, **kwargs)
    return simulate_mckean_vlasov(build_model('pure_bm'), EmpiricalMeasure.dirac([0.0]), cfg)


class TestEta:

    def test_identical_flows_give_zero(self):
        cfg = SimConfig(n_particles=200, dt=0.05, t_end=0.5, seed=2)
        bundle = simulate_mckean_vlasov(build_model('mean_field_ou'), lambda rng, n: rng.normal(size=(n, 1)), cfg)
        eta = eta_between_flows(build_model('mean_field_ou'), bundle, bundle, bundle)
        assert np.all(eta == 0.0)
        assert np.all(weight_path(eta, bundle).R_terminal == 1.0)

    def test_scaled_diffusion(self):
        base = build_model('pure_bm')
        model = CoefficientModel('scaled', 1, 1, lambda t, x: 2.0 * np.ones((len(x), 1, 1)), base.b0,
                                 GeneralB1(b1=lambda t, x, mu: np.broadcast_to(mu.mean(), x.shape).copy()),
                                 base.constants, sigma_constant=True)
        bundle = _bm_bundle(10)
        eta = eta_between_flows(model, bundle, _dirac_flow(bundle.times, np.zeros(11)),
                                _dirac_flow(bundle.times, np.full(11, 0.6)))
        np.testing.assert_allclose(eta, 0.3, rtol=1e-14)

    def test_mean_field_ou_flows(self):
        a = 0.5
        model = build_model('mean_field_ou', a=a)
        cfg = SimConfig(n_particles=50, dt=0.05, t_end=1.0, seed=3)
        bundle = simulate_mckean_vlasov(model, EmpiricalMeasure.dirac([0.0]), cfg)
        mean_b = np.exp((a - 1.0) * cfg.times)
        eta = eta_between_flows(model, bundle, _dirac_flow(cfg.times, np.zeros_like(mean_b)),
                                _dirac_flow(cfg.times, mean_b))
        expected = a * mean_b[:-1, None, None] * np.ones_like(eta)
        np.testing.assert_allclose(eta, expected, atol=1e-12)


class TestWeights:

    def test_missing_increments(self):
        bundle = _bm_bundle(10, store_increments=False)
        with pytest.raises(MissingIncrementsError):
            weight_path(np.zeros((10, 10, 1)), bundle)

    def test_terminal_is_exp_of_path(self):
        bundle = _bm_bundle(100)
        weights = weight_path(np.full((10, 100, 1), 0.7), bundle)
        assert np.array_equal(weights.R_terminal, np.exp(weights.log_R_path[-1]))
        assert np.all(weights.log_R_path[0] == 0.0)

    def test_constant_eta_moments(self):
        c, bundle = 0.5, _bm_bundle(100_000, seed=4)
        weights = weight_path(np.full(bundle.increments.shape, c), bundle)
        assert martingale_check(weights, indices=[2, 4, 6, 8, 10]).passed
        moment = second_moment_log(weights)
        assert abs(moment.value - c ** 2) <= 3 * moment.stderr
        assert not moment.tail_dominated

    def test_time_dependent_eta_second_moment(self):
        bundle = _bm_bundle(50_000, dt=0.01, seed=5)
        eta_s = 0.5 * np.cos(np.pi * bundle.times[:-1])
        weights = weight_path(np.broadcast_to(eta_s[:, None, None], bundle.increments.shape), bundle)
        moment = second_moment_log(weights)
        assert abs(moment.value - 0.125) <= 3 * moment.stderr + 1e-3

    def test_mean_field_ou_martingale_and_bound(self):
        a = 0.5
        model = build_model('mean_field_ou', a=a)
        cfg = SimConfig(n_particles=50_000, dt=0.05, t_end=1.0, seed=6)
        bundle = simulate_mckean_vlasov(model, EmpiricalMeasure.dirac([0.0]), cfg)
        flow_b = _dirac_flow(cfg.times, np.exp((a - 1.0) * cfg.times))
        weights = weight_path(eta_between_flows(model, bundle, bundle, flow_b), bundle)
        assert martingale_check(weights, indices=[4, 8, 12, 16, 20]).passed
        assert exponential_bound_check(weights).passed

    def test_weights_above_the_energy_bound_raise(self):
        log_R = np.zeros((3, 200))
        log_R[2] = np.where(np.arange(200) % 2 == 0, 1.0, -1.0)
        weights = GirsanovWeights(np.linspace(0.0, 1.0, 3), np.zeros((2, 200, 1)), log_R)
        with pytest.raises(InvariantViolationError):
            exponential_bound_check(weights)
        result = exponential_bound_check(weights, strict=False)
        assert not result.passed
        assert result.log_second_moment[-1] == pytest.approx(np.log(np.cosh(2.0)))
        assert result.bound[-1] == 0.0



class TestSecondMoment:

    def test_unit_weights(self):
        moment = second_moment_log(np.ones(200))
        assert moment.value == pytest.approx(0.0, abs=1e-14)
        assert moment.stderr == 0.0
        assert moment.degenerate

    def test_tail_dominance(self):
        values = np.ones(1000)
        values[0] = 1e6
        assert second_moment_log(values).tail_dominated

    def test_too_few(self):
        with pytest.raises(TooFewSamplesError):
            second_moment_log(np.ones(99))


class TestBridge:

    def test_brownian_bridge_entropy(self):
        t = 0.5
        bundle = _bm_bundle(400, dt=0.05, t_end=t, seed=7)
        flow = _dirac_flow(bundle.times, np.zeros(len(bundle.times)))
        eta = bridge_eta(build_model('pure_bm'), bundle, flow, flow, shift=-1.0)
        np.testing.assert_allclose(eta, 1.0 / t, rtol=1e-12)
        value, stderr = weight_path(eta, bundle).entropy_bound()
        assert value == pytest.approx(1.0 / (2 * t), rel=1e-12)
        assert stderr == pytest.approx(0.0, abs=1e-12)

    def test_needs_constant_sigma(self):
        base = build_model('pure_bm')
        model = CoefficientModel('state_sigma', 1, 1, lambda t, x: (1.0 + x ** 2)[:, :, None], base.b0,
                                 base.mean_field, base.constants)
        bundle = _bm_bundle(10)
        with pytest.raises(ConfigInvalidError):
            bridge_eta(model, bundle, bundle, bundle, shift=1.0)
