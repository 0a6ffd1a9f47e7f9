import numpy as np
import pytest

from src.bismut import (
    IntrinsicDerivativeEstimate,
    build_direction,
    build_functional,
    derivative_flow_audit,
    finite_difference_intrinsic,
    fit_btt_constant,
    frozen_flow_bismut,
    intrinsic_derivative,
    jacobian_flow,
    jacobian_moment_audit,
    mean_field_derivative_flow,
    picard_v_system,
    richardson,
)
from src.errors import MissingDerivativeCallbacksError
from src.measures import EmpiricalMeasure
from src.models import build_model
from src.simulation import SimConfig, simulate_mckean_vlasov


def _normal(loc=0.0):
    return lambda rng, n: rng.normal(loc=loc, size=(n, 1))


def _bundle(model, n=500, dt=0.01, t_end=1.0, seed=1, mu=None):
    cfg = SimConfig(n_particles=n, dt=dt, t_end=t_end, seed=seed)
    return simulate_mckean_vlasov(model, mu or _normal(), cfg)


class TestFunctionals:

    def test_presets(self):
        x = np.array([[0.5], [-2.0]])
        np.testing.assert_allclose(build_functional('square')(x), [0.25, 4.0])
        np.testing.assert_allclose(build_functional('tanh', scale=2.0)(x), np.tanh([1.0, -4.0]))
        np.testing.assert_allclose(build_direction('linear', scale=3.0)(x), 3.0 * x)
        assert np.all(build_direction('zero')(x) == 0.0)

    def test_unknown(self):
        with pytest.raises(KeyError):
            build_functional('cubic')
        with pytest.raises(KeyError):
            build_direction('constant', slope=1.0)

    def test_direction_norm(self):
        points = np.array([[1.0], [-1.0], [3.0]])
        assert build_direction('constant', value=2.0).norm_Lk(points, 2.0) == pytest.approx(2.0)


class TestJacobianFlow:

    def test_brownian_jacobian_is_constant(self):
        bundle = _bundle(build_model('pure_bm', dim=2), mu=EmpiricalMeasure.dirac([0.0, 0.0]))
        J = jacobian_flow(build_model('pure_bm', dim=2), bundle, [0.3, -1.0])
        assert np.all(J.values == np.array([0.3, -1.0]))

    def test_linear_drift(self):
        model = build_model('mean_field_ou', a=0.0)
        J = jacobian_flow(model, _bundle(model), [2.0])
        np.testing.assert_allclose(J.values[-1], 2.0 * 0.99 ** 100, rtol=1e-12)
        np.testing.assert_allclose(J.values[-1], 2.0 * np.exp(-1.0), rtol=1e-2)

    def test_zero_direction(self):
        model = build_model('kuramoto_like')
        assert np.all(jacobian_flow(model, _bundle(model, n=50), [0.0]).values == 0.0)

    def test_singular_model_has_no_derivatives(self):
        model = build_model('singular_b0_power')
        bundle = _bundle(model, n=20, mu=_normal(2.0))
        with pytest.raises(MissingDerivativeCallbacksError):
            jacobian_flow(model, bundle, [1.0])

    def test_moment_audit_is_scale_free_for_linear_models(self):
        model = build_model('mean_field_ou', a=0.5)
        audits = jacobian_moment_audit(model, _bundle(model, n=200))
        ratios = [a.ratio for a in audits]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-10)
        assert ratios[0] <= 1.0 + 1e-12


class TestMeanFieldDerivativeFlow:

    @pytest.mark.parametrize('name', ['mean_field_ou', 'mean_field_ou_lions'])
    def test_ou_translation(self, name):
        a, model = 0.5, build_model(name, a=0.5)
        flow = mean_field_derivative_flow(model, _bundle(model), build_direction('constant'))
        np.testing.assert_allclose(flow.values[-1], (1.0 + (a - 1.0) * 0.01) ** 100, rtol=1e-10)
        np.testing.assert_allclose(flow.values[-1], np.exp(a - 1.0), rtol=5e-3)

    def test_leave_one_out_average(self):
        model = build_model('mean_field_ou_lions', a=0.5)
        flow = mean_field_derivative_flow(model, _bundle(model, n=100), build_direction('linear'))
        D = flow.values[3]
        expected = 0.5 * (D.sum() - D[:, 0]) / 99.0
        np.testing.assert_allclose(flow.cross[3][:, 0], expected, rtol=1e-10)

    def test_zero_direction(self):
        model = build_model('kuramoto_like')
        flow = mean_field_derivative_flow(model, _bundle(model, n=50), build_direction('zero'))
        assert np.all(flow.values == 0.0)

    def test_uncoupled_reduces_to_jacobian(self):
        model = build_model('mean_field_ou', a=0.0)
        bundle = _bundle(model, n=100)
        phi = build_direction('linear', scale=2.0)
        flow = mean_field_derivative_flow(model, bundle, phi)
        J = jacobian_flow(model, bundle, phi(bundle.states[0]))
        np.testing.assert_array_equal(flow.values, J.values)

    def test_audit(self):
        model = build_model('mean_field_ou', a=0.5)
        audit = derivative_flow_audit(model, _bundle(model, n=200), build_direction('constant'))
        assert audit.ratio == pytest.approx(1.0)


class TestFrozenFlowBismut:

    def test_constant_functional(self):
        cfg = SimConfig(n_particles=20_000, dt=0.05, t_end=1.0, seed=3)
        est = frozen_flow_bismut(build_model('kuramoto_like'), _normal(), build_functional('constant'),
                                 build_direction('constant'), 1.0, cfg)
        assert abs(est.value) <= 3 * est.stderr

    def test_brownian_gradient(self):
        cfg = SimConfig(n_particles=20_000, dt=0.05, t_end=1.0, seed=4)
        est = frozen_flow_bismut(build_model('pure_bm'), EmpiricalMeasure.dirac([0.3]), build_functional('identity'),
                                 [0.7], 1.0, cfg)
        assert abs(est.value - 0.7) <= 3 * est.stderr

    def test_ou_gradient(self):
        cfg = SimConfig(n_particles=40_000, dt=0.01, t_end=0.5, seed=5)
        est = frozen_flow_bismut(build_model('mean_field_ou', a=0.0), EmpiricalMeasure.dirac([1.0]),
                                 build_functional('identity'), [1.0], 0.5, cfg)
        assert abs(est.value - np.exp(-0.5)) <= 3 * est.stderr + 1e-2
        assert est.diagnostics['btt_ratio'] == pytest.approx(np.sqrt(0.5) * abs(est.value))

    @pytest.mark.slow
    def test_btt_constant_holds_across_times(self):
        model = build_model('mean_field_ou', a=0.5)
        cfg = SimConfig(n_particles=20_000, dt=0.01, t_end=1.0, seed=8)
        t_grid = (0.05, 0.1, 0.2, 0.5, 1.0)
        estimates = [frozen_flow_bismut(model, _normal(), build_functional('identity'), build_direction('constant'),
                                        t, cfg) for t in t_grid]
        for est in estimates:
            assert abs(est.value - np.exp(-est.t)) <= 4 * est.stderr
        fit = fit_btt_constant(estimates)
        np.testing.assert_array_equal(fit.times, t_grid)
        assert np.all((fit.ratios >= 0.5) & (fit.ratios <= 1.5))
        assert fit.within()

    def test_btt_fit_is_geometric_mean(self):
        estimates = [IntrinsicDerivativeEstimate(t, 1.0, 0.0, 1.0, diagnostics={'btt_constant': c})
                     for t, c in ((0.1, 0.2), (0.5, 0.8), (1.0, 0.4))]
        fit = fit_btt_constant(estimates)
        assert fit.constant == pytest.approx(0.4)
        np.testing.assert_allclose(fit.ratios, [0.5, 2.0, 1.0])
        assert not fit.within()

    def test_batches(self):
        cfg = SimConfig(n_particles=1000, dt=0.1, t_end=1.0, seed=6)
        est = frozen_flow_bismut(build_model('pure_bm'), _normal(), build_functional('identity'), [1.0], 1.0,
                                 cfg, n_paths=2500)
        assert est.n_paths == 3000


class TestIntrinsicDerivative:

    def test_degenerate_reduction_is_bitwise(self):
        model = build_model('mean_field_ou', a=0.0)
        cfg = SimConfig(n_particles=2000, dt=0.05, t_end=1.0, seed=7)
        args = (model, _normal(), build_functional('tanh'), build_direction('constant'), 1.0, cfg)
        full, frozen = intrinsic_derivative(*args), frozen_flow_bismut(*args)
        assert full.value == frozen.value
        assert full.stderr == frozen.stderr
        assert full.N_term == 0.0 and full.Ntilde_term == 0.0

    @pytest.mark.slow
    @pytest.mark.parametrize('name,source', [('mean_field_ou', 'picard'), ('mean_field_ou', 'flow'),
                                             ('mean_field_ou_lions', 'auto')])
    def test_mean_field_ou_linear_response(self, name, source):
        cfg = SimConfig(n_particles=50_000, dt=0.01, t_end=1.0, seed=8)
        est = intrinsic_derivative(build_model(name, a=0.5), EmpiricalMeasure.dirac([1.0]),
                                   build_functional('identity'), build_direction('constant'), 1.0, cfg,
                                   source=source)
        assert est.value == est.I_term + est.N_term + est.Ntilde_term
        assert est.value == pytest.approx(np.exp(-0.5), rel=0.05)

    @pytest.mark.slow
    def test_square_functional_against_oracle(self):
        model = build_model('mean_field_ou', a=0.5)
        cfg = SimConfig(n_particles=50_000, dt=0.01, t_end=1.0, seed=9)
        args = (model, _normal(0.5), build_functional('square'), build_direction('constant'), 1.0)
        est = intrinsic_derivative(*args, cfg)
        oracle = finite_difference_intrinsic(*args, eps_list=(0.1, 0.05), cfg=cfg)
        combined = np.hypot(est.stderr, oracle.stderr)
        assert abs(est.value - oracle.richardson_value) <= 3 * combined + 0.01


class TestPicard:

    def test_uncoupled_converges_in_one_iteration(self):
        cfg = SimConfig(n_particles=2000, dt=0.05, t_end=1.0, seed=10)
        result = picard_v_system(build_model('mean_field_ou', a=0.0), _normal(), build_direction('constant'),
                                 8, cfg)
        assert result.iterations == 1
        assert result.converged

    def test_mean_field_ou_recovers_linear_response(self):
        cfg = SimConfig(n_particles=50_000, dt=0.01, t_end=1.0, seed=11)
        result = picard_v_system(build_model('mean_field_ou', a=0.5), EmpiricalMeasure.dirac([1.0]),
                                 build_direction('constant'), 16, cfg)
        assert result.times[-1] == pytest.approx(1.0)
        assert result.D[-1, 0] == pytest.approx(np.exp(-0.5), rel=0.05)
        assert all(r < 1.0 for r in result.contraction_ratios)

    def test_kuramoto_contracts(self):
        cfg = SimConfig(n_particles=5000, dt=0.02, t_end=1.0, seed=12)
        result = picard_v_system(build_model('kuramoto_like', coupling=1.0), _normal(),
                                 build_direction('constant'), 12, cfg)
        assert result.converged
        assert all(r < 1.0 for r in result.contraction_ratios)
        assert np.all(np.isfinite(result.shape_ratio))


class TestFiniteDifference:

    def test_zero_direction(self):
        cfg = SimConfig(n_particles=200, dt=0.05, t_end=1.0, seed=13)
        est = finite_difference_intrinsic(build_model('kuramoto_like'), _normal(), build_functional('square'),
                                          build_direction('zero'), 1.0, cfg=cfg)
        assert est.value == 0.0 and est.richardson_value == 0.0

    def test_brownian_shift(self):
        cfg = SimConfig(n_particles=200, dt=0.05, t_end=1.0, seed=14)
        est = finite_difference_intrinsic(build_model('pure_bm'), _normal(), build_functional('identity'),
                                          [0.4], 1.0, cfg=cfg)
        assert est.value == pytest.approx(0.4, abs=1e-12)

    def test_mean_field_ou_gap(self):
        cfg = SimConfig(n_particles=2000, dt=0.005, t_end=1.0, seed=15)
        est = finite_difference_intrinsic(build_model('mean_field_ou', a=0.5), EmpiricalMeasure.dirac([1.0]),
                                          build_functional('identity'), build_direction('constant'), 1.0, cfg=cfg)
        assert est.richardson_value == pytest.approx(np.exp(-0.5), rel=1e-3)
        assert max(est.remainders) < 1e-6

    def test_picard_matches_oracle(self):
        cfg = SimConfig(n_particles=20_000, dt=0.01, t_end=1.0, seed=16)
        model, phi = build_model('mean_field_ou', a=0.5), build_direction('constant')
        picard = picard_v_system(model, _normal(), phi, 16, cfg)
        oracle = finite_difference_intrinsic(model, _normal(), build_functional('identity'), phi, 1.0, cfg=cfg)
        assert picard.D[-1, 0] == pytest.approx(oracle.richardson_value, rel=0.05)

    def test_richardson_cancels_quadratic_error(self):
        d = lambda eps: 1.5 + 0.7 * eps ** 2
        assert richardson(0.2, d(0.2), 0.1, d(0.1)) == pytest.approx(1.5, abs=1e-14)
