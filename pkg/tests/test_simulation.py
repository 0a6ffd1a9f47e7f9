import numpy as np
import pytest

from src.errors import ConfigInvalidError, ExplosionError, FlowGridMismatchError
from src.measures import EmpiricalMeasure
from src.models import CoefficientModel, GeneralB1, build_model
from src.simulation import (
    CHUNK_SIZE,
    FrozenFlow,
    SimConfig,
    increment_statistics,
    moment_diagnostics,
    moment_growth_constant,
    read_increments,
    simulate_coupled,
    simulate_decoupled,
    simulate_mckean_vlasov,
    step_increments,
    write_bundle,
    write_increments,
)


def _constant_drift_model(rate, sigma_scale=0.0):
    base = build_model('pure_bm')
    return CoefficientModel(
        name='constant_drift',
        dim_x=1,
        dim_w=1,
        sigma=lambda t, x: sigma_scale * np.ones((len(x), 1, 1)),
        b0=lambda t, x: rate * np.ones_like(x),
        mean_field=base.mean_field,
        constants=base.constants,
        sigma_constant=True,
    )


def _noiseless(model):
    return CoefficientModel(
        name=model.name + '_noiseless', dim_x=model.dim_x, dim_w=model.dim_w,
        sigma=lambda t, x: np.zeros((len(x), model.dim_x, model.dim_w)),
        b0=model.b0, mean_field=model.mean_field, constants=model.constants, sigma_constant=True,
    )


class TestSimConfig:

    def test_negative_dt(self):
        with pytest.raises(ConfigInvalidError) as info:
            SimConfig(n_particles=10, dt=-0.1, t_end=1.0, seed=1)
        assert info.value.field == 'sim.dt'

    def test_non_integer_steps(self):
        with pytest.raises(ConfigInvalidError):
            SimConfig(n_particles=10, dt=0.3, t_end=1.0, seed=1)

    def test_snapshots_on_grid(self):
        with pytest.raises(ConfigInvalidError):
            SimConfig(n_particles=10, dt=0.1, t_end=1.0, seed=1, snapshot_times=(0.25,))

    def test_steps(self):
        assert SimConfig(n_particles=2, dt=0.01, t_end=1.0, seed=0).n_steps == 100


class TestInteractingSimulation:

    def test_brownian_second_moment(self):
        cfg = SimConfig(n_particles=100_000, dt=0.1, t_end=1.0, seed=11)
        bundle = simulate_mckean_vlasov(build_model('pure_bm', dim=2), EmpiricalMeasure.dirac([0.5, -1.0]), cfg)
        sq = ((bundle.states[-1] - [0.5, -1.0]) ** 2).sum(axis=1)
        stderr = sq.std(ddof=1) / np.sqrt(len(sq))
        assert abs(sq.mean() - 2.0) <= 3 * stderr

    def test_mean_field_ou_mean(self):
        cfg = SimConfig(n_particles=100_000, dt=0.01, t_end=1.0, seed=12)
        bundle = simulate_mckean_vlasov(build_model('mean_field_ou', a=0.5), EmpiricalMeasure.dirac([1.0]), cfg)
        final = bundle.states[-1, :, 0]
        stderr = final.std(ddof=1) / np.sqrt(len(final))
        assert abs(final.mean() - np.exp(-0.5)) <= 3 * stderr + 2e-3

    def test_constant_drift_is_exact(self):
        cfg = SimConfig(n_particles=5, dt=0.125, t_end=1.0, seed=0)
        bundle = simulate_mckean_vlasov(_constant_drift_model(1.0), EmpiricalMeasure.dirac([0.0]), cfg)
        assert np.all(bundle.states[-1] == 1.0)

    def test_thread_count_does_not_change_paths(self):
        model = build_model('mean_field_ou_lions', a=0.3)
        mu0 = lambda rng, n: rng.normal(size=(n, 1))
        runs = [simulate_mckean_vlasov(model, mu0, SimConfig(3 * CHUNK_SIZE + 17, 0.05, 0.5, seed=5, threads=k))
                for k in (1, 4)]
        np.testing.assert_array_equal(runs[0].states, runs[1].states)
        np.testing.assert_array_equal(runs[0].increments, runs[1].increments)

    def test_increments_do_not_depend_on_particle_count(self):
        small = step_increments(3, 0, 7, 100, 2, 0.01)
        large = step_increments(3, 0, 7, CHUNK_SIZE + 50, 2, 0.01)
        np.testing.assert_array_equal(small, large[:100])

    def test_increment_statistics(self):
        cfg = SimConfig(n_particles=20_000, dt=0.05, t_end=1.0, seed=9)
        bundle = simulate_mckean_vlasov(build_model('pure_bm', dim=2), EmpiricalMeasure.dirac([0.0, 0.0]), cfg)
        assert increment_statistics(bundle).passed

    def test_explosion(self):
        cfg = SimConfig(n_particles=4, dt=0.1, t_end=2.0, seed=0)
        base = build_model('pure_bm')
        model = CoefficientModel('exploding', 1, 1, base.sigma, lambda t, x: 1e4 * x,
                                 base.mean_field, base.constants, sigma_constant=True)
        with pytest.raises(ExplosionError):
            simulate_mckean_vlasov(model, EmpiricalMeasure.dirac([1.0]), cfg)

    def test_weak_order_on_halving(self):
        model = _noiseless(build_model('mean_field_ou', a=0.5))
        means = [simulate_mckean_vlasov(model, EmpiricalMeasure.dirac([1.0]),
                                        SimConfig(4, dt, 1.0, seed=0)).states[-1, :, 0].mean()
                 for dt in (0.2, 0.1, 0.05)]
        ratio = (means[1] - means[0]) / (means[2] - means[1])
        assert 1.5 <= ratio <= 2.5


class TestDecoupled:

    def test_measure_free_model_matches_plain_run(self):
        model = build_model('pure_bm')
        cfg = SimConfig(n_particles=500, dt=0.01, t_end=0.5, seed=21)
        plain = simulate_mckean_vlasov(model, lambda rng, n: rng.normal(size=(n, 1)), cfg)
        other = simulate_mckean_vlasov(model, EmpiricalMeasure.dirac([3.0]), cfg)
        decoupled = simulate_decoupled(model, other.flow(), plain.states[0], cfg)
        np.testing.assert_array_equal(plain.states, decoupled.states)

    def test_own_flow_reproduces_interacting_paths(self):
        model = build_model('mean_field_ou', a=0.5)
        cfg = SimConfig(n_particles=300, dt=0.02, t_end=0.4, seed=22)
        cloud = simulate_mckean_vlasov(model, lambda rng, n: rng.normal(size=(n, 1)), cfg)
        decoupled = simulate_decoupled(model, cloud.flow(), cloud.states[0], cfg)
        np.testing.assert_array_equal(cloud.states, decoupled.states)

    def test_variation_of_constants_mean(self):
        a, dt = 0.5, 0.005
        cfg = SimConfig(n_particles=40_000, dt=dt, t_end=1.0, seed=23)
        flow = FrozenFlow(cfg.times, tuple(EmpiricalMeasure.dirac([np.exp((a - 1.0) * t)]) for t in cfg.times))
        bundle = simulate_decoupled(build_model('mean_field_ou', a=a), flow, np.full((cfg.n_particles, 1), 2.0), cfg)
        final = bundle.states[-1, :, 0]
        expected = 2.0 * np.exp(-1.0) + (np.exp(-0.5) - np.exp(-1.0))
        assert abs(final.mean() - expected) <= 3 * final.std(ddof=1) / np.sqrt(len(final)) + 2e-3

    def test_point_mass_flow_is_pure_diffusion(self):
        base = build_model('pure_bm')
        model = CoefficientModel('minus_mean', 1, 1, base.sigma, base.b0,
                                 GeneralB1(b1=lambda t, x, mu: -np.broadcast_to(mu.mean(), x.shape)),
                                 base.constants, sigma_constant=True)
        cfg = SimConfig(n_particles=50, dt=0.1, t_end=1.0, seed=24)
        flow = FrozenFlow(cfg.times, tuple(EmpiricalMeasure.dirac([0.0]) for _ in cfg.times))
        decoupled = simulate_decoupled(model, flow, np.zeros((50, 1)), cfg)
        plain = simulate_mckean_vlasov(base, EmpiricalMeasure.dirac([0.0]), cfg)
        np.testing.assert_allclose(decoupled.states, plain.states, atol=0.0)

    def test_flow_must_reach_last_step(self):
        cfg = SimConfig(n_particles=4, dt=0.1, t_end=1.0, seed=0)
        flow = FrozenFlow(np.array([0.0]), (EmpiricalMeasure.dirac([0.0]),))
        with pytest.raises(FlowGridMismatchError):
            simulate_decoupled(build_model('pure_bm'), flow, np.zeros((4, 1)), cfg)

    def test_flow_must_start_at_zero(self):
        cfg = SimConfig(n_particles=4, dt=0.1, t_end=1.0, seed=0)
        flow = FrozenFlow(np.array([0.5]), (EmpiricalMeasure.dirac([0.0]),))
        with pytest.raises(FlowGridMismatchError):
            simulate_decoupled(build_model('pure_bm'), flow, np.zeros((4, 1)), cfg)


class TestCoupled:

    def test_identical_initials_give_identical_bundles(self):
        cfg = SimConfig(n_particles=200, dt=0.05, t_end=0.5, seed=31)
        sampler = lambda rng, n: rng.normal(size=(n, 1))
        pair = simulate_coupled(build_model('kuramoto_like'), sampler, sampler, 'comonotone1d', cfg)
        np.testing.assert_array_equal(pair.a.states, pair.b.states)
        assert pair.a.increments is pair.b.increments

    def test_brownian_gap_is_constant(self):
        cfg = SimConfig(n_particles=100, dt=0.05, t_end=1.0, seed=32)
        pair = simulate_coupled(build_model('pure_bm'), EmpiricalMeasure.dirac([0.0]),
                                EmpiricalMeasure.dirac([1.5]), 'assignment', cfg)
        np.testing.assert_allclose(pair.b.states - pair.a.states, 1.5, atol=1e-12)

    def test_ou_gap_decays(self):
        a, dt = 0.5, 0.01
        cfg = SimConfig(n_particles=100, dt=dt, t_end=1.0, seed=33)
        pair = simulate_coupled(build_model('mean_field_ou', a=a), EmpiricalMeasure.dirac([0.0]),
                                EmpiricalMeasure.dirac([1.0]), 'comonotone1d', cfg)
        gap = pair.b.states[-1, :, 0] - pair.a.states[-1, :, 0]
        np.testing.assert_allclose(gap, (1.0 + (a - 1.0) * dt) ** 100, rtol=1e-10)
        np.testing.assert_allclose(gap, np.exp(a - 1.0), rtol=5e-3)


class TestMomentDiagnostics:

    def test_brownian_slopes(self):
        cfg = SimConfig(n_particles=100_000, dt=0.1, t_end=1.0, seed=41, snapshot_times=(0.1, 0.2, 0.4, 0.8, 1.0))
        bundle = simulate_mckean_vlasov(build_model('pure_bm'), EmpiricalMeasure.dirac([0.0]), cfg)
        table = moment_diagnostics(bundle, p_list=(2.0, 4.0))
        assert table.row(2.0).slope == pytest.approx(1.0, abs=0.05)
        assert table.row(4.0).slope == pytest.approx(2.0, abs=0.1)

    def test_coupled_ou_sup_ratio(self):
        cfg = SimConfig(n_particles=200, dt=0.05, t_end=1.0, seed=42)
        pair = simulate_coupled(build_model('mean_field_ou', a=0.5), EmpiricalMeasure.dirac([0.0]),
                                EmpiricalMeasure.dirac([1.0]), 'comonotone1d', cfg)
        row = moment_diagnostics(pair, p_list=(2.0,)).row(2.0)
        assert row.sup_ratio <= 1.0 + 1e-9

    def test_growth_constant_is_stable_across_seeds(self):
        model = build_model('mean_field_ou', a=0.5)
        sampler = lambda rng, n: rng.normal(size=(n, 1))
        constants = [moment_growth_constant(simulate_mckean_vlasov(model, sampler, SimConfig(20_000, 0.05, 1.0, seed=s)), 4)
                     for s in (1, 2, 3)]
        assert max(constants) / min(constants) <= 1.2


class TestStorage:

    def test_increment_file(self, tmp_path):
        data = np.arange(24, dtype=float).reshape(2, 3, 4)
        write_increments(tmp_path / 'inc.bin', data)
        raw = (tmp_path / 'inc.bin').read_bytes()
        assert raw[:6] == b'MVSDE1'
        assert int.from_bytes(raw[6:14], 'little') == 2
        np.testing.assert_array_equal(read_increments(tmp_path / 'inc.bin'), data)

    def test_bundle_directory(self, tmp_path):
        cfg = SimConfig(n_particles=10, dt=0.1, t_end=0.5, seed=3, snapshot_times=(0.2, 0.5))
        bundle = simulate_mckean_vlasov(build_model('pure_bm'), EmpiricalMeasure.dirac([0.0]), cfg)
        meta = write_bundle(tmp_path, bundle, cfg, {'config_hash': 'abc'})
        assert 'increments.bin' in meta['files']
        assert len([f for f in meta['files'] if f.endswith('.csv')]) == 2
        np.testing.assert_array_equal(read_increments(tmp_path / 'increments.bin'), bundle.increments)
