import logging
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

from src.bismut import finite_difference_intrinsic, fit_btt_constant, intrinsic_derivative
from src.errors import ConfigInvalidError
from src.harnack import (
    OT_POINTS,
    default_family,
    distance_decay_profile,
    entropy_cost_check,
    harnack_table,
    log_harnack_check,
)
from src.measures import read_points_csv, wasserstein_alpha_plan, wasserstein_k
from src.models import audit_assumption_A
from src.moduli import validate_modulus
from src.runner.manifest import git_describe
from src.simulation import moment_diagnostics, simulate_mckean_vlasov, write_bundle

logger = logging.getLogger(__name__)


def _standard_normal(dim):
    return lambda rng, n: rng.normal(size=(n, dim))


class BaseScenario(ABC):
    def __init__(self, config):
        self.config = config
        self.out_dir = Path(config.output_dir)
        self.model = None
        self.summary = {}
        self.tables = {}
        self.is_setup = False

    def setup(self, **kwargs):
        for param, value in kwargs.items():
            if hasattr(self, param) and value is not None:
                setattr(self, param, value)
        self.model = self.config.build_model()
        self.is_setup = True

    @abstractmethod
    def run(self):
        pass

    def _collect_data(self):
        return {
            'command': self.config.command,
            'summary': self.summary,
            'tables': self.tables,
        }


class ModulusScenario(BaseScenario):

    def run(self):
        modulus = self.config.build_modulus()
        if modulus is None:
            raise ConfigInvalidError('modulus', "required for validate-modulus")
        self.summary['modulus'] = validate_modulus(modulus).to_dict()
        return self._collect_data()


class SimulateScenario(BaseScenario):

    def run(self):
        cfg = self.config.sim_config()
        mu0 = (self.config.initial_law('gamma') if 'gamma' in self.config.initial
               else _standard_normal(self.model.dim_x))
        bundle = simulate_mckean_vlasov(self.model, mu0, cfg)
        self.summary['simulation'] = write_bundle(self.out_dir / 'simulation', bundle, cfg, {
            'params': self.config.model.get('params', {}),
            'git': git_describe(),
        })
        if len(cfg.snapshot_times) >= 2:
            self.tables['moments'] = moment_diagnostics(bundle, p_list=(2.0, 4.0)).records()
        return self._collect_data()


class WassersteinScenario(BaseScenario):

    def run(self):
        for key in ('a', 'b'):
            if key not in self.config.inputs or not self.config.resolve(self.config.inputs[key]).exists():
                raise ConfigInvalidError(f"inputs.{key}", "point CSV missing")
        mu = read_points_csv(self.config.resolve(self.config.inputs['a']))
        nu = read_points_csv(self.config.resolve(self.config.inputs['b']))
        block = self.config.distance
        metric, method, reg = block.get('metric', 'wk'), block.get('method', 'auto'), block.get('reg')
        if metric == 'wk':
            value, plan = wasserstein_k(mu, nu, block.get('k', 2.0), method, reg)
        elif metric == 'walpha':
            modulus = self.config.build_modulus()
            if modulus is None:
                if self.model is None:
                    raise ConfigInvalidError('modulus', "required for walpha")
                modulus = self.model.constants.modulus
            value, plan = wasserstein_alpha_plan(mu, nu, modulus, method, reg)
        else:
            raise ConfigInvalidError('distance.metric', f"expected 'wk' or 'walpha', got {metric!r}")
        result = {'value': value, 'metric': metric}
        result.update(plan.to_dict())
        self.summary['wasserstein'] = result
        return self._collect_data()


class BismutScenario(BaseScenario):

    def run(self):
        est = self.config.estimator
        cfg = self.config.sim_config()
        mu = (self.config.initial_law('gamma') if 'gamma' in self.config.initial
              else _standard_normal(self.model.dim_x))
        f, phi = self.config.build_functional(), self.config.build_direction()
        rows, estimates = [], []
        for t in self.config.t_grid:
            estimate = intrinsic_derivative(self.model, mu, f, phi, t, cfg, n_paths=est.get('n_paths'),
                                            source=est['source'], picard_grid=est['picard_grid_size'],
                                            picard_max_iter=est['picard_max_iter'], picard_tol=est['picard_tol'])
            estimates.append(estimate)
            row = estimate.to_dict()
            if est['with_oracle']:
                oracle = finite_difference_intrinsic(self.model, mu, f, phi, t, eps_list=est['eps_list'], cfg=cfg,
                                                     n_paths=est.get('n_paths'))
                row.update(fd_value=oracle.richardson_value, fd_stderr=oracle.stderr,
                           fd_remainder=max(oracle.remainders))
            rows.append(row)
        self.tables['bismut'] = rows
        self.summary['bismut'] = self._oracle_summary(rows)
        fit = fit_btt_constant(estimates)
        self.summary['bismut'].update(btt_constant=fit.constant, btt_within=fit.within())
        return self._collect_data()

    @staticmethod
    def _oracle_summary(rows):
        summary = {'times': [r['t'] for r in rows], 'values': [r['value'] for r in rows]}
        if rows and 'fd_value' in rows[0]:
            gaps = np.array([abs(r['value'] - r['fd_value']) for r in rows])
            scale = np.array([abs(r['fd_value']) for r in rows])
            combined = np.array([np.hypot(r['stderr'], r['fd_stderr']) for r in rows])
            summary['fd_values'] = [r['fd_value'] for r in rows]
            summary['max_relative_gap'] = float(np.max(gaps / np.maximum(scale, 1e-300)))
            summary['max_oracle_z'] = float(np.max(gaps / np.maximum(combined, 1e-300)))
        return summary


class HarnackScenario(BaseScenario):

    def run(self):
        cfg = self.config.sim_config()
        gamma, gamma_tilde = self.config.initial_law('gamma'), self.config.initial_law('gamma_tilde')
        t_grid = self.config.t_grid
        knn_k = self.config.estimator['knn_k']
        modulus = self.config.build_modulus()
        k = self.config.distance.get('k')

        entropy = entropy_cost_check(self.model, gamma, gamma_tilde, t_grid, cfg, k_nn=knn_k)
        log_harnack = log_harnack_check(self.model, gamma, gamma_tilde, default_family(), t_grid, cfg)
        decay = distance_decay_profile(self.model, gamma, gamma_tilde, modulus, k, t_grid, cfg,
                                       ot_points=self.config.distance.get('ot_points', OT_POINTS))

        self.tables['harnack'] = harnack_table(entropy, log_harnack, decay)
        self.tables['entropy_cost'] = entropy.records()
        self.tables['log_harnack'] = log_harnack.records()
        self.tables['distance_decay'] = decay.records()
        self.summary.update(entropy=entropy.summary, log_harnack=log_harnack.summary, decay=decay.summary)
        return self._collect_data()


class AssumptionScenario(BaseScenario):

    def run(self):
        report = audit_assumption_A(self.model, {'seed': self.config.seed})
        self.summary['audit'] = report.to_dict()
        return self._collect_data()


SCENARIOS = {
    'validate-modulus': ModulusScenario,
    'simulate': SimulateScenario,
    'wasserstein': WassersteinScenario,
    'bismut': BismutScenario,
    'harnack': HarnackScenario,
    'check-assumptions': AssumptionScenario,
}
