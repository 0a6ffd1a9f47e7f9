"""Sampling audits; a pass means no violation among the sampled points."""
import logging
from dataclasses import dataclass, field

import numpy as np

from src.errors import CallbackFailureError
from src.measures import EmpiricalMeasure, moment_norm, wasserstein_alpha, wasserstein_k

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_SPEC = {
    'n_points': 2000,
    'n_measures': 24,
    'cloud_size': 16,
    'radius': 3.0,
    't_end': 1.0,
    'tol': 1e-6,
    'seed': 0,
}


@dataclass
class AuditCheck:
    name: str
    passed: bool
    measured: float
    bound: float


@dataclass
class AuditReport:
    model: str
    checks: list = field(default_factory=list)
    sample_budget: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def check(self, name):
        return next(c for c in self.checks if c.name == name)

    def to_dict(self):
        return {
            'model': self.model,
            'passed': self.passed,
            'sample_budget': self.sample_budget,
            'checks': [vars(c) for c in self.checks],
        }


def _random_cloud(rng, n, d, radius):
    center = rng.uniform(-radius, radius, size=d)
    spread = rng.uniform(0.1, 1.0)
    return EmpiricalMeasure.uniform(center + spread * rng.normal(size=(n, d)))


def audit_assumption_A(model, sample_spec=None):
    spec = dict(DEFAULT_SAMPLE_SPEC)
    spec.update(sample_spec or {})
    rng = np.random.default_rng(spec['seed'])
    consts = model.constants
    d, n, radius, tol = model.dim_x, spec['n_points'], spec['radius'], spec['tol']
    report = AuditReport(model.name, sample_budget=spec)

    clouds = [_random_cloud(rng, spec['cloud_size'], d, radius) for _ in range(spec['n_measures'])]
    times = rng.uniform(0.0, spec['t_end'], size=spec['n_measures'])

    # Lipschitz in (x, mu) against |x - y| + W_alpha + W_k, near pairs at several scales
    worst_lip = 0.0
    per_cloud = n // spec['n_measures']
    for idx, (t, mu) in enumerate(zip(times, clouds)):
        nu = clouds[(idx + 1) % len(clouds)]
        w_sum = (wasserstein_alpha(mu, nu, consts.modulus, method='exact')
                 + wasserstein_k(mu, nu, consts.k, method='exact')[0])
        x = rng.uniform(-radius, radius, size=(per_cloud, d))
        scales = np.array([1e-1, 1e-2, 1e-3])[rng.integers(0, 3, size=per_cloud)]
        y = x + scales[:, None] * rng.normal(size=(per_cloud, d))
        far = rng.uniform(-radius, radius, size=(per_cloud, d))

        same = np.linalg.norm(model.mean_field_drift(t, x, mu) - model.mean_field_drift(t, y, mu), axis=1)
        worst_lip = max(worst_lip, float(np.max(same / np.linalg.norm(x - y, axis=1))))
        cross = np.linalg.norm(model.mean_field_drift(t, x, mu) - model.mean_field_drift(t, far, nu), axis=1)
        denom = np.linalg.norm(x - far, axis=1) + w_sum
        worst_lip = max(worst_lip, float(np.max(cross[denom > 0] / denom[denom > 0])))
    report.checks.append(AuditCheck('lipschitz', worst_lip <= consts.K * (1 + tol), worst_lip, consts.K))

    worst_growth = 0.0
    for t, mu in zip(times, clouds):
        x = rng.uniform(-radius, radius, size=(per_cloud, d))
        bound = consts.K + consts.kappa * np.linalg.norm(x, axis=1) + consts.kappa * moment_norm(mu, consts.k)
        size = np.linalg.norm(model.mean_field_drift(t, x, mu), axis=1)
        worst_growth = max(worst_growth, float(np.max(size / bound)))
    report.checks.append(AuditCheck('growth', worst_growth <= 1 + tol, worst_growth, 1.0))

    x = rng.uniform(-radius, radius, size=(n, d))
    t = rng.uniform(0.0, spec['t_end'], size=n)
    sigma = np.concatenate([model.diffusion(ti, xi[None, :]) for ti, xi in zip(t[:64], x[:64])])
    sigma = np.concatenate([sigma, model.diffusion(float(t[0]), x)])
    gram = sigma @ np.swapaxes(sigma, 1, 2)
    smallest = float(np.min(np.linalg.eigvalsh(gram)))
    inverse_norm = np.inf if smallest <= 0 else 1.0 / smallest
    report.checks.append(AuditCheck('ellipticity', inverse_norm <= model.sigma_inverse_bound * (1 + tol),
                                    inverse_norm, model.sigma_inverse_bound))

    y = x + 0.05 * rng.normal(size=(n, d))
    gaps = np.linalg.norm(model.diffusion(float(t[0]), x) - model.diffusion(float(t[0]), y), axis=(1, 2))
    sigma_modulus = float(np.max(gaps / consts.modulus(np.linalg.norm(x - y, axis=1))))
    report.checks.append(AuditCheck('sigma_modulus', np.isfinite(sigma_modulus), sigma_modulus, np.inf))

    if model.structured:
        V = model.mean_field.V
        dist = np.linalg.norm(x - y, axis=1)
        keep = dist > 0
        ratio = np.linalg.norm(np.asarray(V(x)) - np.asarray(V(y)), axis=1)[keep] / consts.modulus(dist[keep])
        v_seminorm = float(ratio.max())
        report.checks.append(AuditCheck('V_holder', v_seminorm <= 1 + tol, v_seminorm, 1.0))

    mu = clouds[0]
    first = model.mean_field_drift(0.5, x[:100], mu)
    second = model.mean_field_drift(0.5, x[:100], mu)
    pure = bool(np.array_equal(first, second))
    if not pure:
        raise CallbackFailureError(f"model {model.name} drift is not reproducible across calls")
    report.checks.append(AuditCheck('reentrant', pure, 0.0, 0.0))

    logger.info("audit of %s: %s", model.name,
                ', '.join(f"{c.name}={'ok' if c.passed else 'FAIL'}" for c in report.checks))
    return report
