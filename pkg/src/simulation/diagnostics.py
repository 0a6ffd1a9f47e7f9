import logging
from dataclasses import dataclass, field

import numpy as np

from src.simulation.particles import CoupledPathBundle

logger = logging.getLogger(__name__)


@dataclass
class MomentRow:
    p: float
    times: np.ndarray
    moments: np.ndarray
    stderr: np.ndarray
    slope: float
    sup_ratio: float = np.nan


@dataclass
class DiagnosticsTable:
    rows: list = field(default_factory=list)

    def row(self, p):
        return next(r for r in self.rows if r.p == p)

    def records(self):
        out = []
        for r in self.rows:
            for t, value, err in zip(r.times, r.moments, r.stderr):
                out.append({'p': r.p, 't': float(t), 'moment': float(value), 'stderr': float(err),
                            'slope': r.slope, 'sup_ratio': r.sup_ratio})
        return out


def _snapshot_indices(bundle):
    if len(bundle.snapshot_times) >= 4:
        idx = [bundle.step_index(t) for t in bundle.snapshot_times]
    else:
        idx = list(np.unique(np.geomspace(1, bundle.n_steps, 8).round().astype(int)))
    idx = [j for j in idx if j > 0]
    if len(idx) < 4:
        raise ValueError("moment diagnostics need at least 4 positive snapshot times")
    return np.array(idx)


def moment_diagnostics(bundle, x_refs=None, p_list=(2.0,)):
    """E|X_t - x|^p per snapshot with its log-log slope in t.

    ``x_refs`` defaults to each particle's own starting point. For coupled
    bundles the rows also carry E sup_s |X^a - X^b|^p / |x - y|^p over pairs
    with a nonzero initial gap.
    """
    coupled = bundle if isinstance(bundle, CoupledPathBundle) else None
    paths = coupled.a if coupled is not None else bundle
    idx = _snapshot_indices(paths)
    refs = paths.states[0] if x_refs is None else np.broadcast_to(np.asarray(x_refs, dtype=float),
                                                                   paths.states[0].shape)
    table = DiagnosticsTable()
    for p in p_list:
        dist = np.linalg.norm(paths.states[idx] - refs[None], axis=2) ** p
        moments = dist.mean(axis=1)
        stderr = dist.std(axis=1, ddof=1) / np.sqrt(paths.n_particles)
        slope = float(np.polyfit(np.log(paths.times[idx]), np.log(moments), 1)[0])
        row = MomentRow(float(p), paths.times[idx], moments, stderr, slope)
        if coupled is not None:
            gaps = np.linalg.norm(coupled.a.states - coupled.b.states, axis=2)
            start = gaps[0]
            keep = start > 0
            if np.any(keep):
                row.sup_ratio = float(np.mean(gaps[:, keep].max(axis=0) ** p / start[keep] ** p))
        table.rows.append(row)
        logger.debug("p=%g moment slope %.4f", p, slope)
    return table


def moment_growth_constant(bundle, n):
    """sup_t ||mu_t||_n^n / (1 + ||mu_0||_n^n) for the particle cloud."""
    moments = (np.linalg.norm(bundle.states, axis=2) ** n).mean(axis=1)
    return float(moments.max() / (1.0 + moments[0]))


@dataclass
class IncrementStatistics:
    max_mean_z: float
    max_variance_z: float
    passed: bool


def increment_statistics(bundle, z_limit=5.0):
    """Per-step, per-coordinate mean and variance of the stored increments in stderr units."""
    if bundle.increments is None:
        raise ValueError("bundle has no stored increments")
    dW = bundle.increments
    n, dt = bundle.n_particles, bundle.dt
    mean_z = np.abs(dW.mean(axis=1)) / np.sqrt(dt / n)
    variance_z = np.abs(dW.var(axis=1, ddof=1) - dt) / (dt * np.sqrt(2.0 / (n - 1)))
    return IncrementStatistics(float(mean_z.max()), float(variance_z.max()),
                               bool(mean_z.max() <= z_limit and variance_z.max() <= z_limit))
