import logging
from dataclasses import dataclass, field, replace

import numpy as np

from src.errors import ConfigInvalidError, NonPositiveTestFunctionError
from src.girsanov import bridge_eta, exponential_bound_check, weight_path
from src.harnack.trend import trend_as_t_decreases
from src.measures import EmpiricalMeasure, knn_divergence, moment_norm, wasserstein_alpha, wasserstein_k
from src.measures.entropy import DEFAULT_KNN
from src.measures.transport import EXACT_MAX_SIZE
from src.simulation import simulate_coupled, simulate_mckean_vlasov
from src.simulation.particles import pair_initials

logger = logging.getLogger(__name__)

OT_POINTS = 500
ZERO_DISTANCE = 1e-12
# a ratio behaving like t^-p with p above this counts as blowing up
BLOWUP_SLOPE = 0.25


@dataclass
class HarnackTable:
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def column(self, name):
        return np.array([row[name] for row in self.rows], dtype=float)

    def records(self):
        return [dict(row) for row in self.rows]


def _check_grid(t_grid, cfg):
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    if t_grid.size == 0 or t_grid[0] <= 0:
        raise ConfigInvalidError('harnack.t_grid', "needs at least one positive time")
    steps = t_grid / cfg.dt
    if np.any(np.abs(steps - np.round(steps)) > 1e-9 * np.maximum(1.0, steps)):
        raise ConfigInvalidError('harnack.t_grid', f"times must be multiples of dt = {cfg.dt}")
    return t_grid


def _default_coupling(dim, n):
    if dim == 1:
        return 'comonotone1d'
    return 'assignment' if n * n <= EXACT_MAX_SIZE else 'independent'


def _initial_measure(mu, bundle):
    return mu if isinstance(mu, EmpiricalMeasure) else bundle.measure(0)


def _independent_clouds(model, gamma, gamma_tilde, horizon, cfg, store_increments=False):
    run = cfg.with_(t_end=horizon, snapshot_times=(), store_increments=store_increments)
    a = simulate_mckean_vlasov(model, gamma, run)
    b = simulate_mckean_vlasov(model, gamma_tilde, run.with_(stream=cfg.stream + 1, store_increments=False))
    return a, b


def _truncate(bundle, j):
    increments = None if bundle.increments is None else bundle.increments[:j]
    return replace(bundle, times=bundle.times[:j + 1], states=bundle.states[:j + 1], increments=increments)


def _implied_constant(value, t, w2_sq):
    return value * t / w2_sq if w2_sq > ZERO_DISTANCE else np.nan


def log_log_slope(times, values):
    """Least-squares slope of log values against log t; NaN when fewer than two positive values."""
    times, values = np.asarray(times, dtype=float), np.asarray(values, dtype=float)
    keep = np.isfinite(values) & (values > 0)
    if keep.sum() < 2:
        return np.nan
    return float(np.polyfit(np.log(times[keep]), np.log(values[keep]), 1)[0])


def entropy_cost_check(model, gamma, gamma_tilde, t_grid, cfg, k_nn=DEFAULT_KNN, coupling=None):
    """Ent(P_t^* gamma | P_t^* gamma_tilde) by KNN and by the Girsanov bridge, with c_hat = Ent t / W_2^2.

    The Girsanov columns need a state-independent sigma and are NaN otherwise.
    """
    t_grid = _check_grid(t_grid, cfg)
    girsanov = model.sigma_constant
    if not girsanov:
        logger.info("%s has state-dependent sigma; skipping the Girsanov entropy route", model.name)
    a, b = _independent_clouds(model, gamma, gamma_tilde, t_grid[-1], cfg, store_increments=girsanov)
    w2 = wasserstein_k(_initial_measure(gamma, a), _initial_measure(gamma_tilde, b), 2.0)[0]
    w2_sq = w2 ** 2
    coupling = coupling or _default_coupling(a.dim, a.n_particles)
    shift = a.states[0] - pair_initials(a.states[0], b.states[0], coupling)
    flow_b = b.flow() if girsanov else None

    table = HarnackTable()
    for t in t_grid:
        j = a.step_index(t)
        knn = knn_divergence(a.states[j], b.states[j], k_nn)
        row = {'t': float(t), 'ent_knn': knn.value, 'ent_knn_stderr': knn.stderr, 'w2_sq': w2_sq,
               'ent_girsanov': np.nan, 'ent_girsanov_stderr': np.nan, 'log_R2': np.nan, 'log_R2_stderr': np.nan,
               'log_R2_bound': np.nan, 'r_log_r': np.nan}
        if girsanov:
            path = _truncate(a, j)
            weights = weight_path(bridge_eta(model, path, path, flow_b, shift), path)
            row['ent_girsanov'], row['ent_girsanov_stderr'] = weights.entropy_bound()
            bound = exponential_bound_check(weights, indices=[len(path.times) - 1])
            row['log_R2'], row['log_R2_stderr'] = float(bound.log_second_moment[0]), float(bound.stderr[0])
            row['log_R2_bound'] = float(bound.bound[0])
            row['r_log_r'] = weights.r_log_r()[0]
        row['c_hat'] = _implied_constant(row['ent_knn'], t, w2_sq)
        row['c_hat_girsanov'] = _implied_constant(row['ent_girsanov'], t, w2_sq)
        logger.debug("entropy-cost at t=%g: knn %.4g, girsanov %.4g", t, row['ent_knn'], row['ent_girsanov'])
        table.rows.append(row)

    c_hat = table.column('c_hat')
    c_stderr = table.column('ent_knn_stderr') * t_grid / w2_sq if w2_sq > ZERO_DISTANCE else None
    table.summary = {
        'w2_sq': w2_sq,
        'coupling': coupling,
        'max_c_hat': float(np.nanmax(c_hat)) if np.any(np.isfinite(c_hat)) else np.nan,
        'max_c_hat_girsanov': (float(np.nanmax(table.column('c_hat_girsanov')))
                               if girsanov and w2_sq > ZERO_DISTANCE else np.nan),
        'trend': trend_as_t_decreases(t_grid, c_hat, c_stderr).to_dict(),
    }
    logger.info("entropy-cost check on %s: max c_hat %.4g over %d times", model.name,
                table.summary['max_c_hat'], len(t_grid))
    return table


def log_harnack_check(model, gamma, gamma_tilde, f_family, t_grid, cfg):
    """Both sides of P_t log f(gamma_tilde) <= log P_t f(gamma) + (C/t) W_2^2 per (f, t).

    ``min_C`` is the smallest C for which the inequality holds at that row;
    the summary reports its max over the family and grid. ``jensen_gap`` is
    log P_t f(gamma) - P_t log f(gamma_tilde), the slack without the cost term.
    """
    t_grid = _check_grid(t_grid, cfg)
    f_family = list(f_family)
    a, b = _independent_clouds(model, gamma, gamma_tilde, t_grid[-1], cfg)
    w2_sq = wasserstein_k(_initial_measure(gamma, a), _initial_measure(gamma_tilde, b), 2.0)[0] ** 2

    table = HarnackTable()
    for t in t_grid:
        j = a.step_index(t)
        for f in f_family:
            values = np.asarray(f(a.states[j]), dtype=float)
            if np.any(values <= 0):
                raise NonPositiveTestFunctionError(f"{getattr(f, 'name', f)} is not strictly positive at t={t}")
            logs = np.asarray(f.log(b.states[j]) if hasattr(f, 'log') else np.log(f(b.states[j])), dtype=float)
            if not np.all(np.isfinite(logs)):
                raise NonPositiveTestFunctionError(f"{getattr(f, 'name', f)} is not strictly positive at t={t}")
            n = len(values)
            lhs, lhs_stderr = float(logs.mean()), float(logs.std(ddof=1) / np.sqrt(n))
            mean_f = float(values.mean())
            log_rhs, rhs_stderr = float(np.log(mean_f)), float(values.std(ddof=1) / (mean_f * np.sqrt(n)))
            gap = lhs - log_rhs
            table.rows.append({
                't': float(t), 'f': getattr(f, 'name', str(f)), 'lhs': lhs, 'lhs_stderr': lhs_stderr,
                'log_rhs': log_rhs, 'rhs_stderr': rhs_stderr, 'w2_sq': w2_sq, 'jensen_gap': -gap,
                'gap_stderr': float(np.hypot(lhs_stderr, rhs_stderr)),
                'min_C': max(0.0, gap) * t / w2_sq if w2_sq > ZERO_DISTANCE else np.nan,
            })

    jensen = table.column('jensen_gap') + 3.0 * table.column('gap_stderr')
    min_c = table.column('min_C')
    table.summary = {
        'w2_sq': w2_sq,
        'min_C': float(np.nanmax(min_c)) if np.any(np.isfinite(min_c)) else np.nan,
        'jensen_floor_holds': bool(np.all(jensen >= 0.0)),
    }
    if w2_sq <= ZERO_DISTANCE and not table.summary['jensen_floor_holds']:
        logger.warning("Jensen gap below -3 stderr on %s", model.name)
    return table


def distance_decay_profile(model, gamma, gamma_tilde, m=None, k=None, t_grid=(1.0,), cfg=None, coupling=None,
                           ot_points=OT_POINTS):
    """W_alpha and W_k between synchronously coupled clouds along t.

    ``ratio_dlp`` is W_alpha sqrt(t) / (alpha((1 + kappa |gamma|_k + kappa |gamma_tilde|_k) sqrt(t)) W_k(gamma,
    gamma_tilde)) and ``end_ratio`` is W_k(t) / W_k(gamma, gamma_tilde). All distances use the same first
    ``ot_points`` particle pairs; None uses every pair.
    """
    if cfg is None:
        raise ConfigInvalidError('sim', "distance decay needs a simulation config")
    if ot_points is not None and ot_points < 2:
        raise ConfigInvalidError('distance.ot_points', f"must be at least 2, got {ot_points}")
    m = model.constants.modulus if m is None else m
    k = model.constants.k if k is None else float(k)
    t_grid = _check_grid(t_grid, cfg)
    run = cfg.with_(t_end=t_grid[-1], snapshot_times=(), store_increments=False)
    coupling = coupling or _default_coupling(model.dim_x, cfg.n_particles)
    pair = simulate_coupled(model, gamma, gamma_tilde, coupling, run)
    a, b = pair.a, pair.b
    n_ot = a.n_particles if ot_points is None else min(int(ot_points), a.n_particles)

    def heads(j):
        return EmpiricalMeasure.uniform(a.states[j][:n_ot]), EmpiricalMeasure.uniform(b.states[j][:n_ot])

    w_k0 = wasserstein_k(*heads(0), k)[0]
    kappa = model.constants.kappa
    scale = 1.0 + kappa * moment_norm(a.measure(0), k) + kappa * moment_norm(b.measure(0), k)
    table = HarnackTable()
    for t in t_grid:
        head_a, head_b = heads(a.step_index(t))
        w_alpha = wasserstein_alpha(head_a, head_b, m)
        w_k = wasserstein_k(head_a, head_b, k)[0]
        resolved = w_k0 > ZERO_DISTANCE
        table.rows.append({
            't': float(t), 'w_alpha': w_alpha, 'w_k': w_k, 'w_k0': w_k0,
            'ratio_dlp': w_alpha * np.sqrt(t) / (float(m(scale * np.sqrt(t))) * w_k0) if resolved else np.nan,
            'end_ratio': w_k / w_k0 if resolved else np.nan,
        })

    end, ratio = table.column('end_ratio'), table.column('ratio_dlp')
    trend = trend_as_t_decreases(t_grid, ratio)
    slope = log_log_slope(t_grid, ratio)
    no_trend = not trend.increasing
    slope_bounded = not slope < -BLOWUP_SLOPE
    table.summary = {
        'coupling': coupling,
        'k': k,
        'ot_points': n_ot,
        'w_k0': w_k0,
        'end_C': float(np.nanmax(end)) if np.any(np.isfinite(end)) else np.nan,
        'trend': trend.to_dict(),
        'log_slope': slope,
        'no_increasing_trend': bool(no_trend),
        'slope_above_blowup': bool(slope_bounded),
        'bounded': bool(no_trend or slope_bounded),
    }
    if not no_trend and slope_bounded:
        logger.info("decay ratio on %s rises as t decreases but with log-log slope %.3g >= -%g",
                    model.name, slope, BLOWUP_SLOPE)
    logger.info("distance decay on %s: END constant %.4g", model.name, table.summary['end_C'])
    return table


def harnack_table(entropy, log_harnack=None, decay=None):
    """Join the three checks on t into rows with the columns of the CLI table."""
    by_t = {}
    for row in entropy.rows:
        by_t[row['t']] = {'t': row['t'], 'ent_knn': row['ent_knn'], 'ent_girsanov': row['ent_girsanov'],
                          'w2_sq': row['w2_sq'], 'c_hat': row['c_hat'], 'logharnack_minC': np.nan,
                          'w_alpha': np.nan, 'ratio_dlp': np.nan}
    if log_harnack is not None:
        for row in log_harnack.rows:
            entry = by_t[row['t']]
            if np.isfinite(row['min_C']) and not entry['logharnack_minC'] >= row['min_C']:
                entry['logharnack_minC'] = row['min_C']
    if decay is not None:
        for row in decay.rows:
            by_t[row['t']].update(w_alpha=row['w_alpha'], ratio_dlp=row['ratio_dlp'])
    return [by_t[t] for t in sorted(by_t)]
