"""Dini-square moduli. Integrals of alpha^2 / r are taken in u = -log r."""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from src.errors import DomainExceededError, EmptyDomainError, LengthMismatchError, NonFiniteError

logger = logging.getLogger(__name__)

DEFAULT_R_MAX = 1e6

MODULUS_FAMILIES = {
    'power': {
        'name': 'Power',
        'description': 'alpha(r) = A r^eps, eps in (0, 1].',
        'params': ('A', 'epsilon'),
    },
    'log_power': {
        'name': 'LogPower',
        'description': 'alpha(r) = A log(e + 1/r)^(-beta); Dini-square iff 2 beta > 1.',
        'params': ('A', 'beta'),
    },
    'tabulated': {
        'name': 'Tabulated',
        'description': 'Piecewise-linear through increasing (r, alpha(r)) knots, '
                       'constant slope beyond the last knot.',
        'params': ('knots',),
    },
}

_QUAD_OPTS = dict(epsabs=0.0, epsrel=1e-12, limit=500)


@dataclass(frozen=True)
class DiniModulus:
    family: str
    A: float = 1.0
    epsilon: float = 0.5
    beta: float = 1.0
    knots: tuple = ()
    r_max: float = DEFAULT_R_MAX

    def __post_init__(self):
        if self.family not in MODULUS_FAMILIES:
            raise ValueError(f"unknown modulus family {self.family!r}")
        if self.family == 'power' and not (0.0 < self.epsilon <= 1.0 and self.A > 0):
            raise ValueError("power modulus needs A > 0 and eps in (0, 1]")
        if self.family == 'log_power' and self.A <= 0:
            raise ValueError("log_power modulus needs A > 0")
        if self.family == 'tabulated':
            knots = np.asarray(self.knots, dtype=float)
            if knots.ndim != 2 or knots.shape[1] != 2 or len(knots) < 2:
                raise ValueError("tabulated modulus needs at least two (r, alpha) knots")
            if np.any(np.diff(knots[:, 0]) <= 0) or knots[0, 0] < 0:
                raise ValueError("tabulated knots must have increasing nonnegative r")

    def _table(self):
        knots = np.asarray(self.knots, dtype=float)
        if knots[0, 0] > 0:
            knots = np.vstack([[0.0, 0.0], knots])
        return knots[:, 0], knots[:, 1]

    def _check_domain(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0) or np.any(r > self.r_max):
            raise DomainExceededError(
                f"argument outside [0, {self.r_max:g}] for {self.family} modulus")
        return r

    def __call__(self, r):
        r = self._check_domain(r)
        return self._evaluate(r)

    def _evaluate(self, r):
        if self.family == 'power':
            return self.A * np.power(r, self.epsilon)
        if self.family == 'log_power':
            with np.errstate(divide='ignore'):
                inner = np.logaddexp(1.0, -np.log(r))
            return np.where(r > 0, self.A * np.power(inner, -self.beta), 0.0)
        xs, ys = self._table()
        slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        inside = np.interp(r, xs, ys)
        return np.where(r <= xs[-1], inside, ys[-1] + slope * (r - xs[-1]))

    def of_log(self, u):
        """alpha(e^-u), stable for large u."""
        u = np.asarray(u, dtype=float)
        if self.family == 'power':
            return self.A * np.exp(-self.epsilon * u)
        if self.family == 'log_power':
            return self.A * np.power(np.logaddexp(1.0, u), -self.beta)
        return self._evaluate(np.exp(-u))

    def dini_tail(self, u):
        """int_u^inf alpha(e^-w)^2 dw, i.e. int_0^{e^-u} alpha(t)^2 / t dt."""
        if self.family == 'power':
            return self.A ** 2 * np.exp(-2.0 * self.epsilon * u) / (2.0 * self.epsilon)
        if self.family == 'log_power':
            if 2.0 * self.beta <= 1.0:
                return np.inf
            value, _ = integrate.quad(lambda w: float(self.of_log(w)) ** 2, u, np.inf, **_QUAD_OPTS)
            return value
        return self._tabulated_integral(np.exp(-u))

    def _tabulated_integral(self, r):
        xs, ys = self._table()
        if r <= 0:
            return 0.0
        if ys[0] != 0.0:
            return np.inf
        slope_last = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        edges = np.append(xs, max(r, xs[-1]) + 1.0)
        values = np.append(ys, ys[-1] + slope_last * (edges[-1] - xs[-1]))
        total = 0.0
        for lo, hi, a_lo, a_hi in zip(edges[:-1], edges[1:], values[:-1], values[1:]):
            if lo >= r:
                break
            q = (a_hi - a_lo) / (hi - lo)
            p = a_lo - q * lo
            top = min(hi, r)
            if lo == 0.0:
                log_term = 0.0 if p == 0.0 else np.inf
            else:
                log_term = p * p * np.log(top / lo)
            total += log_term + 2.0 * p * q * (top - lo) + 0.5 * q * q * (top ** 2 - lo ** 2)
        return total

    def dini_integral(self, r):
        r = float(self._check_domain(r))
        if r == 0.0:
            return 0.0
        return self.dini_tail(-np.log(r))

    def tilde(self, r):
        return tilde_alpha(self, r)


def power_modulus(A=1.0, epsilon=0.5, r_max=DEFAULT_R_MAX):
    return DiniModulus('power', A=A, epsilon=epsilon, r_max=r_max)


def hoelder_modulus(epsilon, r_max=DEFAULT_R_MAX):
    # W_eps of the Hoelder dual ball is W_alpha with alpha(r) = r^eps
    return power_modulus(1.0, epsilon, r_max)


def log_power_modulus(A=1.0, beta=1.0, r_max=DEFAULT_R_MAX):
    return DiniModulus('log_power', A=A, beta=beta, r_max=r_max)


def tabulated_modulus(knots, r_max=DEFAULT_R_MAX):
    return DiniModulus('tabulated', knots=tuple(tuple(map(float, k)) for k in knots), r_max=r_max)


def modulus_from_config(block):
    block = dict(block)
    family = block.pop('family')
    r_max = float(block.pop('r_max', DEFAULT_R_MAX))
    if family == 'tabulated':
        return tabulated_modulus(block['knots'], r_max=r_max)
    return DiniModulus(family, r_max=r_max, **{k: float(v) for k, v in block.items()})


def tilde_alpha(m, r):
    """(int_0^r alpha(t)^2 / t dt)^(1/2)."""
    if np.ndim(r) > 0:
        return np.array([tilde_alpha(m, x) for x in np.ravel(r)]).reshape(np.shape(r))
    return float(np.sqrt(m.dini_integral(r)))


@dataclass
class AlphaK:
    value: float
    concave: bool


def alpha_k(m, k, s, grid_size=256):
    if k <= 1:
        raise ValueError("alpha_k needs k > 1")
    power = 1.0 / (k - 1.0)
    value = float(m(np.power(s, power)))
    s_max = min(100.0, m.r_max ** (k - 1.0))
    grid = np.concatenate([[0.0], np.geomspace(1e-6 * s_max, s_max, grid_size)])
    concave = _concavity_violation(grid, m(np.minimum(np.power(grid, power), m.r_max))) <= 1e-10
    return AlphaK(value, bool(concave))


def _concavity_violation(xs, ys):
    slopes = np.diff(ys) / np.diff(xs)
    scale = max(np.max(np.abs(slopes)), 1e-300)
    return max(0.0, float(np.max(np.diff(slopes)))) / scale


@dataclass
class InvariantCheck:
    name: str
    passed: bool
    worst_violation: float


@dataclass
class ValidationReport:
    family: str
    checks: list = field(default_factory=list)
    dini_square: float = np.nan
    valid_up_to: float = 0.0

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {
            'family': self.family,
            'passed': self.passed,
            'dini_square': self.dini_square,
            'valid_up_to': self.valid_up_to,
            'checks': [
                {'name': c.name, 'passed': c.passed, 'worst_violation': c.worst_violation}
                for c in self.checks
            ],
        }


def dini_square_partial_sums(m, doublings=40):
    """Increments of int alpha(e^-u)^2 du over the blocks [2^j, 2^(j+1)].

    Returns (value over (0, 1], converged). A convergent tail has block
    ratios bounded away from 1 or blocks that vanish against the partial sum.
    """
    f = lambda u: float(m.of_log(u)) ** 2
    head, _ = integrate.quad(f, 0.0, 1.0, **_QUAD_OPTS)
    blocks = []
    for j in range(doublings):
        lo, hi = 2.0 ** j, 2.0 ** (j + 1)
        value, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-10, limit=200)
        blocks.append(value)
    blocks = np.array(blocks)
    total = head + blocks.sum()
    if not np.isfinite(total):
        return np.inf, False
    tail = blocks[-4:]
    if tail[-1] <= 1e-14 * max(total, 1e-300):
        return total, True
    ratios = tail[1:] / tail[:-1]
    converged = bool(np.all(ratios < 0.99))
    return (m.dini_integral(1.0) if converged and m.r_max >= 1.0 else total), converged


def validate_modulus(m, grid_size=64, tol=1e-9):
    if grid_size < 16:
        raise ValueError("grid_size must be at least 16")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not m.r_max > 0:
        raise EmptyDomainError("modulus domain [0, r_max] is empty")

    grid = np.concatenate([[0.0], np.geomspace(min(1e-6, m.r_max * 1e-9), m.r_max, grid_size)])
    values = m(grid)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{m.family} modulus is not finite on the validation grid")

    report = ValidationReport(m.family)
    scale = max(float(np.max(np.abs(values))), 1e-300)
    bad_at = np.inf

    report.checks.append(InvariantCheck('alpha_zero', abs(values[0]) <= tol, abs(float(values[0]))))

    steps = np.diff(values)
    increasing = bool(np.all(steps > 0))
    if not increasing:
        bad_at = min(bad_at, grid[1:][steps <= 0][0])
    report.checks.append(InvariantCheck('increasing', increasing, max(0.0, -float(steps.min()))))

    slopes = steps / np.diff(grid)
    slope_rise = np.diff(slopes) / max(np.max(np.abs(slopes)), 1e-300)
    concave = bool(np.all(slope_rise <= max(tol, 1e-10)))
    if not concave:
        bad_at = min(bad_at, grid[2:][slope_rise > max(tol, 1e-10)][0])
    report.checks.append(InvariantCheck('concave', concave, max(0.0, float(slope_rise.max()))))

    dini_value, dini_finite = dini_square_partial_sums(m)
    report.dini_square = float(dini_value)
    report.checks.append(InvariantCheck(
        'dini_square', bool(dini_finite and dini_value > 0),
        0.0 if dini_finite and dini_value > 0 else float('inf')))

    sub = grid[1::max(1, grid_size // 24)]
    s, t = np.meshgrid(sub, sub)
    inside = s + t <= m.r_max
    excess = (m(np.where(inside, s + t, 0.0)) - m(s) - m(t))[inside] / scale
    subadditive = bool(np.all(excess <= tol))
    if not subadditive:
        bad_at = min(bad_at, float(np.min((s + t)[inside][excess > tol])))
    report.checks.append(InvariantCheck('subadditive', subadditive, max(0.0, float(excess.max()))))

    worst_scaling = 0.0
    for factor in (1.0, 1.5, 2.0, 4.0, 10.0, 100.0):
        base = sub[sub * factor <= m.r_max]
        over = (m(factor * base) - factor * m(base)) / scale
        worst_scaling = max(worst_scaling, float(over.max(initial=0.0)))
        if np.any(over > tol):
            bad_at = min(bad_at, float(np.min(factor * base[over > tol])))
    report.checks.append(InvariantCheck('scaling', worst_scaling <= tol, worst_scaling))

    if m.r_max >= 1.0:
        unit = np.geomspace(1e-8, 1.0, grid_size)
        deficit = (float(m(1.0)) * unit - m(unit)) / scale
        report.checks.append(InvariantCheck(
            'linear_lower_bound', bool(np.all(deficit <= tol)), max(0.0, float(deficit.max()))))

    report.valid_up_to = float(m.r_max if not np.isfinite(bad_at) else grid[grid < bad_at][-1])
    logger.info("validated %s modulus: passed=%s valid_up_to=%g",
                m.family, report.passed, report.valid_up_to)
    return report


@dataclass
class CheckResult:
    lhs: float
    rhs: float
    passed: bool


def concave_holder_check(m, samples_xi, samples_eta, p, tol=1e-12):
    """E[alpha(xi) eta] <= ||eta||_p alpha(||xi||_{p/(p-1)})."""
    xi = np.abs(np.asarray(samples_xi, dtype=float))
    eta = np.asarray(samples_eta, dtype=float)
    if xi.shape != eta.shape or xi.size == 0:
        raise LengthMismatchError("xi and eta samples must have the same nonzero length")
    if p < 1:
        raise ValueError("p must be >= 1")
    lhs = float(np.mean(m(xi) * eta))
    if p == 1:
        xi_norm = float(xi.max())
        eta_norm = float(np.mean(np.abs(eta)))
    elif np.isinf(p):
        xi_norm = float(np.mean(xi))
        eta_norm = float(np.abs(eta).max())
    else:
        q = p / (p - 1.0)
        xi_norm = float(np.mean(xi ** q) ** (1.0 / q))
        eta_norm = float(np.mean(np.abs(eta) ** p) ** (1.0 / p))
    rhs = eta_norm * float(m(xi_norm))
    return CheckResult(lhs, rhs, lhs <= rhs + tol)


def c1_integral(m, r, t):
    """int_0^t alpha(r s^1/2)^2 / (s tilde_alpha(r s^1/2)) ds, in u = -log(s/t)."""
    log_rho = np.log(r * np.sqrt(t))

    def integrand(u):
        w = u / 2.0 - log_rho
        tail = m.dini_tail(w)
        if tail <= 0.0:
            return 0.0
        return float(m.of_log(w)) ** 2 / np.sqrt(tail)

    value, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=1e-10, limit=500)
    return value


def ass_integral(m, r, T):
    """int_0^T alpha(r t^1/2)^2 / t dt, in u = -log(t/T)."""
    log_rho = np.log(r * np.sqrt(T))
    value, _ = integrate.quad(lambda u: float(m.of_log(u / 2.0 - log_rho)) ** 2,
                              0.0, np.inf, epsabs=0.0, epsrel=1e-10, limit=500)
    return value
