import logging
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from src.errors import ConfigInvalidError, ExplosionError, FlowGridMismatchError, SizeExceededError
from src.measures import EmpiricalMeasure
from src.measures.transport import EXACT_MAX_SIZE
from src.simulation.noise import CHUNK_SIZE, chunk_bounds, chunk_increments, initial_generator

logger = logging.getLogger(__name__)

EXPLOSION_GUARD = 1e12
GRID_TOL = 1e-9
COUPLINGS = ('comonotone1d', 'assignment', 'independent')


@dataclass(frozen=True)
class SimConfig:
    n_particles: int
    dt: float
    t_end: float
    seed: int
    store_increments: bool = True
    snapshot_times: tuple = ()
    threads: int = 1
    stream: int = 0

    def __post_init__(self):
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise ConfigInvalidError('sim.n_particles', "must be a positive integer")
        if not self.dt > 0:
            raise ConfigInvalidError('sim.dt', f"must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ConfigInvalidError('sim.t_end', f"must be positive, got {self.t_end}")
        ratio = self.t_end / self.dt
        if abs(ratio - round(ratio)) > GRID_TOL * max(1.0, ratio):
            raise ConfigInvalidError('sim.t_end', f"t_end/dt = {ratio} is not an integer number of steps")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigInvalidError('seed', "must be a nonnegative integer")
        if self.threads < 1:
            raise ConfigInvalidError('threads', "must be >= 1")
        snaps = tuple(float(s) for s in self.snapshot_times)
        if list(snaps) != sorted(snaps) or any(s < 0 or s > self.t_end + GRID_TOL for s in snaps):
            raise ConfigInvalidError('sim.snapshot_times', "must be sorted times within [0, t_end]")
        for s in snaps:
            if abs(s / self.dt - round(s / self.dt)) > GRID_TOL * max(1.0, s / self.dt):
                raise ConfigInvalidError('sim.snapshot_times', f"{s} is not a grid time")
        object.__setattr__(self, 'snapshot_times', snaps)

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps + 1)

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class FrozenFlow:
    """Measures at grid times, read piecewise-constantly in between."""
    times: np.ndarray
    measures: tuple

    def __post_init__(self):
        if len(self.times) != len(self.measures) or len(self.times) == 0:
            raise FlowGridMismatchError("flow needs one measure per snapshot time")
        if np.any(np.diff(self.times) <= 0):
            raise FlowGridMismatchError("flow snapshot times must increase")

    def at(self, t):
        idx = int(np.searchsorted(self.times, t + GRID_TOL, side='right')) - 1
        return self.measures[idx]

    def covers(self, cfg, dim):
        if self.times[0] > GRID_TOL:
            raise FlowGridMismatchError(f"flow starts at {self.times[0]}, after t = 0")
        last_step = cfg.t_end - cfg.dt
        if self.times[-1] < last_step - GRID_TOL:
            raise FlowGridMismatchError(f"flow ends at {self.times[-1]}, before the last step {last_step}")
        if any(mu.dim != dim for mu in self.measures):
            raise FlowGridMismatchError("flow measures have the wrong dimension")


@dataclass(eq=False)
class PathBundle:
    times: np.ndarray
    states: np.ndarray
    increments: object
    seed: int
    stream: int
    model: str
    capped_fraction: float = 0.0
    snapshot_times: tuple = ()

    @property
    def n_particles(self):
        return self.states.shape[1]

    @property
    def dim(self):
        return self.states.shape[2]

    @property
    def n_steps(self):
        return len(self.times) - 1

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    def step_index(self, t):
        j = int(round(t / self.dt))
        if abs(j * self.dt - t) > GRID_TOL * max(1.0, t) or not 0 <= j <= self.n_steps:
            raise FlowGridMismatchError(f"time {t} is not on the simulation grid")
        return j

    def measure(self, j):
        return EmpiricalMeasure.uniform(self.states[j])

    def terminal(self):
        return self.measure(self.n_steps)

    def flow(self):
        return FrozenFlow(self.times, tuple(self.measure(j) for j in range(self.n_steps + 1)))


@dataclass(eq=False)
class CoupledPathBundle:
    a: PathBundle
    b: PathBundle
    coupling: str

    @property
    def initial_gap(self):
        return self.a.states[0] - self.b.states[0]


def initial_points(mu0, n, seed, stream=0):
    if callable(mu0):
        points = np.asarray(mu0(initial_generator(seed, stream), n), dtype=float)
        return points[:, None] if points.ndim == 1 else points
    if mu0.n == n and mu0.is_uniform:
        return np.array(mu0.points)
    if mu0.n == 1:
        return np.repeat(mu0.points, n, axis=0)
    idx = initial_generator(seed, stream).choice(mu0.n, size=n, p=mu0.weights)
    return mu0.points[idx]


def _advance(model, t, x, mu, z, dW, dt):
    b, capped = model.drift(t, x, mu, z)
    sigma = model.diffusion(t, x)
    return x + b * dt + np.einsum('ndm,nm->nd', sigma, dW), capped


def _simulate(model, x0, cfg, flow=None):
    x0 = np.asarray(x0, dtype=float)
    model.check_dims(x0)
    n, d, m = len(x0), model.dim_x, model.dim_w
    if flow is None and model.coupled and n < 2:
        raise ConfigInvalidError('sim.n_particles', "mean-field interaction needs at least 2 particles")
    if flow is not None:
        flow.covers(cfg, d)
    steps, dt, times = cfg.n_steps, cfg.dt, cfg.times
    states = np.empty((steps + 1, n, d))
    states[0] = x0
    increments = np.empty((steps, n, m)) if cfg.store_increments else None
    bounds = chunk_bounds(n)
    capped_total = 0

    logger.info("simulating %s: N=%d, steps=%d, dt=%g%s", model.name, n, steps, dt,
                '' if flow is None else ' (frozen flow)')
    with Parallel(n_jobs=cfg.threads, prefer='threads') as parallel:
        for j in range(steps):
            t = times[j]
            x = states[j]
            mu = flow.at(t) if flow is not None else EmpiricalMeasure.uniform(x)
            z = model.summary(mu)

            def run_chunk(start, stop, j=j, t=t, x=x, mu=mu, z=z):
                dW = chunk_increments(cfg.seed, cfg.stream, start // CHUNK_SIZE, j, stop - start, m, dt)
                new, capped = _advance(model, t, x[start:stop], mu, z, dW, dt)
                return start, stop, new, dW, capped

            if cfg.threads == 1 or len(bounds) == 1:
                results = [run_chunk(start, stop) for start, stop in bounds]
            else:
                results = parallel(delayed(run_chunk)(start, stop) for start, stop in bounds)
            for start, stop, new, dW, capped in results:
                states[j + 1, start:stop] = new
                if increments is not None:
                    increments[j, start:stop] = dW
                capped_total += capped
            if not np.all(np.abs(states[j + 1]) <= EXPLOSION_GUARD):
                raise ExplosionError(f"{model.name}: particle left |x| <= {EXPLOSION_GUARD:g} at t = {times[j + 1]:g}")

    capped_fraction = capped_total / float(n * steps)
    if capped_fraction > 0:
        logger.warning("%s: drift cap active on %.3g%% of particle steps", model.name, 100 * capped_fraction)
    return PathBundle(times, states, increments, cfg.seed, cfg.stream, model.name, capped_fraction,
                      cfg.snapshot_times)


def simulate_mckean_vlasov(model, mu0, cfg):
    return _simulate(model, initial_points(mu0, cfg.n_particles, cfg.seed, cfg.stream), cfg)


def simulate_decoupled(model, frozen_flow, x0_list, cfg):
    x0 = np.asarray(x0_list, dtype=float)
    if x0.ndim == 1:
        x0 = x0[:, None]
    return _simulate(model, x0, cfg, flow=frozen_flow)


def pair_initials(xa, xb, coupling):
    if coupling == 'comonotone1d':
        if xa.shape[1] != 1:
            raise ConfigInvalidError('coupling', "comonotone coupling needs d = 1")
        paired = np.empty_like(xb)
        paired[np.argsort(xa[:, 0], kind='stable')] = xb[np.argsort(xb[:, 0], kind='stable')]
        return paired
    if coupling == 'assignment':
        if len(xa) * len(xb) > EXACT_MAX_SIZE:
            raise SizeExceededError(f"assignment coupling limited to N^2 <= {EXACT_MAX_SIZE}")
        _, cols = linear_sum_assignment(cdist(xa, xb, metric='sqeuclidean'))
        return xb[cols]
    if coupling == 'independent':
        return xb
    raise ConfigInvalidError('coupling', f"unknown coupling {coupling!r}; expected one of {COUPLINGS}")


def simulate_coupled(model, mu0_a, mu0_b, coupling, cfg):
    n = cfg.n_particles
    xa = initial_points(mu0_a, n, cfg.seed, cfg.stream)
    # independent pairing draws the second cloud from its own stream
    xb_stream = cfg.stream + 1 if coupling == 'independent' else cfg.stream
    xb = pair_initials(xa, initial_points(mu0_b, n, cfg.seed, xb_stream), coupling)
    a = _simulate(model, xa, cfg)
    b = _simulate(model, xb, cfg)
    if a.increments is not None:
        b.increments = a.increments
    return CoupledPathBundle(a, b, coupling)
