import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from src.bismut import build_direction, build_functional
from src.errors import ConfigInvalidError
from src.measures import EmpiricalMeasure, read_points_csv
from src.models import build_model
from src.moduli import modulus_from_config
from src.simulation import SimConfig

logger = logging.getLogger(__name__)

COMMANDS = ('validate-modulus', 'simulate', 'wasserstein', 'bismut', 'harnack', 'check-assumptions')
MODEL_COMMANDS = ('simulate', 'bismut', 'harnack', 'check-assumptions')

SCHEMA = {
    'command': str,
    'seed': int,
    'model': {'name': str, 'params': dict},
    'modulus': {'family': str, 'A': float, 'epsilon': float, 'beta': float, 'knots': list, 'r_max': float},
    'sim': {'n_particles': int, 'dt': float, 't_end': float, 'store_increments': bool, 'snapshot_times': list,
            'threads': int},
    'distance': {'metric': str, 'k': float, 'method': str, 'reg': float, 'ot_points': int},
    'estimator': {'n_paths': int, 'eps_list': list, 'picard_max_iter': int, 'picard_tol': float,
                  'picard_grid_size': int, 'knn_k': int, 'source': str, 'with_oracle': bool},
    'initial': {'gamma': object, 'gamma_tilde': object},
    'functional': {'name': str, 'params': dict},
    'direction': {'name': str, 'params': dict},
    't_grid': list,
    'inputs': {'a': str, 'b': str},
    'assertions': list,
    'output_dir': str,
}

ASSERTION_KEYS = {'name', 'metric', 'op', 'target', 'tol'}
ASSERTION_OPS = ('approx', 'le', 'ge', 'true', 'false')

DEFAULT_SIM = {'n_particles': 1000, 'dt': 0.01, 't_end': 1.0}
DEFAULT_ESTIMATOR = {'eps_list': [0.1, 0.05], 'picard_max_iter': 50, 'picard_tol': 1e-6, 'picard_grid_size': 16,
                     'knn_k': 4, 'source': 'auto', 'with_oracle': True}


def _check_type(path, value, expected):
    if expected is object:
        return
    if expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, expected)
    if not ok:
        raise ConfigInvalidError(path, f"expected {expected.__name__}, got {type(value).__name__}")


def _validate_block(raw, schema, prefix=''):
    if not isinstance(raw, dict):
        raise ConfigInvalidError(prefix or 'config', "expected an object")
    for key, value in raw.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in schema:
            raise ConfigInvalidError(path, "unknown key")
        expected = schema[key]
        if isinstance(expected, dict):
            _validate_block(value, expected, path)
        else:
            _check_type(path, value, expected)


def _validate_assertions(assertions):
    for i, spec in enumerate(assertions):
        path = f"assertions[{i}]"
        if not isinstance(spec, dict):
            raise ConfigInvalidError(path, "expected an object")
        unknown = set(spec) - ASSERTION_KEYS
        if unknown:
            raise ConfigInvalidError(f"{path}.{sorted(unknown)[0]}", "unknown key")
        if 'metric' not in spec:
            raise ConfigInvalidError(f"{path}.metric", "required")
        if spec.get('op', 'approx') not in ASSERTION_OPS:
            raise ConfigInvalidError(f"{path}.op", f"expected one of {ASSERTION_OPS}")


def config_hash(raw):
    canonical = json.dumps(raw, sort_keys=True, separators=(',', ':')).encode('utf-8')
    return hashlib.sha256(canonical).hexdigest()


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    seed: int
    model: dict
    sim: dict
    modulus: dict = None
    distance: dict = field(default_factory=dict)
    estimator: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    functional: dict = field(default_factory=dict)
    direction: dict = field(default_factory=dict)
    t_grid: tuple = ()
    inputs: dict = field(default_factory=dict)
    assertions: tuple = ()
    output_dir: str = 'results'
    base_dir: Path = Path('.')
    threads: int = 1
    digest: str = ''

    @classmethod
    def from_dict(cls, raw, base_dir='.'):
        _validate_block(raw, SCHEMA)
        for key in ('command', 'seed'):
            if key not in raw:
                raise ConfigInvalidError(key, "required")
        if raw['command'] not in COMMANDS:
            raise ConfigInvalidError('command', f"expected one of {COMMANDS}")
        if raw['command'] in MODEL_COMMANDS and 'name' not in raw.get('model', {}):
            raise ConfigInvalidError('model.name', f"required for {raw['command']}")
        _validate_assertions(raw.get('assertions', []))
        for i, t in enumerate(raw.get('t_grid', [])):
            _check_type(f"t_grid[{i}]", t, float)
            if t <= 0:
                raise ConfigInvalidError(f"t_grid[{i}]", "must be positive")
        sim = dict(DEFAULT_SIM)
        sim.update(raw.get('sim', {}))
        estimator = dict(DEFAULT_ESTIMATOR)
        estimator.update(raw.get('estimator', {}))
        cfg = cls(
            command=raw['command'],
            seed=raw['seed'],
            model=raw.get('model', {}),
            sim=sim,
            modulus=raw.get('modulus'),
            distance=raw.get('distance', {}),
            estimator=estimator,
            initial=raw.get('initial', {}),
            functional=raw.get('functional', {}),
            direction=raw.get('direction', {}),
            t_grid=tuple(float(t) for t in raw.get('t_grid', [sim['t_end']])),
            inputs=raw.get('inputs', {}),
            assertions=tuple(raw.get('assertions', [])),
            output_dir=raw.get('output_dir', 'results'),
            base_dir=Path(base_dir),
            threads=int(sim.get('threads', 1)),
            digest=config_hash(raw),
        )
        cfg.sim_config()
        return cfg

    def with_overrides(self, seed=None, threads=None, out=None):
        changes = {}
        if seed is not None:
            changes['seed'] = int(seed)
        if threads is not None:
            if threads < 1:
                raise ConfigInvalidError('threads', "must be >= 1")
            changes['threads'] = int(threads)
        if out is not None:
            changes['output_dir'] = str(out)
        return replace(self, **changes)

    def sim_config(self, **changes):
        block = {k: v for k, v in self.sim.items() if k != 'threads'}
        block['snapshot_times'] = tuple(block.get('snapshot_times', ()))
        block.update(changes)
        return SimConfig(seed=self.seed, threads=self.threads, **block)

    def build_model(self):
        if not self.model:
            return None
        try:
            return build_model(self.model['name'], **self.model.get('params', {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalidError('model', str(exc)) from exc

    def build_modulus(self):
        if self.modulus is None:
            return None
        try:
            return modulus_from_config(self.modulus)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalidError('modulus', str(exc)) from exc

    def build_functional(self):
        return self._preset(build_functional, 'functional', 'identity')

    def build_direction(self):
        return self._preset(build_direction, 'direction', 'constant')

    def _preset(self, builder, key, default):
        block = getattr(self, key)
        try:
            return builder(block.get('name', default), **block.get('params', {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalidError(key, str(exc)) from exc

    def resolve(self, path):
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path

    def initial_law(self, key):
        """A point CSV path, ``{"dirac": [...]}`` or ``{"normal": {"mean": [...], "std": s}}``."""
        if key not in self.initial:
            raise ConfigInvalidError(f"initial.{key}", "required for this command")
        spec = self.initial[key]
        if isinstance(spec, str):
            path = self.resolve(spec)
            if not path.exists():
                raise ConfigInvalidError(f"initial.{key}", f"file {path} does not exist")
            return read_points_csv(path)
        if isinstance(spec, dict) and set(spec) == {'dirac'}:
            return EmpiricalMeasure.dirac(np.atleast_1d(np.asarray(spec['dirac'], dtype=float)))
        if isinstance(spec, dict) and set(spec) == {'normal'}:
            params = spec['normal']
            mean = np.atleast_1d(np.asarray(params.get('mean', 0.0), dtype=float))
            std = float(params.get('std', 1.0))
            return lambda rng, n: mean + std * rng.normal(size=(n, len(mean)))
        raise ConfigInvalidError(f"initial.{key}", "expected a CSV path, {'dirac': ...} or {'normal': ...}")


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigInvalidError('config', f"file {path} does not exist")
    try:
        with open(path) as handle:
            raw = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigInvalidError('config', f"not valid JSON: {exc}") from exc
    cfg = ExperimentConfig.from_dict(raw, base_dir=path.parent)
    logger.info("loaded %s config from %s (sha256 %s)", cfg.command, path, cfg.digest[:12])
    return cfg
