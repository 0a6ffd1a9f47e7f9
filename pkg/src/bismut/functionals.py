"""Named test functionals f and perturbation directions phi for the derivative estimators."""
from dataclasses import dataclass
from typing import Callable

import numpy as np


FUNCTIONAL_PRESETS = {
    'identity': {
        'name': 'First coordinate',
        'description': 'f(x) = x_0.',
    },
    'square': {
        'name': 'Squared norm',
        'description': 'f(x) = |x|^2.',
    },
    'tanh': {
        'name': 'Bounded tanh',
        'description': 'f(x) = tanh(scale * x_0); bounded, used for the 1/sqrt(t) law.',
        'scale': 1.0,
    },
    'constant': {
        'name': 'Constant',
        'description': 'f(x) = value; every derivative vanishes.',
        'value': 1.0,
    },
    'cosine': {
        'name': 'Cosine',
        'description': 'f(x) = cos(freq * x_0).',
        'freq': 1.0,
    },
}

DIRECTION_PRESETS = {
    'constant': {
        'name': 'Constant shift',
        'description': 'phi(x) = value for every x (a translation of the measure).',
        'value': 1.0,
    },
    'zero': {
        'name': 'Zero',
        'description': 'phi = 0.',
    },
    'linear': {
        'name': 'Dilation',
        'description': 'phi(x) = scale * x.',
        'scale': 1.0,
    },
}


def build_functional(name, **params):
    if name not in FUNCTIONAL_PRESETS:
        raise KeyError(f"unknown functional {name!r}; available: {', '.join(sorted(FUNCTIONAL_PRESETS))}")
    values = {k: v for k, v in FUNCTIONAL_PRESETS[name].items() if k not in ('name', 'description')}
    unknown = set(params) - set(values)
    if unknown:
        raise KeyError(f"functional {name!r} has no parameters {sorted(unknown)}")
    values.update(params)
    if name == 'identity':
        return lambda x: x[:, 0]
    if name == 'square':
        return lambda x: (x ** 2).sum(axis=1)
    if name == 'tanh':
        return lambda x: np.tanh(values['scale'] * x[:, 0])
    if name == 'constant':
        return lambda x: np.full(len(x), float(values['value']))
    return lambda x: np.cos(values['freq'] * x[:, 0])


@dataclass(frozen=True)
class PerturbationDirection:
    phi: Callable
    name: str = 'custom'

    def __call__(self, x):
        return np.asarray(self.phi(x), dtype=float).reshape(x.shape)

    def norm_Lk(self, points, k):
        """||phi||_{L^k(mu)} for the uniform measure on ``points``."""
        return float(np.mean(np.linalg.norm(self(points), axis=1) ** k) ** (1.0 / k))


def build_direction(name, **params):
    if name not in DIRECTION_PRESETS:
        raise KeyError(f"unknown direction {name!r}; available: {', '.join(sorted(DIRECTION_PRESETS))}")
    values = {k: v for k, v in DIRECTION_PRESETS[name].items() if k not in ('name', 'description')}
    unknown = set(params) - set(values)
    if unknown:
        raise KeyError(f"direction {name!r} has no parameters {sorted(unknown)}")
    values.update(params)
    if name == 'constant':
        shift = np.atleast_1d(np.asarray(values['value'], dtype=float))
        return PerturbationDirection(lambda x: np.broadcast_to(shift, x.shape), name)
    if name == 'zero':
        return PerturbationDirection(np.zeros_like, name)
    return PerturbationDirection(lambda x: values['scale'] * x, name)


def as_direction(phi):
    if isinstance(phi, PerturbationDirection):
        return phi
    if callable(phi):
        return PerturbationDirection(phi)
    shift = np.atleast_1d(np.asarray(phi, dtype=float))
    return PerturbationDirection(lambda x: np.broadcast_to(shift, x.shape), 'constant')
