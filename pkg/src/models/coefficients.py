"""Coefficient models b_t(x, mu) = b0_t(x) + b1_t(x, mu) and sigma_t(x).

x and v have shape (n, d), sigma returns (n, d, m).
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from src.errors import (
    CallbackFailureError,
    DimensionMismatchError,
    MissingDerivativeCallbacksError,
    SingularDiffusionError,
)
from src.moduli import DiniModulus

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneralB1:
    b1: Callable
    grad_x: Optional[Callable] = None
    lions: Optional[Callable] = None
    lions_contract: Optional[Callable] = None
    coupled: bool = True


@dataclass(frozen=True)
class StructuredB:
    V: Callable
    B: Callable
    dim_z: int
    grad_V: Optional[Callable] = None
    grad_x_B: Optional[Callable] = None
    grad_z_B: Optional[Callable] = None
    lions: Optional[Callable] = None
    lions_contract: Optional[Callable] = None
    coupled: bool = True


@dataclass(frozen=True)
class ModelConstants:
    K: float
    kappa: float
    k: float
    modulus: DiniModulus


@dataclass(frozen=True)
class CoefficientModel:
    name: str
    dim_x: int
    dim_w: int
    sigma: Callable
    b0: Callable
    mean_field: object
    constants: ModelConstants
    grad_sigma: Optional[Callable] = None
    grad_b0: Optional[Callable] = None
    sigma_constant: bool = False
    b0_cap: Optional[float] = None
    sigma_inverse_bound: float = np.inf
    params: dict = field(default_factory=dict)

    @property
    def structured(self):
        return isinstance(self.mean_field, StructuredB)

    @property
    def coupled(self):
        return self.mean_field.coupled

    @property
    def has_lions(self):
        return self.mean_field.lions is not None or self.mean_field.lions_contract is not None

    def summary(self, mu):
        """mu(V) for structured drifts, None otherwise."""
        if not self.structured:
            return None
        return _call(self.mean_field.V, mu.points, label='V').T @ mu.weights

    def mean_field_drift(self, t, x, mu, z=None):
        if self.structured:
            if z is None:
                z = self.summary(mu)
            return _call(self.mean_field.B, t, x, mu, z, label='B')
        return _call(self.mean_field.b1, t, x, mu, label='b1')

    def b0_capped(self, t, x):
        b0 = _call(self.b0, t, x, label='b0')
        if self.b0_cap is None:
            return b0, 0
        norms = np.linalg.norm(b0, axis=1)
        over = norms > self.b0_cap
        if np.any(over):
            b0 = b0.copy()
            b0[over] *= (self.b0_cap / norms[over])[:, None]
        return b0, int(over.sum())

    def drift(self, t, x, mu, z=None):
        b0, capped = self.b0_capped(t, x)
        return b0 + self.mean_field_drift(t, x, mu, z), capped

    def diffusion(self, t, x):
        return _call(self.sigma, t, x, label='sigma')

    def zeta(self, t, x):
        """sigma^*(sigma sigma^*)^{-1}, shape (n, m, d)."""
        sigma = self.diffusion(t, x)
        gram = sigma @ np.swapaxes(sigma, 1, 2)
        try:
            solved = np.linalg.solve(gram, sigma)
        except np.linalg.LinAlgError as exc:
            raise SingularDiffusionError(f"sigma sigma^* is singular in model {self.name}") from exc
        if not np.all(np.isfinite(solved)):
            raise SingularDiffusionError(f"sigma sigma^* inversion is not finite in model {self.name}")
        return np.swapaxes(solved, 1, 2)

    def require_derivatives(self, mean_field=False):
        missing = []
        if self.grad_b0 is None:
            missing.append('grad_b0')
        if self.grad_sigma is None and not self.sigma_constant:
            missing.append('grad_sigma')
        mf = self.mean_field
        if self.structured:
            missing += [name for name in ('grad_x_B',) if getattr(mf, name) is None]
            if mean_field:
                missing += [name for name in ('grad_V', 'grad_z_B') if getattr(mf, name) is None]
        elif mf.grad_x is None:
            missing.append('grad_x')
        if mean_field and self.coupled and mf.lions is None:
            # structured drifts without explicit mu dependence need no kernel
            if not self.structured or mf.lions_contract is not None:
                missing.append('lions')
        if missing:
            raise MissingDerivativeCallbacksError(
                f"model {self.name} lacks derivative callbacks: {', '.join(missing)}")

    def grad_drift(self, t, x, mu, z, v):
        """Directional derivative in x of the full drift with the measure frozen."""
        out = _call(self.grad_b0, t, x, v, label='grad_b0')
        if self.structured:
            return out + _call(self.mean_field.grad_x_B, t, x, mu, z, v, label='grad_x_B')
        return out + _call(self.mean_field.grad_x, t, x, mu, v, label='grad_x')

    def grad_diffusion(self, t, x, v):
        if self.sigma_constant:
            return np.zeros((len(x), self.dim_x, self.dim_w))
        return _call(self.grad_sigma, t, x, v, label='grad_sigma')

    def grad_z(self, t, x, mu, z, w):
        return _call(self.mean_field.grad_z_B, t, x, mu, z, w, label='grad_z_B')

    def grad_V(self, x, v):
        return _call(self.mean_field.grad_V, x, v, label='grad_V')

    def lions_contract(self, t, x, mu, z, y, directions, weights):
        """sum_j weights_j D^L b(x_i, .)(mu)(y_j) directions_j, shape (n, d)."""
        mf = self.mean_field
        if mf.lions is None and mf.lions_contract is None:
            return np.zeros_like(x)
        if mf.lions_contract is not None:
            args = (t, x, mu, z, y, directions, weights) if self.structured else (t, x, mu, y, directions, weights)
            return _call(mf.lions_contract, *args, label='lions_contract')
        out = np.empty_like(x)
        block = max(1, 2 ** 20 // max(1, len(y) * self.dim_x ** 2))
        for start in range(0, len(x), block):
            kernel = self.lions_kernel(t, x[start:start + block], mu, z, y)
            out[start:start + block] = np.einsum('nmab,mb,m->na', kernel, directions, weights)
        return out

    def lions_kernel(self, t, x, mu, z, y):
        mf = self.mean_field
        if mf.lions is None:
            return np.zeros((len(x), len(y), self.dim_x, self.dim_x))
        args = (t, x, mu, z, y) if self.structured else (t, x, mu, y)
        kernel = _call(mf.lions, *args, label='lions')
        return np.broadcast_to(kernel, (len(x), len(y), self.dim_x, self.dim_x))

    def lions_diagonal(self, t, x, mu, z, directions, block=256):
        """D^L b(x_i, .)(mu)(x_i) directions_i, the self term of the cross average."""
        out = np.zeros_like(x)
        if self.mean_field.lions is None:
            return out
        for start in range(0, len(x), block):
            xs = x[start:start + block]
            kernel = self.lions_kernel(t, xs, mu, z, xs)
            out[start:start + block] = np.einsum('nnab,nb->na', kernel, directions[start:start + block])
        return out

    def check_dims(self, x):
        if x.ndim != 2 or x.shape[1] != self.dim_x:
            raise DimensionMismatchError(f"model {self.name} expects points in R^{self.dim_x}, got {x.shape}")


def _call(fn, *args, label):
    try:
        out = np.asarray(fn(*args), dtype=float)
    except (ArithmeticError, ValueError, TypeError) as exc:
        raise CallbackFailureError(f"{label} callback raised {exc!r}") from exc
    if not np.all(np.isfinite(out)):
        raise CallbackFailureError(f"{label} callback returned non-finite values")
    return out
