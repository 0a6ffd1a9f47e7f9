import numpy as np

from src.models.coefficients import CoefficientModel, GeneralB1, ModelConstants, StructuredB
from src.moduli import power_modulus


MODEL_PRESETS = {
    'pure_bm': {
        'name': 'Pure Brownian motion',
        'description': 'No drift, sigma = I. Gaussian oracles for moments and entropy.',
        'dim': 1,
    },
    'mean_field_ou': {
        'name': 'Mean-field Ornstein-Uhlenbeck',
        'description': 'B(x, z) = a z - x with V(x) = x. Cloud mean follows exp((a - 1) t).',
        'a': 0.5,
        'dim': 1,
    },
    'mean_field_ou_lions': {
        'name': 'Mean-field OU (Lions form)',
        'description': 'b1(x, mu) = a mu(id) - x as a general drift with Lions kernel a I.',
        'a': 0.5,
        'dim': 1,
    },
    'kuramoto_like': {
        'name': 'Kuramoto-type phase interaction',
        'description': 'b1(x, mu) = coupling * mu(sin(. - x)) through V = (cos, sin).',
        'coupling': 1.0,
    },
    'bounded_b1_tanh': {
        'name': 'Bounded tanh interaction',
        'description': 'B(x, z) = scale * tanh(z - x) with V(x) = x; bounded so kappa = 0.',
        'scale': 1.0,
    },
    'singular_b0_power': {
        'name': 'Singular power drift',
        'description': 'b0(x) = strength sign(x) |x|^-gamma, capped for simulation, plus mean-field OU.',
        'gamma': 0.5,
        'strength': 1.0,
        'a': 0.5,
        'cap': 100.0,
    },
}


def _identity_sigma(d):
    eye = np.eye(d)

    def sigma(t, x):
        return np.broadcast_to(eye, (len(x), d, d))
    return sigma


def _zero_drift(t, x):
    return np.zeros_like(x)


def _zero_grad(t, x, v):
    return np.zeros_like(v)


def pure_bm(dim=1):
    return CoefficientModel(
        name='pure_bm',
        dim_x=dim,
        dim_w=dim,
        sigma=_identity_sigma(dim),
        b0=_zero_drift,
        grad_b0=_zero_grad,
        mean_field=GeneralB1(
            b1=lambda t, x, mu: np.zeros_like(x),
            grad_x=lambda t, x, mu, v: np.zeros_like(v),
            coupled=False,
        ),
        constants=ModelConstants(K=1.0, kappa=0.0, k=2.0, modulus=power_modulus(1.0, 1.0)),
        sigma_constant=True,
        sigma_inverse_bound=1.0,
        params={'dim': dim},
    )


def mean_field_ou(a=0.5, dim=1):
    return CoefficientModel(
        name='mean_field_ou',
        dim_x=dim,
        dim_w=dim,
        sigma=_identity_sigma(dim),
        b0=_zero_drift,
        grad_b0=_zero_grad,
        mean_field=StructuredB(
            V=lambda x: x,
            B=lambda t, x, mu, z: a * z - x,
            dim_z=dim,
            grad_V=lambda x, v: v,
            grad_x_B=lambda t, x, mu, z, v: -v,
            grad_z_B=lambda t, x, mu, z, w: np.broadcast_to(a * np.asarray(w), x.shape),
            coupled=a != 0.0,
        ),
        constants=ModelConstants(K=max(1.0, abs(a)), kappa=max(1.0, abs(a)), k=2.0,
                                 modulus=power_modulus(1.0, 1.0)),
        sigma_constant=True,
        sigma_inverse_bound=1.0,
        params={'a': a, 'dim': dim},
    )


def mean_field_ou_lions(a=0.5, dim=1):
    eye = np.eye(dim)

    def contract(t, x, mu, y, directions, weights):
        return np.broadcast_to(a * (weights @ directions), x.shape)

    return CoefficientModel(
        name='mean_field_ou_lions',
        dim_x=dim,
        dim_w=dim,
        sigma=_identity_sigma(dim),
        b0=_zero_drift,
        grad_b0=_zero_grad,
        mean_field=GeneralB1(
            b1=lambda t, x, mu: a * mu.mean() - x,
            grad_x=lambda t, x, mu, v: -v,
            lions=lambda t, x, mu, y: np.broadcast_to(a * eye, (len(x), len(y), dim, dim)),
            lions_contract=contract,
            coupled=a != 0.0,
        ),
        constants=ModelConstants(K=max(1.0, abs(a)), kappa=max(1.0, abs(a)), k=2.0,
                                 modulus=power_modulus(1.0, 1.0)),
        sigma_constant=True,
        sigma_inverse_bound=1.0,
        params={'a': a, 'dim': dim},
    )


def kuramoto_like(coupling=1.0):
    def V(x):
        return np.column_stack([np.cos(x[:, 0]), np.sin(x[:, 0])])

    def B(t, x, mu, z):
        return coupling * (z[1] * np.cos(x) - z[0] * np.sin(x))

    def grad_z_B(t, x, mu, z, w):
        w = np.broadcast_to(np.asarray(w, dtype=float), (len(x), 2))
        return coupling * (w[:, 1:2] * np.cos(x) - w[:, 0:1] * np.sin(x))

    return CoefficientModel(
        name='kuramoto_like',
        dim_x=1,
        dim_w=1,
        sigma=_identity_sigma(1),
        b0=_zero_drift,
        grad_b0=_zero_grad,
        mean_field=StructuredB(
            V=V,
            B=B,
            dim_z=2,
            grad_V=lambda x, v: np.column_stack([-np.sin(x[:, 0]), np.cos(x[:, 0])]) * v,
            grad_x_B=lambda t, x, mu, z, v: -coupling * (z[1] * np.sin(x) + z[0] * np.cos(x)) * v,
            grad_z_B=grad_z_B,
            coupled=coupling != 0.0,
        ),
        constants=ModelConstants(K=abs(coupling), kappa=0.0, k=2.0, modulus=power_modulus(1.0, 1.0)),
        sigma_constant=True,
        sigma_inverse_bound=1.0,
        params={'coupling': coupling},
    )


def bounded_b1_tanh(scale=1.0):
    def sech2(x, z):
        return 1.0 / np.cosh(z - x) ** 2

    return CoefficientModel(
        name='bounded_b1_tanh',
        dim_x=1,
        dim_w=1,
        sigma=_identity_sigma(1),
        b0=_zero_drift,
        grad_b0=_zero_grad,
        mean_field=StructuredB(
            V=lambda x: x,
            B=lambda t, x, mu, z: scale * np.tanh(z - x),
            dim_z=1,
            grad_V=lambda x, v: v,
            grad_x_B=lambda t, x, mu, z, v: -scale * sech2(x, z) * v,
            grad_z_B=lambda t, x, mu, z, w: scale * sech2(x, z) * np.broadcast_to(np.asarray(w), x.shape),
            coupled=scale != 0.0,
        ),
        constants=ModelConstants(K=abs(scale), kappa=0.0, k=2.0, modulus=power_modulus(1.0, 1.0)),
        sigma_constant=True,
        sigma_inverse_bound=1.0,
        params={'scale': scale},
    )


def singular_b0_power(gamma=0.5, strength=1.0, a=0.5, cap=100.0):
    def b0(t, x):
        r = np.maximum(np.abs(x), 1e-300)
        return strength * np.sign(x) * np.minimum(r ** -gamma, 1e300)

    return CoefficientModel(
        name='singular_b0_power',
        dim_x=1,
        dim_w=1,
        sigma=_identity_sigma(1),
        b0=b0,
        mean_field=GeneralB1(
            b1=lambda t, x, mu: a * mu.mean() - x,
            coupled=a != 0.0,
        ),
        constants=ModelConstants(K=max(1.0, abs(a)), kappa=max(1.0, abs(a)), k=2.0,
                                 modulus=power_modulus(1.0, 1.0)),
        sigma_constant=True,
        b0_cap=cap,
        sigma_inverse_bound=1.0,
        params={'gamma': gamma, 'strength': strength, 'a': a, 'cap': cap},
    )


BUILDERS = {
    'pure_bm': pure_bm,
    'mean_field_ou': mean_field_ou,
    'mean_field_ou_lions': mean_field_ou_lions,
    'kuramoto_like': kuramoto_like,
    'bounded_b1_tanh': bounded_b1_tanh,
    'singular_b0_power': singular_b0_power,
}


def build_model(name, **params):
    if name not in MODEL_PRESETS:
        raise KeyError(f"unknown model {name!r}; available: {', '.join(sorted(MODEL_PRESETS))}")
    preset = MODEL_PRESETS[name]
    defaults = {k: v for k, v in preset.items() if k not in ('name', 'description')}
    unknown = set(params) - set(defaults)
    if unknown:
        raise KeyError(f"model {name!r} has no parameters {sorted(unknown)}")
    defaults.update(params)
    return BUILDERS[name](**defaults)
