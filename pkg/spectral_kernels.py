# spectral_kernels.py
# State descriptions and their momentum-space densities: mass-shell Bose weights,
# one-dimensional time-axis spectra and the commutator spectrum.

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from errors import ConfigError, DomainError
from minkowski import (
    InverseTemperatureVector,
    TimeDirection,
    in_forward_cone,
    minkowski_product,
    relative_rapidity,
)

logger = logging.getLogger(__name__)

# 1 / (2 sqrt(2) pi^(3/2)) == 1 / (2 pi sqrt(2 pi))
SPECTRAL_NORM = 1.0 / (2.0 * math.pi * math.sqrt(2.0 * math.pi))
WEIGHT_SUM_TOL = 1e-12
# below this boost velocity the rest-frame closed form is used
VELOCITY_FLOOR = 1e-6


# ---------------------------------------------------------
# States
# ---------------------------------------------------------

def _check_mass(mass):
    mass = float(mass)
    if not math.isfinite(mass) or mass < 0:
        raise DomainError(f"Mass must be finite and non-negative, got {mass}")
    return mass


@dataclass(frozen=True)
class Vacuum:
    mass: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mass", _check_mass(self.mass))


@dataclass(frozen=True)
class KMS:
    beta: InverseTemperatureVector
    mass: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mass", _check_mass(self.mass))
        if not isinstance(self.beta, InverseTemperatureVector):
            raise DomainError("KMS state needs an InverseTemperatureVector")


@dataclass(frozen=True)
class HotBang:
    """Massless state whose Bose factor carries the kernel exponent A (x+y).p"""

    A: float
    mass: float = 0.0

    def __post_init__(self):
        A = float(self.A)
        if not math.isfinite(A) or A <= 0:
            raise DomainError(f"Hot-bang parameter A must be positive, got {A}")
        object.__setattr__(self, "A", A)
        if _check_mass(self.mass) != 0.0:
            raise DomainError("Hot-bang states are defined for the massless field only")
        object.__setattr__(self, "mass", 0.0)


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    beta: InverseTemperatureVector

    def __post_init__(self):
        weight = float(self.weight)
        if not math.isfinite(weight) or weight <= 0:
            raise DomainError(f"Mixture weights must be positive, got {weight}")
        object.__setattr__(self, "weight", weight)


@dataclass(frozen=True)
class Mixture:
    components: tuple
    mass: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mass", _check_mass(self.mass))
        components = tuple(self.components)
        if not components:
            raise DomainError("Mixture needs at least one component")
        total = sum(c.weight for c in components)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise DomainError(f"Mixture weights must sum to 1, got {total:.15g}")
        object.__setattr__(self, "components", components)


STATE_TYPES = {
    "vacuum": Vacuum,
    "kms": KMS,
    "hotbang": HotBang,
    "mixture": Mixture,
}

_ALLOWED_KEYS = {
    "vacuum": {"state", "mass"},
    "kms": {"state", "mass", "beta"},
    "hotbang": {"state", "A", "mass"},
    "mixture": {"state", "mass", "components"},
}


def state_kind(spec):
    for name, cls in STATE_TYPES.items():
        if isinstance(spec, cls):
            return name
    raise ConfigError(f"Unknown state object {spec!r}")


# ---------------------------------------------------------
# JSON (de)serialization
# ---------------------------------------------------------

def _number(document, key, default=None):
    if key not in document:
        if default is None:
            raise ConfigError(f"State document is missing '{key}'")
        return default
    value = document[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"State field '{key}' must be a number, got {value!r}")
    return float(value)


def _beta_vector(value):
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ConfigError(f"'beta' must be a list of 4 numbers, got {value!r}")
    try:
        components = [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'beta' must be a list of 4 numbers, got {value!r}") from exc
    return InverseTemperatureVector.from_vector(components)


def state_from_json(document):
    """Build a state from a dict or JSON text; unknown keys are rejected."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"State is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigError("State document must be a JSON object")

    kind = str(document.get("state", "")).lower()
    if kind not in _ALLOWED_KEYS:
        raise ConfigError(f"Unknown state '{document.get('state')}'")
    unknown = set(document) - _ALLOWED_KEYS[kind]
    if unknown:
        raise ConfigError(f"Unknown keys for state '{kind}': {sorted(unknown)}")

    mass = _number(document, "mass", 0.0)

    if kind == "vacuum":
        return Vacuum(mass=mass)

    if kind == "kms":
        if "beta" not in document:
            raise ConfigError("KMS state needs 'beta'")
        return KMS(beta=_beta_vector(document["beta"]), mass=mass)

    if kind == "hotbang":
        return HotBang(A=_number(document, "A"), mass=mass)

    raw = document.get("components")
    if not isinstance(raw, list):
        raise ConfigError("Mixture needs a 'components' list")
    components = []
    for item in raw:
        if not isinstance(item, dict):
            raise ConfigError("Mixture components must be objects")
        extra = set(item) - {"w", "beta"}
        if extra:
            raise ConfigError(f"Unknown keys for mixture component: {sorted(extra)}")
        if "beta" not in item:
            raise ConfigError("Mixture component needs 'beta'")
        components.append(MixtureComponent(_number(item, "w"), _beta_vector(item["beta"])))
    return Mixture(components=tuple(components), mass=mass)


def state_to_json(spec):
    kind = state_kind(spec)
    if kind == "vacuum":
        return {"state": kind, "mass": spec.mass}
    if kind == "kms":
        return {"state": kind, "mass": spec.mass, "beta": spec.beta.to_list()}
    if kind == "hotbang":
        return {"state": kind, "A": spec.A}
    return {
        "state": kind,
        "mass": spec.mass,
        "components": [{"w": c.weight, "beta": c.beta.to_list()} for c in spec.components],
    }


# ---------------------------------------------------------
# Hot-bang temperature field
# ---------------------------------------------------------

def _require_forward(q, what="Base point"):
    if not in_forward_cone(q):
        raise DomainError(f"{what} {q.to_list()} is not in the forward light cone")


def hotbang_kernel_beta(spec, q):
    """Beta vector read off the kernel exponent A (x+y).p at x+y = 2q."""
    _require_forward(q)
    return InverseTemperatureVector.from_vector(2.0 * spec.A * q.as_array())


def hotbang_local_beta(spec, q, config=None):
    """c A q with the factor c resolved once per process by temperature extraction."""
    _require_forward(q)
    from equilibrium_analysis import resolve_hotbang_factor

    factor = resolve_hotbang_factor(config).factor
    return InverseTemperatureVector.from_vector(factor * spec.A * q.as_array())


def thermal_components(spec, q):
    """List of (weight, beta vector or None for the vacuum part)."""
    if isinstance(spec, Vacuum):
        return [(1.0, None)]
    if isinstance(spec, KMS):
        return [(1.0, spec.beta)]
    if isinstance(spec, HotBang):
        return [(1.0, hotbang_kernel_beta(spec, q))]
    if isinstance(spec, Mixture):
        return [(c.weight, c.beta) for c in spec.components]
    raise ConfigError(f"Unknown state object {spec!r}")


def default_direction(spec, q):
    """Strip / time-axis direction used when the caller gives none."""
    betas = [b for _, b in thermal_components(spec, q) if b is not None]
    if betas and all(np.allclose(b.e.as_array(), betas[0].e.as_array()) for b in betas):
        return betas[0].e
    return TimeDirection.rest()


# ---------------------------------------------------------
# Mass-shell density
# ---------------------------------------------------------

def bose_weights(beta_vec, p4):
    """(n_plus, n_minus) at on-shell momenta p4[..., 4], evaluated covariantly at beta.p"""
    x = minkowski_product(beta_vec.as_array(), np.moveaxis(np.asarray(p4, dtype=float), -1, 0))
    with np.errstate(divide="ignore", over="ignore"):
        denominator = -np.expm1(-x)
        n_plus = 1.0 / denominator
        n_minus = np.exp(-x) / denominator
    return n_plus, n_minus


@dataclass(frozen=True)
class OnShellDensity:
    mass: float
    components: tuple

    def weights(self, p_vec):
        """Weights for an array of spatial momenta shaped (..., 3)."""
        p_vec = np.asarray(p_vec, dtype=float)
        omega = np.sqrt(np.sum(p_vec * p_vec, axis=-1) + self.mass ** 2)
        p4 = np.concatenate([omega[..., None], p_vec], axis=-1)
        plus = np.zeros(omega.shape)
        minus = np.zeros(omega.shape)
        for weight, beta in self.components:
            if beta is None:
                plus = plus + weight
                continue
            n_plus, n_minus = bose_weights(beta, p4)
            plus = plus + weight * n_plus
            minus = minus + weight * n_minus
        return plus, minus

    def weight(self, sign, p_vec):
        plus, minus = self.weights(p_vec)
        if sign > 0:
            return float(plus) if np.ndim(plus) == 0 else plus
        return float(minus) if np.ndim(minus) == 0 else minus


def on_shell_density(spec, base_point):
    components = tuple(thermal_components(spec, base_point))
    return OnShellDensity(mass=spec.mass, components=components)


# ---------------------------------------------------------
# Time-axis spectra
# ---------------------------------------------------------

def _log_one_minus_exp(x):
    return np.log(-np.expm1(-x))


def _negative_window(a, b, damping):
    """[log(1-e^-b) - log(1-e^-a)] e^damping for b >= a > 0."""
    out = np.empty_like(a)
    large = a > 30.0
    small = ~large
    out[small] = (_log_one_minus_exp(b[small]) - _log_one_minus_exp(a[small])) * np.exp(damping[small])
    out[large] = np.exp(damping[large] - a[large]) * -np.expm1(-(b[large] - a[large]))
    return out


def component_spectrum(k, mass, beta=None, rapidity=0.0, sigma=0.0):
    """
    Unnormalized time-axis density of one thermal component along a direction
    boosted by `rapidity` relative to its rest frame, times e^(-sigma k).

    Rest frame:  eps(k) sqrt(k^2-m^2) / (1 - e^(-beta k)).
    Boosted:     [L(w2) - L(w1)] / (2 gamma v beta) with the window
                 w1,2 = gamma (|k| -/+ v sqrt(k^2-m^2)), L = log(e^(beta w) - 1)
                 for k > 0 and log(1 - e^(-beta w)) for k < 0.
    beta=None is the vacuum component (positive frequencies only).
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    kappa = np.abs(k)
    p = np.sqrt(np.clip(k * k - mass * mass, 0.0, None))
    out = np.zeros(k.shape)
    pos = k > mass
    neg = k < -mass

    if beta is None:
        out[pos] = p[pos] * np.exp(-sigma * k[pos])
        return out

    velocity = math.tanh(rapidity)
    if velocity <= VELOCITY_FLOOR:
        x = beta * kappa
        out[pos] = p[pos] * np.exp(-sigma * k[pos]) / -np.expm1(-x[pos])
        out[neg] = p[neg] * np.exp(-(beta - sigma) * kappa[neg]) / -np.expm1(-x[neg])
        zero_limit = 1.0 / beta
    else:
        gamma = math.cosh(rapidity)
        w1 = gamma * (kappa - velocity * p)
        w2 = gamma * (kappa + velocity * p)
        norm = 2.0 * gamma * velocity * beta
        window = (
            beta * (w2[pos] - w1[pos])
            + _log_one_minus_exp(beta * w2[pos])
            - _log_one_minus_exp(beta * w1[pos])
        )
        out[pos] = window * np.exp(-sigma * k[pos]) / norm
        out[neg] = _negative_window(beta * w1[neg], beta * w2[neg], sigma * kappa[neg]) / norm
        zero_limit = rapidity / (gamma * velocity * beta)

    if mass == 0.0:
        out[k == 0.0] = zero_limit
    return out


def time_axis_spectrum(spec, base_point, k, direction=None):
    """
    u-hat(k) of u(t) = w(t e) with u-hat(k) = (2 pi)^(-1/2) int dt u(t) e^(ikt).

    Along the rest direction of a KMS state this is the closed form
    eps(k) sqrt(k^2-m^2) / (1 - e^(-beta k)) / (2 sqrt(2) pi^(3/2)).
    """
    scalar = np.ndim(k) == 0
    e = direction or default_direction(spec, base_point)
    total = np.zeros(np.atleast_1d(k).shape)
    for weight, beta in thermal_components(spec, base_point):
        if beta is None:
            total += weight * component_spectrum(k, spec.mass)
        else:
            eta = relative_rapidity(beta.e, e)
            total += weight * component_spectrum(k, spec.mass, beta.beta, eta)
    result = (SPECTRAL_NORM * total).astype(complex)
    return complex(result[0]) if scalar else result


def commutator_spectrum(mass, k):
    """E-hat(k) = -i eps(k) Theta(k^2-m^2) sqrt(k^2-m^2) / (2 sqrt(2) pi^(3/2))."""
    mass = _check_mass(mass)
    scalar = np.ndim(k) == 0
    k = np.atleast_1d(np.asarray(k, dtype=float))
    p = np.sqrt(np.clip(k * k - mass * mass, 0.0, None))
    values = -1j * SPECTRAL_NORM * np.sign(k) * np.where(np.abs(k) > mass, p, 0.0)
    return complex(values[0]) if scalar else values
