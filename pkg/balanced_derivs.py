# balanced_derivs.py
# Vacuum-subtracted two-point function D_q(z) = w_q(z) - w_vac(z), its Taylor
# tensors at z = 0 (balanced derivatives of the Wick square) and the massless
# thermal functions c_n d^n (beta^2)^-1.

import logging
import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from correlators import choose_panel_width, get_profile, panel_quadrature
from errors import ConvergenceError, DomainError, UnsupportedError
from minkowski import (
    METRIC,
    FourVector,
    InverseTemperatureVector,
    SymmetricTensor,
    boost_to_rest_frame,
    in_forward_cone,
    multi_indices,
    polarization_reconstruct,
)
from spectral_kernels import KMS, HotBang, thermal_components

logger = logging.getLogger(__name__)

MAX_ORDER = 4
WICK_SQUARE_CONSTANT = 1.0 / 12.0

# central stencils (offsets, weights); every one has an error series in h^2
STENCILS = {
    0: ((0,), (1.0,)),
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}


# ---------------------------------------------------------
# Regularized difference
# ---------------------------------------------------------

def _difference_component(z, beta, mass, config):
    """(1/2pi^2) int dp p^2/w n_minus(beta w) cos(w t') sinc(p r') in the rest frame of beta"""
    local = boost_to_rest_frame(beta.e) @ z
    t = float(local[0])
    r = float(np.linalg.norm(local[1:]))
    b = beta.beta

    upper = config.k_max_beta / b
    scales = [2.0 * math.pi / b, upper / 16.0]
    if mass > 0:
        scales.append(mass)
    width = choose_panel_width(config, max(abs(t), r), scales)

    def integrand(p):
        omega = np.sqrt(p * p + mass * mass) if mass > 0 else p
        n_minus = np.exp(-b * omega) / -np.expm1(-b * omega)
        return (p * p / omega) * n_minus * np.cos(omega * t) * np.sinc(p * r / math.pi) / (2.0 * math.pi ** 2)

    value, error = panel_quadrature(integrand, 0.0, upper, width, config.nodes)
    tail = abs(integrand(np.array([upper]))[0]) / b
    return float(value), float(error) + tail


def _difference(components, mass, z, config):
    value, error = 0.0, 0.0
    for weight, beta in components:
        if beta is None:
            continue
        v, err = _difference_component(z, beta, mass, config)
        value += weight * v
        error += weight * err
    return value, error


def _check_hotbang_domain(spec, q, z):
    if isinstance(spec, HotBang):
        half = 0.5 * z.as_array()
        for point in (q.as_array() + half, q.as_array() - half):
            if not in_forward_cone(point):
                raise DomainError(f"Relative coordinate {z.to_list()} leaves the forward cone around q")


def regularized_difference(spec, q, z, config=None):
    config = config or get_profile()
    _check_hotbang_domain(spec, q, z)
    value, _ = _difference(thermal_components(spec, q), spec.mass, z.as_array(), config)
    return value


# ---------------------------------------------------------
# Richardson-extrapolated directional derivatives
# ---------------------------------------------------------

def richardson_derivative(func, order, step, levels, noise=0.0):
    """
    n-th derivative of func at 0 from central differences with steps h, h/2, ...
    extrapolated in h^2. Returns the tableau entry with the smallest error estimate
    plus the propagated sample noise of its row, stopping once errors grow.
    """
    if order not in STENCILS:
        raise DomainError(f"Derivative order must be 0..{MAX_ORDER}, got {order}")
    offsets, weights = STENCILS[order]
    if order == 0:
        return func(0.0), noise

    samples = {}

    def sample(x):
        if x not in samples:
            samples[x] = func(x)
        return samples[x]

    amplification = sum(abs(w) for w in weights)
    table = []
    best, best_error = None, math.inf
    for i in range(levels):
        h = step / 2 ** i
        row = [sum(w * sample(o * h) for o, w in zip(offsets, weights)) / h ** order]
        floor = amplification * noise / h ** order
        for k in range(1, i + 1):
            factor = 4.0 ** k
            row.append(row[k - 1] + (row[k - 1] - table[i - 1][k - 1]) / (factor - 1.0))
            error = max(abs(row[k] - row[k - 1]), abs(row[k] - table[i - 1][k - 1])) + floor
            if error <= best_error:
                best, best_error = row[k], error
        table.append(row)
        if i > 0 and abs(row[i] - table[i - 1][i - 1]) >= 2.0 * best_error:
            break

    if best is None:
        return table[0][0], math.inf
    return best, best_error


# ---------------------------------------------------------
# Taylor tensors
# ---------------------------------------------------------

@dataclass(frozen=True)
class BalancedDerivative:
    order: int
    tensor: SymmetricTensor
    error_estimate: float

    def to_dict(self):
        return {"order": self.order, "error_estimate": self.error_estimate, **self.tensor.to_dict()}


def _beta_scale(components):
    """Shortest distance to the complex singularities of D along a unit Euclidean direction."""
    scales = [
        beta.beta / (beta.e.e.t + float(np.linalg.norm(beta.e.e.spatial)))
        for _, beta in components
        if beta is not None
    ]
    return min(scales) if scales else 1.0


def taylor_tensor(spec, q, order, config=None):
    config = config or get_profile()
    if not 0 <= order <= MAX_ORDER:
        raise DomainError(f"Balanced derivatives are limited to order <= {MAX_ORDER}, got {order}")

    components = thermal_components(spec, q)
    scale = _beta_scale(components)
    step = config.diff_step * scale
    if isinstance(spec, HotBang):
        # stencils reach |z| <= 2h, so q +- z/2 must stay inside V+ on a ball of radius h
        if (q.t - float(np.linalg.norm(q.spatial))) / math.sqrt(2.0) <= step:
            raise DomainError(f"Base point {q.to_list()} is too close to the light cone for differentiation")

    cache = {}

    def D(z):
        key = tuple(np.round(z, 15))
        if key not in cache:
            cache[key] = _difference(components, spec.mass, z, config)
        return cache[key][0]

    origin, origin_error = _difference(components, spec.mass, np.zeros(4), config)
    noise = max(origin_error, 1e-15 * abs(origin))

    if order == 0:
        return BalancedDerivative(0, SymmetricTensor.scalar(origin), origin_error)

    diagonal_errors = []

    def diag(v):
        arr = v.as_array()
        length = float(np.linalg.norm(arr))
        unit = arr / length
        value, error = richardson_derivative(
            lambda s: D(s * unit), order, step, config.richardson_levels, noise
        )
        diagonal_errors.append(error * length ** order)
        return value * length ** order

    tensor = polarization_reconstruct(diag, order)
    error = (2 ** order - 1) / math.factorial(order) * max(diagonal_errors)

    limit = 1e-2 * abs(origin) / scale ** order
    if not math.isfinite(error) or error > limit:
        raise ConvergenceError(
            f"Order-{order} extrapolation did not converge (estimate {error:.3e})", estimate=error
        )
    logger.debug("taylor_tensor order %d: %d samples, error %.2e", order, len(cache), error)
    return BalancedDerivative(order, tensor, error)


# ---------------------------------------------------------
# Thermal functions
# ---------------------------------------------------------

def beta_derivative_tensor(order, beta_vec):
    """
    d^n (beta^2)^-1 with respect to the contravariant beta^mu.

    Faa di Bruno over Q = beta.beta: a sum over matchings of the n slots into
    singles (2 beta_mu) and pairs (2 eta_mu_nu), weighted by f^(blocks)(Q) with
    f(Q) = 1/Q, f^(m)(Q) = (-1)^m m! Q^(-1-m).
    """
    upper = beta_vec.as_array()
    lower = METRIC @ upper
    square = float(upper @ lower)

    def f(m):
        return (-1) ** m * math.factorial(m) * square ** (-1 - m)

    def walk(slots, blocks, product):
        if not slots:
            return f(blocks) * product
        first, rest = slots[0], slots[1:]
        total = walk(rest, blocks + 1, product * 2.0 * lower[first])
        for j, other in enumerate(rest):
            total += walk(rest[:j] + rest[j + 1:], blocks + 1, product * 2.0 * METRIC[first, other])
        return total

    return SymmetricTensor(order, {index: walk(index, 0, 1.0) for index in multi_indices(order)})


@dataclass(frozen=True)
class Calibration:
    order: int
    constant: float
    residual: float

    def to_dict(self):
        return {"order": self.order, "c_n": self.constant, "residual": self.residual}


_CALIBRATION_LOCK = threading.Lock()


@lru_cache(maxsize=None)
def _calibrate_order(config, n):
    rest = InverseTemperatureVector(1.0)
    measured = taylor_tensor(KMS(rest), FourVector(1.0, 0.0, 0.0, 0.0), n, config)
    if n == 0:
        value = measured.tensor.value
        return Calibration(0, WICK_SQUARE_CONSTANT, abs(value - WICK_SQUARE_CONSTANT))
    if n % 2:
        return Calibration(n, 0.0, measured.tensor.norm())
    oracle = beta_derivative_tensor(n, rest)
    time_index = (0,) * n
    constant = measured.tensor[time_index] / oracle[time_index]
    spread = (measured.tensor - oracle.scale(constant)).norm() / measured.tensor.norm()
    logger.info("Calibrated c_%d = %.12g (residual %.2e, profile %s)", n, constant, spread, config.name)
    return Calibration(n, constant, spread)


def thermal_constant(order, config=None):
    """c_n for one order, computed once per process and quadrature profile."""
    if not 0 <= order <= MAX_ORDER:
        raise DomainError(f"Thermal constants are limited to order <= {MAX_ORDER}, got {order}")
    config = config or get_profile()
    with _CALIBRATION_LOCK:
        return _calibrate_order(config, order)


def calibrate_thermal_constants(config=None, orders=None):
    orders = range(MAX_ORDER + 1) if orders is None else orders
    return tuple(thermal_constant(n, config) for n in orders)


def thermal_function(order, beta_vec, mass=0.0, config=None):
    if not 0 <= order <= MAX_ORDER:
        raise DomainError(f"Thermal functions are limited to order <= {MAX_ORDER}, got {order}")
    if mass > 0:
        raise UnsupportedError("Thermal functions of the massive field carry a renormalization ambiguity")
    if order % 2:
        return SymmetricTensor.zeros(order)
    constant = thermal_constant(order, config).constant
    return beta_derivative_tensor(order, beta_vec).scale(constant)
