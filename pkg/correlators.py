# correlators.py
# Position-space two-point functions: holomorphic strip values, smeared boundary
# values, the time-axis restriction and the independent image-sum oracle.
#
# Convention: F(z, sigma) is the two-point function continued to z - i sigma e,
# where the positive-frequency branch is damped by e^(-sigma p.e) and the
# negative one by n_minus e^(+sigma p.e). F(z, beta - sigma) -> w(-z) as sigma -> 0+.

import logging
import math
import os
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermeval
from numpy.polynomial.legendre import leggauss
from scipy.special import polygamma

from errors import ConfigError, ConvergenceError, DomainError, SingularityError
from minkowski import (
    CausalClass,
    FourVector,
    InverseTemperatureVector,
    TimeDirection,
    boost_to_rest_frame,
    classify,
    minkowski_product,
    relative_rapidity,
)
from spectral_kernels import (
    SPECTRAL_NORM,
    component_spectrum,
    default_direction,
    on_shell_density,
    thermal_components,
)

logger = logging.getLogger(__name__)

FOUR_PI_SQ = 4.0 * math.pi ** 2
PROFILE_ENV = "THERMALFIELD_PROFILE"
DEFAULT_PROFILE = "default"


# ---------------------------------------------------------
# Quadrature configuration
# ---------------------------------------------------------

@dataclass(frozen=True)
class QuadratureConfig:
    k_max_beta: float = 40.0       # radial cutoff times the slowest damping rate
    nodes: int = 16                # Gauss-Legendre nodes per panel
    panel_width: float = 0.5       # panel width in units of the nearest singularity distance
    series_terms: int = 200        # image-sum truncation M
    diff_step: float = 0.05        # base finite-difference step in units of beta
    richardson_levels: int = 4
    tolerance: float = 1e-8
    angular_nodes: int = 32
    name: str = "custom"

    def __post_init__(self):
        if self.nodes < 4 or self.angular_nodes < 4:
            raise ConfigError("Quadrature needs at least 4 nodes per panel")
        if self.richardson_levels < 1 or self.series_terms < 1:
            raise ConfigError("Richardson levels and series terms must be positive")
        if self.tolerance <= 0 or self.diff_step <= 0 or self.panel_width <= 0:
            raise ConfigError("Tolerance, step and panel width must be positive")
        if self.tolerance <= 1e-8 and self.k_max_beta < 30:
            raise ConfigError("Cutoff K_max*beta must be at least 30 for tolerances <= 1e-8")

    def to_dict(self):
        return asdict(self)


PROFILES = {
    "fast": QuadratureConfig(30.0, 8, 0.75, 50, 0.05, 3, 1e-4, 16, "fast"),
    "default": QuadratureConfig(40.0, 16, 0.5, 200, 0.05, 4, 1e-8, 32, "default"),
    "strict": QuadratureConfig(45.0, 24, 0.25, 400, 0.05, 5, 1e-10, 48, "strict"),
}


def get_profile(name=None):
    name = name or os.environ.get(PROFILE_ENV) or DEFAULT_PROFILE
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigError(f"Unknown quadrature profile '{name}' (choose from {sorted(PROFILES)})") from None


# ---------------------------------------------------------
# Panel Gauss-Legendre quadrature
# ---------------------------------------------------------

@lru_cache(maxsize=None)
def _gauss_legendre(nodes):
    return leggauss(nodes)


def panel_quadrature(func, lower, upper, width, nodes):
    """
    Composite Gauss-Legendre rule on equal panels of at most `width`.
    `func` maps a 1-D array of abscissae to values shaped (n, ...).
    The error estimate is the summed panelwise difference to the half-node rule.
    """
    if upper <= lower:
        return 0.0, 0.0
    count = max(1, int(math.ceil((upper - lower) / width)))
    edges = np.linspace(lower, upper, count + 1)
    centre = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)

    def rule(n):
        x, w = _gauss_legendre(n)
        points = centre[:, None] + half[:, None] * x[None, :]
        values = np.asarray(func(points.ravel()))
        values = values.reshape(points.shape + values.shape[1:])
        panels = np.tensordot(w, values, axes=([0], [1]))
        return panels * half.reshape((-1,) + (1,) * (panels.ndim - 1))

    fine = rule(nodes)
    coarse = rule(max(2, nodes // 2))
    logger.debug("panel_quadrature: %d panels on [%g, %g]", count, lower, upper)
    return fine.sum(axis=0), np.abs(fine - coarse).sum(axis=0)


def choose_panel_width(config, frequency, scales):
    width = config.panel_width * min(scales)
    if frequency > 0:
        width = min(width, math.pi / (2.0 * frequency))
    return width


def _check_converged(value, error, config, what):
    scale = max(1.0, float(np.max(np.abs(value))))
    worst = float(np.max(error))
    if not math.isfinite(worst) or worst > config.tolerance * scale:
        raise ConvergenceError(
            f"{what}: quadrature error {worst:.3e} above tolerance {config.tolerance:.1e}",
            estimate=worst,
        )


# ---------------------------------------------------------
# Strip points and values
# ---------------------------------------------------------

@dataclass(frozen=True)
class StripPoint:
    z: FourVector
    sigma: float
    beta_vec: InverseTemperatureVector

    def __post_init__(self):
        sigma = float(self.sigma)
        if not 0.0 < sigma < self.beta_vec.beta:
            raise DomainError(f"sigma={sigma} must lie strictly inside (0, {self.beta_vec.beta})")
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True)
class StripValue:
    value: complex
    error: float


def _strip_component(zeta, beta, mass, config):
    """
    One thermal component in its rest frame:
    (1/4pi^2) int dp p^2/w [n+ e^(-i w z0) + n- e^(i w z0)] sinc(p rho).
    """
    if beta is None:
        local = zeta
        inverse_temperature = math.inf
    else:
        local = boost_to_rest_frame(beta.e) @ zeta
        inverse_temperature = beta.beta

    zeta0 = complex(local[0])
    rho = complex(np.sqrt(local[1] ** 2 + local[2] ** 2 + local[3] ** 2 + 0j))
    rate_plus = -zeta0.imag - abs(rho.imag)
    rate_minus = inverse_temperature + zeta0.imag - abs(rho.imag)
    rate = min(rate_plus, rate_minus)
    if rate <= 0:
        raise DomainError("Point lies outside the analyticity strip of the state")

    upper = config.k_max_beta / rate
    scales = [upper / 16.0]
    if beta is not None:
        scales.append(2.0 * math.pi / inverse_temperature)
    if mass > 0:
        scales.append(mass)
    width = choose_panel_width(config, max(abs(zeta0), abs(rho)), scales)
    split_sinc = upper * abs(rho.imag) > 600.0

    def branch(p, exponent):
        if split_sinc:
            return (np.exp(exponent + 1j * p * rho) - np.exp(exponent - 1j * p * rho)) / (2j * p * rho)
        return np.exp(exponent) * np.sinc(p * rho / math.pi)

    def integrand(p):
        omega = np.sqrt(p * p + mass * mass) if mass > 0 else p
        measure = p * p / omega
        if beta is None:
            total = branch(p, -1j * omega * zeta0)
        else:
            bose = -np.expm1(-inverse_temperature * omega)
            total = (
                branch(p, -1j * omega * zeta0)
                + branch(p, 1j * omega * zeta0 - inverse_temperature * omega)
            ) / bose
        return measure * total / FOUR_PI_SQ

    value, error = panel_quadrature(integrand, 0.0, upper, width, config.nodes)
    tail = abs(integrand(np.array([upper]))[0]) / rate
    return complex(value), float(error) + tail


def eval_strip(spec, q, point, config=None):
    """F_q(z - i sigma e) with its absolute quadrature error."""
    config = config or get_profile()
    zeta = point.z.as_array() - 1j * point.sigma * point.beta_vec.e.as_array()
    value, error = 0j, 0.0
    for weight, beta in thermal_components(spec, q):
        v, err = _strip_component(zeta, beta, spec.mass, config)
        value += weight * v
        error += weight * err
    _check_converged(value, error, config, "eval_strip")
    return StripValue(value=value, error=error)


# ---------------------------------------------------------
# Closed forms and the image-sum oracle
# ---------------------------------------------------------

def _require_regular(z):
    if classify(z) in (CausalClass.ZERO, CausalClass.NULL_FUTURE, CausalClass.NULL_PAST):
        raise SingularityError(f"Boundary value at {z.to_list()} is singular (coincident or light-like)")


def vacuum_massless(z, sigma=0.0, direction=None):
    """-1 / (4 pi^2 (z - i sigma e)^2)"""
    e = (direction or TimeDirection.rest()).as_array()
    if sigma == 0.0:
        _require_regular(z)
    zeta = z.as_array() - 1j * sigma * e
    return complex(-1.0 / (FOUR_PI_SQ * minkowski_product(zeta, zeta)))


def image_sum_massless(beta_vec, z, sigma, terms=None, mass=0.0):
    """
    Sum over imaginary-time images of the massless vacuum function,
    truncated at |n| <= M with the asymptotic tail
    (1/2pi^2 beta^2) [psi_1(M+1) - (3 s^2 + r^2)/beta^2 psi_3(M+1)/6].
    """
    if mass != 0.0:
        raise DomainError("The image sum is only available for the massless field")
    beta = beta_vec.beta
    if not 0.0 <= sigma < beta:
        raise DomainError(f"sigma={sigma} must lie in [0, {beta})")
    if sigma == 0.0:
        _require_regular(z)

    terms = terms or PROFILES[DEFAULT_PROFILE].series_terms
    local = boost_to_rest_frame(beta_vec.e) @ z.as_array()
    s = local[0] - 1j * sigma
    r2 = float(local[1:] @ local[1:])

    n = np.arange(-terms, terms + 1)
    shifted = s - 1j * n * beta
    partial = np.sum(-1.0 / (FOUR_PI_SQ * (shifted * shifted - r2)))
    tail = (
        polygamma(1, terms + 1) - (3.0 * s * s + r2) / beta ** 2 * polygamma(3, terms + 1) / 6.0
    ) / (2.0 * math.pi ** 2 * beta ** 2)
    return complex(partial + tail)


def boundary_value_massless(spec, q, z, config=None):
    """Pointwise sigma = 0 value for massless states away from the light cone."""
    config = config or get_profile()
    if spec.mass != 0.0:
        raise SingularityError("Pointwise boundary values are not available for massive states")
    _require_regular(z)
    total = 0j
    for weight, beta in thermal_components(spec, q):
        if beta is None:
            total += weight * vacuum_massless(z)
        else:
            total += weight * image_sum_massless(beta, z, 0.0, terms=config.series_terms)
    return total


# ---------------------------------------------------------
# Gaussian x polynomial test functions
# ---------------------------------------------------------

@dataclass(frozen=True)
class GaussianTestFunction:
    """h(z) = P(z - c) exp(-|z - c|^2 / 2 s^2), Euclidean norm, P given by monomial powers."""

    center: FourVector
    width: float
    coefficients: dict = field(default_factory=lambda: {(0, 0, 0, 0): 1.0})

    def __post_init__(self):
        if not self.width > 0:
            raise DomainError(f"Test-function width must be positive, got {self.width}")
        for powers in self.coefficients:
            if len(powers) != 4 or any(int(a) < 0 for a in powers):
                raise DomainError(f"Monomial powers {powers} must be 4 non-negative integers")

    def __call__(self, z):
        u = np.asarray(z, dtype=float) - self.center.as_array()
        envelope = np.exp(-np.sum(u * u, axis=-1) / (2.0 * self.width ** 2))
        poly = sum(c * np.prod(u ** np.asarray(p), axis=-1) for p, c in self.coefficients.items())
        return poly * envelope

    def fourier(self, k):
        """H(k) = int d^4z h(z) e^(-i k.z) (Euclidean product), k shaped (..., 4)."""
        k = np.asarray(k, dtype=float)
        s = self.width
        envelope = (math.sqrt(2.0 * math.pi) * s) ** 4 * np.exp(-0.5 * s * s * np.sum(k * k, axis=-1))
        poly = np.zeros(k.shape[:-1], dtype=complex)
        for powers, coeff in self.coefficients.items():
            term = np.full(k.shape[:-1], complex(coeff))
            for axis, a in enumerate(powers):
                if a:
                    unit = [0.0] * a + [1.0]
                    term = term * (-1j * s) ** a * hermeval(s * k[..., axis], unit)
            poly = poly + term
        phase = np.exp(-1j * (k @ self.center.as_array()))
        return envelope * poly * phase

    def reflected(self):
        """h(-z)"""
        flipped = {p: c * (-1) ** sum(p) for p, c in self.coefficients.items()}
        return GaussianTestFunction(center=-self.center, width=self.width, coefficients=flipped)


def _smear(spec, q, h, config, sigma=0.0, direction=None):
    density = on_shell_density(spec, q)
    betas = [b for _, b in density.components if b is not None]
    s = h.width
    reach = 6.5 / s
    frequency = math.sqrt(2.0) * float(np.linalg.norm(h.center.as_array())) + s
    scales = [1.0 / s]
    scales += [2.0 * math.pi / b.beta for b in betas]
    if spec.mass > 0:
        scales.append(spec.mass)
    width = choose_panel_width(config, frequency, scales)

    if sigma:
        e = direction.as_array()
        for b in betas:
            eta = relative_rapidity(b.e, direction)
            if sigma * math.exp(eta) >= b.beta:
                raise DomainError(f"sigma={sigma} leaves the analyticity strip of a component")

    mu, mu_w = _gauss_legendre(config.angular_nodes)
    n_phi = 2 * config.angular_nodes
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    sin_theta = np.sqrt(1.0 - mu * mu)
    unit = np.stack(
        [
            sin_theta[:, None] * np.cos(phi)[None, :],
            sin_theta[:, None] * np.sin(phi)[None, :],
            np.broadcast_to(mu[:, None], (mu.size, n_phi)),
        ],
        axis=-1,
    )
    angular_w = mu_w[:, None] * np.full(n_phi, 2.0 * math.pi / n_phi)[None, :]

    def radial(p):
        p_vec = p[:, None, None, None] * unit[None, :, :, :]
        omega = np.sqrt(p * p + spec.mass ** 2)[:, None, None]
        n_plus, n_minus = density.weights(p_vec)
        if sigma:
            p_dot_e = omega * e[0] - p_vec @ e[1:]
            n_plus = n_plus * np.exp(-sigma * p_dot_e)
            n_minus = n_minus * np.exp(sigma * p_dot_e)
        k_euclid = np.concatenate([np.broadcast_to(omega[..., None], p_vec.shape[:-1] + (1,)), -p_vec], axis=-1)
        values = (n_plus * h.fourier(k_euclid) + n_minus * h.fourier(-k_euclid)) / (2.0 * omega)
        shell = np.sum(values * angular_w[None, :, :], axis=(1, 2))
        return p * p * shell / (2.0 * math.pi) ** 3

    value, error = panel_quadrature(radial, 0.0, reach, width, config.nodes)
    _check_converged(value, error, config, "smeared_boundary")
    return complex(value)


def smeared_boundary(spec, q, h, config=None):
    """w_q(h) through the momentum density against the closed-form transform of h."""
    return _smear(spec, q, h, config or get_profile())


def smeared_strip(spec, q, h, sigma, direction=None, config=None):
    """int d^4z F_q(z - i sigma e) h(z)"""
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    direction = direction or default_direction(spec, q)
    return _smear(spec, q, h, config or get_profile(), sigma=sigma, direction=direction)


# ---------------------------------------------------------
# Time-axis restriction
# ---------------------------------------------------------

def _half_line(func, mass, cutoff, sign, frequency, scales, rate, config):
    """int over sign*k in [m, m + cutoff] of func(k) dk; square-root edge removed by k = m + u^2."""
    if mass == 0.0:
        width = choose_panel_width(config, frequency, scales)
        value, error = panel_quadrature(lambda x: func(sign * x), 0.0, cutoff, width, config.nodes)
        end = func(np.array([sign * cutoff]))
    else:
        top = math.sqrt(cutoff)
        width = choose_panel_width(config, 2.0 * top * frequency, [math.sqrt(s) for s in scales])

        def substituted(u):
            values = func(sign * (mass + u * u))
            return 2.0 * u.reshape((-1,) + (1,) * (np.ndim(values) - 1)) * values

        value, error = panel_quadrature(substituted, 0.0, top, width, config.nodes)
        end = func(np.array([sign * (mass + cutoff)]))
    return value, error + np.abs(end[0]) / rate


def _restriction_rates(spec, q, direction, sigma):
    """Components with their rapidity, negative-side damping rate and pole distance."""
    parts = []
    rate_minus = math.inf
    pole = math.inf
    for weight, beta in thermal_components(spec, q):
        if beta is None:
            parts.append((weight, None, 0.0))
            continue
        eta = relative_rapidity(beta.e, direction)
        parts.append((weight, beta.beta, eta))
        rate_minus = min(rate_minus, beta.beta * math.exp(-eta) - sigma)
        pole = min(pole, 2.0 * math.pi / (beta.beta * math.exp(eta)))
    if rate_minus <= 0:
        raise DomainError(f"sigma={sigma} leaves the analyticity strip along this direction")
    return parts, rate_minus, pole


def _damped_spectrum(parts, mass, sigma):
    def spectrum(k):
        total = np.zeros(np.shape(k))
        for weight, beta, eta in parts:
            total = total + weight * component_spectrum(k, mass, beta, eta, sigma)
        return total
    return spectrum


def time_restriction(spec, q, t, sigma, beta_vec=None, config=None):
    """
    f_q(t - i sigma) = (2 pi)^(-1/2) int dk u-hat(k) e^(-sigma k) e^(-ikt),
    the strip function restricted to z = t e.
    """
    config = config or get_profile()
    if beta_vec is not None:
        if not 0.0 < sigma < beta_vec.beta:
            raise DomainError(f"sigma={sigma} must lie strictly inside (0, {beta_vec.beta})")
        direction = beta_vec.e
    else:
        if not sigma > 0:
            raise DomainError(f"sigma must be positive, got {sigma}")
        direction = default_direction(spec, q)

    parts, rate_minus, pole = _restriction_rates(spec, q, direction, sigma)
    spectrum = _damped_spectrum(parts, spec.mass, sigma)

    def integrand(k):
        # (2 pi)^(-1/2) * SPECTRAL_NORM == 1 / (4 pi^2)
        return spectrum(k) * np.exp(-1j * k * t) / FOUR_PI_SQ

    upper = config.k_max_beta / sigma
    value, error = _half_line(integrand, spec.mass, upper, 1.0, abs(t), [pole, upper / 16.0], sigma, config)
    if math.isfinite(rate_minus):
        lower = config.k_max_beta / rate_minus
        v, err = _half_line(integrand, spec.mass, lower, -1.0, abs(t), [pole, lower / 16.0], rate_minus, config)
        value, error = value + v, error + err

    _check_converged(value, error, config, "time_restriction")
    return StripValue(value=complex(value), error=float(error))


# ---------------------------------------------------------
# Sampled (windowed) spectra
# ---------------------------------------------------------

@dataclass(frozen=True)
class SampledSpectrum:
    k: np.ndarray
    values: np.ndarray
    window: float
    step: float


def sampled_time_spectrum(spec, q, sigma, k, beta_vec, config=None, window=None, step=None):
    """
    Gaussian-windowed trapezoid transform of f(t - i sigma) along beta_vec.e:
    (2 pi)^(-1/2) dt sum_j f(t_j) exp(-t_j^2 / 2 tau^2) e^(i k t_j) on a symmetric grid.
    """
    config = config or get_profile()
    beta = beta_vec.beta
    window = window or 2.0 * beta
    step = step or beta / 16.0
    count = int(math.ceil(8.0 * window / step))
    times = step * np.arange(-count, count + 1)

    samples = np.array([time_restriction(spec, q, t, sigma, beta_vec, config).value for t in times])
    weights = samples * np.exp(-0.5 * (times / window) ** 2)
    k = np.asarray(k, dtype=float)
    phases = np.exp(1j * np.outer(k, times))
    values = step * (phases @ weights) / math.sqrt(2.0 * math.pi)
    logger.info("Sampled %d points of f(t - i%.3g) for the windowed spectrum", times.size, sigma)
    return SampledSpectrum(k=k, values=values, window=window, step=step)


def convolved_spectrum(spec, q, sigma, k, beta_vec, window, config=None):
    """int dk' u-hat(k') e^(-sigma k') G(k - k') with G(x) = tau/sqrt(2 pi) exp(-tau^2 x^2 / 2)."""
    config = config or get_profile()
    k = np.asarray(k, dtype=float)
    parts, rate_minus, pole = _restriction_rates(spec, q, beta_vec.e, sigma)
    spectrum = _damped_spectrum(parts, spec.mass, sigma)
    reach = float(np.max(np.abs(k))) + 12.0 / window

    def integrand(kp):
        kernel = window / math.sqrt(2.0 * math.pi) * np.exp(-0.5 * (window * (k[None, :] - kp[:, None])) ** 2)
        return SPECTRAL_NORM * spectrum(kp)[:, None] * kernel

    scales = [pole, 1.0 / window]
    upper = min(config.k_max_beta / sigma, reach)
    value, _ = _half_line(integrand, spec.mass, upper, 1.0, 0.0, scales, sigma, config)
    if math.isfinite(rate_minus):
        lower = min(config.k_max_beta / rate_minus, reach)
        v, _ = _half_line(integrand, spec.mass, lower, -1.0, 0.0, scales, rate_minus, config)
        value = value + v
    return np.asarray(value, dtype=complex)


# ---------------------------------------------------------
# Clustering and mid-strip evenness
# ---------------------------------------------------------

def clustering_metric(correlator, beta, horizon=20.0, smoothing=None, step=0.25):
    """
    |c(horizon * beta)| / |c(beta)| for a callable t -> w(t e - i sigma e).

    With `smoothing` (a width in units of beta) the far value is a Gaussian
    mean of c around horizon * beta. Oscillating tails above a spectral gap
    average out while a constant offset survives in full.
    """
    near = abs(correlator(beta))
    if smoothing:
        reach = min(4.0 * smoothing, horizon - 1.0)
        offsets = np.arange(-reach, reach + 0.5 * step, step)
        weights = np.exp(-0.5 * (offsets / smoothing) ** 2)
        values = np.array([correlator((horizon + s) * beta) for s in offsets])
        far = abs(np.sum(weights * values) / np.sum(weights))
    else:
        far = abs(correlator(horizon * beta))
    if near == 0.0:
        return math.inf if far else 0.0
    return far / near


def clustering_ratio(spec, q, beta_vec, config=None, horizon=20.0, sigma_fraction=0.01, smoothing=None):
    config = config or get_profile()
    sigma = sigma_fraction * beta_vec.beta

    def correlator(t):
        return time_restriction(spec, q, t, sigma, beta_vec, config).value

    return clustering_metric(correlator, beta_vec.beta, horizon, smoothing)


def midstrip_defect(spec, q, beta_vec, times=None, config=None):
    """max_t |F(t e - i beta/2 e) - F(-t e - i beta/2 e)|"""
    config = config or get_profile()
    half = 0.5 * beta_vec.beta
    times = times if times is not None else half * np.array([1.0, 2.0, 4.0])
    defect = 0.0
    for t in times:
        forward = time_restriction(spec, q, t, half, beta_vec, config).value
        backward = time_restriction(spec, q, -t, half, beta_vec, config).value
        defect = max(defect, abs(forward - backward))
    return defect
