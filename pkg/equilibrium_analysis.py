# equilibrium_analysis.py
# Verdicts on a state at a point: order-N local thermal equilibrium, the local
# KMS momentum identity with clustering, temperature extraction from the Wick
# square and its second derivatives, and mixed-temperature weight fitting.

import logging
import math
import threading
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import pandas as pd
from scipy.optimize import Bounds, minimize, nnls

from balanced_derivs import MAX_ORDER, WICK_SQUARE_CONSTANT, taylor_tensor, thermal_function
from correlators import clustering_ratio, get_profile, midstrip_defect, sampled_time_spectrum
from errors import (
    DomainError,
    ExtractionError,
    MixtureFitError,
    NoTemperatureError,
    UnsupportedError,
)
from minkowski import (
    METRIC,
    FourVector,
    InverseTemperatureVector,
    TimeDirection,
    minkowski_product,
)
from spectral_kernels import KMS, WEIGHT_SUM_TOL, HotBang, time_axis_spectrum

logger = logging.getLogger(__name__)

# |e^(beta k)| must stay representable with margin
OVERFLOW_GUARD = 25.0
EPS_FLOOR = 1e-300
DEFAULT_K_RANGE = 10.0
MASSLESS_CLUSTERING_BOUND = 1e-4
MASSIVE_CLUSTERING_BOUND = 1e-2
# Gaussian tail mean (in units of beta) for gapped spectra
MASSIVE_CLUSTERING_SMOOTHING = 4.0
DEGENERACY_RTOL = 1e-8
SUM_CONSTRAINT_WEIGHT = 1e3
FACTOR_CHOICES = (1.0, 2.0)


def _check_order(N):
    if not isinstance(N, (int, np.integer)) or not 0 <= N <= MAX_ORDER:
        raise DomainError(f"Order N must be an integer in 0..{MAX_ORDER}, got {N}")


def _check_tol(tol):
    if not tol > 0:
        raise DomainError(f"Tolerance must be positive, got {tol}")


# ---------------------------------------------------------
# LTE check
# ---------------------------------------------------------

@dataclass(frozen=True)
class LTEOrder:
    n: int
    discrepancy: float
    tolerance: float
    passed: bool
    error_estimate: float
    remainder: object  # SymmetricTensor, the R_q jet at order n

    def to_dict(self):
        return {
            "n": self.n,
            "discrepancy": self.discrepancy,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "error_estimate": self.error_estimate,
            "remainder_norm": self.remainder.norm(),
            "remainder": self.remainder.to_dict()["coefficients"],
        }


@dataclass(frozen=True)
class LTEReport:
    order_checked: int
    reference_beta: InverseTemperatureVector
    orders: tuple

    @property
    def passed(self):
        return all(o.passed for o in self.orders)

    @property
    def remainder_norms(self):
        return [o.remainder.norm() for o in self.orders]

    def to_dict(self):
        return {
            "order_checked": self.order_checked,
            "reference_beta": self.reference_beta.to_list(),
            "verdict": "pass" if self.passed else "fail",
            "per_order": [o.to_dict() for o in self.orders],
        }

    def to_frame(self):
        rows = []
        for o in self.orders:
            row = o.to_dict()
            row.pop("remainder")
            rows.append(row)
        return pd.DataFrame(rows)


def check_lte(spec, q, candidate_beta, N, tol, config=None):
    """
    Compare the balanced derivatives of `spec` at q up to order N with those of
    KMS(candidate_beta). Order n passes when the difference norm is within
    max(tol, 10 x combined error estimate).
    """
    _check_tol(tol)
    _check_order(N)
    config = config or get_profile()
    reference = KMS(candidate_beta, mass=spec.mass)

    orders = []
    for n in range(N + 1):
        measured = taylor_tensor(spec, q, n, config)
        expected = taylor_tensor(reference, q, n, config)
        remainder = measured.tensor - expected.tensor
        error = measured.error_estimate + expected.error_estimate
        tolerance = max(tol, 10.0 * error)
        discrepancy = remainder.norm()
        orders.append(
            LTEOrder(
                n=n,
                discrepancy=discrepancy,
                tolerance=tolerance,
                passed=discrepancy <= tolerance,
                error_estimate=error,
                remainder=remainder,
            )
        )
        logger.debug("LTE order %d: discrepancy %.3e, tolerance %.3e", n, discrepancy, tolerance)

    report = LTEReport(order_checked=N, reference_beta=candidate_beta, orders=tuple(orders))
    logger.info("LTE check up to order %d: %s", N, "pass" if report.passed else "fail")
    return report


# ---------------------------------------------------------
# LKMS momentum check
# ---------------------------------------------------------

@dataclass(frozen=True)
class LKMSReport:
    k_grid: np.ndarray
    residual_profile: np.ndarray
    max_residual: float
    clustering_metric: float
    tolerance: float
    clustering_bound: float
    method: str
    midstrip_defect: float = None

    @property
    def passed(self):
        return self.max_residual <= self.tolerance and self.clustering_metric <= self.clustering_bound

    def to_dict(self):
        return {
            "method": self.method,
            "k_grid": self.k_grid.tolist(),
            "residual_profile": self.residual_profile.tolist(),
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "clustering_metric": self.clustering_metric,
            "clustering_bound": self.clustering_bound,
            "midstrip_defect": self.midstrip_defect,
            "verdict": "pass" if self.passed else "fail",
        }

    def to_frame(self):
        return pd.DataFrame({"k": self.k_grid, "residual": self.residual_profile})


def _momentum_residual(k, spectrum, beta):
    """|e^(beta k) u(-k) - u(k)| / (|e^(beta k) u(-k)| + |u(k)| + eps) on a grid symmetric about 0."""
    reflected = np.exp(beta * k) * spectrum[::-1]
    return np.abs(reflected - spectrum) / (np.abs(reflected) + np.abs(spectrum) + EPS_FLOOR)


def check_lkms_momentum(
    spec,
    q,
    candidate_beta,
    k_max=None,
    tol=1e-8,
    config=None,
    method="spectral",
    clustering_bound=None,
    k_points=201,
):
    config = config or get_profile()
    _check_tol(tol)
    beta = candidate_beta.beta
    k_max = DEFAULT_K_RANGE / beta if k_max is None else float(k_max)
    if not k_max > 0:
        raise DomainError(f"k_max must be positive, got {k_max}")
    if k_max * beta > OVERFLOW_GUARD:
        raise DomainError(f"k_max * beta = {k_max * beta:.3g} exceeds the overflow guard {OVERFLOW_GUARD}")
    if clustering_bound is None:
        clustering_bound = MASSLESS_CLUSTERING_BOUND if spec.mass == 0.0 else MASSIVE_CLUSTERING_BOUND

    # odd point count keeps k = 0 on the grid and makes k[::-1] == -k
    count = k_points + (1 - k_points % 2)
    k = np.linspace(-k_max, k_max, count)

    if method == "spectral":
        spectrum = time_axis_spectrum(spec, q, k, direction=candidate_beta.e)
    elif method == "sampled":
        sampled = sampled_time_spectrum(spec, q, 0.5 * beta, k, candidate_beta, config)
        spectrum = np.exp(0.5 * beta * k) * sampled.values
    else:
        raise DomainError(f"Unknown LKMS method '{method}' (choose spectral or sampled)")

    residual = _momentum_residual(k, np.asarray(spectrum, dtype=complex), beta)
    smoothing = None if spec.mass == 0.0 else MASSIVE_CLUSTERING_SMOOTHING
    clustering = clustering_ratio(spec, q, candidate_beta, config, smoothing=smoothing)
    try:
        defect = midstrip_defect(spec, q, candidate_beta, config=config)
    except DomainError:
        defect = None

    report = LKMSReport(
        k_grid=k,
        residual_profile=residual,
        max_residual=float(np.max(residual)),
        clustering_metric=float(clustering),
        tolerance=tol,
        clustering_bound=clustering_bound,
        method=method,
        midstrip_defect=defect,
    )
    logger.info(
        "LKMS (%s): max residual %.3e, clustering %.3e -> %s",
        method,
        report.max_residual,
        report.clustering_metric,
        "pass" if report.passed else "fail",
    )
    return report


# ---------------------------------------------------------
# Temperature extraction
# ---------------------------------------------------------

@dataclass(frozen=True)
class ExtractionResult:
    beta_vec: InverseTemperatureVector
    fit_residual: float
    wick_square: float
    eigenvalues: tuple
    method_trace: tuple
    degenerate: bool = False
    tolerance: float = None

    @property
    def consistent(self):
        return self.tolerance is None or self.fit_residual <= self.tolerance

    def to_dict(self):
        return {
            "beta_vec": self.beta_vec.to_list(),
            "beta": self.beta_vec.beta,
            "fit_residual": self.fit_residual,
            "wick_square": self.wick_square,
            "eigenvalues": list(self.eigenvalues),
            "method_trace": list(self.method_trace),
            "degenerate": self.degenerate,
            "consistent": self.consistent,
        }

    def to_frame(self):
        row = self.to_dict()
        row["beta_vec"] = ",".join(f"{v:.12g}" for v in self.beta_vec.to_list())
        row["eigenvalues"] = ",".join(f"{v:.12g}" for v in self.eigenvalues)
        row["method_trace"] = ";".join(self.method_trace)
        return pd.DataFrame([row])


def _timelike_direction(tensor):
    """Eigen-direction of T^mu_nu with timelike causal class, future oriented."""
    mixed = METRIC @ tensor.to_array()
    values, vectors = np.linalg.eig(mixed)
    scale = max(float(np.max(np.abs(values))), 1e-300)

    found = []
    for i in range(4):
        if abs(values[i].imag) > 1e-10 * scale:
            continue
        v = np.real(vectors[:, i])
        if minkowski_product(v, v) > 1e-12 * float(v @ v):
            found.append((float(values[i].real), v if v[0] > 0 else -v))
    if not found:
        raise ExtractionError("Order-2 tensor has no timelike eigen-direction")

    # prefer the candidate closest to the rest direction
    value, vector = max(found, key=lambda item: abs(item[1][0]) / np.linalg.norm(item[1]))
    others = [float(w.real) for w in values]
    others.remove(min(others, key=lambda w: abs(w - value)))
    degenerate = any(abs(w - value) <= DEGENERACY_RTOL * scale for w in others)
    eigenvalues = tuple(sorted(float(w.real) for w in values))
    return vector, degenerate, eigenvalues


def extract_temperature(spec, q, tol=1e-5, config=None):
    """
    Massless states only: |beta| from D(0) = 1/(12 beta^2) and the direction from
    the timelike eigenvector of the order-2 balanced derivative.
    """
    config = config or get_profile()
    if spec.mass != 0.0:
        raise UnsupportedError("Temperature extraction needs the massless thermal functions")

    wick = taylor_tensor(spec, q, 0, config).tensor.value
    if not wick > 0:
        raise NoTemperatureError(f"Wick square {wick:.3e} is not positive; no finite temperature")
    magnitude = 1.0 / math.sqrt(wick / WICK_SQUARE_CONSTANT)

    second = taylor_tensor(spec, q, 2, config).tensor
    vector, degenerate, eigenvalues = _timelike_direction(second)
    trace = ["order-0 scalar", "order-2 eigen-direction"]
    if degenerate:
        logger.warning("Order-2 eigenvalues are degenerate; falling back to the rest direction")
        direction = TimeDirection.rest()
        trace.append("degenerate: rest-direction fallback")
    else:
        direction = TimeDirection(FourVector.from_array(vector))

    beta_vec = InverseTemperatureVector(magnitude, direction)
    synthesized = thermal_function(2, beta_vec, config=config)
    residual = (second - synthesized).norm() / second.norm()

    logger.info("Extracted beta = %s (fit residual %.2e)", np.round(beta_vec.to_list(), 10).tolist(), residual)
    return ExtractionResult(
        beta_vec=beta_vec,
        fit_residual=float(residual),
        wick_square=float(wick),
        eigenvalues=eigenvalues,
        method_trace=tuple(trace),
        degenerate=degenerate,
        tolerance=tol,
    )


# ---------------------------------------------------------
# Hot-bang factor
# ---------------------------------------------------------

@dataclass(frozen=True)
class HotBangFactor:
    factor: float
    ratio: float

    def to_dict(self):
        return {"factor": self.factor, "ratio": self.ratio}


_FACTOR_LOCK = threading.Lock()


@lru_cache(maxsize=None)
def _resolve_factor(config):
    q = FourVector(1.0, 0.0, 0.0, 0.0)
    spec = HotBang(A=1.0)
    extracted = extract_temperature(spec, q, config=config)
    ratio = extracted.beta_vec.beta / (spec.A * math.sqrt(minkowski_product(q, q)))
    factor = min(FACTOR_CHOICES, key=lambda c: abs(c - ratio))
    logger.info("Resolved hot-bang factor c = %g (measured ratio %.10g)", factor, ratio)
    return HotBangFactor(factor=factor, ratio=ratio)


def resolve_hotbang_factor(config=None):
    config = config or get_profile()
    with _FACTOR_LOCK:
        return _resolve_factor(config)


# ---------------------------------------------------------
# Mixture fitting
# ---------------------------------------------------------

@dataclass(frozen=True)
class MixtureFit:
    weights: tuple
    residual: float
    tolerance: float
    candidates: tuple
    orders: tuple
    method: str = "nnls"

    def __iter__(self):
        # (weights, residual) unpacking
        return iter((list(self.weights), self.residual))

    @property
    def passed(self):
        return self.residual <= self.tolerance

    def to_dict(self):
        return {
            "weights": list(self.weights),
            "candidates": [b.to_list() for b in self.candidates],
            "residual": self.residual,
            "tolerance": self.tolerance,
            "orders": list(self.orders),
            "method": self.method,
            "verdict": "pass" if self.passed else "fail",
        }

    def to_frame(self):
        return pd.DataFrame(
            {
                "beta_vec": [",".join(f"{v:.12g}" for v in b.to_list()) for b in self.candidates],
                "weight": list(self.weights),
            }
        )


@dataclass
class _Blocks:
    """Per-order rows of the stacked system, each normalized to unit scale."""

    rows: list = field(default_factory=list)
    targets: list = field(default_factory=list)
    noise: float = 0.0
    orders: list = field(default_factory=list)


def _stack(spec, q, candidates, N, config):
    blocks = _Blocks()
    for n in range(N + 1):
        target = taylor_tensor(spec, q, n, config)
        columns = [taylor_tensor(KMS(b, mass=spec.mass), q, n, config) for b in candidates]
        errors = target.error_estimate + sum(c.error_estimate for c in columns)
        b_vec = np.atleast_1d(target.tensor.to_array()).ravel()
        matrix = np.stack([np.atleast_1d(c.tensor.to_array()).ravel() for c in columns], axis=1)

        scale = float(np.linalg.norm(b_vec))
        if scale == 0.0:
            scale = float(np.max(np.linalg.norm(matrix, axis=0)))
        if scale <= 10.0 * errors:
            # pure noise (odd orders of even correlators)
            logger.debug("fit_mixture: skipping order %d (scale %.2e)", n, scale)
            continue
        blocks.rows.append(matrix / scale)
        blocks.targets.append(b_vec / scale)
        blocks.noise += errors / scale
        blocks.orders.append(n)
    return blocks


def _candidate_vectors(candidate_betas, caller):
    candidates = tuple(
        b if isinstance(b, InverseTemperatureVector) else InverseTemperatureVector.from_vector(b)
        for b in candidate_betas
    )
    if not candidates:
        raise DomainError(f"{caller} needs at least one candidate beta vector")
    return candidates


def _simplex_weights(A, b):
    """Non-negative w with sum 1 minimizing |A w - b|: nnls on an augmented system, SLSQP as fallback."""
    m = A.shape[1]

    def residual_of(w):
        return float(np.linalg.norm(A @ w - b))

    augmented = np.vstack([A, SUM_CONSTRAINT_WEIGHT * np.ones((1, m))])
    rhs = np.concatenate([b, [SUM_CONSTRAINT_WEIGHT]])
    try:
        w, _ = nnls(augmented, rhs)
        if w.sum() > 0:
            return w / w.sum(), "nnls"
    except RuntimeError as exc:
        logger.warning("nnls failed (%s); retrying with SLSQP", exc)

    result = minimize(
        lambda w: residual_of(w) ** 2,
        np.full(m, 1.0 / m),
        method="SLSQP",
        bounds=Bounds(0.0, 1.0),
        constraints=[{"type": "eq", "fun": lambda w: np.sum(w) - 1.0}],
    )
    if not result.success:
        raise MixtureFitError(
            f"Mixture fit did not converge: {result.message}",
            weights=result.x.tolist(),
            residual=residual_of(result.x),
        )
    weights = np.clip(result.x, 0.0, None)
    return weights / weights.sum(), "slsqp"


def fit_mixture(spec, q, candidate_betas, N, config=None):
    """
    Non-negative weights with sum 1 that best synthesize the balanced derivatives
    of `spec` up to order N from KMS states at the candidate beta vectors.
    """
    config = config or get_profile()
    _check_order(N)
    candidates = _candidate_vectors(candidate_betas, "fit_mixture")

    blocks = _stack(spec, q, candidates, N, config)
    if not blocks.rows:
        raise DomainError("No balanced derivative above noise level to fit against")
    A = np.vstack(blocks.rows)
    b = np.concatenate(blocks.targets)
    weights, method = _simplex_weights(A, b)

    fit = MixtureFit(
        weights=tuple(float(w) for w in weights),
        residual=float(np.linalg.norm(A @ weights - b)),
        tolerance=max(1e-6, 10.0 * blocks.noise),
        candidates=candidates,
        orders=tuple(blocks.orders),
        method=method,
    )
    logger.info("fit_mixture (%s): weights %s, residual %.3e", method, np.round(weights, 8).tolist(), fit.residual)
    return fit


# ---------------------------------------------------------
# Mixed-temperature LKMS
# ---------------------------------------------------------

@dataclass(frozen=True)
class MixedLKMSReport:
    k_grid: np.ndarray
    residual_profile: np.ndarray
    max_residual: float
    weights: tuple
    candidates: tuple
    tolerance: float
    clustering_metric: float
    clustering_bound: float
    method: str

    @property
    def passed(self):
        return self.max_residual <= self.tolerance and self.clustering_metric <= self.clustering_bound

    def to_dict(self):
        return {
            "method": self.method,
            "weights": list(self.weights),
            "candidates": [b.to_list() for b in self.candidates],
            "k_grid": self.k_grid.tolist(),
            "residual_profile": self.residual_profile.tolist(),
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "clustering_metric": self.clustering_metric,
            "clustering_bound": self.clustering_bound,
            "verdict": "pass" if self.passed else "fail",
        }

    def to_frame(self):
        return pd.DataFrame({"k": self.k_grid, "residual": self.residual_profile})


def _given_weights(weights, count):
    w = np.asarray(weights, dtype=float)
    if w.shape != (count,):
        raise DomainError(f"Expected {count} weights, got {w.shape[0] if w.ndim else 1}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DomainError(f"Weights must be finite and non-negative, got {w.tolist()}")
    if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise DomainError(f"Weights must sum to 1, got {w.sum():.15g}")
    return w


def check_mixed_lkms(
    spec,
    q,
    candidate_betas,
    weights=None,
    k_max=None,
    tol=1e-8,
    config=None,
    k_points=201,
    direction=None,
    clustering_bound=None,
):
    """
    Time-axis spectrum of `spec` against sum_i w_i u-hat_{beta_i}(k), the
    momentum form of a mixed-temperature KMS state. Weights are fitted on the
    simplex when not given.
    """
    config = config or get_profile()
    _check_tol(tol)
    candidates = _candidate_vectors(candidate_betas, "check_mixed_lkms")
    e = direction or candidates[0].e
    hottest = min(candidates, key=lambda b: b.beta)
    k_max = DEFAULT_K_RANGE / hottest.beta if k_max is None else float(k_max)
    if not k_max > 0:
        raise DomainError(f"k_max must be positive, got {k_max}")
    if clustering_bound is None:
        clustering_bound = MASSLESS_CLUSTERING_BOUND if spec.mass == 0.0 else MASSIVE_CLUSTERING_BOUND

    k = np.linspace(-k_max, k_max, k_points)
    spectrum = np.real(time_axis_spectrum(spec, q, k, direction=e))
    columns = np.stack(
        [np.real(time_axis_spectrum(KMS(b, mass=spec.mass), q, k, direction=e)) for b in candidates], axis=1
    )

    if weights is None:
        scale = float(np.max(np.abs(spectrum))) or 1.0
        w, method = _simplex_weights(columns / scale, spectrum / scale)
    else:
        w, method = _given_weights(weights, len(candidates)), "given"

    synthesized = columns @ w
    residual = np.abs(spectrum - synthesized) / (np.abs(spectrum) + np.abs(synthesized) + EPS_FLOOR)
    smoothing = None if spec.mass == 0.0 else MASSIVE_CLUSTERING_SMOOTHING
    clustering = clustering_ratio(spec, q, InverseTemperatureVector(hottest.beta, e), config, smoothing=smoothing)

    report = MixedLKMSReport(
        k_grid=k,
        residual_profile=residual,
        max_residual=float(np.max(residual)),
        weights=tuple(float(x) for x in w),
        candidates=candidates,
        tolerance=tol,
        clustering_metric=float(clustering),
        clustering_bound=clustering_bound,
        method=method,
    )
    logger.info(
        "Mixed LKMS (%s): weights %s, max residual %.3e -> %s",
        method,
        np.round(w, 8).tolist(),
        report.max_residual,
        "pass" if report.passed else "fail",
    )
    return report
