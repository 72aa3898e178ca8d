"""
thermalfield: command-line entry point

Usage:
    python app.py eval --state kms.json --t-range -2,2,11 --r-range 0,2,11 --sigma 0.5
    python app.py check --state '{"state": "kms", "beta": [1, 0, 0, 0]}' --beta 1,0,0,0
    python app.py check --state '{"state": "hotbang", "A": 1}' --extract
    python app.py sweep-hotbang --A 1 --q 1,0,0,0 --q 2,0,0,0 --q 2,1,0,0
    python app.py validate-appendix-b --beta 1 --mass 1
    python app.py calibrate

Exit codes: 0 pass, 1 checked and failed (report still written),
2 bad input, 3 numerical failure.
"""

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from balanced_derivs import MAX_ORDER, thermal_constant
from correlators import (
    StripPoint,
    boundary_value_massless,
    convolved_spectrum,
    eval_strip,
    get_profile,
    sampled_time_spectrum,
)
from equilibrium_analysis import (
    check_lkms_momentum,
    check_lte,
    extract_temperature,
    resolve_hotbang_factor,
)
from errors import ConfigError, ConvergenceError, DomainError, ThermalFieldError
from minkowski import FourVector, InverseTemperatureVector, minkowski_product, relative_rapidity
from spectral_kernels import (
    KMS,
    HotBang,
    default_direction,
    hotbang_local_beta,
    state_from_json,
    state_to_json,
    thermal_components,
    time_axis_spectrum,
)

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

SWEEP_RATIO_RTOL = 1e-3
APPENDIX_K_RANGE = 10.0
APPENDIX_K_POINTS = 81
EVAL_COLUMNS = ["t", "r", "sigma", "re", "im", "err"]


# ---------------------------------------------------------
# Run configuration
# ---------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    command: str
    profile: object  # QuadratureConfig
    state: object = None
    q: FourVector = field(default_factory=lambda: FourVector(1.0, 0.0, 0.0, 0.0))
    beta: InverseTemperatureVector = None
    order: int = 2
    k_max: float = None
    tol: float = 1e-6
    out: str = None
    format: str = None
    extract: bool = False
    which: str = "both"
    method: str = "spectral"
    t_range: tuple = None
    r_range: tuple = None
    sigma: float = None
    mass: float = 0.0
    A: float = None
    q_points: tuple = ()

    def to_dict(self):
        return {
            "command": self.command,
            "state": state_to_json(self.state) if self.state is not None else None,
            "q": self.q.to_list(),
            "beta": self.beta.to_list() if self.beta is not None else None,
            "order": self.order,
            "k_max": self.k_max,
            "tol": self.tol,
            "out": self.out,
            "format": self.format,
            "extract": self.extract,
            "which": self.which,
            "method": self.method,
            "t_range": list(self.t_range) if self.t_range else None,
            "r_range": list(self.r_range) if self.r_range else None,
            "sigma": self.sigma,
            "mass": self.mass,
            "A": self.A,
            "q_points": [p.to_list() for p in self.q_points],
            "profile": self.profile.to_dict(),
        }


def _load_state(text):
    """File path or inline JSON."""
    if text is None:
        return None
    if os.path.isfile(text):
        try:
            with open(text, "r", encoding="utf-8") as f:
                return state_from_json(f.read())
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"Cannot read state file '{text}': {exc}") from exc
    return state_from_json(text)


def _parse_beta(text):
    if text is None:
        return None
    parts = str(text).split(",")
    if len(parts) == 1:
        try:
            return InverseTemperatureVector(float(parts[0]))
        except ValueError as exc:
            raise ConfigError(f"--beta '{text}' is not numeric") from exc
    return InverseTemperatureVector.from_vector(FourVector.from_string(text))


def _parse_range(text, what):
    if text is None:
        return None
    parts = [p.strip() for p in str(text).split(",")]
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"{what} '{text}' must look like start,stop,count") from exc
    if len(parts) != 3 or count < 1:
        raise ConfigError(f"{what} '{text}' must look like start,stop,count with count >= 1")
    return (start, stop, count)


def build_run_config(args):
    q_points = getattr(args, "q_points", None) or ()
    return RunConfig(
        command=args.command,
        profile=get_profile(args.profile),
        state=_load_state(getattr(args, "state", None)),
        q=FourVector.from_string(getattr(args, "q", None) or "1,0,0,0"),
        beta=_parse_beta(getattr(args, "beta", None)),
        order=getattr(args, "order", 2),
        k_max=getattr(args, "kmax", None),
        tol=args.tol,
        out=args.out,
        format=args.format,
        extract=getattr(args, "extract", False),
        which=getattr(args, "which", "both"),
        method=getattr(args, "method", "spectral"),
        t_range=_parse_range(getattr(args, "t_range", None), "--t-range"),
        r_range=_parse_range(getattr(args, "r_range", None), "--r-range"),
        sigma=getattr(args, "sigma", None),
        mass=getattr(args, "mass", 0.0) or 0.0,
        A=getattr(args, "A", None),
        q_points=tuple(FourVector.from_string(p) for p in q_points),
    )


# ---------------------------------------------------------
# Output
# ---------------------------------------------------------

def _emit(config, payload, frame, default_format):
    fmt = config.format or default_format
    if fmt == "csv":
        text = frame.to_csv(index=False, lineterminator="\n")
    else:
        text = json.dumps(payload, indent=4) + "\n"
    if config.out:
        with open(config.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        logger.info("Report written to %s", config.out)
    else:
        sys.stdout.write(text)


def _grid(spec):
    start, stop, count = spec
    return np.linspace(start, stop, count)


# ---------------------------------------------------------
# Commands
# ---------------------------------------------------------

def _strip_frame(spec, q, beta, sigma):
    """Candidate beta if given, else the narrowest strip along the default direction."""
    if beta is not None:
        return beta
    direction = default_direction(spec, q)
    widths = [
        b.beta * math.exp(-relative_rapidity(b.e, direction))
        for _, b in thermal_components(spec, q)
        if b is not None
    ]
    # the vacuum strip is the whole lower half plane
    width = min(widths) if widths else 2.0 * sigma
    return InverseTemperatureVector(width, direction)


def cmd_eval(config):
    if config.state is None:
        raise ConfigError("eval needs --state")
    spec, q = config.state, config.q
    t_values = _grid(config.t_range or (-2.0, 2.0, 11))
    r_values = _grid(config.r_range or (0.0, 2.0, 11))
    sigma = 0.5 if config.sigma is None else float(config.sigma)
    if not math.isfinite(sigma) or sigma < 0:
        raise DomainError(f"--sigma must be finite and non-negative, got {sigma}")
    frame_beta = _strip_frame(spec, q, config.beta, sigma) if sigma > 0 else None

    rows = []
    for t in t_values:
        for r in r_values:
            z = FourVector(float(t), float(r), 0.0, 0.0)
            if sigma == 0.0:
                value, error = boundary_value_massless(spec, q, z, config.profile), 0.0
            else:
                result = eval_strip(spec, q, StripPoint(z, sigma, frame_beta), config.profile)
                value, error = result.value, result.error
            rows.append([float(t), float(r), sigma, value.real, value.imag, error])

    logger.info("eval: %d grid points", len(rows))
    frame = pd.DataFrame(rows, columns=EVAL_COLUMNS)
    payload = {"config": config.to_dict(), "rows": frame.to_dict(orient="records")}
    _emit(config, payload, frame, "csv")
    return EXIT_PASS


def _candidate(config, report):
    spec, q = config.state, config.q
    if config.extract:
        extraction = extract_temperature(spec, q, config.tol, config.profile)
        report["extraction"] = extraction.to_dict()
        return extraction.beta_vec
    if config.beta is not None:
        return config.beta
    if isinstance(spec, HotBang):
        return hotbang_local_beta(spec, q, config.profile)
    raise ConfigError("check needs --beta or --extract")


def cmd_check(config):
    if config.state is None:
        raise ConfigError("check needs --state")
    if config.which not in ("lte", "lkms", "both"):
        raise ConfigError(f"--which must be lte, lkms or both, got {config.which}")
    spec, q = config.state, config.q
    report = {"config": config.to_dict()}
    candidate = _candidate(config, report)
    report["candidate_beta"] = candidate.to_list()
    if isinstance(spec, HotBang):
        report["hotbang_factor"] = resolve_hotbang_factor(config.profile).to_dict()

    verdicts = []
    frames = []
    if config.which in ("lte", "both"):
        lte = check_lte(spec, q, candidate, config.order, config.tol, config.profile)
        report["lte"] = lte.to_dict()
        verdicts.append(lte.passed)
        frames.append(lte.to_frame().assign(check="lte"))
    if config.which in ("lkms", "both"):
        lkms = check_lkms_momentum(
            spec, q, candidate, config.k_max, config.tol, config.profile, method=config.method
        )
        report["lkms"] = lkms.to_dict()
        verdicts.append(lkms.passed)
        frames.append(lkms.to_frame().assign(check="lkms"))

    passed = all(verdicts)
    report["verdict"] = "pass" if passed else "fail"
    _emit(config, report, pd.concat(frames, ignore_index=True), "json")
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_sweep_hotbang(config):
    if not config.q_points:
        raise ConfigError("sweep-hotbang needs at least one --q")
    A = 1.0 if config.A is None else config.A
    spec = HotBang(A=A)
    factor = resolve_hotbang_factor(config.profile)

    rows = []
    for q in config.q_points:
        extracted = extract_temperature(spec, q, config.tol, config.profile)
        beta = extracted.beta_vec
        ratio = beta.beta / (A * math.sqrt(minkowski_product(q, q)))
        rows.append(
            {
                "q": ",".join(f"{v:g}" for v in q.to_list()),
                "beta_0": beta.to_list()[0],
                "beta_1": beta.to_list()[1],
                "beta_2": beta.to_list()[2],
                "beta_3": beta.to_list()[3],
                "beta": beta.beta,
                "ratio": ratio,
                "fit_residual": extracted.fit_residual,
                "factor": factor.factor,
            }
        )

    frame = pd.DataFrame(rows)
    mean = float(frame["ratio"].mean())
    spread = float((frame["ratio"] - mean).abs().max()) / mean
    passed = spread <= SWEEP_RATIO_RTOL
    logger.info("sweep-hotbang: ratio %.10g, relative spread %.2e", mean, spread)
    payload = {
        "config": config.to_dict(),
        "hotbang_factor": factor.to_dict(),
        "ratio_spread": spread,
        "rows": rows,
        "verdict": "pass" if passed else "fail",
    }
    _emit(config, payload, frame, "csv")
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_validate_appendix_b(config):
    """Windowed transform of sampled f(t - i beta/4) against the convolved closed form."""
    beta_vec = config.beta or InverseTemperatureVector(1.0)
    spec = KMS(beta_vec, mass=config.mass)
    q = config.q
    beta = beta_vec.beta
    sigma = 0.25 * beta
    k = np.linspace(-APPENDIX_K_RANGE / beta, APPENDIX_K_RANGE / beta, APPENDIX_K_POINTS)

    closed_form = np.real(time_axis_spectrum(spec, q, k, direction=beta_vec.e))
    sampled = sampled_time_spectrum(spec, q, sigma, k, beta_vec, config.profile)
    reference = convolved_spectrum(spec, q, sigma, k, beta_vec, sampled.window, config.profile)
    residual = np.abs(sampled.values - reference) / float(np.max(np.abs(reference)))
    # unwindowed target: the shift only damps the closed form by e^(-sigma k)
    damped = closed_form * np.exp(-sigma * k)
    smoothing_gap = np.abs(sampled.values - damped) / float(np.max(np.abs(damped)))

    frame = pd.DataFrame(
        {
            "k": k,
            "closed_form": closed_form,
            "closed_form_damped": damped,
            "reference": reference.real,
            "numerical": sampled.values.real,
            "numerical_imag": sampled.values.imag,
            "residual": residual,
            "smoothing_gap": smoothing_gap,
        }
    )
    max_residual = float(np.max(residual))
    passed = max_residual < config.tol
    logger.info(
        "validate-appendix-b: max residual %.3e, window smoothing gap %.3e", max_residual, float(np.max(smoothing_gap))
    )
    payload = {
        "config": config.to_dict(),
        "sigma": sigma,
        "window": sampled.window,
        "step": sampled.step,
        "max_residual": max_residual,
        "max_smoothing_gap": float(np.max(smoothing_gap)),
        "rows": frame.to_dict(orient="records"),
        "verdict": "pass" if passed else "fail",
    }
    _emit(config, payload, frame, "csv")
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_calibrate(config):
    rows = []
    for order in range(MAX_ORDER + 1):
        try:
            rows.append({**thermal_constant(order, config.profile).to_dict(), "converged": True})
        except ConvergenceError as exc:
            logger.warning("c_%d did not converge under profile '%s': %s", order, config.profile.name, exc)
            rows.append({"order": order, "c_n": None, "residual": exc.estimate, "converged": False})
    frame = pd.DataFrame(rows)
    passed = bool(frame["converged"].all())
    payload = {
        "config": config.to_dict(),
        "constants": rows,
        "verdict": "pass" if passed else "fail",
    }
    _emit(config, payload, frame, "json")
    return EXIT_PASS if passed else EXIT_FAIL


COMMANDS = {
    "eval": cmd_eval,
    "check": cmd_check,
    "sweep-hotbang": cmd_sweep_hotbang,
    "validate-appendix-b": cmd_validate_appendix_b,
    "calibrate": cmd_calibrate,
}


# ---------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=1e-6, help="Tolerance (default: 1e-6)")
    common.add_argument("--profile", choices=["fast", "default", "strict"], default=None,
                        help="Quadrature profile (default: $THERMALFIELD_PROFILE or 'default')")
    common.add_argument("--out", "-o", default=None, help="Output file (default: stdout)")
    common.add_argument("--format", choices=["json", "csv"], default=None, help="Output format")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging on stderr")

    parser = argparse.ArgumentParser(
        prog="thermalfield",
        description="Local thermal equilibrium checks for free scalar field states",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, help="Available commands")

    # --- eval ---
    p = subparsers.add_parser("eval", parents=[common], help="Strip values F(z - i sigma e) on a (t, r) grid")
    p.add_argument("--state", required=True, help="State JSON file or inline JSON")
    p.add_argument("--q", default="1,0,0,0", help="Base point t,x,y,z")
    p.add_argument("--beta", default=None, help="Strip frame b0,b1,b2,b3 (or a single beta)")
    p.add_argument("--t-range", dest="t_range", default=None, help="start,stop,count (default: -2,2,11)")
    p.add_argument("--r-range", dest="r_range", default=None, help="start,stop,count (default: 0,2,11)")
    p.add_argument("--sigma", type=float, default=None, help="Imaginary shift; 0 for boundary values (default: 0.5)")

    # --- check ---
    p = subparsers.add_parser("check", parents=[common], help="LTE and LKMS verdicts against a candidate beta")
    p.add_argument("--state", required=True, help="State JSON file or inline JSON")
    p.add_argument("--q", default="1,0,0,0", help="Base point t,x,y,z")
    p.add_argument("--beta", default=None, help="Candidate b0,b1,b2,b3 (or a single beta)")
    p.add_argument("--extract", action="store_true", help="Use the extracted temperature as candidate")
    p.add_argument("--order", type=int, default=2, help="LTE order N <= 4 (default: 2)")
    p.add_argument("--kmax", type=float, default=None, help="Momentum range (default: 10/beta)")
    p.add_argument("--which", choices=["lte", "lkms", "both"], default="both")
    p.add_argument("--method", choices=["spectral", "sampled"], default="spectral")

    # --- sweep-hotbang ---
    p = subparsers.add_parser("sweep-hotbang", parents=[common], help="Extracted beta(q) of a hot-bang state")
    p.add_argument("--A", type=float, default=1.0, help="Hot-bang parameter (default: 1)")
    p.add_argument("--q", dest="q_points", action="append", default=[], help="Base point t,x,y,z (repeatable)")

    # --- validate-appendix-b ---
    p = subparsers.add_parser("validate-appendix-b", parents=[common],
                              help="Sampled time-axis spectrum against the closed form")
    p.add_argument("--beta", default="1", help="Inverse temperature b0,b1,b2,b3 (or a single beta)")
    p.add_argument("--mass", type=float, default=0.0)

    # --- calibrate ---
    subparsers.add_parser("calibrate", parents=[common], help="Thermal-function constants c_0..c_4")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        config = build_run_config(args)
        logger.info("Running %s with profile '%s'", config.command, config.profile.name)
        return COMMANDS[config.command](config)
    except (ConfigError, DomainError) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    except (ThermalFieldError, ArithmeticError, np.linalg.LinAlgError) as exc:
        logger.error("%s", exc)
        return EXIT_NUMERICAL
    except Exception:
        logger.exception("Unexpected failure in %s", args.command)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
