"""
Fitting the channel model to measurements: illuminance sigmoid constants,
colour calibration matrix and flare gain, plus the CSV formats they are read
from.
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from ghostflare.exceptions import (
    AllZeroIlluminance,
    InsufficientVariation,
    NonConvergence,
    ParseError,
)
from ghostflare.optics.channel import ChannelParams, dimming, illuminance
from ghostflare.utils.numkit import lstsq, sigmoid

logger = logging.getLogger(__name__)

ILLUMINANCE_COLUMNS = ("T_d", "P_a", "d", "I")
COLOR_COLUMNS = ("r", "g", "b", "yr", "yg", "yb")
FLARE_COLUMNS = ("I", "y")


@dataclass(frozen=True)
class IlluminanceFit:
    a: float
    b: float
    c_t: float
    c_d: float
    rmse: float
    iterations: int

    def apply(self, params: ChannelParams) -> ChannelParams:
        return params.model_validate(
            {**params.model_dump(), "a": self.a, "b": self.b, "c_t": self.c_t, "c_d": self.c_d}
        )


def fit_illuminance(
    samples: Sequence[Tuple[float, float, float, float]],
    i_max: float = 1200.0,
    max_iterations: int = 200,
    tolerance: float = 1e-12,
) -> IlluminanceFit:
    """
    Fit (a, b, c_t, c_d) of the illuminance sigmoid to (T_d, P_a, d, lux) samples.

    The sigmoid argument is first fitted linearly on logit-transformed interior
    samples, then refined with damped Gauss-Newton on the squared lux error.
    """
    data = np.asarray(samples, dtype=np.float64).reshape(-1, 4)
    if len(data) < 4:
        raise InsufficientVariation(f"Need at least 4 samples, got {len(data)}")
    for column, name in enumerate(ILLUMINANCE_COLUMNS[:3]):
        if len(np.unique(data[:, column])) < 2:
            raise InsufficientVariation(f"Samples need at least 2 distinct values of {name}")
    t_d, p_a, dist, lux = data.T
    if np.any(dist <= 0):
        raise InsufficientVariation("Distances must be positive")

    theta = _initial_guess(t_d, p_a, dist, lux, i_max)
    design = np.column_stack([t_d, p_a, np.ones_like(t_d)])
    geometry = i_max / dist**2

    def residual(params):
        s = sigmoid(design @ params[:3])
        return params[3] * geometry * s - lux, s

    r, s = residual(theta)
    cost = float(r @ r)
    damping = 1e-6
    for iteration in range(1, max_iterations + 1):
        ds = theta[3] * geometry * s * (1.0 - s)
        jacobian = np.column_stack([ds[:, None] * design, geometry * s])
        normal = jacobian.T @ jacobian
        gradient = jacobian.T @ r
        improved = False
        while damping <= 1e12:
            step = np.linalg.solve(normal + damping * np.diag(np.diag(normal) + 1e-12), -gradient)
            candidate = theta + step
            if candidate[3] > 0:
                r_new, s_new = residual(candidate)
                cost_new = float(r_new @ r_new)
                if cost_new <= cost:
                    improved = True
                    break
            damping *= 10.0
        if not improved:
            # no descent direction left
            return _illuminance_result(theta, cost, len(lux), iteration)
        decrease = cost - cost_new
        theta, r, s, cost = candidate, r_new, s_new, cost_new
        damping = max(damping / 10.0, 1e-12)
        relative_step = np.max(np.abs(step) / np.maximum(np.abs(theta), 1e-12))
        if decrease <= tolerance * cost or relative_step < 1e-12:
            return _illuminance_result(theta, cost, len(lux), iteration)
    raise NonConvergence(f"Illuminance fit did not converge in {max_iterations} iterations")


def _illuminance_result(theta, cost, count, iterations) -> IlluminanceFit:
    rmse = float(np.sqrt(cost / count))
    logger.info("[fit_illuminance] converged after %d iterations, rmse %.4g lux", iterations, rmse)
    return IlluminanceFit(*(float(v) for v in theta), rmse=rmse, iterations=iterations)


def _initial_guess(t_d, p_a, dist, lux, i_max) -> np.ndarray:
    """Linearise through the logit for a fixed c_d, picking c_d by a coarse search."""
    normalized = lux * dist**2 / i_max
    peak = float(np.max(normalized))
    if peak <= 0:
        raise InsufficientVariation("All illuminance readings are non-positive")
    design = np.column_stack([t_d, p_a, np.ones_like(t_d)])
    best = None
    for factor in (1.02, 1.05, 1.1, 1.25, 1.5, 2.0, 3.0):
        c_d = peak * factor
        ratio = normalized / c_d
        interior = (ratio > 0.01) & (ratio < 0.99)
        if interior.sum() < 3:
            continue
        logits = np.log(ratio[interior] / (1.0 - ratio[interior]))
        try:
            linear = lstsq(design[interior], logits)[:, 0]
        except ArithmeticError:
            continue
        predicted = c_d * sigmoid(design @ linear) * i_max / dist**2
        error = float(np.sum((predicted - lux) ** 2))
        if best is None or error < best[0]:
            best = (error, np.append(linear, c_d))
    if best is None:
        raise InsufficientVariation("Too few samples inside the sigmoid's linear range")
    return best[1]


def fit_color_matrix(x_hat, y_hat) -> np.ndarray:
    """
    Colour calibration matrix from normalised pairs, rows x_hat_i and y_hat_i,
    solving min ||Y - X H^T||.
    """
    x_hat = np.asarray(x_hat, dtype=np.float64).reshape(-1, 3)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1, 3)
    return lstsq(x_hat, y_hat).T


def normalize_color_samples(deltas, observed, params: ChannelParams) -> Tuple[np.ndarray, np.ndarray]:
    """Turn raw (projected, perceived) RGB pairs into (x_hat, y_hat) for `fit_color_matrix`."""
    deltas = np.asarray(deltas, dtype=np.float64).reshape(-1, 3)
    observed = np.asarray(observed, dtype=np.float64).reshape(-1, 3)
    amplitude = deltas.max(axis=1)
    keep = amplitude > 0
    lux = illuminance(amplitude[keep], params.bulb_power, params.distance, params)
    gain = params.rho * lux * dimming(lux, params.i_env)
    return deltas[keep] / amplitude[keep, None], observed[keep] / gain[:, None]


def fit_flare_gain(samples: Sequence[Tuple[float, float]], ambient: float) -> float:
    """Flare gain rho from (lux, perceived ghost peak) pairs."""
    data = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    lux, peak = data.T
    basis = dimming(lux, ambient) * lux
    energy = float(basis @ basis)
    if energy == 0.0:
        raise AllZeroIlluminance("Flare gain needs at least one sample with positive illuminance")
    return float(peak @ basis) / energy


def _read_rows(path, columns: Sequence[str]) -> List[List[float]]:
    try:
        with open(Path(path), newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None or any(c not in reader.fieldnames for c in columns):
                raise ParseError(f"{path} must have header {','.join(columns)}", offset=0)
            rows = []
            for line, record in enumerate(reader, start=2):
                try:
                    rows.append([float(record[c]) for c in columns])
                except (TypeError, ValueError) as exc:
                    raise ParseError(f"{path} line {line}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"Cannot read {path}: {exc}") from exc
    return rows


def read_illuminance_csv(path) -> np.ndarray:
    return np.asarray(_read_rows(path, ILLUMINANCE_COLUMNS), dtype=np.float64).reshape(-1, 4)


def read_color_csv(path) -> Tuple[np.ndarray, np.ndarray]:
    rows = np.asarray(_read_rows(path, COLOR_COLUMNS), dtype=np.float64).reshape(-1, 6)
    return rows[:, :3], rows[:, 3:]


def read_flare_csv(path) -> List[Tuple[float, float]]:
    return [(lux, peak) for lux, peak in _read_rows(path, FLARE_COLUMNS)]
