"""
Projector -> camera channel model.

A projected pixel delta reaches the sensor as a flare whose brightness follows
the projector's illuminance I (a saturating sigmoid in the pixel amplitude and
bulb power, falling off with d^2) and whose colour is mixed by H_c. The camera's
auto-exposure then dims the whole frame by gamma = I_env / (I + I_env):

    y = gamma(I) * (rho * I * H_c * delta / ||delta||_inf + x)

The infinity norm is used both for the amplitude T_d and for the colour
normalisation.
"""
import logging
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from ghostflare.exceptions import (
    DimMismatch,
    NonPositiveAmbient,
    NonPositiveDistance,
    PlacementOutOfBounds,
)
from ghostflare.utils.image_io import dequantize, quantize
from ghostflare.utils.numkit import sigmoid

logger = logging.getLogger(__name__)

BLACK_EPSILON = 1e-6

ExposureMode = Literal["per_pixel", "global_max", "global_mean"]

REFERENCE_COLOR_MATRIX = ((0.5, 0.0, 0.1), (0.0, 0.5, 0.0), (0.0, 0.0, 0.8))


class ChannelParams(BaseModel):
    """Constants of the illuminance, dimming and flare model (reference rig defaults)."""

    model_config = ConfigDict(frozen=True)

    a: float = 8.9
    b: float = 6.7
    c_t: float = -7.8
    c_d: float = 0.25
    i_max: float = 1200.0
    i_env: float = 300.0
    rho: float = 30.0
    color_matrix: Tuple[Tuple[float, float, float], ...] = REFERENCE_COLOR_MATRIX
    distance: float = 1.0
    bulb_power: float = 1.0

    @field_validator("i_max", "c_d")
    @classmethod
    def _positive(cls, value):
        if not value > 0:
            raise ValueError("must be positive")
        return value

    @field_validator("i_env")
    @classmethod
    def _ambient(cls, value):
        if not value > 0:
            raise ValueError("ambient illuminance must be positive")
        return value

    @field_validator("distance")
    @classmethod
    def _distance(cls, value):
        if not value > 0:
            raise ValueError("distance must be positive")
        return value

    @field_validator("bulb_power")
    @classmethod
    def _bulb(cls, value):
        if not 0.0 <= value <= 1.0:
            raise ValueError("bulb_power must lie in [0, 1]")
        return value

    @field_validator("color_matrix")
    @classmethod
    def _color(cls, value):
        matrix = np.asarray(value, dtype=np.float64)
        if matrix.shape != (3, 3) or not np.all(np.isfinite(matrix)):
            raise ValueError("color_matrix must be a finite 3x3 matrix")
        return value

    @property
    def h_c(self) -> np.ndarray:
        return np.asarray(self.color_matrix, dtype=np.float64)

    def at(self, distance: Optional[float] = None, bulb_power: Optional[float] = None) -> "ChannelParams":
        """Copy with a different distance and/or bulb power."""
        update = {}
        if distance is not None:
            update["distance"] = distance
        if bulb_power is not None:
            update["bulb_power"] = bulb_power
        return self.model_validate({**self.model_dump(), **update})


@dataclass(frozen=True)
class Placement:
    """Ghost rectangle inside the target image, split into a block grid."""

    x0: int
    y0: int
    width: int
    height: int
    n_row: int = 1
    n_col: int = 1

    @classmethod
    def centered(cls, image_width: int, image_height: int, side: int) -> "Placement":
        """Largest side x side grid that fits the image, centred."""
        block_w = image_width // side
        block_h = image_height // side
        if block_w == 0 or block_h == 0:
            raise PlacementOutOfBounds(f"A {side}x{side} grid does not fit a {image_width}x{image_height} image")
        width, height = block_w * side, block_h * side
        return cls(
            (image_width - width) // 2, (image_height - height) // 2, width, height, side, side
        )

    def validate_for(self, image_shape) -> None:
        h, w = image_shape[:2]
        if self.x0 < 0 or self.y0 < 0 or self.x0 + self.width > w or self.y0 + self.height > h:
            raise PlacementOutOfBounds(
                f"Rectangle ({self.x0},{self.y0},{self.width}x{self.height}) exceeds {w}x{h} image"
            )
        if self.width % self.n_col or self.height % self.n_row:
            raise PlacementOutOfBounds(
                f"{self.width}x{self.height} rectangle is not divisible into {self.n_row}x{self.n_col} blocks"
            )

    @property
    def region(self) -> Tuple[slice, slice]:
        return slice(self.y0, self.y0 + self.height), slice(self.x0, self.x0 + self.width)


def illuminance(t_d, bulb_power, distance, params: ChannelParams):
    """Projector illuminance (lux) at the camera."""
    if not np.all(np.asarray(distance) > 0):
        raise NonPositiveDistance(distance)
    t = params.a * np.asarray(t_d, dtype=np.float64) + params.b * bulb_power + params.c_t
    value = params.c_d / np.asarray(distance, dtype=np.float64) ** 2 * params.i_max * sigmoid(t)
    return value if np.ndim(value) else float(value)


def dimming(lux, ambient: float):
    """Auto-exposure dimming ratio gamma in (0, 1]."""
    if not ambient > 0:
        raise NonPositiveAmbient(f"Ambient illuminance must be positive (got {ambient})")
    value = ambient / (np.asarray(lux, dtype=np.float64) + ambient)
    return value if np.ndim(value) else float(value)


def flare_pixel(delta, params: ChannelParams) -> np.ndarray:
    """Unclipped flare intensity of one projected RGB value (before dimming)."""
    delta = np.asarray(delta, dtype=np.float64)
    amplitude = float(np.max(delta))
    if amplitude < BLACK_EPSILON:
        return np.zeros(3)
    lux = illuminance(amplitude, params.bulb_power, params.distance, params)
    return params.rho * lux * (params.h_c @ (delta / amplitude))


@dataclass
class EmulationState:
    """Intermediate values of one `emulate_forward` call, kept for the VJP."""

    placement: Placement
    mode: str
    delta: np.ndarray
    lit: np.ndarray
    argmax: np.ndarray
    amplitude: np.ndarray
    lux: np.ndarray
    d_lux: np.ndarray
    direction: np.ndarray
    pre_dimming: np.ndarray
    gamma: np.ndarray
    gamma_index: int
    pre_clip: np.ndarray


def emulate_forward(
    delta: np.ndarray,
    benign: np.ndarray,
    placement: Placement,
    params: ChannelParams,
    exposure_mode: ExposureMode = "per_pixel",
) -> EmulationState:
    """
    Perceived image before clipping, plus the state needed for gradients.

    Pixels outside the ghost rectangle are dimmed by the ghost's mean
    illuminance in `per_pixel` mode and by the global gamma otherwise.
    """
    placement.validate_for(benign.shape)
    if delta.shape != (placement.height, placement.width, 3):
        raise DimMismatch(
            f"Pattern shape {delta.shape} does not match the {placement.height}x{placement.width} ghost"
        )
    rows, cols = placement.region
    h_c = params.h_c

    argmax = np.argmax(delta, axis=2)
    amplitude = np.take_along_axis(delta, argmax[..., None], axis=2)[..., 0]
    lit = amplitude >= BLACK_EPSILON
    safe_amplitude = np.where(lit, amplitude, 1.0)

    t = params.a * amplitude + params.b * params.bulb_power + params.c_t
    scale = params.c_d / params.distance**2 * params.i_max
    s = sigmoid(t)
    lux = scale * s
    d_lux = scale * s * (1.0 - s) * params.a

    direction = np.where(lit[..., None], (delta / safe_amplitude[..., None]) @ h_c.T, 0.0)
    flare = params.rho * lux[..., None] * direction

    pre_dimming = benign.astype(np.float64).copy()
    pre_dimming[rows, cols] += flare

    gamma_index = -1
    if exposure_mode == "per_pixel":
        gamma = np.full(benign.shape[:2], dimming(lux.mean(), params.i_env))
        gamma[rows, cols] = dimming(lux, params.i_env)
    elif exposure_mode == "global_mean":
        gamma = np.full(benign.shape[:2], dimming(lux.mean(), params.i_env))
    elif exposure_mode == "global_max":
        gamma_index = int(np.argmax(lux))
        gamma = np.full(benign.shape[:2], dimming(lux.flat[gamma_index], params.i_env))
    else:
        raise ValueError(f"Unknown exposure mode {exposure_mode!r}")

    pre_clip = gamma[..., None] * pre_dimming
    return EmulationState(
        placement, exposure_mode, delta, lit, argmax, amplitude, lux, d_lux,
        direction, pre_dimming, gamma, gamma_index, pre_clip,
    )


def emulate_backward(state: EmulationState, grad_y: np.ndarray, params: ChannelParams) -> np.ndarray:
    """
    Vector-Jacobian product of the pre-clip perceived image w.r.t. the pattern.

    Gradients reach the amplitude through the first argmax channel only; black
    pixels (below BLACK_EPSILON) contribute no gradient.
    """
    rows, cols = state.placement.region
    h_c = params.h_c
    i_env = params.i_env
    rho = params.rho

    g = grad_y[rows, cols]
    gamma = state.gamma[rows, cols]
    amplitude = np.where(state.lit, state.amplitude, 1.0)

    # d y / d direction, then direction = H_c delta / T
    g_dir = (gamma * rho * state.lux)[..., None] * g
    back = g_dir @ h_c
    grad_delta = np.where(state.lit[..., None], back / amplitude[..., None], 0.0)
    # -(H_c delta) / T^2 . g_dir lands on the argmax channel
    through_amplitude = -np.sum(g_dir * state.direction, axis=2) / amplitude

    # flare magnitude rho * I(T)
    g_lux = np.sum(g * (gamma * rho)[..., None] * state.direction, axis=2)

    # exposure: gamma depends on I
    upstream = np.sum(grad_y * state.pre_dimming, axis=2)
    if state.mode == "per_pixel":
        g_lux = g_lux - upstream[rows, cols] * gamma / (state.lux + i_env)
        outside = upstream.copy()
        outside[rows, cols] = 0.0
        mean_lux = state.lux.mean()
        g_lux = g_lux - outside.sum() * i_env / (mean_lux + i_env) ** 2 / state.lux.size
    else:
        total = upstream.sum()
        lux_bar = state.lux.mean() if state.mode == "global_mean" else state.lux.flat[state.gamma_index]
        g_bar = -total * i_env / (lux_bar + i_env) ** 2
        if state.mode == "global_mean":
            g_lux = g_lux + g_bar / state.lux.size
        else:
            g_lux = g_lux.copy()
            g_lux.flat[state.gamma_index] += g_bar

    through_amplitude = through_amplitude + g_lux * state.d_lux
    through_amplitude = np.where(state.lit, through_amplitude, 0.0)
    np.put_along_axis(
        grad_delta,
        state.argmax[..., None],
        np.take_along_axis(grad_delta, state.argmax[..., None], axis=2) + through_amplitude[..., None],
        axis=2,
    )
    return grad_delta


def emulate(
    delta: Optional[np.ndarray],
    benign: np.ndarray,
    placement: Placement,
    params: ChannelParams,
    exposure_mode: ExposureMode = "per_pixel",
    quantize_output: bool = False,
) -> np.ndarray:
    """
    Perceived image for a projector pattern over a benign image.

    `delta=None` means the projector is off: the benign image comes back
    unchanged. The result is clamped to [0, 1] and optionally 8-bit quantised.
    """
    if delta is None:
        y = np.clip(benign.astype(np.float64), 0.0, 1.0)
    else:
        y = np.clip(emulate_forward(delta, benign, placement, params, exposure_mode).pre_clip, 0.0, 1.0)
    if quantize_output:
        y = dequantize(quantize(y))
    return y


def digital_composite(delta: np.ndarray, benign: np.ndarray, placement: Placement) -> np.ndarray:
    """Ideal additive composition y = (x + delta) / ||x + delta||_inf, no channel effects."""
    placement.validate_for(benign.shape)
    rows, cols = placement.region
    combined = benign.astype(np.float64).copy()
    combined[rows, cols] += delta
    peak = float(np.max(combined))
    return combined / peak if peak > 0 else combined


def digital_composite_backward(delta: np.ndarray, benign: np.ndarray, placement: Placement, grad_y: np.ndarray) -> np.ndarray:
    """VJP of `digital_composite` w.r.t. the pattern; the peak pixel takes the normalisation term."""
    rows, cols = placement.region
    combined = benign.astype(np.float64).copy()
    combined[rows, cols] += delta
    flat_index = int(np.argmax(combined))
    peak = float(combined.flat[flat_index])
    if peak <= 0:
        return grad_y[rows, cols].copy()
    grad = grad_y / peak
    grad.flat[flat_index] -= float(np.sum(grad_y * combined)) / peak**2
    return grad[rows, cols]
