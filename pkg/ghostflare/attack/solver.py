"""
Creation and alteration attacks: find grid block means mu whose projected
pattern, after passing through the channel, makes the classifier output the
target class.

The objective is

    R(mu) + c * L_adv          (objective = "penalty", default)
    ||delta||_p + c * L_adv    (objective = "magnitude")

where L_adv is estimated from T pattern samples. Samples for step k are drawn
from substream (1, k) of the attack seed, so every trial within a step sees
common random numbers and re-evaluating a step is exact.
"""
import csv
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ghostflare.attack.adam import AdamConfig, optimize
from ghostflare.attack.loss import logit_gap_loss
from ghostflare.attack.pattern import (
    GridPattern,
    draw_pattern,
    grid_magnitude,
    grid_penalty,
    pool_blocks,
    render_means,
    sample_pattern,
)
from ghostflare.exceptions import DimMismatch
from ghostflare.models.classifier import Classifier
from ghostflare.optics.channel import (
    ChannelParams,
    ExposureMode,
    Placement,
    digital_composite,
    digital_composite_backward,
    emulate,
    emulate_backward,
    emulate_forward,
)
from ghostflare.utils.image_io import dequantize, quantize, write_ppm
from ghostflare.utils.numkit import RngStream

logger = logging.getLogger(__name__)

# substream tags under the attack seed
INIT_STREAM = 0
STEP_STREAM = 1
EVAL_STREAM = 2
SWEEP_STREAM = 3


class AttackConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    target: int = Field(0, ge=0)
    mode: Literal["creation", "alteration"] = "creation"
    kappa: float = Field(5.0, ge=0)
    c: float = Field(10.0, gt=0)
    alpha: float = 8.0
    beta: float = 2.0
    p: float = Field(2.0, ge=1)
    trials: int = Field(10, ge=1)
    sigma: Union[float, Tuple[float, float, float]] = 0.03
    # sigma used for the final success check; defaults to `sigma`
    eval_sigma: Optional[Union[float, Tuple[float, float, float]]] = None
    channels: Literal[1, 3] = 3
    objective: Literal["penalty", "magnitude"] = "penalty"
    init: Literal["uniform", "constant"] = "uniform"
    init_value: float = Field(0.5, ge=0, le=1)
    bulb_power: Optional[float] = Field(0.3, ge=0, le=1)
    exposure_mode: ExposureMode = "per_pixel"
    domain: Literal["emulated", "digital"] = "emulated"
    adam: AdamConfig = AdamConfig()
    seed: int = 0

    @field_validator("sigma", "eval_sigma")
    @classmethod
    def _non_negative(cls, value):
        if value is not None and np.any(np.asarray(value) < 0):
            raise ValueError("sigma must be non-negative")
        return value

    @model_validator(mode="after")
    def _check_shape(self):
        if not (self.beta > 0 and self.alpha > self.beta):
            raise ValueError("penalty shape needs alpha > beta > 0")
        return self


@dataclass
class AttackReport:
    """
    Outcome of one attack. `emulated`, `benign` and `pattern` hold the images
    behind the report and are written as PPM files, not JSON.
    """

    target: int
    mode: str
    mu: np.ndarray
    trace: List[float]
    objective: float
    logit_gap: float
    predicted: int
    success: bool
    checksum: str
    emulated: np.ndarray = field(repr=False)
    benign: np.ndarray = field(repr=False)
    pattern: np.ndarray = field(repr=False)
    wall_clock: Optional[float] = None

    def to_dict(self) -> Dict:
        data = {
            "target": self.target,
            "mode": self.mode,
            "success": self.success,
            "predicted": self.predicted,
            "logit_gap": self.logit_gap,
            "objective": self.objective,
            "iterations": len(self.trace),
            "grid": list(self.mu.shape),
            "mu": self.mu.tolist(),
            "checksum": self.checksum,
        }
        if self.wall_clock is not None:
            data["wall_clock"] = self.wall_clock
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def write_trace_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["iteration", "objective"])
            for step, value in enumerate(self.trace):
                writer.writerow([step, repr(value)])

    def save(self, directory) -> Path:
        """report.json, trace.csv, mu.json, pattern.ppm, benign.ppm and emulated.ppm."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(self.to_json(), encoding="utf-8")
        self.write_trace_csv(directory / "trace.csv")
        (directory / "mu.json").write_text(json.dumps({"mu": self.mu.tolist()}) + "\n", encoding="utf-8")
        write_ppm(directory / "pattern.ppm", self.pattern)
        write_ppm(directory / "benign.ppm", self.benign)
        write_ppm(directory / "emulated.ppm", self.emulated)
        return directory


def image_checksum(image: np.ndarray) -> str:
    return hashlib.sha256(quantize(image).tobytes()).hexdigest()


def attack_channel(params: ChannelParams, config: AttackConfig) -> ChannelParams:
    """
    Channel parameters at the bulb power the attack runs with. Set
    `AttackConfig.bulb_power` to None to keep the channel's own value.
    """
    if config.bulb_power is None or config.bulb_power == params.bulb_power:
        return params
    logger.debug("[attack_channel] bulb power %g overrides the channel's %g", config.bulb_power, params.bulb_power)
    return params.at(bulb_power=config.bulb_power)


def perceive(
    delta: np.ndarray,
    benign: np.ndarray,
    placement: Placement,
    params: ChannelParams,
    config: AttackConfig,
    quantize_output: bool = False,
) -> np.ndarray:
    """What the camera sees for one pattern sample, in the configured domain."""
    if config.domain == "digital":
        y = digital_composite(delta, benign, placement)
        return dequantize(quantize(y)) if quantize_output else np.clip(y, 0.0, 1.0)
    return emulate(delta, benign, placement, params, config.exposure_mode, quantize_output)


def attack_objective(
    model: Classifier,
    params: ChannelParams,
    placement: Placement,
    benign: np.ndarray,
    config: AttackConfig,
) -> Callable[[np.ndarray, int], Tuple[float, np.ndarray]]:
    """
    The attack's objective as a function of (mu, step), returning value and
    gradient. Perceived images are clipped going forward while the gradient
    passes the clip unchanged.
    """
    channel = attack_channel(params, config)
    root = RngStream(config.seed)
    width, height = placement.width, placement.height

    def objective(mu: np.ndarray, step: int):
        pattern = GridPattern(mu, config.sigma)
        stream = root.substream(STEP_STREAM, step)
        deltas, masks, states, images = [], [], [], []
        for trial in range(config.trials):
            delta, active = draw_pattern(pattern, width, height, stream.substream(trial))
            if config.domain == "digital":
                y = digital_composite(delta, benign, placement)
            else:
                state = emulate_forward(delta, benign, placement, channel, config.exposure_mode)
                states.append(state)
                y = state.pre_clip
            deltas.append(delta)
            masks.append(active)
            images.append(np.clip(y, 0.0, 1.0))

        logits, caches = model.forward(np.stack(images))
        loss = logit_gap_loss(logits, config.target, config.kappa)

        grad_mu = np.zeros_like(mu)
        if np.any(loss.cotangents):
            grad_images = model.backward(loss.cotangents, caches)[0]
            for trial in range(config.trials):
                if config.domain == "digital":
                    grad_delta = digital_composite_backward(deltas[trial], benign, placement, grad_images[trial])
                else:
                    grad_delta = emulate_backward(states[trial], grad_images[trial], channel)
                grad_mu += pool_blocks(grad_delta * masks[trial], *mu.shape)

        if config.objective == "magnitude":
            reg, reg_grad = grid_magnitude(mu, width, height, config.p)
        else:
            reg, reg_grad = grid_penalty(mu, config.alpha, config.beta)
        return reg + config.c * loss.value, reg_grad + config.c * grad_mu

    return objective


def initial_means(placement: Placement, config: AttackConfig) -> np.ndarray:
    shape = (placement.n_row, placement.n_col, config.channels)
    if config.init == "constant":
        return np.full(shape, config.init_value)
    return RngStream(config.seed).substream(INIT_STREAM).uniform(0.1, 0.9, size=shape)


def evaluate_pattern(
    model: Classifier,
    mu: np.ndarray,
    params: ChannelParams,
    placement: Placement,
    benign: np.ndarray,
    config: AttackConfig,
    stream: RngStream,
    sigma=None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quantised perceived image, its logits and the full-size pattern for one fresh sample."""
    sigma = config.sigma if sigma is None else sigma
    delta = sample_pattern(GridPattern(mu, sigma), placement.width, placement.height, stream)
    y = perceive(delta, benign, placement, attack_channel(params, config), config, quantize_output=True)
    return y, model.logits(y), delta


def solve_attack(
    model: Classifier,
    params: ChannelParams,
    placement: Placement,
    benign: Optional[np.ndarray],
    config: AttackConfig,
    include_timing: bool = False,
) -> AttackReport:
    """
    Optimise a grid pattern against `model`.

    `benign=None` is the creation setting: a black background. Success means
    the quantised perceived image of a fresh pattern sample (drawn with
    `eval_sigma`) is classified as the target.
    """
    started = time.perf_counter()
    if benign is None:
        benign = np.zeros(model.input_shape)
    benign = np.asarray(benign, dtype=np.float64)
    if benign.shape != model.input_shape:
        raise DimMismatch(f"Benign image {benign.shape} does not match model input {model.input_shape}")
    if not 0 <= config.target < model.num_classes:
        raise DimMismatch(f"Target {config.target} is not one of {model.num_classes} classes")
    placement.validate_for(benign.shape)

    objective = attack_objective(model, params, placement, benign, config)
    result = optimize(objective, initial_means(placement, config), config.adam)
    mu = result.x

    eval_sigma = config.sigma if config.eval_sigma is None else config.eval_sigma
    y, logits, _ = evaluate_pattern(
        model, mu, params, placement, benign, config, RngStream(config.seed).substream(EVAL_STREAM), eval_sigma
    )
    predicted = int(np.argmax(logits))
    others = np.delete(logits, config.target)
    gap = float(logits[config.target] - np.max(others))

    pattern_image = np.zeros_like(benign)
    rows, cols = placement.region
    pattern_image[rows, cols] = render_means(GridPattern(mu), placement.width, placement.height)

    report = AttackReport(
        target=config.target,
        mode=config.mode,
        mu=mu,
        trace=result.trace,
        objective=result.value,
        logit_gap=gap,
        predicted=predicted,
        success=predicted == config.target,
        checksum=image_checksum(y),
        emulated=y,
        benign=benign,
        pattern=pattern_image,
        wall_clock=time.perf_counter() - started if include_timing else None,
    )
    logger.info(
        "[solve_attack] target %d -> predicted %d (gap %.3f) after %d steps",
        config.target, predicted, gap, len(result.trace),
    )
    return report


def sigma_sweep(
    model: Classifier,
    mu: np.ndarray,
    sigmas: Sequence[float],
    params: ChannelParams,
    placement: Placement,
    benign: Optional[np.ndarray],
    config: AttackConfig,
    n_trials: int = 20,
) -> List[Tuple[float, float]]:
    """
    Success fraction of a fixed pattern redeployed at several noise levels,
    each over `n_trials` fresh samples.
    """
    if benign is None:
        benign = np.zeros(model.input_shape)
    root = RngStream(config.seed).substream(SWEEP_STREAM)
    rates = []
    for index, sigma in enumerate(sigmas):
        hits = 0
        for trial in range(n_trials):
            _, logits, _ = evaluate_pattern(
                model, mu, params, placement, benign, config, root.substream(index, trial), sigma
            )
            hits += int(np.argmax(logits)) == config.target
        rates.append((float(sigma), hits / n_trials))
        logger.info("[sigma_sweep] sigma %.4g success %.3f", sigma, rates[-1][1])
    return rates
