"""
Grid patterns and the regularisers defined on them.

A grid pattern is an N_row x N_col x N_chn array of block means mu in [0, 1]
plus a noise level sigma. Rendering a pattern upsamples every block to
(h / N_row) x (w / N_col) pixels and draws each pixel-channel from
N(mu, sigma^2), clamped to [0, 1]. A single-channel grid drives R, G and B
with the same mean.
"""
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from ghostflare.exceptions import DimMismatch, InvalidShape
from ghostflare.utils.numkit import RngStream, randn

Sigma = Union[float, Tuple[float, float, float]]


@dataclass(frozen=True)
class GridPattern:
    mu: np.ndarray
    sigma: Sigma = 0.0

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        if mu.ndim != 3 or mu.shape[2] not in (1, 3):
            raise DimMismatch(f"Block means must be N_row x N_col x {{1, 3}}, got {mu.shape}")
        object.__setattr__(self, "mu", mu)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if sigma.shape not in ((), (3,)) or np.any(sigma < 0):
            raise ValueError(f"sigma must be a non-negative scalar or RGB triple, got {self.sigma!r}")

    @property
    def grid(self) -> Tuple[int, int, int]:
        return self.mu.shape

    def block_size(self, width: int, height: int) -> Tuple[int, int]:
        """(block height, block width) in pixels."""
        n_row, n_col, _ = self.mu.shape
        if width % n_col or height % n_row:
            raise DimMismatch(f"{width}x{height} target is not divisible into a {n_row}x{n_col} grid")
        return height // n_row, width // n_col

    def projected(self) -> "GridPattern":
        return GridPattern(np.clip(self.mu, 0.0, 1.0), self.sigma)


def upsample_blocks(mu: np.ndarray, width: int, height: int) -> np.ndarray:
    """Block-constant (height, width, 3) image from N_row x N_col x N_chn means."""
    n_row, n_col, n_chn = mu.shape
    if width % n_col or height % n_row:
        raise DimMismatch(f"{width}x{height} target is not divisible into a {n_row}x{n_col} grid")
    image = np.repeat(np.repeat(mu, height // n_row, axis=0), width // n_col, axis=1)
    if n_chn == 1:
        image = np.repeat(image, 3, axis=2)
    return image


def pool_blocks(grad: np.ndarray, n_row: int, n_col: int, n_chn: int) -> np.ndarray:
    """Adjoint of `upsample_blocks`: sum an image gradient back onto the blocks."""
    height, width, _ = grad.shape
    block_h, block_w = height // n_row, width // n_col
    pooled = grad.reshape(n_row, block_h, n_col, block_w, 3).sum(axis=(1, 3))
    if n_chn == 1:
        pooled = pooled.sum(axis=2, keepdims=True)
    return pooled


def draw_pattern(pattern: GridPattern, width: int, height: int, stream: RngStream) -> Tuple[np.ndarray, np.ndarray]:
    """
    One pattern sample and the mask of pixel-channels left unclamped.

    The mask is the derivative of the clamp, so gradients flow as
    d delta / d mu = mask.
    """
    pattern.block_size(width, height)
    raw = upsample_blocks(pattern.mu, width, height)
    sigma = np.asarray(pattern.sigma, dtype=np.float64)
    if np.any(sigma > 0):
        raw = raw + sigma * randn(stream, raw.shape)
    active = (raw >= 0.0) & (raw <= 1.0)
    return np.clip(raw, 0.0, 1.0), active


def sample_pattern(pattern: GridPattern, width: int, height: int, stream: RngStream) -> np.ndarray:
    return draw_pattern(pattern, width, height, stream)[0]


def render_means(pattern: GridPattern, width: int, height: int) -> np.ndarray:
    """The noise-free pattern, i.e. the block means rendered at full size."""
    return np.clip(upsample_blocks(pattern.mu, width, height), 0.0, 1.0)


def expected_magnitude(mu, width: int, height: int, p: float = 2.0) -> float:
    """
    Expected l_p magnitude of a single-colour pattern:
    [(n / 3) (mu_R^p + mu_G^p + mu_B^p)]^(1/p) with n = 3 w h.

    A scalar `mu` means equal channels and gives mu * n^(1/p).
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    channels = np.broadcast_to(np.asarray(mu, dtype=np.float64), (3,))
    if np.any(channels < 0):
        raise ValueError("Channel means must be non-negative")
    n = 3 * width * height
    return float((n / 3.0 * np.sum(channels**p)) ** (1.0 / p))


def grid_magnitude(mu: np.ndarray, width: int, height: int, p: float = 2.0) -> Tuple[float, np.ndarray]:
    """
    Expected l_p magnitude of a grid pattern and its gradient in mu.

    Every block covers (w h / (N_row N_col)) pixels and each of its means stands
    for 3 / N_chn image channels, so a 1x1x3 grid reduces to
    `expected_magnitude`.
    """
    n_row, n_col, n_chn = mu.shape
    weight = (width * height / (n_row * n_col)) * (3.0 / n_chn)
    magnitude = np.abs(mu)
    total = float(np.sum(weight * magnitude**p))
    if total == 0.0:
        grad = np.full(mu.shape, weight if p == 1 else 0.0)
        return 0.0, grad
    value = total ** (1.0 / p)
    grad = total ** (1.0 / p - 1.0) * weight * magnitude ** (p - 1) * np.sign(mu)
    return value, grad


def penalty_constants(alpha: float, beta: float) -> Tuple[float, float]:
    """(omega, eta): the shift and offset that put the biased penalty's minimum 0 at v = 0."""
    if not (beta > 0 and alpha > beta):
        raise InvalidShape(f"Biased penalty needs alpha > beta > 0 (got alpha={alpha}, beta={beta})")
    omega = (math.log(alpha) - math.log(beta)) / (alpha + beta)
    ratio = alpha / beta
    eta = ratio ** (-alpha / (alpha + beta)) + ratio ** (beta / (alpha + beta))
    return omega, eta


def biased_penalty(v, alpha: float = 8.0, beta: float = 2.0):
    """
    R(v) = exp(-alpha (v + omega)) + exp(beta (v + omega)) - eta.

    Convex with R(0) = R'(0) = 0, and steeper for negative v than for positive
    v. The shift is +omega; shifting by -omega would move the minimum to 2 omega.
    """
    omega, eta = penalty_constants(alpha, beta)
    v = np.asarray(v, dtype=np.float64)
    value = np.exp(-alpha * (v + omega)) + np.exp(beta * (v + omega)) - eta
    return value if value.ndim else float(value)


def biased_penalty_grad(v, alpha: float = 8.0, beta: float = 2.0):
    omega, _ = penalty_constants(alpha, beta)
    v = np.asarray(v, dtype=np.float64)
    grad = -alpha * np.exp(-alpha * (v + omega)) + beta * np.exp(beta * (v + omega))
    return grad if grad.ndim else float(grad)


def grid_penalty(mu, alpha: float = 8.0, beta: float = 2.0) -> Tuple[float, np.ndarray]:
    """Sum of the biased penalty over every block mean, with its gradient."""
    if isinstance(mu, GridPattern):
        mu = mu.mu
    mu = np.asarray(mu, dtype=np.float64)
    return float(np.sum(biased_penalty(mu, alpha, beta))), biased_penalty_grad(mu, alpha, beta)
