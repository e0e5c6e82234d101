"""
Where ghosts land in the image, and how much pattern resolution survives a
given throwing distance.

Distances are taken in metres and converted to centimetres for the ghost
resolution formula, because the ghost area S_f is quoted in cm^2.
"""
import logging
import math
from typing import List, Literal, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ghostflare.exceptions import (
    DegeneratePairs,
    DegenerateProjection,
    InvalidRatio,
    NonPositiveDistance,
    OutOfTable,
    RankDeficient,
)
from ghostflare.utils.numkit import PIVOT_TOLERANCE, as_matrix

logger = logging.getLogger(__name__)

Pixel = Tuple[float, float]

# Camera matrix measured for the reference camera.
REFERENCE_CAMERA_MATRIX = (
    (-0.1406, 0.0537, -0.0200, 0.8452),
    (0.0321, 0.0547, -0.1385, 0.4893),
    (-0.0000, -0.0000, -0.0000, 0.0009),
)

# side length in blocks for throwing distances of 1..5 m
RESOLUTION_TABLE = {1: 32, 2: 16, 3: 8, 4: 4, 5: 2}

W_EPSILON = 1e-12


class CameraGeometry(BaseModel):
    """Camera matrix, image size and the ghost ratios measured for its lens."""

    model_config = ConfigDict(frozen=True)

    camera_matrix: Tuple[Tuple[float, float, float, float], ...] = REFERENCE_CAMERA_MATRIX
    width: int = 32
    height: int = 32
    ghost_ratios: Tuple[float, ...] = (1.0,)

    @field_validator("camera_matrix")
    @classmethod
    def _check_matrix(cls, value):
        if len(value) != 3 or not all(math.isfinite(v) for row in value for v in row):
            raise ValueError("camera_matrix must be a finite 3x4 matrix")
        return value

    @field_validator("ghost_ratios")
    @classmethod
    def _check_ratios(cls, value):
        if not value or any(r == 0 for r in value):
            raise ValueError("ghost_ratios must be a non-empty list of nonzero ratios")
        return value

    @model_validator(mode="after")
    def _check_size(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image width and height must be positive")
        return self

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.camera_matrix, dtype=np.float64)

    @property
    def image_center(self) -> Pixel:
        return (self.width / 2.0, self.height / 2.0)


class ProjectorOptics(BaseModel):
    """Projector throw and the physical ghost area on the camera sensor."""

    model_config = ConfigDict(frozen=True)

    throw_ratio: float = 20.0
    resolution: Tuple[int, int] = (1024, 768)
    ghost_area_cm2: float = 0.0156
    aspect: float = 0.75

    @field_validator("throw_ratio", "ghost_area_cm2", "aspect")
    @classmethod
    def _positive(cls, value):
        if not value > 0:
            raise ValueError("must be positive")
        return value

    @property
    def pixel_count(self) -> int:
        return self.resolution[0] * self.resolution[1]


def project_point(matrix, world: Sequence[float]) -> Pixel:
    """Pixel (u/w, v/w) of a world point under a 3x4 camera matrix."""
    m = as_matrix(matrix, "camera matrix")
    if m.shape != (3, 4):
        raise ValueError(f"camera matrix must be 3x4, got {m.shape}")
    u, v, w = m @ np.array([world[0], world[1], world[2], 1.0])
    if abs(w) <= W_EPSILON:
        raise DegenerateProjection(f"Point {tuple(world)} projects with w = {w:.3g}")
    return (float(u / w), float(v / w))


def ghost_position(center: Pixel, ratio: float, source: Pixel) -> Pixel:
    """Ghost pixel G for a light source at pixel A, reflected through the image centre."""
    if ratio == 0:
        raise InvalidRatio("Ghost ratio must be nonzero")
    x_o, y_o = center
    x_a, y_a = source
    return (x_o - (x_a - x_o) / ratio, y_o - (y_a - y_o) / ratio)


def ghost_resolution(optics: ProjectorOptics, distance_m: float) -> float:
    """Number of projector pixels that fall inside the ghost at `distance_m`."""
    if not distance_m > 0:
        raise NonPositiveDistance(distance_m)
    screen_width_cm = distance_m * 100.0 / optics.throw_ratio
    return optics.pixel_count * optics.ghost_area_cm2 / (optics.aspect * screen_width_cm**2)


def resolution_schedule(
    distance_m: float,
    mode: Literal["table", "formula"] = "table",
    optics: ProjectorOptics = ProjectorOptics(),
) -> int:
    """Pattern side length, in blocks, usable at a throwing distance."""
    if mode == "table":
        if float(distance_m).is_integer() and int(distance_m) in RESOLUTION_TABLE:
            return RESOLUTION_TABLE[int(distance_m)]
        raise OutOfTable(f"No published resolution for d = {distance_m} m")
    if mode == "formula":
        return max(1, int(math.floor(math.sqrt(ghost_resolution(optics, distance_m)))))
    raise ValueError(f"Unknown resolution mode {mode!r}")


def fit_camera_matrix(correspondences: Sequence[Tuple[Sequence[float], Pixel]]) -> np.ndarray:
    """
    Estimate a 3x4 camera matrix from world/pixel correspondences (DLT).

    Both point sets are similarity-normalised before the SVD. The result is
    scaled to unit Frobenius norm with its largest-magnitude entry positive.
    """
    if len(correspondences) < 6:
        raise RankDeficient(f"DLT needs at least 6 correspondences, got {len(correspondences)}")
    world = np.array([c[0] for c in correspondences], dtype=np.float64)
    pixels = np.array([c[1] for c in correspondences], dtype=np.float64)
    world_h, t_world = _normalize(world)
    pixel_h, t_pixel = _normalize(pixels)

    rows = []
    for X, (x, y, _) in zip(world_h, pixel_h):
        zero = np.zeros(4)
        rows.append(np.concatenate([X, zero, -x * X]))
        rows.append(np.concatenate([zero, X, -y * X]))
    design = np.array(rows)

    _, singular, vt = np.linalg.svd(design)
    # a unique solution needs an 11-dimensional row space
    if singular[10] <= PIVOT_TOLERANCE * singular[0]:
        raise RankDeficient("Correspondences are degenerate (e.g. coplanar world points)")

    m_norm = vt[-1].reshape(3, 4)
    m = np.linalg.inv(t_pixel) @ m_norm @ t_world
    m /= np.linalg.norm(m)
    if m.flat[np.argmax(np.abs(m))] < 0:
        m = -m
    logger.debug("[fit_camera_matrix] singular values %s", singular)
    return m


def _normalize(points: np.ndarray):
    """Translate to the centroid and scale to mean distance sqrt(dim)."""
    dim = points.shape[1]
    centroid = points.mean(axis=0)
    spread = np.sqrt(((points - centroid) ** 2).sum(axis=1)).mean()
    scale = math.sqrt(dim) / spread if spread > 0 else 1.0
    transform = np.eye(dim + 1)
    transform[:dim, :dim] *= scale
    transform[:dim, dim] = -scale * centroid
    homogeneous = np.hstack([points, np.ones((len(points), 1))]) @ transform.T
    return homogeneous, transform


def fit_ghost_ratio(pairs: Sequence[Tuple[Pixel, Pixel]], center: Pixel) -> float:
    """
    Least-squares ghost ratio r from observed (source, ghost) pixel pairs.

    With s = 1/r the model G - O = -s (A - O) is linear, so
    s = -sum((A-O).(G-O)) / sum(|A-O|^2).
    """
    o = np.asarray(center, dtype=np.float64)
    offsets_a = np.array([np.subtract(a, o) for a, _ in pairs], dtype=np.float64).reshape(-1, 2)
    offsets_g = np.array([np.subtract(g, o) for _, g in pairs], dtype=np.float64).reshape(-1, 2)
    denominator = float((offsets_a**2).sum())
    if denominator == 0.0:
        raise DegeneratePairs("Every light source sits on the image centre")
    inverse_ratio = -float((offsets_a * offsets_g).sum()) / denominator
    if inverse_ratio == 0.0:
        raise DegeneratePairs("Every ghost sits on the image centre")
    return 1.0 / inverse_ratio


def ghost_positions(geometry: CameraGeometry, source: Pixel) -> List[Pixel]:
    """Ghost pixels for every ratio configured on the camera."""
    return [ghost_position(geometry.image_center, r, source) for r in geometry.ghost_ratios]
