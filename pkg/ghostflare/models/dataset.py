"""
Synthetic traffic-sign dataset: eight coloured glyph classes rendered with
Pillow on a tinted background.

Each sample is drawn at 4x supersampling, box-filtered down to the target size
and perturbed with Gaussian pixel noise. Every sample owns an RNG substream
keyed by (class, index), so the dataset is identical for a given seed no
matter how it is generated or sliced.
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np
from PIL import Image, ImageDraw

from ghostflare.exceptions import DimMismatch, ParseError
from ghostflare.utils.image_io import read_ppm, write_ppm
from ghostflare.utils.numkit import RngStream, randn

logger = logging.getLogger(__name__)

CLASS_NAMES = (
    "octagon",
    "triangle",
    "diamond",
    "circle",
    "square",
    "inverted_triangle",
    "pentagon",
    "bar",
)

# fill colour of each glyph, RGB in [0, 1]
GLYPH_COLORS = (
    (0.85, 0.10, 0.10),
    (0.95, 0.85, 0.15),
    (0.95, 0.60, 0.05),
    (0.10, 0.30, 0.90),
    (0.10, 0.75, 0.25),
    (0.95, 0.95, 0.95),
    (0.60, 0.20, 0.80),
    (0.10, 0.85, 0.85),
)

SUPERSAMPLE = 4
JITTER = 0.10
SCALE_JITTER = 0.15
NOISE_SIGMA = 0.02
BASE_RADIUS = 0.36
MIN_SIZE = 16


@dataclass
class Dataset:
    """Images (n, h, w, 3) in [0, 1] with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    class_names: List[str] = field(default_factory=lambda: list(CLASS_NAMES))

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DimMismatch(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError("Labels must lie in 0..m-1")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def image_size(self) -> Tuple[int, int]:
        """(width, height)"""
        return self.images.shape[2], self.images.shape[1]

    def exemplar(self, label: int) -> np.ndarray:
        """First sample of a class."""
        matches = np.flatnonzero(self.labels == label)
        if len(matches) == 0:
            raise ValueError(f"No sample of class {label}")
        return self.images[matches[0]]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices], list(self.class_names))


def _polygon(cx, cy, radius, sides, rotation) -> List[Tuple[float, float]]:
    return [
        (cx + radius * math.cos(rotation + 2 * math.pi * k / sides),
         cy + radius * math.sin(rotation + 2 * math.pi * k / sides))
        for k in range(sides)
    ]


def draw_glyph(draw: ImageDraw.ImageDraw, label: int, cx: float, cy: float, radius: float, color) -> None:
    """Draw glyph `label` centred at (cx, cy) on a supersampled canvas."""
    name = CLASS_NAMES[label]
    if name == "octagon":
        draw.polygon(_polygon(cx, cy, radius, 8, math.pi / 8), fill=color)
    elif name == "triangle":
        draw.polygon(_polygon(cx, cy, radius, 3, -math.pi / 2), fill=color)
    elif name == "diamond":
        draw.polygon(_polygon(cx, cy, radius, 4, 0.0), fill=color)
    elif name == "circle":
        draw.ellipse((cx - radius, cy - radius, cx + radius, cy + radius), fill=color)
    elif name == "square":
        draw.polygon(_polygon(cx, cy, radius, 4, math.pi / 4), fill=color)
    elif name == "inverted_triangle":
        draw.polygon(_polygon(cx, cy, radius, 3, math.pi / 2), fill=color)
    elif name == "pentagon":
        draw.polygon(_polygon(cx, cy, radius, 5, -math.pi / 2), fill=color)
    else:
        draw.rectangle((cx - radius, cy - 0.3 * radius, cx + radius, cy + 0.3 * radius), fill=color)


def render_sample(label: int, width: int, height: int, stream: RngStream) -> np.ndarray:
    big_w, big_h = width * SUPERSAMPLE, height * SUPERSAMPLE
    jitter_x, jitter_y, scale = stream.uniform(-1.0, 1.0, size=3)
    background = stream.uniform(0.0, 0.35, size=3)
    brightness = stream.uniform(0.9, 1.0)

    def to_rgb(values):
        return tuple(int(round(255 * min(max(v, 0.0), 1.0))) for v in values)

    canvas = Image.new("RGB", (big_w, big_h), to_rgb(background))
    draw = ImageDraw.Draw(canvas)
    cx = big_w * (0.5 + JITTER * jitter_x)
    cy = big_h * (0.5 + JITTER * jitter_y)
    radius = BASE_RADIUS * min(big_w, big_h) * (1.0 + SCALE_JITTER * scale)
    draw_glyph(draw, label, cx, cy, radius, to_rgb(np.asarray(GLYPH_COLORS[label]) * brightness))

    small = canvas.resize((width, height), Image.Resampling.BOX)
    image = np.asarray(small, dtype=np.float64) / 255.0
    return np.clip(image + NOISE_SIGMA * randn(stream, image.shape), 0.0, 1.0)


def gen_dataset(seed: int, n_per_class: int, width: int = 32, height: int = 32) -> Dataset:
    """Balanced dataset of `n_per_class` samples for each of the eight glyphs, class-major order."""
    if width < MIN_SIZE or height < MIN_SIZE:
        raise DimMismatch(f"Dataset images must be at least {MIN_SIZE}x{MIN_SIZE}, got {width}x{height}")
    root = RngStream(seed)
    images = np.empty((len(CLASS_NAMES) * n_per_class, height, width, 3))
    labels = np.repeat(np.arange(len(CLASS_NAMES)), n_per_class)
    for index, label in enumerate(labels):
        images[index] = render_sample(int(label), width, height, root.substream(label, index % n_per_class))
    logger.info("[gen_dataset] %d samples of %dx%d", len(labels), width, height)
    return Dataset(images, labels, list(CLASS_NAMES))


def export_dataset(dataset: Dataset, directory) -> Path:
    """Write images/NNNNN.ppm and labels.csv (file,label,name)."""
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    with open(directory / "labels.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["file", "label", "name"])
        for index, (image, label) in enumerate(zip(dataset.images, dataset.labels)):
            name = f"images/{index:05d}.ppm"
            write_ppm(directory / name, image)
            writer.writerow([name, int(label), dataset.class_names[label]])
    return directory


def read_dataset(directory) -> Dataset:
    """Inverse of `export_dataset`, up to 8-bit quantisation."""
    directory = Path(directory)
    images, labels, names = [], [], {}
    try:
        with open(directory / "labels.csv", newline="", encoding="utf-8") as handle:
            for line, record in enumerate(csv.DictReader(handle), start=2):
                try:
                    label = int(record["label"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise ParseError(f"labels.csv line {line}: {exc}") from exc
                images.append(read_ppm(directory / record["file"]))
                labels.append(label)
                names[label] = record.get("name") or str(label)
    except OSError as exc:
        raise ParseError(f"Cannot read dataset in {directory}: {exc}") from exc
    if not images:
        raise ParseError(f"Dataset in {directory} is empty")
    class_names = [names.get(i, str(i)) for i in range(max(names) + 1)]
    return Dataset(np.stack(images), np.asarray(labels, dtype=np.int64), class_names)
