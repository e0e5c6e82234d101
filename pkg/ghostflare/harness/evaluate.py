"""
Success-rate evaluation over throwing distances.

For every distance d the pattern resolution comes from the resolution
schedule, and every (source, target, sample) cell is attacked once:

- creation: the source is a black background, every class is a target;
- alteration: the source is a class image, every other class is a target.

Sample s of a cell uses the s-th exemplar of each class involved, so the k
samples of a cell see k different images. Camera-aware attackers project the
target exemplar downsampled to the schedule resolution; system-aware
attackers solve for a pattern against the classifier. A cell succeeds when
the quantised perceived image is classified as the target. Cells are
independent and each one derives its own RNG
substream from (distance index, source, target, sample), so results do not
depend on the number of worker threads.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tqdm import tqdm

from ghostflare import __version__
from ghostflare.attack.pattern import GridPattern, sample_pattern
from ghostflare.attack.solver import AttackConfig, attack_channel, perceive, solve_attack
from ghostflare.exceptions import DimMismatch
from ghostflare.models.classifier import Classifier
from ghostflare.models.dataset import gen_dataset
from ghostflare.optics.channel import ChannelParams, Placement
from ghostflare.optics.geometry import ProjectorOptics, resolution_schedule
from ghostflare.utils.numkit import RngStream

logger = logging.getLogger(__name__)

BLANK = -1


class EvalConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    distances: List[float] = [1.0, 2.0, 3.0, 4.0, 5.0]
    resolution_mode: Literal["table", "formula"] = "table"
    samples_per_cell: int = Field(5, ge=1)
    mode: Literal["creation", "alteration"] = "creation"
    awareness: Literal["camera", "system"] = "system"
    model_path: Optional[str] = None
    channel_path: Optional[str] = None
    # exemplars are gen_dataset(exemplar_seed, samples_per_cell, w, h), grouped by class
    exemplar_seed: int = 0
    attack: AttackConfig = AttackConfig()
    optics: ProjectorOptics = ProjectorOptics()
    seed: int = 0
    out_dir: Optional[str] = None

    @field_validator("distances")
    @classmethod
    def _positive(cls, value):
        if not value or any(not d > 0 for d in value):
            raise ValueError("distances must be a non-empty list of positive numbers")
        return value


@dataclass(frozen=True)
class Cell:
    distance_index: int
    source: int
    target: int
    sample: int


@dataclass
class DistanceResult:
    distance: float
    side: int
    sources: List[int]
    # counts[row][target], rows follow `sources`
    counts: List[List[int]]
    successes: int = 0
    attempts: int = 0

    @property
    def success_rate(self) -> float:
        return self.successes / self.attempts if self.attempts else 0.0

    def to_dict(self, class_names: List[str], k: int) -> Dict:
        return {
            "distance": self.distance,
            "side": self.side,
            "success_rate": self.success_rate,
            "successes": self.successes,
            "attempts": self.attempts,
            "sources": ["blank" if s == BLANK else class_names[s] for s in self.sources],
            "counts": self.counts,
            "matrix": [[count / k for count in row] for row in self.counts],
        }


@dataclass
class EvalReport:
    config: Dict
    class_names: List[str]
    samples_per_cell: int
    results: List[DistanceResult] = field(default_factory=list)
    complete: bool = True
    version: str = __version__

    def to_dict(self) -> Dict:
        return {
            "version": self.version,
            "complete": self.complete,
            "config": self.config,
            "classes": self.class_names,
            "distances": [r.to_dict(self.class_names, self.samples_per_cell) for r in self.results],
        }


def block_means(image: np.ndarray, side: int) -> np.ndarray:
    """side x side x 3 means over the nearest-division blocks of `image`."""
    if side < 1:
        raise ValueError(f"side must be >= 1, got {side}")
    height, width, channels = image.shape
    rows = (np.arange(height) * side) // height
    cols = (np.arange(width) * side) // width
    index = (rows[:, None] * side + cols[None, :]).ravel()
    counts = np.bincount(index, minlength=side * side).astype(np.float64)
    flat = image.reshape(-1, channels)
    sums = np.stack([np.bincount(index, flat[:, c], minlength=side * side) for c in range(channels)], axis=1)
    return (sums / counts[:, None]).reshape(side, side, channels)


def downsample(image: np.ndarray, side: int) -> np.ndarray:
    """
    Block-mean pool to side x side, then expand back to the original size.

    When `side` does not divide the image, pixel i falls in block
    floor(i side / n). Block sums are unchanged, so the global mean is too.
    """
    height, width, _ = image.shape
    means = block_means(image, side)
    rows = (np.arange(height) * side) // height
    cols = (np.arange(width) * side) // width
    return means[rows[:, None], cols[None, :]]


def load_exemplars(config: EvalConfig, model: Classifier) -> np.ndarray:
    """(m, k, h, w, 3): k rendered images per class."""
    height, width, _ = model.input_shape
    k = config.samples_per_cell
    dataset = gen_dataset(config.exemplar_seed, k, width, height)
    if dataset.num_classes != model.num_classes:
        raise DimMismatch(f"{dataset.num_classes} exemplar classes for a {model.num_classes}-class model")
    return dataset.images.reshape(dataset.num_classes, k, height, width, 3)


def exemplar(exemplars: np.ndarray, label: int, sample: int) -> np.ndarray:
    """Image `sample` of class `label`; a single image per class (m, h, w, 3) serves every sample."""
    if exemplars.ndim == 4:
        return exemplars[label]
    return exemplars[label, sample % exemplars.shape[1]]


def enumerate_cells(config: EvalConfig, num_classes: int) -> List[Cell]:
    """Cells in canonical order: distance, source, target, sample."""
    sources = [BLANK] if config.mode == "creation" else list(range(num_classes))
    return [
        Cell(d, source, target, sample)
        for d in range(len(config.distances))
        for source in sources
        for target in range(num_classes)
        if source != target
        for sample in range(config.samples_per_cell)
    ]


def run_cell(
    cell: Cell,
    config: EvalConfig,
    model: Classifier,
    params: ChannelParams,
    exemplars: np.ndarray,
    sides: List[int],
) -> bool:
    stream = RngStream(config.seed).substream(cell.distance_index, cell.source + 1, cell.target, cell.sample)
    side = sides[cell.distance_index]
    benign = np.zeros(model.input_shape) if cell.source == BLANK else exemplar(exemplars, cell.source, cell.sample)
    height, width, _ = model.input_shape
    placement = Placement.centered(width, height, side)
    channel = params.at(distance=config.distances[cell.distance_index])

    if config.awareness == "system":
        attack = config.attack.model_copy(update={"target": cell.target, "seed": stream.stream_id})
        report = solve_attack(model, channel, placement, benign, attack)
        return report.success

    rows, cols = placement.region
    means = block_means(exemplar(exemplars, cell.target, cell.sample)[rows, cols], side)
    delta = sample_pattern(GridPattern(means, config.attack.sigma), placement.width, placement.height, stream)
    y = perceive(delta, benign, placement, attack_channel(channel, config.attack), config.attack, quantize_output=True)
    return int(np.argmax(model.logits(y))) == cell.target


def run_eval(
    config: EvalConfig,
    model: Classifier,
    params: ChannelParams = ChannelParams(),
    exemplars: Optional[np.ndarray] = None,
    threads: int = 1,
    on_partial: Optional[Callable[[EvalReport], None]] = None,
    progress: bool = False,
) -> EvalReport:
    """
    Evaluate attack success over every configured distance.

    If a cell raises, the cells finished before it (in canonical order) are
    aggregated into a report marked incomplete, passed to `on_partial`, and the
    error is re-raised.
    """
    if exemplars is None:
        exemplars = load_exemplars(config, model)
    num_classes = model.num_classes
    sides = [resolution_schedule(d, config.resolution_mode, config.optics) for d in config.distances]
    cells = enumerate_cells(config, num_classes)
    logger.info("[run_eval] %d cells over distances %s (sides %s)", len(cells), config.distances, sides)

    outcomes: List[Tuple[Cell, bool]] = []
    pool = ThreadPoolExecutor(max_workers=threads)
    try:
        results = pool.map(lambda c: run_cell(c, config, model, params, exemplars, sides), cells)
        for cell, success in tqdm(zip(cells, results), total=len(cells), desc="evaluate", disable=not progress):
            outcomes.append((cell, success))
    except BaseException:
        # queued cells are dropped; cells already running finish in the background
        pool.shutdown(wait=False, cancel_futures=True)
        if on_partial is not None:
            on_partial(_aggregate(config, model, sides, outcomes, complete=False))
        raise
    pool.shutdown()
    report = _aggregate(config, model, sides, outcomes, complete=True)
    for result in report.results:
        logger.info("[run_eval] d=%g side=%d success rate %.3f", result.distance, result.side, result.success_rate)
    return report


def _aggregate(config, model, sides, outcomes, complete: bool) -> EvalReport:
    num_classes = model.num_classes
    sources = [BLANK] if config.mode == "creation" else list(range(num_classes))
    results = [
        DistanceResult(d, side, sources, [[0] * num_classes for _ in sources])
        for d, side in zip(config.distances, sides)
    ]
    for cell, success in outcomes:
        result = results[cell.distance_index]
        result.attempts += 1
        if success:
            result.successes += 1
            result.counts[sources.index(cell.source)][cell.target] += 1
    return EvalReport(
        config=config.model_dump(mode="json"),
        class_names=list(model.class_names),
        samples_per_cell=config.samples_per_cell,
        results=results,
        complete=complete,
    )
