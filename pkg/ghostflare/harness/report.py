"""Writing evaluation reports: JSON, per-distance matrix CSVs, plot series and an optional figure."""
import csv
import json
import logging
from pathlib import Path
from typing import List

from ghostflare.harness.evaluate import EvalReport
from ghostflare.utils.misc import format_number

logger = logging.getLogger(__name__)


def matrix_filename(distance: float) -> str:
    return f"matrix_d{format_number(distance)}.csv"


def write_json_report(report: EvalReport, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


def write_matrix_csv(report: EvalReport, directory) -> List[Path]:
    """One CSV per distance: rows are the source (actual) classes, columns the targets."""
    paths = []
    k = report.samples_per_cell
    for result in report.results:
        path = Path(directory) / matrix_filename(result.distance)
        sources = result.to_dict(report.class_names, k)["sources"]
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["actual", *report.class_names])
            for name, row in zip(sources, result.counts):
                writer.writerow([name, *(repr(count / k) for count in row)])
            writer.writerow(["overall", repr(result.success_rate)])
        paths.append(path)
    return paths


def write_plot_data(report: EvalReport, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["distance", "side", "success_rate"])
        for result in report.results:
            writer.writerow([format_number(result.distance), result.side, repr(result.success_rate)])
    return path


def render_plot(report: EvalReport, path) -> Path:
    """Success rate against distance, annotated with the grid side."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    distances = [r.distance for r in report.results]
    rates = [r.success_rate for r in report.results]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(distances, rates, marker="o")
    for result in report.results:
        ax.annotate(f"{result.side}x{result.side}", (result.distance, result.success_rate),
                    textcoords="offset points", xytext=(0, 6), ha="center", fontsize=8)
    ax.set_xlabel("distance (m)")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.05, 1.1)
    ax.set_title(f"{report.config.get('mode', '')} attacks")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def write_eval_outputs(report: EvalReport, directory, plot_data: bool = False, plot: bool = False) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = [write_json_report(report, directory / "report.json")]
    written += write_matrix_csv(report, directory)
    if plot_data or plot:
        written.append(write_plot_data(report, directory / "plot_data.csv"))
    if plot:
        written.append(render_plot(report, directory / "success_rates.png"))
    logger.info("[write_eval_outputs] wrote %d files to %s", len(written), directory)
    return written
