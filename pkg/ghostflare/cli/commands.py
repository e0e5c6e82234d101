"""
Handlers for the ghostflare subcommands.

Each handler takes the parsed arguments and the process Config, writes its
artifacts under the output directory and returns an exit code.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import ValidationError

from ghostflare.attack.solver import AttackConfig, sigma_sweep, solve_attack
from ghostflare.config import Config, load_model, load_section, save_model
from ghostflare.exceptions import ConfigError
from ghostflare.harness.evaluate import EvalConfig, load_exemplars, run_eval
from ghostflare.harness.report import write_eval_outputs
from ghostflare.models.classifier import load_classifier, save_classifier
from ghostflare.models.dataset import export_dataset, gen_dataset, read_dataset
from ghostflare.models.training import TrainConfig, train
from ghostflare.optics.calibration import (
    fit_color_matrix,
    fit_flare_gain,
    fit_illuminance,
    normalize_color_samples,
    read_color_csv,
    read_flare_csv,
    read_illuminance_csv,
)
from ghostflare.optics.channel import ChannelParams, Placement, emulate
from ghostflare.optics.geometry import (
    CameraGeometry,
    ProjectorOptics,
    ghost_position,
    project_point,
    resolution_schedule,
)
from ghostflare.utils.image_io import read_ppm, write_ppm
from ghostflare.utils.misc import format_number, format_pair
from ghostflare.utils.style import ANSI_BLUE, ANSI_RESET, TAG

logger = logging.getLogger(__name__)


def _updated(model, **changes):
    """Validated copy of a pydantic model; CLI values that break validation are config errors."""
    changes = {k: v for k, v in changes.items() if v is not None}
    try:
        return type(model).model_validate({**model.model_dump(), **changes})
    except ValidationError as exc:
        raise ConfigError(f"Invalid {type(model).__name__}: {exc}") from exc


def channel_params(args) -> ChannelParams:
    """--channel file if given, else the `channel` section of --config, else defaults."""
    if getattr(args, "channel", None):
        return load_model(ChannelParams, args.channel)
    return load_section(ChannelParams, args.config, "channel")


def fit_channel(args, config: Config) -> int:
    base = channel_params(args)
    samples = read_illuminance_csv(args.samples)
    fit = fit_illuminance(samples, i_max=base.i_max, max_iterations=args.max_iterations)
    params = fit.apply(base)
    if args.flare:
        params = _updated(params, rho=fit_flare_gain(read_flare_csv(args.flare), params.i_env))

    out = config.resolve_out_dir(args.out_dir) / "channel.json"
    save_model(params, out)
    print(f"{TAG} a={fit.a:.6g} b={fit.b:.6g} c_t={fit.c_t:.6g} c_d={fit.c_d:.6g} rmse={fit.rmse:.4g} lux")
    print(f"{TAG} wrote {ANSI_BLUE}{out}{ANSI_RESET}")
    return 0


def fit_color(args, config: Config) -> int:
    base = channel_params(args)
    deltas, observed = read_color_csv(args.samples)
    if args.normalized:
        x_hat, y_hat = deltas, observed
    else:
        x_hat, y_hat = normalize_color_samples(deltas, observed, base)
    matrix = fit_color_matrix(x_hat, y_hat)
    params = _updated(base, color_matrix=tuple(tuple(float(v) for v in row) for row in matrix))

    out = config.resolve_out_dir(args.out_dir) / "channel.json"
    save_model(params, out)
    for row in matrix:
        print(f"{TAG} " + " ".join(f"{v: .6f}" for v in row))
    print(f"{TAG} wrote {ANSI_BLUE}{out}{ANSI_RESET}")
    return 0


def gen_dataset_command(args, config: Config) -> int:
    dataset = gen_dataset(config.resolve_seed(args.seed), args.n_per_class, args.width, args.height)
    out = export_dataset(dataset, config.resolve_out_dir(args.out_dir) / "dataset")
    print(f"{TAG} {len(dataset)} images written to {ANSI_BLUE}{out}{ANSI_RESET}")
    return 0


def train_command(args, config: Config) -> int:
    section = load_section(TrainConfig, args.config, "train")
    train_config = _updated(section, seed=config.resolve_seed(args.seed, section.seed), epochs=args.epochs)
    if args.dataset:
        dataset = read_dataset(args.dataset)
    else:
        dataset = gen_dataset(train_config.seed, args.n_per_class, args.width, args.height)
    model, report = train(train_config, dataset, progress=True)

    out_dir = config.resolve_out_dir(args.out_dir)
    save_classifier(model, out_dir / "model.json")
    (out_dir / "train_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"{TAG} train accuracy {report.train_accuracy:.3f}, test accuracy {report.test_accuracy}")
    print(f"{TAG} wrote {ANSI_BLUE}{out_dir / 'model.json'}{ANSI_RESET}")
    return 0


def _grid_side(args, optics: ProjectorOptics) -> int:
    if args.side is not None:
        return args.side
    return resolution_schedule(args.distance, args.resolution_mode, optics)


def attack_command(args, config: Config) -> int:
    model = load_classifier(args.model)
    params = channel_params(args).at(distance=args.distance)
    optics = load_section(ProjectorOptics, args.config, "optics")
    section = load_section(AttackConfig, args.config, "attack")
    base = _updated(
        section,
        target=args.target,
        mode=args.mode,
        seed=config.resolve_seed(args.seed, section.seed),
        sigma=args.sigma,
        trials=args.trials,
        objective=args.objective,
    )
    if base.mode == "alteration" and not args.benign and args.source is None:
        raise ConfigError("Alteration attacks need --benign or --source")
    if args.source is not None and not 0 <= args.source < model.num_classes:
        raise ConfigError(f"--source must be a class in 0..{model.num_classes - 1}")

    height, width, _ = model.input_shape
    side = _grid_side(args, optics)
    if side > min(width, height):
        origin = "--side" if args.side is not None else f"the resolution schedule at {format_number(args.distance)} m"
        raise ConfigError(f"A {side}x{side} grid from {origin} does not fit the {width}x{height} model input")
    placement = Placement.centered(width, height, side)

    benign: Optional[np.ndarray] = None
    if base.mode == "alteration":
        if args.benign:
            benign = read_ppm(args.benign)
        else:
            exemplar_config = load_section(EvalConfig, args.config, "eval")
            benign = load_exemplars(exemplar_config, model)[args.source, 0]

    out_dir = config.resolve_out_dir(args.out_dir)
    kappas = args.kappa or [base.kappa]
    cs = args.c or [base.c]
    sweep = len(kappas) * len(cs) > 1
    for kappa in kappas:
        for c in cs:
            attack = _updated(base, kappa=kappa, c=c)
            report = solve_attack(model, params, placement, benign, attack)
            directory = out_dir / f"kappa{format_number(kappa)}_c{format_number(c)}" if sweep else out_dir
            report.save(directory)
            if args.sigma_sweep:
                rates = sigma_sweep(model, report.mu, args.sigma_sweep, params, placement, benign, attack,
                                    n_trials=args.sweep_trials)
                with open(directory / "sigma_sweep.csv", "w", newline="", encoding="utf-8") as handle:
                    writer = csv.writer(handle, lineterminator="\n")
                    writer.writerow(["sigma", "success_rate"])
                    writer.writerows((repr(s), repr(r)) for s, r in rates)
            status = "success" if report.success else "failed"
            print(
                f"{TAG} kappa={format_number(kappa)} c={format_number(c)}: {status}, predicted "
                f"{model.class_names[report.predicted]} (target {model.class_names[attack.target]}), "
                f"gap {report.logit_gap:.3f}"
            )
    print(f"{TAG} wrote {ANSI_BLUE}{out_dir}{ANSI_RESET}")
    return 0


def emulate_command(args, config: Config) -> int:
    params = channel_params(args)
    params = _updated(params, distance=args.distance, bulb_power=args.bulb_power)
    pattern = read_ppm(args.pattern)
    if args.benign:
        benign = read_ppm(args.benign)
    else:
        geometry = load_section(CameraGeometry, args.config, "geometry")
        benign = np.zeros((geometry.height, geometry.width, 3))
    height, width, _ = pattern.shape
    if args.origin is not None:
        x0, y0 = (int(v) for v in args.origin)
    else:
        x0, y0 = (benign.shape[1] - width) // 2, (benign.shape[0] - height) // 2
    placement = Placement(x0, y0, width, height)
    y = emulate(pattern, benign, placement, params, args.exposure_mode, quantize_output=True)

    out = Path(args.output) if args.output else config.resolve_out_dir(args.out_dir) / "emulated.ppm"
    write_ppm(out, y)
    print(f"{TAG} wrote {ANSI_BLUE}{out}{ANSI_RESET}")
    return 0


def evaluate_command(args, config: Config) -> int:
    section = load_section(EvalConfig, args.config, "eval")
    eval_config = _updated(
        section,
        seed=config.resolve_seed(args.seed, section.seed),
        model_path=args.model,
        mode=args.mode,
        awareness=args.awareness,
    )
    if eval_config.model_path is None:
        raise ConfigError("evaluate needs a model (--model or eval.model_path)")
    model = load_classifier(eval_config.model_path)
    if getattr(args, "channel", None):
        params = load_model(ChannelParams, args.channel)
    elif eval_config.channel_path:
        params = load_model(ChannelParams, eval_config.channel_path)
    else:
        params = load_section(ChannelParams, args.config, "channel")

    out_dir = config.resolve_out_dir(args.out_dir or eval_config.out_dir)

    def flush(partial):
        write_eval_outputs(partial, out_dir)
        logger.warning("[evaluate] aborted; partial report written to %s", out_dir)

    report = run_eval(
        eval_config, model, params, threads=config.resolve_threads(args.threads), on_partial=flush, progress=True
    )
    write_eval_outputs(report, out_dir, plot_data=args.plot_data, plot=args.plot)
    for result in report.results:
        print(
            f"{TAG} d={format_number(result.distance)} m side={result.side}: "
            f"{result.successes}/{result.attempts} = {result.success_rate:.3f}"
        )
    print(f"{TAG} wrote {ANSI_BLUE}{out_dir}{ANSI_RESET}")
    return 0


def geometry_command(args, config: Config) -> int:
    if args.ghost:
        if args.oi is None or args.a is None or args.r is None:
            raise ConfigError("--ghost needs --oi, --a and --r")
        print(format_pair(ghost_position(args.oi, args.r, args.a)))
    elif args.resolution:
        if args.distance is None:
            raise ConfigError("--resolution needs --distance")
        optics = load_section(ProjectorOptics, args.config, "optics")
        print(resolution_schedule(args.distance, args.resolution_mode, optics))
    elif args.project:
        if args.world is None:
            raise ConfigError("--project needs --world")
        geometry = load_section(CameraGeometry, args.config, "geometry")
        print(format_pair(project_point(geometry.matrix, args.world)))
    else:
        raise ConfigError("geometry needs one of --ghost, --resolution or --project")
    return 0
