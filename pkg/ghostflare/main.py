"""
ghostflare command line
"""
import argparse
import logging
import sys
from typing import List, Optional

from ghostflare.cli import commands
from ghostflare.config import Config
from ghostflare.exceptions import ConfigError, GhostflareError, ParseError
from ghostflare.utils.misc import parse_float_list, parse_pair
from ghostflare.utils.style import ANSI_BRIGHT_MAGENTA, ANSI_RESET, error_line

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class ArgumentParser(argparse.ArgumentParser):
    """argparse, but usage errors exit with the config-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _world(text: str):
    values = parse_float_list(text)
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected 'x,y,z', got {text!r}")
    return values


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Master seed (default: GHOSTFLARE_SEED or 0)")
    common.add_argument("--config", default=None, help="JSON config with optional channel/geometry/optics/attack/eval/train sections")
    common.add_argument("--out-dir", default=None, help="Artifact directory (default: GHOSTFLARE_OUT_DIR or ./out)")
    common.add_argument("--threads", type=int, default=None, help="Worker threads for evaluation")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    channel = ArgumentParser(add_help=False)
    channel.add_argument("--channel", default=None, help="Channel parameter JSON written by fit-channel / fit-color")

    parser = ArgumentParser(prog="ghostflare", description="Projector lens-flare attack simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    p = sub.add_parser("fit-channel", parents=[common, channel], help="Fit the illuminance sigmoid from T_d,P_a,d,I samples")
    p.add_argument("--samples", required=True, help="CSV with header T_d,P_a,d,I")
    p.add_argument("--flare", default=None, help="Optional CSV with header I,y for the flare gain")
    p.add_argument("--max-iterations", type=int, default=200)
    p.set_defaults(handler=commands.fit_channel)

    p = sub.add_parser("fit-color", parents=[common, channel], help="Fit the colour calibration matrix")
    p.add_argument("--samples", required=True, help="CSV with header r,g,b,yr,yg,yb")
    p.add_argument("--normalized", action="store_true", help="Samples are already (x_hat, y_hat) pairs")
    p.set_defaults(handler=commands.fit_color)

    p = sub.add_parser("gen-dataset", parents=[common], help="Render the synthetic sign dataset")
    p.add_argument("--n-per-class", type=int, default=200)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--height", type=int, default=32)
    p.set_defaults(handler=commands.gen_dataset_command)

    p = sub.add_parser("train", parents=[common], help="Train the default classifier")
    p.add_argument("--dataset", default=None, help="Directory written by gen-dataset (default: generate one)")
    p.add_argument("--n-per-class", type=int, default=200)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(handler=commands.train_command)

    p = sub.add_parser("attack", parents=[common, channel], help="Solve one creation or alteration attack")
    p.add_argument("--model", required=True)
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--mode", choices=["creation", "alteration"], default=None)
    p.add_argument("--source", type=int, default=None, help="Exemplar class to alter")
    p.add_argument("--benign", default=None, help="PPM image to alter")
    p.add_argument("--side", type=int, default=None, help="Grid side in blocks (default: from --distance)")
    p.add_argument("--distance", type=float, default=1.0)
    p.add_argument("--resolution-mode", choices=["table", "formula"], default="table")
    p.add_argument("--kappa", type=parse_float_list, default=None, help="One value or a comma separated sweep")
    p.add_argument("--c", type=parse_float_list, default=None, help="One value or a comma separated sweep")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--objective", choices=["penalty", "magnitude"], default=None)
    p.add_argument("--sigma-sweep", type=parse_float_list, default=None, help="Re-evaluate the pattern at these sigmas")
    p.add_argument("--sweep-trials", type=int, default=20)
    p.set_defaults(handler=commands.attack_command)

    p = sub.add_parser("emulate", parents=[common, channel], help="Perceived image for a pattern over a benign image")
    p.add_argument("--pattern", required=True, help="Projector pattern PPM (its size is the ghost rectangle)")
    p.add_argument("--benign", default=None, help="Benign PPM (default: black, geometry size)")
    p.add_argument("--origin", type=parse_pair, default=None, help="Ghost rectangle origin x,y (default: centred)")
    p.add_argument("--distance", type=float, default=None)
    p.add_argument("--bulb-power", type=float, default=None)
    p.add_argument("--exposure-mode", choices=["per_pixel", "global_max", "global_mean"], default="per_pixel")
    p.add_argument("--output", default=None)
    p.set_defaults(handler=commands.emulate_command)

    p = sub.add_parser("evaluate", parents=[common, channel], help="Success rates over distances")
    p.add_argument("--model", default=None)
    p.add_argument("--mode", choices=["creation", "alteration"], default=None)
    p.add_argument("--awareness", choices=["camera", "system"], default=None)
    p.add_argument("--plot-data", action="store_true", help="Write plot_data.csv")
    p.add_argument("--plot", action="store_true", help="Also render success_rates.png")
    p.set_defaults(handler=commands.evaluate_command)

    p = sub.add_parser("geometry", parents=[common], help="Ghost position, resolution and projection queries")
    query = p.add_mutually_exclusive_group()
    query.add_argument("--ghost", action="store_true", help="Ghost pixel for source --a, centre --oi, ratio --r")
    query.add_argument("--resolution", action="store_true", help="Grid side at --distance")
    query.add_argument("--project", action="store_true", help="Pixel of --world under the camera matrix")
    p.add_argument("--oi", type=parse_pair, default=None)
    p.add_argument("--a", type=parse_pair, default=None)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--distance", type=float, default=None)
    p.add_argument("--resolution-mode", choices=["table", "formula"], default="table")
    p.add_argument("--world", type=_world, default=None)
    p.set_defaults(handler=commands.geometry_command)
    return parser


def cli(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns 0 on success, 1 on config errors, 2 on runtime errors."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "geometry":
        # queries may be separated from the subcommand by a bare "--"
        argv = [token for token in argv if token != "--"]

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG

    config = Config()
    config.verbose = config.verbose or args.verbose
    logging.basicConfig(
        level=logging.DEBUG if config.verbose else logging.INFO,
        format="[%(asctime)s] %(levelname)s %(name)s - %(message)s",
    )

    try:
        return args.handler(args, config)
    except (ConfigError, ParseError) as exc:
        print(error_line(exc.message), file=sys.stderr)
        return EXIT_CONFIG
    except GhostflareError as exc:
        print(error_line(exc), file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        logging.getLogger(__name__).debug("unhandled error", exc_info=True)
        print(error_line(f"{type(exc).__name__}: {exc}"), file=sys.stderr)
        return EXIT_RUNTIME


def main_entry():
    try:
        sys.exit(cli())
    except KeyboardInterrupt:
        print(f"\n{ANSI_BRIGHT_MAGENTA}Exiting...{ANSI_RESET}")
        sys.exit(EXIT_RUNTIME)


if __name__ == "__main__":
    main_entry()
