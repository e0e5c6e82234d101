"""
Acceptance sweep: train (or load) the default sign classifier, run emulated
system-aware creation and alteration sweeps, and print a [PASSED]/[FAILED]
line per check.
"""
import argparse
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv

from ghostflare.attack.solver import AttackConfig
from ghostflare.harness.evaluate import EvalConfig, run_eval
from ghostflare.harness.report import write_eval_outputs
from ghostflare.models.classifier import load_classifier, save_classifier
from ghostflare.models.dataset import gen_dataset
from ghostflare.models.training import TrainConfig, train
from ghostflare.optics.channel import ChannelParams
from ghostflare.utils.style import (
    ANSI_BLUE,
    ANSI_BRIGHT_MAGENTA,
    ANSI_GREEN,
    ANSI_RED,
    ANSI_RESET,
)

# distance (m) -> minimum creation success rate; sides 32, 16, 8, 4 under the table schedule
CREATION_FLOORS = {1.0: 0.9, 2.0: 0.9, 3.0: 0.9, 4.0: 0.6}
ALTERATION_SLACK = 0.05


def parse_args():
    parser = argparse.ArgumentParser(description="Run the ghostflare acceptance sweep.")
    parser.add_argument("--model", default=None, help="Trained model JSON (default: train one)")
    parser.add_argument("--out-dir", default="acceptance", help="Where reports are written")
    parser.add_argument("--samples", type=int, default=1, help="Samples per (source, target) cell")
    parser.add_argument("--threads", type=int, default=4)
    parser.add_argument("--max-iters", type=int, default=1500, help="Adam steps per attack")
    parser.add_argument("--seed", type=int, default=0)
    return parser.parse_args()


class Checks:
    def __init__(self):
        self.passed = 0
        self.failed = 0

    def record(self, name: str, ok: bool, detail: str = ""):
        if ok:
            print(f"{ANSI_GREEN}[PASSED]{ANSI_RESET} {name} {detail}")
            self.passed += 1
        else:
            print(f"{ANSI_RED}[FAILED]{ANSI_RESET} {name} {detail}")
            self.failed += 1


def get_model(args, out_dir: Path, checks: Checks):
    if args.model:
        return load_classifier(args.model)
    print(f"{ANSI_BLUE}[TRAINING]{ANSI_RESET} default classifier on 8 x 200 synthetic signs")
    dataset = gen_dataset(args.seed, 200, 32, 32)
    model, report = train(TrainConfig(seed=args.seed), dataset, progress=True)
    save_classifier(model, out_dir / "model.json")
    checks.record("classifier test accuracy >= 0.90", report.test_accuracy >= 0.9, f"({report.test_accuracy:.3f})")
    return model


def sweep(model, mode: str, distances, args, out_dir: Path):
    config = EvalConfig(
        distances=list(distances),
        samples_per_cell=args.samples,
        mode=mode,
        awareness="system",
        seed=args.seed,
        attack=AttackConfig(adam={"max_iters": args.max_iters}),
    )
    report = run_eval(config, model, ChannelParams(), threads=args.threads, progress=True)
    write_eval_outputs(report, out_dir / mode, plot_data=True)
    return {r.distance: r for r in report.results}


def main():
    load_dotenv()
    logging.basicConfig(level=logging.WARNING, format="[%(asctime)s] %(levelname)s %(name)s - %(message)s")
    args = parse_args()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checks = Checks()

    print(f"{ANSI_BRIGHT_MAGENTA}[STARTING EVALUATION]{ANSI_RESET}")
    model = get_model(args, out_dir, checks)

    print(f"{ANSI_BLUE}[EVALUATING]{ANSI_RESET} creation attacks")
    creation = sweep(model, "creation", [1.0, 2.0, 3.0, 4.0, 5.0], args, out_dir)
    for distance, floor in CREATION_FLOORS.items():
        result = creation[distance]
        checks.record(
            f"creation success at side {result.side} >= {floor:.2f}",
            result.success_rate >= floor,
            f"({result.success_rate:.3f})",
        )
    chain = [creation[d].success_rate for d in (3.0, 4.0, 5.0)]
    checks.record("creation success non-increasing for sides 8 -> 4 -> 2", chain[0] >= chain[1] >= chain[2], f"{chain}")

    print(f"{ANSI_BLUE}[EVALUATING]{ANSI_RESET} alteration attacks")
    alteration = sweep(model, "alteration", [1.0, 2.0, 3.0], args, out_dir)
    for distance, result in alteration.items():
        ceiling = creation[distance].success_rate + ALTERATION_SLACK
        checks.record(
            f"alteration at d={distance:g} m within {ALTERATION_SLACK:.2f} of creation",
            result.success_rate <= ceiling,
            f"({result.success_rate:.3f} vs {creation[distance].success_rate:.3f})",
        )

    print(
        f"{ANSI_BRIGHT_MAGENTA}[EVALUATION COMPLETE]{ANSI_RESET} {checks.passed} check{'' if checks.passed == 1 else 's'} passed, {checks.failed} check{'' if checks.failed == 1 else 's'} failed"
    )
    return 0 if checks.failed == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
