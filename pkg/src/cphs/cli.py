"""Command line entry point: ``cphs <command> --config FILE --seed N --out DIR``."""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import sys
from pathlib import Path

from .causal import FeedbackPlan
from .config import load_config
from .errors import ContractError
from .fusion import existing_curve, target_curve
from .ivesim import build_sted_schedule, dataset_csv, to_frame
from .loop import causal_stage, facility_stage, fuse_once, pilot_graph, run_design_loop, simulate_stage, stage_seeds
from .metrics import target_discrepancy
from .report import (
    curves_csv,
    emit_report,
    figure_svg,
    history_csv,
    ive_empirical_curve,
    plot_curves,
    read_curves,
    write_artifacts,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
# library errors derive from ValueError/RuntimeError; I/O and parse failures are runtime too
RUNTIME_ERRORS = (ValueError, RuntimeError, OSError, configparser.Error)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; we reserve 2 for runtime failures
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _u64(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2^64): {text}")
    return value


COMMANDS = {
    "simulate": "sample the existing, IVE and facility datasets",
    "fuse": "simulate, then train the augmented model and plot it against the target",
    "causal": "test the pilot graph on facility data and propose a repaired graph",
    "loop": "run the full iterative design loop and write every report artifact",
    "report": "re-render report.svg from curves.csv in the output directory",
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cphs", description="Human-in-the-loop infrastructure design toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument(
            "--config", type=Path, required=name != "report",
            help="sectioned key-value configuration file" + (" (unused by report)" if name == "report" else ""),
        )
        p.add_argument("--seed", type=_u64, default=None, help="master seed, unsigned 64-bit (overrides [loop] seed)")
        p.add_argument("--out", type=Path, required=True, help="output directory, created if missing")
    return parser


def _load(args):
    config = load_config(args.config)
    return config if args.seed is None else config.with_seed(args.seed)


def cmd_simulate(args):
    config = _load(args)
    seeds = stage_seeds(config.seed, 0)
    schedule = build_sted_schedule(config.schedule)
    existing, ive_records = simulate_stage(config, schedule, seeds)
    facility = facility_stage(config, seeds)
    files = {
        "existing_dataset.csv": dataset_csv(existing.records).encode(),
        "ive_dataset.csv": dataset_csv(ive_records).encode(),
        "facility_dataset.csv": dataset_csv(facility).encode(),
    }
    write_artifacts(args.out, files)
    print(f"records existing={len(existing.records)} ive={len(ive_records)} facility={len(facility)}")


def cmd_fuse(args):
    config = _load(args)
    existing, ive_records, model, history = fuse_once(config)
    centers = config.training.centers
    curves = {
        "performance_target": target_curve(config.target, centers),
        "augmented_model": model.curve,
        "existing_model": existing_curve(config.hunt, centers),
        "ive_empirical": ive_empirical_curve(ive_records, centers),
    }
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "g_loss", "d_loss", "discrepancy"])
    for i, row in enumerate(zip(history.g_loss, history.d_loss, history.discrepancy)):
        writer.writerow([i, *(repr(float(v)) for v in row)])
    model_path = args.out / "augmented_model.txt"
    args.out.mkdir(parents=True, exist_ok=True)
    model.save(model_path)
    files = {
        "curves.csv": curves_csv(curves).encode(),
        "training_history.csv": buf.getvalue().encode(),
        "ive_dataset.csv": dataset_csv(ive_records).encode(),
        "augmented_model.txt": model_path.read_bytes(),
        "report.svg": figure_svg(plot_curves(curves)),
    }
    write_artifacts(args.out, files)
    target = curves["performance_target"]
    print(
        f"discrepancy augmented={target_discrepancy(model.curve, target):.6f} "
        f"existing={target_discrepancy(curves['existing_model'], target):.6f} epochs={len(history)}"
    )


def _effects_csv(plan: FeedbackPlan) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["variable", "ate"])
    for var, ate in sorted(plan.effects.items()):
        writer.writerow([var, repr(float(ate))])
    return buf.getvalue()


def cmd_causal(args):
    config = _load(args)
    facility = facility_stage(config, stage_seeds(config.seed, 0))
    pilot = pilot_graph(config)
    report, _, refined, plan = causal_stage(config, pilot, to_frame(facility))
    files = {
        "facility_dataset.csv": dataset_csv(facility).encode(),
        "pilot_graph.txt": pilot.to_text().encode(),
        "final_graph.txt": refined.to_text().encode(),
        "independence_tests.csv": report.to_csv().encode(),
        "effects.csv": _effects_csv(plan).encode(),
    }
    write_artifacts(args.out, files)
    added = ";".join(f"{u}->{v}" for u, v in plan.edges_added) or "-"
    removed = ";".join(plan.variables_to_remove) or "-"
    print(f"tests={len(report)} rejected={len(report.rejected())} edges_added={added} variables_removed={removed}")


def cmd_loop(args):
    config = _load(args)

    def flush(state):
        files = {"loop_history.csv": history_csv(state).encode()}
        if state.ive_records:
            files["ive_dataset.csv"] = dataset_csv(state.ive_records).encode()
        if state.facility_records:
            files["facility_dataset.csv"] = dataset_csv(state.facility_records).encode()
        if state.pilot_graph is not None:
            files["pilot_graph.txt"] = state.pilot_graph.to_text().encode()
        write_artifacts(args.out, files)

    result = run_design_loop(config, flush=flush)
    emit_report(result, args.out)
    s = result.state
    print(
        f"termination={result.termination} iterations={s.iteration} "
        f"best_discrepancy={min(s.discrepancy_history):.6f} graph_distance={s.graph_distance_history[-1]}"
    )


def cmd_report(args):
    curves = read_curves(args.out / "curves.csv")
    missing = {"performance_target", "augmented_model", "existing_model", "ive_empirical"} - set(curves)
    if missing:
        raise ContractError(f"curves.csv lacks series: {sorted(missing)}")
    (args.out / "report.svg").write_bytes(figure_svg(plot_curves(curves)))
    print(f"wrote {args.out / 'report.svg'}")


HANDLERS = {"simulate": cmd_simulate, "fuse": cmd_fuse, "causal": cmd_causal, "loop": cmd_loop, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        HANDLERS[args.command](args)
    except RUNTIME_ERRORS as exc:
        print(f"cphs {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
