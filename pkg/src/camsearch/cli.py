"""Command line entry point: ``camsearch <command> --scenario FILE --out PATH``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import experiments as ex
from .errors import CamsearchError, ScenarioError
from .scenario import World, load_scenario
from .workspace import write_mesh_csv

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    text = text.strip()
    if not text:
        raise argparse.ArgumentTypeError("expected at least one value")
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return [int(v) for v in vals]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _summary(items: dict) -> str:
    return "".join(f"{k}={_fmt(v)}\n" for k, v in items.items())


def cmd_mesh(world: World, args) -> str:
    write_mesh_csv(world.space, args.out)
    if args.ideal_out:
        write_mesh_csv(world.ideal_space, args.ideal_out)
    return _summary(ex.mesh_summary(world))


def cmd_energy_table(world: World, args) -> str:
    delays = world.scenario.energy_table.tau_delays_s if args.tau_delays is None else args.tau_delays
    rows = ex.energy_rows(world, delays)
    _write_csv(args.out, ["tau_delay_s", "energy_ws", "settling_s"], rows)
    return _summary({"rows": len(rows)})


TRACE_HEADER = ["iter", "node_index", "x", "y", "z", "measured_count", "e_remaining_ws",
                "newly_explored", "terminated"]


def trace_rows(result):
    for r in result.trace:
        yield (r.iteration, r.node_index, *r.position, r.measured_count, r.e_remaining,
               r.newly_explored, r.terminated)


def cmd_search(world: World, args) -> str:
    overrides = {}
    if args.e_threshold is not None:
        overrides["e_threshold"] = args.e_threshold
    result = ex.search_run(world, **overrides)
    _write_csv(args.out, TRACE_HEADER, trace_rows(result))
    text = _summary(result.summary())
    if args.summary_out:
        Path(args.summary_out).write_text(text)
    return text


def cmd_sensitivity(world: World, args) -> str:
    rows = ex.sensitivity(world, args.param, args.values, args.seeds)
    _write_csv(args.out, ["param", "value", "mean_iterations", "mean_avg_new_distance_m", "global_min_fraction"],
               [(r.param, r.value, r.mean_iterations, r.mean_avg_new_distance, r.global_min_fraction)
                for r in rows])
    return _summary({"param": args.param, "rows": len(rows)})


def cmd_denoise_bench(world: World, args) -> str:
    rows, freq, spectra = ex.denoise_bench(world, args.counts)
    _write_csv(args.out, ["n_frames", "residual_std", "expected_std", "ratio"],
               [(n, s, e, s / e) for n, s, e in rows])
    spectra_out = args.spectra_out or Path(args.out).with_name(Path(args.out).stem + "_spectra.csv")
    labels = list(spectra)
    _write_csv(spectra_out, ["bin", "frequency_cpp", *labels],
               [(i, float(f), *(float(spectra[k][i]) for k in labels)) for i, f in enumerate(freq)])
    return _summary({"rows": len(rows), "spectra": str(spectra_out)})


COMMANDS = {
    "mesh": cmd_mesh,
    "energy-table": cmd_energy_table,
    "search": cmd_search,
    "sensitivity": cmd_sensitivity,
    "denoise-bench": cmd_denoise_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="camsearch", description="Energy-aware camera placement search.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--scenario", help="scenario file (default: bundled reference)")
        p.add_argument("--out", required=True, help="output CSV path")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        return p

    p = common(sub.add_parser("mesh", help="mesh the operational space"))
    p.add_argument("--ideal-out", help="also write the unreduced mesh")

    p = common(sub.add_parser("energy-table", help="move energy versus tau_delay"))
    p.add_argument("--tau-delays", type=_floats, help="comma-separated tau_delay values in seconds")

    p = common(sub.add_parser("search", help="run one search and write its trace"))
    p.add_argument("--e-threshold", type=float, help="override the energy threshold (ws)")
    p.add_argument("--summary-out", help="also write the summary block to this file")

    p = common(sub.add_parser("sensitivity", help="sweep kEst or kSd over several seeds"))
    p.add_argument("--param", required=True, choices=sorted(ex.SWEEP_PARAMS))
    p.add_argument("--values", type=_floats, help="comma-separated parameter values")
    p.add_argument("--seeds", type=int, help="number of seeds per value")

    p = common(sub.add_parser("denoise-bench", help="averaging residuals and spectra"))
    p.add_argument("--counts", type=_ints, help="comma-separated frame counts")
    p.add_argument("--spectra-out", help="spectra CSV path (default: <out>_spectra.csv)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            search = scenario.search.model_copy(update={"seed": args.seed})
            scenario = scenario.model_copy(update={"search": search})
        text = COMMANDS[args.command](World(scenario), args)
    except ScenarioError as exc:
        print(f"camsearch {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CamsearchError, ValueError, OSError) as exc:
        print(f"camsearch {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
