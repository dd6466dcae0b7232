"""Command line entry point: ``sqrtkf run`` and ``sqrtkf compare``.

Exit codes: 0 success, 1 traces differ beyond tolerance, 2 invalid
configuration, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from .bench import ConfigInvalid, ExperimentConfig, SchemaMismatch, compare_traces, run_experiment

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("sqrtkf")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqrtkf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a filter comparison experiment")
    run.add_argument("--config", help="JSON config file; flags override its values")
    run.add_argument("--scenario", choices=["random", "ill-conditioned", "from-file", "ill_conditioned", "from_file"])
    run.add_argument("--n", type=int)
    run.add_argument("--m", type=int)
    run.add_argument("--p", type=int)
    run.add_argument("--steps", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--precision", choices=["single", "double"])
    run.add_argument("--epsilon", type=float)
    run.add_argument("--spectral-radius", dest="spectral_radius", type=float)
    run.add_argument("--input", dest="input_path", help="model JSON for the from-file scenario")
    run.add_argument("--jobs", type=int, help="worker processes for independent trials")
    run.add_argument("--out", dest="output_path")

    cmp_ = sub.add_parser("compare", help="compare two trace CSV files")
    cmp_.add_argument("--a", required=True)
    cmp_.add_argument("--b", required=True)
    cmp_.add_argument("--tol", type=float, required=True)
    return parser


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    return obj


def _run(args) -> int:
    flags = {
        k: getattr(args, k)
        for k in ("scenario", "n", "m", "p", "steps", "trials", "seed", "precision", "epsilon",
                  "spectral_radius", "input_path", "jobs", "output_path")
    }
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    config = config.merged(flags)
    summary = run_experiment(config)
    agg = summary["aggregate"]
    log.info("wrote %s (%d trials, %d errored)", config.output_path, agg["trials"], agg["errored_trials"])
    print(json.dumps(agg, indent=2, sort_keys=True))
    return EXIT_OK


def _compare(args) -> int:
    report = compare_traces(args.a, args.b, args.tol)
    print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    return EXIT_OK if report["within_tolerance"] else EXIT_TOLERANCE


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _run(args) if args.command == "run" else _compare(args)
    except (ConfigInvalid, SchemaMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
