"""Command-line entry point: ``frontierkit <command> [options]``.

Exit status is 0 on success, 2 on invalid input or configuration and 3 when
an estimator fails to converge.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConvergenceError, FrontierError, ValidationError
from .report import RunConfig, bundled_config_path, human, run_pipeline

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE = 0, 2, 3


def _common(p: argparse.ArgumentParser, bootstrap: bool = False):
    p.add_argument("--config", type=Path, default=None,
                   help="YAML run configuration (default: bundled AENA-like sample)")
    p.add_argument("--out", type=Path, default=None, help="directory for report files")
    p.add_argument("--decimal-comma", action="store_true", default=None,
                   help="read ';'-separated input with ',' as decimal mark")
    p.add_argument("--seed", type=int, default=None)
    if bootstrap:
        p.add_argument("--l1", type=int, default=None, help="inner bootstrap size (algorithm 2)")
        p.add_argument("--l2", type=int, default=None, help="outer bootstrap size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frontierkit",
                                     description="SFA and DEA efficiency benchmarking for panels.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("describe", "descriptive statistics of frontier variables"),
                           ("dea", "output-oriented DEA scores"),
                           ("sfa", "translog distance-function SFA")):
        _common(sub.add_parser(name, help=helptext))
    _common(sub.add_parser("second-stage", help="Tobit and Simar-Wilson regressions"), bootstrap=True)
    _common(sub.add_parser("pipeline", help="every method enabled in the config"), bootstrap=True)
    sp = sub.add_parser("synth", help="write a synthetic dataset with its truth table")
    sp.add_argument("kind", choices=("aena", "sfa", "dea"))
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--seed", type=int, default=None)
    return parser


def _config(args) -> RunConfig:
    cfg = RunConfig.from_yaml(args.config or bundled_config_path())
    return cfg.override(seed=args.seed, l1=getattr(args, "l1", None), l2=getattr(args, "l2", None),
                        decimal_comma=args.decimal_comma, out_dir=args.out)


def _synth(args) -> int:
    from .synth import (SynthSpec, gen_dea_panel, gen_sfa_panel, write_aena_like,
                        write_synth_panel)

    if args.kind == "aena":
        paths = write_aena_like(args.out, **({} if args.seed is None else {"seed": args.seed}))
    elif args.kind == "sfa":
        panel, truth = gen_sfa_panel(SynthSpec(seed=args.seed or 0))
        paths = write_synth_panel(panel, truth, args.out, "sfa", "te")
    else:
        panel, truth = gen_dea_panel(n_dmus=20, n_periods=3, n_outputs=2, n_inputs=2,
                                     seed=args.seed or 0)
        paths = write_synth_panel(panel, truth, args.out, "dea", "score")
    for p in paths.values():
        print(p)
    return EXIT_OK


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "synth":
        return _synth(args)
    cfg = _config(args)
    if args.command == "describe":
        from .panel import describe

        panel = cfg.load()
        names = list(cfg.frontier.outputs) + list(cfg.frontier.inputs)
        print(human(describe(panel, names)), end="")
        return EXIT_OK
    if args.command == "dea":
        cfg = cfg.with_methods(dea=True)
    elif args.command == "sfa":
        cfg = cfg.with_methods(sfa=True)
    elif args.command == "second-stage":
        cfg = cfg.with_methods(sfa=True, dea=True, tobit=True, simar_wilson=True)
    bundle = run_pipeline(cfg)
    for name in sorted(bundle.files):
        if name.endswith(".txt") and "ranking" not in name:
            print(f"== {name}")
            print(bundle.files[name], end="")
    if cfg.out_dir is not None:
        print(f"wrote {len(bundle.files)} files to {cfg.out_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except FrontierError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
