"""``allot-rl`` command line: ingest, train, evaluate, ablate, report.

Exit codes: 0 success, 1 validation or usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

log = logging.getLogger("allot_rl")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--seed", type=int, help="run only this seed (overrides the config's seeds)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--phase", type=int, choices=(1, 2, 3), help="phase to train/evaluate/ablate")
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="allot-rl", description="PPO asset allocation with an oracle-regret reward")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("ingest", help="build the feature store from price CSVs or the synthetic market"))
    _common(sub.add_parser("train", help="phased training with weight transfer"))
    ev = sub.add_parser("evaluate", help="deployment rollout of a checkpoint on one split")
    _common(ev)
    ev.add_argument("--checkpoint", required=True, help="checkpoint JSON, or 'benchmark' for the 60/40 policy")
    ev.add_argument("--force", action="store_true", help="evaluate despite a model signature mismatch")
    _common(sub.add_parser("ablate", help="TC x bootstrap x reward ablation grid"))
    rep = sub.add_parser("report", help="consolidate run directories into one table")
    _common(rep)
    rep.add_argument("run_dirs", nargs="*", type=Path)
    return parser


def _overrides(args) -> dict:
    o = {}
    if args.seed is not None:
        o["seeds"] = [args.seed]
    if args.phase is not None and args.command == "train":
        o["run_phases"] = [args.phase]
    return o


def run(argv=None) -> int:
    from . import runner

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "report":
        if not args.run_dirs:
            raise UsageError("report: at least one run directory is required")
        csv_path, txt_path = runner.cmd_report(args.run_dirs, args.out or Path("."))
        print(txt_path.read_text(), end="")
        return EXIT_OK
    cfg = load_config(args.config, _overrides(args))
    if args.command == "ingest":
        print(runner.cmd_ingest(cfg, args.out))
    elif args.command == "train":
        for d in runner.cmd_train(cfg, args.out):
            print(d)
    elif args.command == "evaluate":
        out = args.out or cfg.out / "eval"
        report = runner.cmd_evaluate(cfg, args.checkpoint, args.split, args.phase or cfg.run_phases[0], out, args.force)
        for name, value in report.as_dict().items():
            print(f"{name}: {value}")
    elif args.command == "ablate":
        print(runner.cmd_ablate(cfg, args.out, args.phase))
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
