"""Command-line surface.

    edits run --config cfg.json [--stage NAME] [--force] [--mock]
              [--seed N] [--ipc N] [--temperature X] [--capacity N]
    edits ablate --config cfg.json --axis gsq,lsa,dpg
    edits metrics RUN_DIR

Exit codes: 0 success, 1 usage error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from edits.config import STAGES, PipelineConfig
from edits.pipeline import StageError, ablate, compute_run_metrics, run

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; the CLI contract reserves 2 for
    # stage failures, so remap usage problems to exit code 1.
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edits", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute the pipeline")
    run_p.add_argument("--config", required=True, help="path to the JSON config")
    run_p.add_argument("--stage", choices=STAGES, help="stop after this stage")
    run_p.add_argument(
        "--force", action="store_true", help="re-execute completed stages"
    )
    run_p.add_argument(
        "--mock", action="store_true", help="use offline mock services"
    )
    run_p.add_argument("--seed", type=int, help="override config seed")
    run_p.add_argument("--ipc", type=int, help="override images per class")
    run_p.add_argument("--temperature", type=float, help="override temperature")
    run_p.add_argument(
        "--capacity", type=int, help="override awareness-set capacity"
    )

    ab_p = sub.add_parser("ablate", help="compare module-off variants")
    ab_p.add_argument("--config", required=True)
    ab_p.add_argument(
        "--axis",
        required=True,
        help="comma-separated subset of gsq,lsa,dpg to disable",
    )
    ab_p.add_argument("--seed", type=int)

    m_p = sub.add_parser("metrics", help="recompute metrics for a run dir")
    m_p.add_argument("run_dir")
    return parser


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config)
    return cfg.override(
        seed=getattr(args, "seed", None),
        ipc=getattr(args, "ipc", None),
        temperature=getattr(args, "temperature", None),
        awareness_capacity=getattr(args, "capacity", None),
        mock=True if getattr(args, "mock", False) else None,
    )


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run":
            cfg = _load_config(args)
            report = run(cfg, force=args.force, upto=args.stage)
            print(json.dumps(report.get("counts", {}), sort_keys=True))
        elif args.command == "ablate":
            cfg = _load_config(args)
            axes = [a for a in args.axis.split(",") if a]
            report = ablate(cfg, axes)
            print(json.dumps(report, indent=2, sort_keys=True))
        elif args.command == "metrics":
            print(
                json.dumps(compute_run_metrics(args.run_dir), indent=2, sort_keys=True)
            )
    except StageError as exc:
        print(f"edits: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"edits: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
