"""Command line: ``elab run|sweep|accept|probe``.

Exit status is 0 when every asserted invariant held, 2 when some failed (see
``failed_assertions.json`` in the output directory) and 1 for invalid configs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config, pipelines
from .config import ConfigError


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")

    p = argparse.ArgumentParser(prog="elab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run the pipeline named in a config")
    r.add_argument("config", type=Path)
    s = sub.add_parser("sweep", parents=[common], help="(hbar, N) sweep over a config's scales")
    s.add_argument("config", type=Path)
    a = sub.add_parser("accept", parents=[common], help="run the acceptance suite")
    a.add_argument("--criteria", type=int, nargs="+", metavar="K", choices=range(1, 13),
                   help="subset of criteria (default: all twelve)")
    pr = sub.add_parser("probe", parents=[common], help="collapsing or KM-class probe")
    pr.add_argument("mode", choices=("collapsing", "km"))
    pr.add_argument("--config", type=Path, help="probe config (default: the bundled one)")
    return p


def _load(path: Path, args) -> config.ExperimentConfig:
    cfg = config.load(path)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _load(args.config, args)
            outcome = pipelines.execute(cfg, args.out, args.threads)
        elif args.command == "sweep":
            cfg = _load(args.config, args)
            outcome = pipelines.execute(cfg, args.out, args.threads, pipeline="sweep")
        elif args.command == "accept":
            cfg = _load(config.default_config_dir() / "acceptance.json", args)
            if args.criteria:
                cfg.raw["acceptance"] = {"criteria": args.criteria}
            outcome = pipelines.execute(cfg, args.out, args.threads)
        else:
            path = args.config or config.default_config_dir() / f"probe_{args.mode}.json"
            cfg = _load(path, args)
            cfg.raw.setdefault("probe", {})["mode"] = args.mode
            outcome = pipelines.execute(cfg, args.out, args.threads, pipeline="probe")
    except ConfigError as e:
        print(f"elab: invalid config: {e}", file=sys.stderr)
        return 1
    for f in outcome.failures:
        print(f"FAILED: {f['assertion']}", file=sys.stderr)
    print(f"{outcome.pipeline}: {len(outcome.artifacts)} files in {outcome.out}, "
          f"{len(outcome.failures)} failed assertions")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
