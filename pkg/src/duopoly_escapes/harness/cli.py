"""Command-line entry point: ``duopoly-escapes <command> [flags]``."""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
from pathlib import Path

from .. import __version__
from ..errors import ConfigError, DuopolyError
from ..rng import ALGORITHM
from . import experiments as ex
from .config import SPECS, ExperimentConfig

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_EPILOG = f"""\
output files (CSV, '.' decimal, header row, columns in this order):
  simulate       simulate.csv (or simulate_NNN.csv per run):
                   {", ".join(ex.SIMULATE_COLUMNS)}
                 pi = model-averaging weight on the reaction-function model,
                 a0 = constant-price belief, a1_slope = reaction slope belief,
                 Pi0/Pi1 = smoothed forecast profits of each model;
                 episodes.json: detected high-price episodes per run
  payoff-matrix  payoff_matrix.csv: {", ".join(ex.PAYOFF_COLUMNS)}
                 payoff_matrix.json: cells, own-payoff table and gaps
  rate-function  rate_function.csv: {", ".join(ex.RATE_COLUMNS)}
  mean-dynamics  direction.csv: {", ".join(ex.DIRECTION_COLUMNS)}
                 stability.csv: {", ".join(ex.STABILITY_COLUMNS)}
                 ode_paths.csv: {", ".join(ex.ODE_COLUMNS)}
  escape-stats   escape_stats.csv: {", ".join(ex.ESCAPE_COLUMNS)}
                 episode_counts.csv: {", ".join(ex.EPISODE_COLUMNS)}
every run also writes manifest.json (config echo, version, RNG, wall clock,
sha256 of each output).

exit codes: 0 success, 1 I/O error, 2 configuration error, 3 numerical failure
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duopoly-escapes",
        description="Learning duopoly simulations, mean dynamics and escape costs.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ex.RUNNERS:
        p = sub.add_parser(name, epilog=_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--sigma2", type=float, help="exploration shock variance")
        p.add_argument("--gain", type=float, help="constant learning gain")
        p.add_argument("--horizon", type=int, help="periods per run")
        p.add_argument("--spec", choices=SPECS, help="model specification")
    return parser


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run(command: str, cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    written = ex.RUNNERS[command](cfg, out)
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "version": __version__,
        "rng": ALGORITHM,
        "wall_clock_seconds": time.perf_counter() - t0,
        "outputs": {p.name: sha256_file(p) for p in sorted(written)},
    }
    return ex.write_json(out / "manifest.json", manifest)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        cfg = cfg.override(
            args.command, seed=args.seed, out=args.out, sigma2=args.sigma2, gain=args.gain,
            horizon=args.horizon, spec=args.spec,
        )
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run(args.command, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except DuopolyError as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    print(manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
