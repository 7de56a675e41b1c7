"""Command-line front end.

Subcommands: run, rate-study, hellinger, homogenize, cell, list-catalogue,
validate-config.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure.  The output root defaults to ./runs or $TWOSCALE_OUTPUT_ROOT.
"""

from __future__ import annotations

import argparse
import sys

from .catalogue import list_catalogue_text
from .config import load_config
from .errors import ConfigError, NumericalError
from .experiments import run_experiment

_KIND_BY_COMMAND = {
    "run": ("mcmc",),
    "rate-study": ("rate_study", "fe_study"),
    "hellinger": ("hellinger_eps", "hellinger_fe"),
    "homogenize": ("homogenize",),
    "cell": ("cell",),
}


def _add_config_command(sub, name: str, help_text: str) -> None:
    p = sub.add_parser(name, help=help_text)
    p.add_argument("config", help="experiment config file (INI)")
    p.add_argument("--output-root", default=None,
                   help="output root directory (default $TWOSCALE_OUTPUT_ROOT or ./runs)")
    p.add_argument("--jobs", type=int, default=1,
                   help="max parallel workers for independent solves")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twoscale",
        description="Bayesian inversion of locally periodic two-scale coefficients")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_config_command(sub, "run", "run an MCMC inversion experiment")
    _add_config_command(sub, "rate-study",
                        "microscale/discretisation rate studies (corrector, FE)")
    _add_config_command(sub, "hellinger", "posterior-distance ladders")
    _add_config_command(sub, "homogenize", "effective tensor + macroscopic solve")
    _add_config_command(sub, "cell", "cell responses at chosen macro points")
    sub.add_parser("list-catalogue", help="print the closed-form term catalogue")
    v = sub.add_parser("validate-config", help="validate a config file and exit")
    v.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list-catalogue":
            sys.stdout.write(list_catalogue_text())
            return 0
        cfg = load_config(args.config)
        if args.command == "validate-config":
            print(f"{args.config}: OK ({cfg.kind}, {cfg.dim}d, "
                  f"{cfg.n_terms} terms, id '{cfg.experiment_id}')")
            return 0
        allowed = _KIND_BY_COMMAND[args.command]
        if cfg.kind not in allowed:
            raise ConfigError(
                f"{args.config}: kind '{cfg.kind}' cannot run under '{args.command}' "
                f"(expects one of {allowed})")
        result = run_experiment(cfg, root=args.output_root, jobs=args.jobs)
        print(f"wrote {len(result['outputs'])} files to {result['outdir']}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
