"""
Semilab - Command Line Module

Single entry point `<module> <subcommand> [flags]` over every solver. Each run
resolves its parameters (flags, then `--config` replay, then SEMILAB_
environment defaults), computes its outputs with a root stream addressed by
the seed, and writes them with the resolved config and a manifest.

Key Features:
- Exit codes 0 success, 2 usage, 3 model/validation error, 4 numerical error
- Errors reported as one JSON object on stderr
- `--config` replays a stored run; explicit flags override stored values
- Canonical argv rebuilt from resolved parameters, so replays hash identically
"""

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pydantic

from .commands import COMMANDS, Command, json_value
from .emit import load_config, write_run
from .errors import SemilabError, ValidationError
from .numerics import RandomStream
from .outputs import RunConfig
from .utils import env_setting

logger = logging.getLogger(__name__)

GLOBAL_DESTS = {"seed", "threads", "out", "format", "verbose", "progress", "emit_plot_script"}


def _global_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("run options")
    group.add_argument("--seed", type=int, default=int(env_setting("SEED", 0)))
    group.add_argument("--threads", type=int, default=int(env_setting("THREADS", 1)))
    group.add_argument("--out", default=env_setting("OUT"))
    group.add_argument("--format", choices=["csv", "json"], default=env_setting("FORMAT", "csv"))
    group.add_argument("--verbose", action="store_true")
    group.add_argument("--progress", action="store_true")
    group.add_argument("--emit-plot-script", action="store_true")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semilab", description="Numerical laboratory for stochastic semigroups.")
    parser.add_argument("--config", type=Path, default=None, help="replay a stored config.json")
    parent = _global_options()
    modules = parser.add_subparsers(dest="module", required=True, metavar="module")
    for module, commands in COMMANDS.items():
        module_parser = modules.add_parser(module, help=f"{module} commands")
        leaves = module_parser.add_subparsers(dest="command", required=True, metavar="command")
        for name, cmd in commands.items():
            leaf = leaves.add_parser(name, aliases=cmd.aliases, help=cmd.help, description=cmd.help, parents=[parent])
            for flags, kwargs in cmd.arguments:
                leaf.add_argument(*flags, **kwargs)
            leaf.set_defaults(_command=cmd, _parser=leaf)
    return parser


def _format_value(action: argparse.Action, value: Any) -> List[str]:
    if action.type is json_value:
        return [json.dumps(value, separators=(",", ":"))]
    if isinstance(value, (list, tuple)):
        if action.nargs is None:
            return [",".join(repr(float(v)) for v in value)]
        return [repr(v) if isinstance(v, float) else str(v) for v in value]
    return [repr(value) if isinstance(value, float) else str(value)]


def canonical_argv(args: argparse.Namespace) -> List[str]:
    """argv reproducing the resolved parameters (run options other than --seed left out)."""
    argv = [args._command.module, args._command.name]
    for action in args._parser._actions:
        dest = action.dest
        if dest in GLOBAL_DESTS or dest == "help" or not action.option_strings:
            continue
        value = getattr(args, dest)
        if value is None:
            continue
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
            continue
        argv += [flag, *_format_value(action, value)]
    return argv + ["--seed", str(args.seed)]


def parameters(args: argparse.Namespace) -> Dict[str, Any]:
    skip = GLOBAL_DESTS | {"module", "command", "config"}
    return {k: v for k, v in vars(args).items() if k not in skip and not k.startswith("_")}


def resolve(argv: Sequence[str]) -> argparse.Namespace:
    """Parse argv; with --config, the stored argv comes first and explicit flags override it."""
    argv = list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path, default=None)
    known, rest = pre.parse_known_args(argv)
    parser = build_parser()
    if known.config is None:
        return parser.parse_args(argv)
    stored = load_config(known.config)
    extra = list(rest)
    if extra[:2] == stored.command:
        extra = extra[2:]
    merged = list(stored.argv)
    for option, value in (("--threads", stored.threads), ("--format", stored.format)):
        if option not in extra:
            merged += [option, str(value)]
    return parser.parse_args(merged + extra)


def _configure_logging(verbose: bool) -> None:
    level = "INFO" if verbose else str(env_setting("LOG_LEVEL", "WARNING")).upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _fail(body: Dict[str, Any], code: int) -> int:
    print(json.dumps(body, sort_keys=True, default=str), file=sys.stderr)
    return code


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command and return its exit code.

    Args:
        argv: Arguments without the program name (defaults to sys.argv[1:])
    """
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = resolve(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except SemilabError as exc:
        return _fail(exc.to_dict(), exc.exit_code)
    except (pydantic.ValidationError, json.JSONDecodeError) as exc:
        return _fail({"error": "ValidationError", "message": str(exc)}, ValidationError.exit_code)

    _configure_logging(args.verbose)
    if args.progress:
        os.environ["SEMILAB_PROGRESS"] = "1"
    cmd: Command = args._command
    start = time.perf_counter()
    try:
        config = RunConfig(
            command=[cmd.module, cmd.name],
            argv=canonical_argv(args),
            parameters=parameters(args),
            seed=args.seed,
            threads=args.threads,
            out=args.out,
            format=args.format,
        )
        outputs = cmd.handler(args, RandomStream(args.seed), max(1, args.threads))
        if args.out:
            write_run(outputs, config, Path(args.out), time.perf_counter() - start, plot_script=args.emit_plot_script)
    except SemilabError as exc:
        return _fail(exc.to_dict(), exc.exit_code)
    except pydantic.ValidationError as exc:
        return _fail({"error": "ValidationError", "message": str(exc)}, ValidationError.exit_code)
    print(json.dumps(outputs.summary(), sort_keys=True, default=str))
    logger.info(f"{' '.join(config.command)} finished in {time.perf_counter() - start:.2f}s")
    return 0


def main() -> None:
    sys.exit(dispatch())
