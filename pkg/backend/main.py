import argparse
import logging
import sys

from dotenv import load_dotenv

load_dotenv()

from commands import (
    abstract,
    check_star,
    compile_2cm,
    exact_path,
    gadget_verify,
    regions,
    run_2cm,
    simulate,
    solve,
    validate,
)
from commands.result import EXIT_USAGE, CommandResult, build_request, error_result
from core.config import DEFAULT_OUTPUT, configure_logging, load_config
from core.errors import StgError, UsageError

logger = logging.getLogger("stg")

COMMANDS = (validate, simulate, exact_path, regions, check_star, abstract, solve, compile_2cm, run_2cm, gadget_verify)
GLOBAL_OPTIONS = ("seed", "threads", "precision", "output", "log_level")
PARSER_KEYS = ("command", "handler", "request")


class CliParser(argparse.ArgumentParser):
    """Reports usage errors as exceptions so every failure goes through the same exit path."""

    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> CliParser:
    parser = CliParser(prog="stg", description="Stochastic timed games: simulation, abstraction and reductions.")
    parser.add_argument("--seed", type=int, help="random seed (env STG_SEED, default 0)")
    parser.add_argument("--threads", help="worker count or 'auto' (env STG_THREADS)")
    parser.add_argument("--precision", type=int, help="decimal digits of printed enclosures (env STG_PRECISION)")
    parser.add_argument("--output", choices=("text", "json"), help="output format (env STG_OUTPUT)")
    parser.add_argument("--log-level", help="logging level (env STG_LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def emit(result: CommandResult, output: str) -> None:
    text = result.render(output)
    stream = sys.stderr if result.exit_code > 1 and output == "text" else sys.stdout
    if text:
        print(text, file=stream)
    for kind, path in result.files.items():
        logger.info("Wrote %s to %s", kind, path)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    output = args.output or DEFAULT_OUTPUT
    try:
        config = load_config(
            seed=args.seed,
            threads=args.threads,
            precision=args.precision,
            output=args.output,
            log_level=args.log_level,
        )
        output = config.output
        configure_logging(config.log_level)
        values = {key: value for key, value in vars(args).items() if key not in GLOBAL_OPTIONS + PARSER_KEYS}
        request = build_request(args.request, values)
        result = args.handler(request, config)
    except StgError as exc:
        logger.debug("Command %s failed", args.command, exc_info=True)
        result = error_result(exc, args.command)
    emit(result, output if output in ("text", "json") else "text")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
