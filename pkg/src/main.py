import sys
import json
import types
import typing
import logging
import argparse

import yaml
from pydantic import BaseModel, ValidationError

from src.commands import COMMANDS
from src.config.loader import load_run_config
from src.config.schema import COMMAND_MODELS
from src.errors import EXIT_IO, EXIT_OK, EXIT_PRECONDITION, NpsiError

logger = logging.getLogger("NpsiCli")


# 1. Flags generated from the RunConfig models
def _nested_models(annotation) -> list[type[BaseModel]]:
    # BaseModel types reachable through Optional[...] / Union[...]
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return [annotation]
    if typing.get_origin(annotation) in (typing.Union, types.UnionType):
        return [m for arg in typing.get_args(annotation) for m in _nested_models(arg)]
    return []


def _is_leaf(annotation) -> bool:
    if typing.get_origin(annotation) in (typing.Union, types.UnionType):
        return any(_is_leaf(arg) for arg in typing.get_args(annotation) if arg is not type(None))
    return not _nested_models(annotation)


def _parse_value(text: str):
    # "0.3" -> 0.3, "[0, 0.1]" -> list, "null" -> None, plain words stay strings
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def add_model_flags(parser: argparse.ArgumentParser, model: type[BaseModel], prefix: str = "") -> None:
    for name, info in model.model_fields.items():
        dotted = f"{prefix}{name}"
        if _is_leaf(info.annotation):
            default = None if info.is_required() else info.get_default(call_default_factory=True)
            if isinstance(default, BaseModel):
                default = default.model_dump(mode="json")
            parser.add_argument(
                "--" + dotted.replace(".", "-").replace("_", "-"),
                dest=dotted,
                type=_parse_value,
                default=argparse.SUPPRESS,
                metavar="VALUE",
                help=f"default: {json.dumps(default)}",
            )
        for nested in _nested_models(info.annotation):
            add_model_flags(parser, nested, f"{dotted}.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="npsi",
        description="Phase-shifting interferometry under nonlinear phase steps",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, model in COMMAND_MODELS.items():
        cmd = sub.add_parser(command, help=(COMMANDS[command].__doc__ or "").strip() or None, allow_abbrev=False)
        cmd.add_argument("--config", dest="_config", default=None,
                         help="YAML/JSON config file or manifest.json (env: NPSI_CONFIG)")
        cmd.add_argument("--preset", dest="_preset", default=None, help="named preset from presets.yaml")
        cmd.add_argument("--verbose", dest="_verbose", action="store_true", help="log at DEBUG level")
        add_model_flags(cmd, model)
    return parser


# 2. Main Execution
def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    options = vars(args)

    logging.basicConfig(
        level=logging.DEBUG if options.pop("_verbose") else logging.INFO,
        format='%(asctime)s - [%(levelname)s] - %(message)s',
        handlers=[logging.StreamHandler(sys.stdout)],
        force=True,
    )

    command = options.pop("command")
    config_path = options.pop("_config")
    preset = options.pop("_preset")

    try:
        cfg = load_run_config(command, config_path, preset, options)
    except ValidationError as e:
        logger.error(f"Configuration Error: {e}")
        return EXIT_PRECONDITION
    except FileNotFoundError as e:
        logger.error(f"Configuration Error: {e}")
        return EXIT_IO
    except ValueError as e:
        logger.error(f"Configuration Error: {e}")
        return EXIT_PRECONDITION

    logger.info(f"--Starting {command}--")
    try:
        COMMANDS[command](cfg)
    except NpsiError as e:
        logger.error(f"{command} refused: {e}")
        return e.exit_code
    except ValueError as e:
        logger.error(f"{command} refused: {e}")
        return EXIT_PRECONDITION
    except OSError as e:
        logger.error(f"{command} failed on I/O: {e}")
        return EXIT_IO

    logger.info(f"Done! Outputs written to {cfg.output}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
