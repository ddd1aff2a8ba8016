"""Shared plumbing for the subcommands: results, exit codes, request validation."""

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from pydantic import BaseModel, ValidationError

from core.errors import ModelError, StgError, UsageError
from core.exppoly import ExpPoly
from core.mdp import probability_json

EXIT_OK = 0
EXIT_FALSE = 1
EXIT_USAGE = 2
EXIT_MODEL = 3
EXIT_ERROR = 4


@dataclass(frozen=True)
class CommandResult:
    exit_code: int
    document: dict
    text: str = ""
    files: dict[str, str] = field(default_factory=dict)

    @classmethod
    def verdict(cls, holds: bool, document: dict, text: str = "", files: dict[str, str] | None = None):
        return cls(EXIT_OK if holds else EXIT_FALSE, document, text, files or {})

    def render(self, output: str) -> str:
        if output == "json":
            return json.dumps(self.document, indent=2, ensure_ascii=False)
        return self.text


def exit_code_for(exc: Exception) -> int:
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, ModelError):
        return EXIT_MODEL
    return EXIT_ERROR


def error_result(exc: StgError, command: str | None) -> CommandResult:
    document = {"command": command, "error": type(exc).__name__, "message": str(exc)}
    return CommandResult(exit_code_for(exc), document, f"error: {exc}")


def build_request(model: type[BaseModel], values: dict) -> BaseModel:
    try:
        return model.model_validate(values)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        raise UsageError(f"--{where.replace('_', '-')}: {first['msg']}") from exc


def write_text(path: str | Path, text: str) -> str:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc
    return str(path)


def value_json(value: Fraction | ExpPoly, precision: int) -> dict:
    if isinstance(value, ExpPoly):
        return probability_json(value, value.q, precision)
    return {"value": str(value), "float": float(value)}


def value_text(value: Fraction | ExpPoly) -> str:
    return value.describe() if isinstance(value, ExpPoly) else str(value)
