import json
import logging
import tomllib
from pathlib import Path
from typing import Any, Sequence

from pydantic import BaseModel, ValidationError

from regdiff.errors import ConfigParse, ValidationFailure
from regdiff.orchestration.models import (
    AlgorithmSpec,
    ExperimentConfig,
    MetricsSpec,
    NetworkSpec,
    ProblemSpec,
    VerificationSpec,
)
from regdiff.orchestration.presets import load_preset

logger = logging.getLogger(__name__)

PRESET_PREFIX = "preset:"

# Blocks whose fields may be overridden by bare name
_BLOCKS: dict[str, type[BaseModel]] = {
    "network": NetworkSpec,
    "problem": ProblemSpec,
    "algorithm": AlgorithmSpec,
    "metrics": MetricsSpec,
    "verification": VerificationSpec,
}
_TOP_LEVEL = ("name", "task", "output")

# Setting one of a pair drops the other
_EXCLUSIVE = {
    ("algorithm", "mu"): "mu_sweep",
    ("algorithm", "mu_sweep"): "mu",
    ("algorithm", "delta"): "kappa",
    ("algorithm", "kappa"): "delta",
}


def read_document(source: str | Path) -> dict[str, Any]:
    """
    Read a raw configuration document from a TOML or JSON file, or from ``preset:<name>``.

    Raises:
        ConfigParse: If the file is missing or unparseable, or the preset is unknown.
    """
    text = str(source)
    if text.startswith(PRESET_PREFIX):
        return load_preset(text.removeprefix(PRESET_PREFIX))

    path = Path(source)
    if not path.is_file():
        raise ConfigParse(f"Config file not found: {path}")
    try:
        if path.suffix == ".json":
            with open(path) as f:
                data = json.load(f)
        else:
            with open(path, "rb") as f:
                data = tomllib.load(f)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigParse(f"Cannot parse {path}: {e}") from e

    if not isinstance(data, dict):
        raise ConfigParse(f"Config {path} must hold a table at the top level")
    return data


def parse_value(text: str) -> Any:
    """
    Parse an override value as a TOML literal, falling back to the raw string.

    Example:
        >>> parse_value("[0.01, 0.02]")
        [0.01, 0.02]
        >>> parse_value("results/run")
        'results/run'
    """
    try:
        return tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        return text


def resolve_key(key: str) -> list[str | int]:
    """
    Resolve an override key to a path into the document.

    Dotted keys are taken literally, with numeric parts indexing lists. A bare key must name
    a top-level setting or a field of exactly one block.

    Raises:
        ConfigParse: If a bare key is unknown or ambiguous.
    """
    if "." in key:
        return [int(part) if part.isdigit() else part for part in key.split(".")]
    if key in _TOP_LEVEL:
        return [key]

    owners = [block for block, model in _BLOCKS.items() if key in model.model_fields]
    if not owners:
        raise ConfigParse(f"Unknown override key {key!r}")
    if len(owners) > 1:
        raise ConfigParse(
            f"Override key {key!r} is ambiguous between {', '.join(owners)}; use a dotted path"
        )
    return [owners[0], key]


def apply_override(data: dict[str, Any], assignment: str):
    """
    Apply one ``key=value`` override to a raw document in place.

    Raises:
        ConfigParse: If the assignment is malformed or its path does not exist.
    """
    key, separator, raw = assignment.partition("=")
    key = key.strip()
    if not separator or not key:
        raise ConfigParse(f"Override {assignment!r} must have the form key=value")

    path = resolve_key(key)
    value = parse_value(raw.strip())

    # Walk to the parent container, creating tables as needed
    node: Any = data
    for part in path[:-1]:
        if isinstance(node, list):
            if not isinstance(part, int) or part >= len(node):
                raise ConfigParse(f"Override path {key!r} indexes past the end of a list")
            node = node[part]
        else:
            node = node.setdefault(part, {})
        if not isinstance(node, (dict, list)):
            raise ConfigParse(f"Override path {key!r} runs through a scalar")

    last = path[-1]
    if isinstance(node, list):
        if not isinstance(last, int) or last >= len(node):
            raise ConfigParse(f"Override path {key!r} indexes past the end of a list")
    node[last] = value

    if len(path) == 2 and (partner := _EXCLUSIVE.get((path[0], path[1]))):
        node.pop(partner, None)
    logger.debug(f"Override {key} = {value!r}")


def validate(data: dict[str, Any]) -> ExperimentConfig:
    """
    Validate a raw document into an ExperimentConfig.

    Raises:
        ValidationFailure: If any field or cross-field invariant is violated.
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ValidationFailure(f"Invalid configuration: {e}") from e


def load_config(source: str | Path, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """
    Load, override and validate a configuration.

    Args:
        source (str | Path): A TOML or JSON file, or ``preset:<name>``.
        overrides (Sequence[str]): ``key=value`` assignments applied in order.

    Returns:
        ExperimentConfig: The validated configuration.

    Raises:
        ConfigParse: If the document or an override cannot be parsed.
        ValidationFailure: If the result violates the configuration schema.

    Example:
        >>> config = load_config("preset:bias-1d", ["deltas=[0.1, 0.01, 0.001]"])
        >>> config.verification.deltas
        [0.1, 0.01, 0.001]
    """
    data = read_document(source)
    for assignment in overrides:
        apply_override(data, assignment)
    config = validate(data)
    logger.info(f"Configuration {config.name!r} loaded from {source}")
    return config
