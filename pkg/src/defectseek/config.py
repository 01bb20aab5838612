"""Run configuration: defaults, config file parsing, flag overrides.

Precedence is defaults < config file < command-line flags. The file
format is flat ``key = value`` lines; blank lines and ``#`` comments
are ignored. Unknown keys and out-of-bounds values are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError

__all__ = ["RunConfig", "CONFIG_KEYS", "parse_config_file"]


def _int_min(minimum: int) -> Callable[[Any], bool]:
    return lambda v: v >= minimum


def _int_range(lo: int, hi: int) -> Callable[[Any], bool]:
    return lambda v: lo <= v <= hi


def _float_pos() -> Callable[[Any], bool]:
    return lambda v: v > 0.0


def _float_min(minimum: float) -> Callable[[Any], bool]:
    return lambda v: v >= minimum


def _float_open_unit() -> Callable[[Any], bool]:
    return lambda v: 0.0 < v <= 1.0


def _nonempty() -> Callable[[Any], bool]:
    return lambda v: bool(v)


def _choice(*options: str) -> Callable[[Any], bool]:
    return lambda v: v in options


# key -> (python type, default, validator, bounds text for --help)
CONFIG_KEYS: dict[str, tuple[type, Any, Callable[[Any], bool], str]] = {
    "seed": (int, 0, _int_min(0), ">= 0"),
    "budget": (int, 10, _int_min(1), ">= 1"),
    "k_max": (int, 8, _int_range(1, 64), "in [1, 64]"),
    "bandwidth_floor": (float, 1e-6, _float_pos(), "> 0"),
    "variance_floor": (float, 1e-8, _float_pos(), "> 0"),
    "hsp_lambda": (float, 0.1, _float_min(0.0), ">= 0"),
    "hsp_iters": (int, 200, _int_min(1), ">= 1"),
    "hsp_tol": (float, 1e-8, _float_pos(), "> 0"),
    "hsp_stages": (int, 1, _int_min(1), ">= 1"),
    "hsp_mu": (float, 1.0, _float_open_unit(), "in (0, 1]"),
    "aggregator": (str, "topq", _choice("max", "topq"), "max or topq"),
    "topq": (float, 0.01, _float_open_unit(), "in (0, 1]"),
    "threads": (int, 1, _int_min(1), ">= 1"),
    "positive_prompt_template": (
        str,
        "A image with [cls] defect type",
        _nonempty(),
        "non-empty",
    ),
    "negative_prompt_template": (
        str,
        "A image with flawless [obj]",
        _nonempty(),
        "non-empty",
    ),
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    budget: int = 10
    k_max: int = 8
    bandwidth_floor: float = 1e-6
    variance_floor: float = 1e-8
    hsp_lambda: float = 0.1
    hsp_iters: int = 200
    hsp_tol: float = 1e-8
    hsp_stages: int = 1
    hsp_mu: float = 1.0
    aggregator: str = "topq"
    topq: float = 0.01
    threads: int = 1
    positive_prompt_template: str = "A image with [cls] defect type"
    negative_prompt_template: str = "A image with flawless [obj]"

    def __post_init__(self) -> None:
        for key, (_, _, check, bounds) in CONFIG_KEYS.items():
            value = getattr(self, key)
            if not check(value):
                raise ConfigError(f"config key {key} must be {bounds}, got {value!r}")

    @classmethod
    def from_layers(
        cls, config_path: str | Path | None, overrides: dict[str, Any]
    ) -> "RunConfig":
        """defaults < config file < flags, validating the merged result."""
        merged: dict[str, Any] = {}
        if config_path is not None:
            merged.update(parse_config_file(config_path))
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = value
        return cls(**merged)


def _coerce(key: str, raw: str) -> Any:
    typ = CONFIG_KEYS[key][0]
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError as err:
        raise ConfigError(f"config key {key} expects {typ.__name__}, got {raw!r}") from err


def parse_config_file(path: str | Path) -> dict[str, Any]:
    """Parse a flat key = value file into typed config values."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from err
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return values


assert set(CONFIG_KEYS) == {f.name for f in fields(RunConfig)}
