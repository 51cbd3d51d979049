from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

from .error_handler import ConfigError
from .i18n import t

logger = logging.getLogger(__name__)

APP_VERSION = "1.0.0"
RESULTS_DIR = Path("results")


# Edge labels are 1-based, as printed in the routing table; agent k routes flow k+1.
FLOW_PATHS: list[list[int]] = [
    [1, 3, 6],
    [4, 7, 8],
    [2, 4, 7, 5],
    [3, 4, 7],
    [1, 3, 6, 7, 5],
    [2, 4, 9],
    [5, 8, 9, 6],
    [7, 4],
]

DEFAULT_CFG: dict[str, Any] = {
    "paths": FLOW_PATHS,
    "edge_count": 9,
    "capacity": 10.0,
    "utility_weight": 100.0,
    "congestion_scale": 0.05,
    "box_lower": 0.0,
    "box_upper": 10.0,
    "slater_value": 0.1,
    "alpha": 0.1,
    "beta": 0.1,
    "dual_step_fraction": 0.9,
    "update_probability": 0.05,
    "edge_probability": 0.05,
    "round_length_min": 5,
    "round_length_max": 100,
    "delay_max": 0,
    "seed": 0,
    "horizon_rounds": 2_000_000,
    "tolerance": 1e-6,
    "dual_tolerance": 1e-9,
    "reference_tolerance": 1e-9,
}

FIELD_TYPES: dict[str, type] = {
    "paths": list,
    "edge_count": int,
    "capacity": float,
    "utility_weight": float,
    "congestion_scale": float,
    "box_lower": float,
    "box_upper": float,
    "slater_value": float,
    "alpha": float,
    "beta": float,
    "dual_step_fraction": float,
    "update_probability": float,
    "edge_probability": float,
    "round_length_min": int,
    "round_length_max": int,
    "delay_max": int,
    "seed": int,
    "horizon_rounds": int,
    "tolerance": float,
    "dual_tolerance": float,
    "reference_tolerance": float,
}


def _parse_rows(text: str) -> list[list[int]]:
    return [[int(item) for item in row.split(",") if item.strip()] for row in text.split(";") if row.strip()]


def coerce_value(field: str, raw: Any) -> Any:
    if field not in FIELD_TYPES:
        raise ConfigError(t("error.config.unknown_field", field=field), field=field)
    expected = FIELD_TYPES[field]
    try:
        if expected is list:
            if isinstance(raw, str):
                return _parse_rows(raw)
            return [[int(item) for item in row] for row in raw]
        if expected is int:
            number = float(raw)
            if not number.is_integer():
                raise ValueError(raw)
            return int(number)
        return expected(raw)
    except (TypeError, ValueError) as parse_error:
        raise ConfigError(t("error.config.bad_value", field=field, value=raw), field=field) from parse_error


def _read_key_values(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(t("error.config.bad_line", line=line_number, text=raw_line.strip()))
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def load_cfg(path: Path | str | None = None) -> dict[str, Any]:
    loaded_config = {key: (list(value) if isinstance(value, list) else value) for key, value in DEFAULT_CFG.items()}
    if path is None:
        return loaded_config
    config_path = Path(path)
    try:
        text = config_path.read_text(encoding="utf-8")
    except OSError as read_error:
        raise ConfigError(t("error.config.unreadable", path=config_path, reason=read_error)) from read_error
    if config_path.suffix == ".json":
        try:
            entries = json.loads(text)
        except ValueError as parse_error:
            raise ConfigError(t("error.config.unreadable", path=config_path, reason=parse_error)) from parse_error
        if not isinstance(entries, dict):
            raise ConfigError(t("error.config.unreadable", path=config_path, reason="not an object"))
    else:
        entries = _read_key_values(text)
    for field, raw in entries.items():
        loaded_config[field] = coerce_value(field, raw)
    logger.info("loaded %d config overrides from %s", len(entries), config_path)
    return loaded_config


def save_cfg(values: dict[str, Any], path: Path | str) -> None:
    data = {field: coerce_value(field, values.get(field, DEFAULT_CFG[field])) for field in DEFAULT_CFG}
    config_path = Path(path)
    if config_path.suffix == ".json":
        config_path.write_text(json.dumps(data, indent=2), encoding="utf-8")
        return
    lines = []
    for field, value in data.items():
        if field == "paths":
            value = "; ".join(",".join(str(edge) for edge in row) for row in value)
        lines.append(f"{field} = {value}")
    config_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
