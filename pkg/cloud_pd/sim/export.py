from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ..config import APP_VERSION
from ..error_handler import ConfigError
from ..i18n import t
from ..problem.spec import ProblemSpec
from ..solver import SaddleEstimate
from .trace import RunTrace

logger = logging.getLogger(__name__)

ROUND_COLUMNS = (
    "t",
    "k_t",
    "cycles",
    "fresh",
    "primal_reg_error",
    "primal_unreg_error",
    "dual_reg_error",
    "dual_unreg_error",
    "max_violation",
    "dual_bound",
    "primal_bound",
)
EVENT_COLUMNS = ("seq", "tick", "kind", "agent", "peer", "round", "computed_seq", "message_seq", "value")


def trace_metadata(trace: RunTrace, **extra: Any) -> dict[str, Any]:
    meta = {
        "version": APP_VERSION,
        "problem": trace.problem,
        "seed": trace.seed,
        "alpha": trace.reg.alpha,
        "beta": trace.reg.beta,
        "gamma": trace.steps.gamma,
        "rho": trace.steps.rho,
        "rounds": trace.round_count,
        "ticks": trace.ticks,
        "stop_reason": trace.stop_reason,
        "messages_sent": trace.messages_sent,
        "messages_discarded": trace.messages_discarded,
    }
    meta.update(extra)
    return meta


def round_table(
    trace: RunTrace,
    spec: ProblemSpec,
    saddle: SaddleEstimate,
    reference: SaddleEstimate,
    *,
    dual_bound: np.ndarray | None = None,
    primal_bound: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Column arrays of the per-round CSV.

    `dual_bound` holds the squared-error bound for mu(t+1) per round; the table stores the bound
    on |mu(t) - mu_hat| for the row's own mu(t).
    """
    states = trace.cloud_states
    duals = trace.duals
    count = trace.round_count
    table = {
        "t": np.arange(count),
        "k_t": np.array([record.end_tick for record in trace.rounds], dtype=int),
        "cycles": trace.cycles,
        "fresh": trace.fresh_counts,
        "primal_reg_error": np.linalg.norm(states - saddle.state, axis=1),
        "primal_unreg_error": np.linalg.norm(states - reference.state, axis=1),
        "dual_reg_error": np.linalg.norm(duals - saddle.dual, axis=1),
        "dual_unreg_error": np.linalg.norm(duals - reference.dual, axis=1),
        "max_violation": np.array(
            [np.max(spec.constraint_values(state), initial=-np.inf) for state in states], dtype=float
        ),
    }
    if dual_bound is not None:
        initial = np.linalg.norm(trace.initial_dual - saddle.dual)
        table["dual_bound"] = np.concatenate(([initial], np.sqrt(dual_bound[:-1])))[:count]
    else:
        table["dual_bound"] = np.full(count, np.nan)
    table["primal_bound"] = primal_bound if primal_bound is not None else np.full(count, np.nan)
    return table


def _format(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_table(path: Path | str, columns: tuple[str, ...], table: Mapping[str, np.ndarray], meta: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        for key, value in meta.items():
            handle.write(f"# {key}={_format(value)}\n")
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in zip(*(table[name] for name in columns)):
            writer.writerow([_format(value) for value in row])
    logger.info("wrote %s", path)
    return path


def write_round_csv(path: Path | str, table: Mapping[str, np.ndarray], meta: Mapping[str, Any]) -> Path:
    return write_table(path, ROUND_COLUMNS, table, meta)


def read_round_csv(path: Path | str) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    """Header metadata and float columns of a per-round CSV."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(t("error.trace.unreadable", path=path, reason=exc), field="trace") from exc
    meta: dict[str, str] = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    reader = csv.DictReader(body)
    rows = list(reader)
    missing = [name for name in ROUND_COLUMNS if name not in (reader.fieldnames or ())]
    if missing:
        raise ConfigError(t("error.trace.columns", path=path, columns=", ".join(missing)), field="trace")
    try:
        columns = {name: np.array([float(row[name]) for row in rows]) for name in ROUND_COLUMNS}
    except ValueError as exc:
        raise ConfigError(t("error.trace.unreadable", path=path, reason=exc), field="trace") from exc
    return meta, columns


def write_event_csv(path: Path | str, trace: RunTrace) -> Path:
    if trace.events is None:
        raise ConfigError(t("error.trace.events"), field="events")
    table = {name: [] for name in EVENT_COLUMNS}
    for event in trace.events:
        table["seq"].append(event.seq)
        table["tick"].append(event.tick)
        table["kind"].append(event.kind)
        table["agent"].append(event.agent)
        table["peer"].append(event.peer)
        table["round"].append(event.round_index)
        table["computed_seq"].append(event.computed_seq)
        table["message_seq"].append(event.message_seq)
        table["value"].append("" if event.value is None else " ".join(repr(float(v)) for v in event.value))
    return write_table(path, EVENT_COLUMNS, table, trace_metadata(trace))
