"""Experiment reports: one schema for attack, defense, style, sweep, and
training runs.

Reports hold per-image (or per-epoch) rows plus aggregates computed from
those rows by `aggregates_from_rows`; verification recomputes and compares.
JSON serialization is canonical (sorted keys, fixed separators), so
parse-and-redump is byte-identical and reports can be compared as bytes.
Wall-clock fields live in `timing` and per-row `elapsed_s` only; the digest
excludes them, which is what run-to-run determinism is judged on.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np

from ._version import __version__

SCHEMA_VERSION = 1
VOLATILE_ROW_KEYS = ("elapsed_s",)

REPORT_KINDS = ("attack_eval", "defense_eval", "style_eval", "sweep", "train")


def _pyify(value):
    """Recursively convert numpy scalars/arrays into plain python values."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_pyify(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): _pyify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_pyify(v) for v in value]
    return value


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    seed: int
    checkpoint_id: str
    columns: list
    rows: list
    aggregates: dict
    timing: dict = field(default_factory=dict)
    tool_version: str = __version__
    schema_version: int = SCHEMA_VERSION
    # in-memory artifacts (adversarial images and such); never serialized
    attachments: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in REPORT_KINDS:
            raise ValueError(f"unknown report kind {self.kind!r}")
        self.config = _pyify(self.config)
        self.rows = [_pyify(dict(r)) for r in self.rows]
        self.aggregates = _pyify(self.aggregates)
        self.timing = _pyify(self.timing)
        cols = set(self.columns)
        for r in self.rows:
            if set(r) != cols:
                raise ValueError(
                    f"row keys {sorted(r)} do not match columns {sorted(cols)}")

    def to_json_text(self) -> str:
        doc = {
            "schema_version": self.schema_version,
            "tool_version": self.tool_version,
            "kind": self.kind,
            "seed": self.seed,
            "checkpoint_id": self.checkpoint_id,
            "config": self.config,
            "columns": list(self.columns),
            "rows": self.rows,
            "aggregates": self.aggregates,
            "timing": self.timing,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"# schema={self.schema_version}"
                         f" kind={self.kind} tool={self.tool_version}"])
        writer.writerow(list(self.columns))
        for row in self.rows:
            writer.writerow([_render_csv(row[c]) for c in self.columns])
        return buf.getvalue()


def _render_csv(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def from_json_text(text: str) -> ExperimentReport:
    doc = json.loads(text)
    return ExperimentReport(
        kind=doc["kind"],
        config=doc["config"],
        seed=doc["seed"],
        checkpoint_id=doc["checkpoint_id"],
        columns=doc["columns"],
        rows=doc["rows"],
        aggregates=doc["aggregates"],
        timing=doc.get("timing", {}),
        tool_version=doc.get("tool_version", __version__),
        schema_version=doc.get("schema_version", SCHEMA_VERSION),
    )


def emit_report(report: ExperimentReport, path, format: str = "json") -> None:
    """Write the report; format is 'json' or 'csv'."""
    if format == "json":
        text = report.to_json_text()
    elif format == "csv":
        text = report.to_csv_text()
    else:
        raise ValueError(f"unknown report format {format!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_report(path) -> ExperimentReport:
    with open(path, "r", encoding="utf-8") as fh:
        return from_json_text(fh.read())


def report_digest(report: ExperimentReport) -> str:
    """sha256 over the canonical JSON with all wall-time fields removed."""
    doc = json.loads(report.to_json_text())
    doc.pop("timing", None)
    for row in doc["rows"]:
        for key in VOLATILE_ROW_KEYS:
            row.pop(key, None)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# aggregates
# ---------------------------------------------------------------------------

def _rate(num: int, den: int) -> float:
    return num / den if den else 0.0


def _group(rows, key):
    groups = {}
    for row in rows:
        groups.setdefault(str(row[key]), []).append(row)
    return groups


def aggregates_from_rows(kind: str, rows: list) -> dict:
    """Deterministic aggregate metrics; the single source used both when a
    report is built and when it is re-verified."""
    if kind == "attack_eval":
        out = {}
        for variant, group in sorted(_group(rows, "variant").items()):
            eligible = [r for r in group if r["clean_correct"]]
            hits = [r for r in eligible if r["success"]]
            iters = [r["first_success_iteration"] for r in hits
                     if r["first_success_iteration"] is not None]
            out[variant] = {
                "evaluated": len(group),
                "eligible": len(eligible),
                "successes": len(hits),
                "success_rate": _rate(len(hits), len(eligible)),
                "mean_success_iteration": (sum(iters) / len(iters)) if iters else None,
            }
        return out
    if kind == "defense_eval":
        # keyed "defense|attack-variant" so survival under the same defense
        # can be compared across the attacks that produced the images
        out = {}
        groups = {}
        for row in rows:
            groups.setdefault(f"{row['defense']}|{row['variant']}", []).append(row)
        for name, group in sorted(groups.items()):
            survived = sum(1 for r in group if r["survived"])
            out[name] = {
                "evaluated": len(group),
                "survived": survived,
                "survival_rate": _rate(survived, len(group)),
            }
        return out
    if kind == "style_eval":
        out = {}
        for preset, group in sorted(_group(rows, "preset").items()):
            correct = sum(1 for r in group if r["style_only_correct"])
            eligible = [r for r in group if r["clean_correct"]]
            hits = sum(1 for r in eligible if r["attack_success"])
            paired = [r for r in group if r["styled_closer"] is not None]
            closer = sum(1 for r in paired if r["styled_closer"])
            out[preset] = {
                "evaluated": len(group),
                "style_only_accuracy": _rate(correct, len(group)),
                "eligible": len(eligible),
                "attack_successes": hits,
                "attack_success_rate": _rate(hits, len(eligible)),
                "styled_closer_fraction": _rate(closer, len(paired)) if paired else None,
            }
        return out
    if kind == "sweep":
        out = {}
        for cell, group in sorted(_group(rows, "cell").items()):
            correct = sum(1 for r in group if r["robust_correct"])
            out[cell] = {
                "evaluated": len(group),
                "robust_accuracy": _rate(correct, len(group)),
            }
        return out
    if kind == "train":
        if not rows:
            return {}
        best = max(rows, key=lambda r: (r["val_accuracy"], -r["epoch"]))
        return {
            "epochs": len(rows),
            "best_epoch": best["epoch"],
            "best_val_accuracy": best["val_accuracy"],
            "final_train_loss": rows[-1]["train_loss"],
        }
    raise ValueError(f"unknown report kind {kind!r}")


def verify_aggregates(report: ExperimentReport) -> bool:
    """True when the embedded aggregates equal a fresh recomputation."""
    return report.aggregates == aggregates_from_rows(report.kind, report.rows)
