"""Report and sweep-table export to JSON and CSV, plus read-back."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Sequence

import pandas as pd

from models.reports import CategoryMetrics, MetricsCounts, MetricsReport, SweepRow
from utils.exceptions import ValidationError

ReportFormat = Literal["json", "csv"]
OVERALL = "overall"
PERCENT_FORMAT = "%.2f"


def report_to_dict(report: MetricsReport) -> Dict[str, Any]:
    return {
        "metrics": report.metrics(),
        "per_category": {name: cat.model_dump() for name, cat in report.per_category.items()},
        "counts": report.counts.model_dump(),
        "config": report.config,
        "provenance": report.provenance,
    }


def report_from_dict(payload: Dict[str, Any]) -> MetricsReport:
    return MetricsReport(
        **payload["metrics"],
        per_category=payload.get("per_category", {}),
        counts=payload.get("counts", {}),
        config=payload.get("config", {}),
        provenance=payload.get("provenance", {}),
    )


def report_frame(report: MetricsReport) -> pd.DataFrame:
    """One "overall" row plus one row per category; fractions as percentages."""
    rows: List[Dict[str, Any]] = [{"category": OVERALL, **report.metrics(), "pairs": report.counts.pairs}]
    for name, cat in report.per_category.items():
        rows.append(
            {
                "category": name,
                "set_accuracy": cat.set_accuracy,
                "individual_accuracy": cat.individual_accuracy,
                "pairs": cat.pairs,
            }
        )
    frame = pd.DataFrame(rows, columns=["category", *MetricsReport.METRIC_FIELDS, "pairs"])
    frame[list(MetricsReport.METRIC_FIELDS)] = frame[list(MetricsReport.METRIC_FIELDS)] * 100.0
    return frame


def write_report(report: MetricsReport, path: str | Path, fmt: ReportFormat = "json") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path.write_text(json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    elif fmt == "csv":
        report_frame(report).to_csv(path, index=False, float_format=PERCENT_FORMAT)
    else:
        raise ValidationError(f"unknown report format {fmt!r}")
    return path


def read_report(path: str | Path) -> MetricsReport:
    """Load a report written by :func:`write_report`; the format follows the suffix."""
    path = Path(path)
    if not path.exists():
        raise ValidationError("report does not exist", source=str(path))
    if path.suffix.lower() == ".csv":
        frame = pd.read_csv(path, dtype={"category": str})
        overall = frame[frame["category"] == OVERALL]
        if overall.empty:
            raise ValidationError("report has no overall row", source=str(path))
        row = overall.iloc[0]
        per_category = {
            str(r["category"]): CategoryMetrics(
                set_accuracy=float(r["set_accuracy"]) / 100.0,
                individual_accuracy=float(r["individual_accuracy"]) / 100.0,
                pairs=int(r["pairs"]),
            )
            for _, r in frame[frame["category"] != OVERALL].iterrows()
        }
        return MetricsReport(
            **{name: float(row[name]) / 100.0 for name in MetricsReport.METRIC_FIELDS},
            per_category=per_category,
            counts=MetricsCounts(pairs=int(row["pairs"])),
        )
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed report JSON: {exc.msg}", line=exc.lineno, source=str(path)) from exc
    return report_from_dict(payload)


def sweep_frame(rows: Sequence[SweepRow]) -> pd.DataFrame:
    records = [{"parameter": row.parameter, "value": row.value, **row.report.metrics()} for row in rows]
    return pd.DataFrame(records, columns=["parameter", "value", *MetricsReport.METRIC_FIELDS])


def write_sweep(rows: Sequence[SweepRow], path: str | Path, fmt: ReportFormat = "csv") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        payload = [{"parameter": r.parameter, "value": r.value, **report_to_dict(r.report)} for r in rows]
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    elif fmt == "csv":
        frame = sweep_frame(rows)
        frame[list(MetricsReport.METRIC_FIELDS)] = frame[list(MetricsReport.METRIC_FIELDS)] * 100.0
        frame.to_csv(path, index=False, float_format=PERCENT_FORMAT)
    else:
        raise ValidationError(f"unknown sweep format {fmt!r}")
    return path


def read_sweep(path: str | Path) -> pd.DataFrame:
    """Sweep table with metric columns as fractions, whichever format it was written in."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        frame = pd.read_csv(path)
        frame[list(MetricsReport.METRIC_FIELDS)] = frame[list(MetricsReport.METRIC_FIELDS)] / 100.0
        return frame
    payload = json.loads(path.read_text(encoding="utf-8"))
    return pd.DataFrame(
        [{"parameter": r["parameter"], "value": r["value"], **r["metrics"]} for r in payload],
        columns=["parameter", "value", *MetricsReport.METRIC_FIELDS],
    )
