"""Plain-text and CSV tables of evaluation reports."""

from __future__ import annotations

import csv
import io
from typing import Sequence

from .metrics import EvalReport

COLUMNS = (
    ("AP", "ap"),
    ("AP@50", "ap50"),
    ("AP@75", "ap75"),
    ("AR@1", "ar1"),
    ("AR@10", "ar10"),
    ("J", "j_mean"),
    ("F", "f_mean"),
    ("J&F", "jf"),
)


def _label(report: EvalReport, fallback: str) -> str:
    if "key_frames" in report.meta:
        return f"K={report.meta['key_frames']}"
    return fallback


def format_table(reports: Sequence[EvalReport], labels: Sequence[str] | None = None) -> str:
    labels = list(labels) if labels is not None else [_label(r, f"run{i}") for i, r in enumerate(reports)]
    width = max([len("Run")] + [len(x) for x in labels])
    head = f"{'Run':<{width}}" + "".join(f"{name:>8}" for name, _ in COLUMNS)
    lines = [head, "-" * len(head)]
    for label, rep in zip(labels, reports):
        lines.append(f"{label:<{width}}" + "".join(f"{getattr(rep, attr):>8.3f}" for _, attr in COLUMNS))
    return "\n".join(lines)


def format_csv(reports: Sequence[EvalReport], labels: Sequence[str] | None = None) -> str:
    labels = list(labels) if labels is not None else [_label(r, f"run{i}") for i, r in enumerate(reports)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["run", "key_frames"] + [name for name, _ in COLUMNS])
    for label, rep in zip(labels, reports):
        writer.writerow(
            [label, rep.meta.get("key_frames", "")] + [f"{getattr(rep, attr):.6f}" for _, attr in COLUMNS]
        )
    return buf.getvalue()
