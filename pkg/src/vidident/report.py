"""Leaderboard emission in markdown, CSV, or JSON.

Column order mirrors the benchmark's metric suite; percentages print with two
decimals, Chamfer distance and the cross-view score with four. The best value
per column is flagged (maximum for percentages, minimum for the two
lower-is-better geometry metrics); second-best flagging is opt-in.
"""

from __future__ import annotations

import csv
import io
import json
from typing import Dict, List, Optional, Sequence, Tuple

# (metric key, column header, decimals, lower_is_better)
COLUMNS: Tuple[Tuple[str, str, int, bool], ...] = (
    ("i2v_subject", "I2V Subject", 2, False),
    ("i2v_background", "I2V Background", 2, False),
    ("subject_consistency", "Subject Consistency", 2, False),
    ("background_consistency", "Background Consistency", 2, False),
    ("motion_smoothness", "Motion Smoothness", 2, False),
    ("temporal_flickering", "Temporal Flickering", 2, False),
    ("video_similarity", "Video Similarity", 2, False),
    ("object_similarity", "Object Similarity", 2, False),
    ("chamfer_distance", "Chamfer Distance", 4, True),
    ("met3r", "MEt3R", 4, True),
)

SKIP_CELL = "--"


class ReportError(ValueError):
    pass


def _aggregate_value(doc: dict, metric: str) -> Optional[float]:
    entry = doc.get("aggregate", {}).get(metric)
    if not entry or entry.get("status") != "OK":
        return None
    return float(entry["value"])


def _rank(docs: Sequence[dict], metric: str, lower_better: bool) -> List[Optional[int]]:
    """Rank positions (0 = best) per system for one column; None for absent."""
    values = [_aggregate_value(d, metric) for d in docs]
    present = [(v, i) for i, v in enumerate(values) if v is not None]
    present.sort(key=lambda p: p[0], reverse=not lower_better)
    ranks: List[Optional[int]] = [None] * len(docs)
    for pos, (_, i) in enumerate(present):
        ranks[i] = pos
    return ranks


def emit_report(
    docs: Sequence[dict],
    fmt: str = "markdown_table",
    second_best: bool = False,
) -> str:
    """Render a leaderboard over one row per evaluated system."""
    if not docs:
        raise ReportError("need at least one report")
    if fmt == "markdown_table":
        return _emit_markdown(docs, second_best)
    if fmt == "csv":
        return _emit_csv(docs)
    if fmt == "json":
        return _emit_json(docs, second_best)
    raise ReportError(f"unknown report format: {fmt}")


def _formatted(doc: dict, metric: str, decimals: int) -> str:
    value = _aggregate_value(doc, metric)
    if value is None:
        return SKIP_CELL
    return f"{value:.{decimals}f}"


def _emit_markdown(docs: Sequence[dict], second_best: bool) -> str:
    headers = ["Method"] + [c[1] for c in COLUMNS]
    ranks = {c[0]: _rank(docs, c[0], c[3]) for c in COLUMNS}
    lines = ["| " + " | ".join(headers) + " |",
             "|" + "|".join([" --- "] * len(headers)) + "|"]
    for i, doc in enumerate(docs):
        cells = [str(doc.get("system", f"system{i}"))]
        for metric, _, decimals, _lower in COLUMNS:
            cell = _formatted(doc, metric, decimals)
            if cell != SKIP_CELL:
                if ranks[metric][i] == 0:
                    cell = f"**{cell}**"
                elif second_best and ranks[metric][i] == 1:
                    cell = f"_{cell}_"
            cells.append(cell)
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _emit_csv(docs: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["Method"] + [c[1] for c in COLUMNS])
    for i, doc in enumerate(docs):
        row = [str(doc.get("system", f"system{i}"))]
        for metric, _, decimals, _lower in COLUMNS:
            cell = _formatted(doc, metric, decimals)
            row.append("" if cell == SKIP_CELL else cell)
        writer.writerow(row)
    return buf.getvalue()


def _emit_json(docs: Sequence[dict], second_best: bool) -> str:
    ranks = {c[0]: _rank(docs, c[0], c[3]) for c in COLUMNS}
    rows = []
    best: Dict[str, Optional[str]] = {}
    second: Dict[str, Optional[str]] = {}
    for metric, _, _, _ in COLUMNS:
        best[metric] = None
        second[metric] = None
        for i, doc in enumerate(docs):
            if ranks[metric][i] == 0:
                best[metric] = str(doc.get("system", f"system{i}"))
            elif ranks[metric][i] == 1:
                second[metric] = str(doc.get("system", f"system{i}"))
    for i, doc in enumerate(docs):
        rows.append(
            {
                "system": str(doc.get("system", f"system{i}")),
                "metrics": {
                    metric: _aggregate_value(doc, metric) for metric, _, _, _ in COLUMNS
                },
            }
        )
    out = {"columns": [c[1] for c in COLUMNS], "rows": rows, "best": best}
    if second_best:
        out["second_best"] = second
    return json.dumps(out, indent=2, sort_keys=True) + "\n"
