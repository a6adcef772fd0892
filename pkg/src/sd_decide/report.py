"""Serialization, run manifests, and CSV/SVG renderings of JSON reports.

Renderers take the report dictionaries as input, never the live analysis
objects, so every figure and table is derivable from its JSON report.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__


def to_plain(obj):
    """Convert numpy scalars/arrays, enums, tuples and objects with ``to_json``
    into plain JSON types."""
    if hasattr(obj, "to_json"):
        return to_plain(obj.to_json())
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k.value if isinstance(k, enum.Enum) else k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [to_plain(v) for v in items]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def format_float(x: float) -> str:
    """17 significant digits; non-finite values become null."""
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    # keep the token a JSON float so it round-trips as one
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _emit(obj, indent: int, level: int, out: list[str]) -> None:
    pad = " " * (indent * (level + 1))
    end_pad = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}{json.dumps(k)}: ")
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end_pad + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(not isinstance(v, (dict, list)) for v in obj):
            # scalar arrays stay on one line
            out.append("[")
            for i, v in enumerate(obj):
                if i:
                    out.append(", ")
                _emit(v, indent, level, out)
            out.append("]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end_pad + "]")
    elif isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    else:
        out.append(json.dumps(obj))


def dumps(obj, indent: int = 2) -> str:
    out: list[str] = []
    _emit(to_plain(obj), indent, 0, out)
    return "".join(out) + "\n"


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    argv: list[str]
    inputs: dict[str, str] = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    version: str = __version__
    timestamp: str = ""

    def __post_init__(self):
        if not self.timestamp:
            self.timestamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")

    def to_json(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "argv": list(self.argv),
            "inputs": [{"path": p, "sha256": file_digest(p)} for p in self.inputs.values()],
            "parameters": self.parameters,
            "version": self.version,
            "timestamp": self.timestamp,
        }


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(float(v)) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# stein renderings


def stein_cdf_table(report: dict) -> tuple[list[str], np.ndarray]:
    """Binned CDFs at the histogram edges, plus exact columns at theta = 0."""
    from .stein import theta0_exact_cdf

    hist = report["histogram"]
    t = np.linspace(hist["edges"]["lo"], hist["edges"]["hi"], hist["edges"]["bins"] + 1)
    n = report["config"]["draws"]
    header, cols = ["t"], [t]
    for kind in ("MLE", "JS", "JSPP"):
        counts = hist["counts"].get(kind)
        if counts is None:
            continue
        header.append(f"cdf_{kind.lower()}")
        cols.append(np.cumsum(np.asarray(counts[: t.size], dtype=float)) / n)
    if all(v == 0 for v in report["config"]["theta"]):
        for kind in ("MLE", "JS", "JSPP"):
            if kind in hist["counts"]:
                header.append(f"exact_{kind.lower()}")
                cols.append(theta0_exact_cdf(kind, t))
    return header, np.column_stack(cols)


def stein_csv(report: dict) -> str:
    header, table = stein_cdf_table(report)
    return csv_text(header, table)


_COLORS = {"mle": "#1f77b4", "js": "#d62728", "jspp": "#2ca02c"}
_LABELS = {"mle": "MLE", "js": "James-Stein", "jspp": "James-Stein positive part"}


def _panel(x0: float, y0: float, w: float, h: float, header, table, xr) -> list[str]:
    t = table[:, 0]
    sel = (t >= xr[0]) & (t <= xr[1])
    ys = table[sel, 1:]
    lo, hi = float(ys.min()), float(ys.max())
    pad = 0.05 * (hi - lo or 1.0)
    lo, hi = max(0.0, lo - pad), min(1.0, hi + pad)
    if hi <= lo:
        lo, hi = lo - 0.01, hi + 0.01

    def px(v):
        return x0 + (v - xr[0]) / (xr[1] - xr[0]) * w

    def py(v):
        return y0 + h - (v - lo) / (hi - lo) * h

    out = [f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{w:.2f}" height="{h:.2f}" fill="none" stroke="#000"/>']
    for k in range(6):
        tx = xr[0] + k * (xr[1] - xr[0]) / 5
        out.append(f'<line x1="{px(tx):.2f}" y1="{y0 + h:.2f}" x2="{px(tx):.2f}" y2="{y0 + h + 4:.2f}" stroke="#000"/>')
        out.append(f'<text x="{px(tx):.2f}" y="{y0 + h + 16:.2f}" font-size="10" text-anchor="middle">{tx:g}</text>')
        ty = lo + k * (hi - lo) / 5
        out.append(f'<line x1="{x0 - 4:.2f}" y1="{py(ty):.2f}" x2="{x0:.2f}" y2="{py(ty):.2f}" stroke="#000"/>')
        out.append(f'<text x="{x0 - 6:.2f}" y="{py(ty) + 3:.2f}" font-size="10" text-anchor="end">{ty:.3f}</text>')
    out.append(f'<text x="{x0 + w / 2:.2f}" y="{y0 + h + 32:.2f}" font-size="11" text-anchor="middle">loss</text>')
    for j, name in enumerate(header[1:], start=1):
        kind = name.split("_", 1)[1]
        dashed = name.startswith("exact_")
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(t[sel], table[sel, j]))
        style = ' stroke-dasharray="4,3" stroke-width="1"' if dashed else ' stroke-width="1.5"'
        out.append(f'<polyline points="{pts}" fill="none" stroke="{_COLORS[kind]}"{style}/>')
    return out


def stein_svg(report: dict, ranges=((0.0, 15.0), (5.0, 20.0))) -> str:
    """Two CDF panels over the given loss ranges; dashed lines are exact curves."""
    header, table = stein_cdf_table(report)
    w, h, margin = 360.0, 260.0, 60.0
    width = margin + len(ranges) * (w + margin)
    height = h + 110.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="#fff"/>',
    ]
    for i, xr in enumerate(ranges):
        parts += _panel(margin + i * (w + margin), 20.0, w, h, header, table, xr)
    ly = h + 75.0
    for i, kind in enumerate(k for k in ("mle", "js", "jspp") if f"cdf_{k}" in header):
        x = margin + i * 200.0
        parts.append(f'<line x1="{x:.2f}" y1="{ly:.2f}" x2="{x + 24:.2f}" y2="{ly:.2f}" stroke="{_COLORS[kind]}" stroke-width="2"/>')
        parts.append(f'<text x="{x + 30:.2f}" y="{ly + 4:.2f}" font-size="11">{_LABELS[kind]}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# monotone rendering


def monotone_csv(report: dict) -> str:
    r = report["rules"]
    rows = zip(r["psi"], r["delta_mean"], r["delta_min"], r["delta_max"], r["rearranged"])
    return csv_text(["psi", "delta_mean", "delta_min", "delta_max", "rearranged"], rows)
