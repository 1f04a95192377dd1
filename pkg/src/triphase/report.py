"""Deterministic report files for comparison results: CSV, JSON, SVG.

The SVG plots are emitted directly from a minimal shape model (rects,
polylines, text) with fixed canvas geometry and palette, so identical
reports produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .stats import ComparisonReport

SCHEMA_VERSION = 1

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")

CSV_HEADER = (
    "metric,source,n,excluded,mean,std,q1,median,q3,iqr,"
    "whisker_lo,whisker_hi,n_outliers"
)

_W, _H = 480.0, 320.0
_ML, _MR, _MT, _MB = 56.0, 16.0, 28.0, 40.0


def _f(v: float) -> str:
    return f"{float(v):.6g}"


def report_to_csv(report: ComparisonReport) -> str:
    lines = [CSV_HEADER]
    for metric in report.metrics:
        comp = report.metrics[metric]
        for source in report.sources:
            s = comp.summaries.get(source)
            if s is None:
                continue
            lines.append(
                ",".join(
                    [metric, source, str(s.n), str(s.excluded)]
                    + [_f(x) for x in (s.mean, s.std, s.q1, s.median, s.q3, s.iqr,
                                       s.whisker_lo, s.whisker_hi)]
                    + [str(len(s.outliers))]
                )
            )
    return "\n".join(lines) + "\n"


def report_to_json(report: ComparisonReport) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "sources": list(report.sources),
        "warnings": list(report.warnings),
        "metrics": {},
    }
    for metric in report.metrics:
        comp = report.metrics[metric]
        entry = {"sources": {}, "pairs": []}
        for source, s in comp.summaries.items():
            entry["sources"][source] = {
                "n": s.n,
                "excluded": s.excluded,
                "mean": s.mean,
                "std": s.std,
                "q1": s.q1,
                "median": s.median,
                "q3": s.q3,
                "iqr": s.iqr,
                "whisker_lo": s.whisker_lo,
                "whisker_hi": s.whisker_hi,
                "outliers": list(s.outliers),
            }
        for (a, b), scores in comp.pairs.items():
            entry["pairs"].append(
                {"a": a, "b": b,
                 "iqr_overlap": scores["iqr_overlap"],
                 "distance": scores["distance"]}
            )
        doc["metrics"][metric] = entry
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# SVG primitives
# ---------------------------------------------------------------------------

def _svg_open(title: str) -> list:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(_W)}" height="{_f(_H)}" '
        f'viewBox="0 0 {_f(_W)} {_f(_H)}">',
        f'<title>{title}</title>',
        f'<rect x="0" y="0" width="{_f(_W)}" height="{_f(_H)}" fill="white"/>',
    ]


def _axes(parts: list, x0, x1, y0, y1, xlab: str) -> None:
    parts.append(
        f'<rect x="{_f(_ML)}" y="{_f(_MT)}" width="{_f(_W - _ML - _MR)}" '
        f'height="{_f(_H - _MT - _MB)}" fill="none" stroke="#333" stroke-width="1"/>'
    )
    for t in np.linspace(x0, x1, 5):
        px = _ML + (t - x0) / (x1 - x0 or 1.0) * (_W - _ML - _MR)
        parts.append(
            f'<text x="{_f(px)}" y="{_f(_H - _MB + 16)}" font-size="10" '
            f'text-anchor="middle" font-family="sans-serif">{_f(t)}</text>'
        )
    parts.append(
        f'<text x="{_f((_ML + _W - _MR) / 2)}" y="{_f(_H - 8)}" font-size="11" '
        f'text-anchor="middle" font-family="sans-serif">{xlab}</text>'
    )


def _legend(parts: list, sources) -> None:
    x = _ML + 8
    for i, src in enumerate(sources):
        color = PALETTE[i % len(PALETTE)]
        y = _MT + 14 + 14 * i
        parts.append(
            f'<rect x="{_f(x)}" y="{_f(y - 8)}" width="10" height="10" '
            f'fill="{color}" fill-opacity="0.6"/>'
        )
        parts.append(
            f'<text x="{_f(x + 14)}" y="{_f(y)}" font-size="10" '
            f'font-family="sans-serif">{src}</text>'
        )


def histogram_svg(metric: str, summaries: dict, sources) -> str:
    """Overlaid density-scaled histograms with KDE curves per source."""
    present = [s for s in sources if s in summaries]
    x0 = min(summaries[s].hist_edges[0] for s in present)
    x1 = max(summaries[s].hist_edges[-1] for s in present)
    for s in present:
        if summaries[s].kde_grid is not None:
            x0 = min(x0, summaries[s].kde_grid[0])
            x1 = max(x1, summaries[s].kde_grid[-1])
    if x1 == x0:
        x1 = x0 + 1.0
    densities = []
    ymax = 0.0
    for s in present:
        sm = summaries[s]
        widths = np.diff(sm.hist_edges)
        dens = sm.hist_counts / (sm.n * widths)
        densities.append(dens)
        ymax = max(ymax, float(dens.max()) if dens.size else 0.0)
        if sm.kde_density is not None:
            ymax = max(ymax, float(sm.kde_density.max()))
    ymax = ymax or 1.0

    def px(v):
        return _ML + (v - x0) / (x1 - x0) * (_W - _ML - _MR)

    def py(v):
        return _H - _MB - v / ymax * (_H - _MT - _MB)

    parts = _svg_open(f"{metric} distributions")
    for i, s in enumerate(present):
        sm = summaries[s]
        color = PALETTE[i % len(PALETTE)]
        for j, d in enumerate(densities[i]):
            if d <= 0:
                continue
            xl, xr = sm.hist_edges[j], sm.hist_edges[j + 1]
            parts.append(
                f'<rect x="{_f(px(xl))}" y="{_f(py(d))}" '
                f'width="{_f(px(xr) - px(xl))}" height="{_f(_H - _MB - py(d))}" '
                f'fill="{color}" fill-opacity="0.4"/>'
            )
        if sm.kde_grid is not None:
            pts = " ".join(
                f"{_f(px(x))},{_f(py(y))}"
                for x, y in zip(sm.kde_grid, sm.kde_density)
            )
            parts.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
    _axes(parts, x0, x1, 0, ymax, metric)
    _legend(parts, present)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def boxplot_svg(metric: str, summaries: dict, sources) -> str:
    """Side-by-side boxplots: IQR box, median line, whiskers, outlier diamonds."""
    present = [s for s in sources if s in summaries]
    values = []
    for s in present:
        sm = summaries[s]
        values += [sm.whisker_lo, sm.whisker_hi, *sm.outliers]
    y0, y1 = min(values), max(values)
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def py(v):
        return _H - _MB - (v - y0) / (y1 - y0) * (_H - _MT - _MB)

    slot = (_W - _ML - _MR) / max(len(present), 1)
    parts = _svg_open(f"{metric} boxplots")
    for i, s in enumerate(present):
        sm = summaries[s]
        color = PALETTE[i % len(PALETTE)]
        cx = _ML + slot * (i + 0.5)
        w = min(48.0, slot * 0.5)
        parts.append(
            f'<line x1="{_f(cx)}" y1="{_f(py(sm.whisker_lo))}" x2="{_f(cx)}" '
            f'y2="{_f(py(sm.whisker_hi))}" stroke="{color}" stroke-width="1"/>'
        )
        for wv in (sm.whisker_lo, sm.whisker_hi):
            parts.append(
                f'<line x1="{_f(cx - w / 3)}" y1="{_f(py(wv))}" '
                f'x2="{_f(cx + w / 3)}" y2="{_f(py(wv))}" stroke="{color}" '
                f'stroke-width="1"/>'
            )
        parts.append(
            f'<rect x="{_f(cx - w / 2)}" y="{_f(py(sm.q3))}" width="{_f(w)}" '
            f'height="{_f(py(sm.q1) - py(sm.q3))}" fill="{color}" '
            f'fill-opacity="0.35" stroke="{color}"/>'
        )
        parts.append(
            f'<line x1="{_f(cx - w / 2)}" y1="{_f(py(sm.median))}" '
            f'x2="{_f(cx + w / 2)}" y2="{_f(py(sm.median))}" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        for ov in sm.outliers:
            oy = py(ov)
            parts.append(
                f'<path d="M {_f(cx)} {_f(oy - 3)} L {_f(cx + 3)} {_f(oy)} '
                f'L {_f(cx)} {_f(oy + 3)} L {_f(cx - 3)} {_f(oy)} Z" '
                f'fill="{color}"/>'
            )
        parts.append(
            f'<text x="{_f(cx)}" y="{_f(_H - _MB + 16)}" font-size="10" '
            f'text-anchor="middle" font-family="sans-serif">{s}</text>'
        )
    parts.append(
        f'<rect x="{_f(_ML)}" y="{_f(_MT)}" width="{_f(_W - _ML - _MR)}" '
        f'height="{_f(_H - _MT - _MB)}" fill="none" stroke="#333" stroke-width="1"/>'
    )
    parts.append(
        f'<text x="{_f((_ML + _W - _MR) / 2)}" y="{_f(_H - 8)}" font-size="11" '
        f'text-anchor="middle" font-family="sans-serif">{metric}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(report: ComparisonReport, out_dir) -> list:
    """Write report.csv, report.json and per-metric SVG plots; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def write(name: str, text: str):
        path = out / name
        path.write_text(text)
        written.append(path)

    write("report.csv", report_to_csv(report))
    write("report.json", report_to_json(report))
    for metric in report.metrics:
        comp = report.metrics[metric]
        write(f"hist_{metric}.svg", histogram_svg(metric, comp.summaries, report.sources))
        write(f"box_{metric}.svg", boxplot_svg(metric, comp.summaries, report.sources))
    return written
