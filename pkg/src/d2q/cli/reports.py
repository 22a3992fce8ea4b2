"""Sweep outputs: results.csv, a markdown summary table, and an SVG chart."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CSV_HEADER = "method,m,seed,mae,xauc,xgauc,wall_time_s"


@dataclass(frozen=True)
class SweepRow:
    method: str
    m: int
    seed: int
    mae: float
    xauc: float
    xgauc: float
    wall_time_s: float
    error: str | None = None

    def csv_line(self) -> str:
        vals = [self.mae, self.xauc, self.xgauc, self.wall_time_s]
        text = ",".join("nan" if v is None or not np.isfinite(v) else repr(float(v))
                        for v in vals)
        return f"{self.method},{self.m},{self.seed},{text}"


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def to_csv(self) -> str:
        return "\n".join([CSV_HEADER] + [r.csv_line() for r in self.rows]) + "\n"

    def ok_rows(self) -> list[SweepRow]:
        return [r for r in self.rows if r.error is None]

    def mean_metric(self, method: str, m: int, metric: str) -> float | None:
        vals = [getattr(r, metric) for r in self.ok_rows()
                if r.method == method and r.m == m]
        return float(np.mean(vals)) if vals else None


def summary_markdown(result: SweepResult, group_counts, methods) -> str:
    """Seed-averaged XAUC / XGAUC / MAE per (#groups, method)."""
    lines = ["| #Groups | Method | XAUC | XGAUC | MAE |",
             "|---|---|---|---|---|"]
    for m in group_counts:
        for method in methods:
            xauc = result.mean_metric(method, m, "xauc")
            if xauc is None:
                continue
            xgauc = result.mean_metric(method, m, "xgauc")
            mae = result.mean_metric(method, m, "mae")
            lines.append(f"| {m} | {method} | {xauc:.4f} | {xgauc:.4f} | {mae:.4f} |")
    failed = [r for r in result.rows if r.error is not None]
    if failed:
        lines.append("")
        lines.append("Failed cells:")
        for r in failed:
            lines.append(f"- {r.method} m={r.m} seed={r.seed}: {r.error}")
    return "\n".join(lines) + "\n"


def xgauc_chart_svg(result: SweepResult, group_counts, methods,
                    width: int = 640, height: int = 440) -> str:
    """Mean XGAUC against group count: one polyline per grouped method,
    horizontal reference lines for the single-group baselines."""
    margin_l, margin_r, margin_t, margin_b = 70, 20, 30, 50
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    curve_methods = [m for m in methods if m in ("d2q", "resd2q")]
    flat_methods = [m for m in methods if m in ("vr", "wlr")]
    series = {}
    for method in curve_methods:
        pts = [(i, result.mean_metric(method, m, "xgauc"))
               for i, m in enumerate(group_counts)]
        series[method] = [(i, v) for i, v in pts if v is not None]
    flats = {m: result.mean_metric(m, 1, "xgauc") for m in flat_methods}
    flats = {m: v for m, v in flats.items() if v is not None}

    values = [v for pts in series.values() for _, v in pts] + list(flats.values())
    if not values:
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
                f'height="{height}"><text x="20" y="30">no data</text></svg>')
    lo, hi = min(values), max(values)
    pad = max((hi - lo) * 0.15, 1e-3)
    lo, hi = lo - pad, hi + pad

    def sx(i):
        if len(group_counts) == 1:
            return margin_l + plot_w / 2
        return margin_l + plot_w * i / (len(group_counts) - 1)

    def sy(v):
        return margin_t + plot_h * (1 - (v - lo) / (hi - lo))

    colors = {"d2q": "#1f77b4", "resd2q": "#ff7f0e", "vr": "#555555", "wlr": "#999999"}
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="12">',
             f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
             f'fill="none" stroke="#cccccc"/>']

    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        v = lo + frac * (hi - lo)
        y = sy(v)
        parts.append(f'<line x1="{margin_l - 4}" y1="{y:.1f}" x2="{margin_l}" '
                     f'y2="{y:.1f}" stroke="#333333"/>')
        parts.append(f'<text x="{margin_l - 8}" y="{y + 4:.1f}" '
                     f'text-anchor="end">{v:.3f}</text>')
    for i, m in enumerate(group_counts):
        x = sx(i)
        parts.append(f'<line x1="{x:.1f}" y1="{margin_t + plot_h}" x2="{x:.1f}" '
                     f'y2="{margin_t + plot_h + 4}" stroke="#333333"/>')
        parts.append(f'<text x="{x:.1f}" y="{margin_t + plot_h + 18}" '
                     f'text-anchor="middle">{m}</text>')
    parts.append(f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 14}" '
                 f'text-anchor="middle">duration groups</text>')
    parts.append(f'<text x="16" y="{margin_t + plot_h / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {margin_t + plot_h / 2:.1f})">mean XGAUC</text>')

    for method, value in flats.items():
        y = sy(value)
        parts.append(f'<line x1="{margin_l}" y1="{y:.1f}" x2="{margin_l + plot_w}" '
                     f'y2="{y:.1f}" stroke="{colors[method]}" stroke-dasharray="6 4"/>')
        parts.append(f'<text x="{margin_l + plot_w - 4}" y="{y - 4:.1f}" '
                     f'text-anchor="end" fill="{colors[method]}">{method} '
                     f'({value:.4f})</text>')
    legend_y = margin_t + 14
    for method, pts in series.items():
        if not pts:
            continue
        coords = " ".join(f"{sx(i):.1f},{sy(v):.1f}" for i, v in pts)
        parts.append(f'<polyline points="{coords}" fill="none" '
                     f'stroke="{colors[method]}" stroke-width="2"/>')
        for i, v in pts:
            parts.append(f'<circle cx="{sx(i):.1f}" cy="{sy(v):.1f}" r="3" '
                         f'fill="{colors[method]}"/>')
        parts.append(f'<text x="{margin_l + 10}" y="{legend_y}" '
                     f'fill="{colors[method]}">{method}</text>')
        legend_y += 16
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
