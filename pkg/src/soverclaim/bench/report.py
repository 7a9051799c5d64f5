"""Bench report rendering: JSON file, terminal table, and the stacked
per-step SVG bar chart.
"""

from __future__ import annotations

import json

_PALETTE = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
]


def write_json(report: dict | list, path: str) -> None:
    reports = report if isinstance(report, list) else [report]
    with open(path, "w") as fh:
        json.dump(reports if len(reports) > 1 else reports[0], fh, indent=2, sort_keys=True)
        fh.write("\n")


def render_table(report: dict) -> str:
    lines = []
    e2e = report["end_to_end_ms"]
    lines.append(f"scenario: {report['scenario']}   samples: {report['samples']}   "
                 f"throughput: {report['throughput_per_s']}/s")
    lines.append(
        f"end-to-end ms   median {e2e['median']:>8}   p95 {e2e['p95']:>8}   "
        f"mean {e2e['mean']:>8}   min {e2e['min']:>8}   max {e2e['max']:>8}"
    )
    if report.get("steps_ms"):
        lines.append(f"{'step':<24}{'median':>10}{'p95':>10}{'mean':>10}")
        for name, stats in report["steps_ms"].items():
            lines.append(f"{name:<24}{stats['median']:>10}{stats['p95']:>10}{stats['mean']:>10}")
    if "persisted_bytes_per_request" in report:
        p = report["persisted_bytes_per_request"]
        lines.append(f"issuer persisted bytes/request: {p['issuer']} over {p['requests']} requests")
        lines.append(f"  ({p['note']})")
    return "\n".join(lines)


def render_svg(reports: list[dict], path: str | None = None) -> str:
    """Stacked bar per scenario: each segment is a step's median latency."""
    width_per_bar, gap, left, bottom, top = 110, 40, 70, 40, 30
    chart_height = 320
    bars = []
    all_steps: list[str] = []
    for report in reports:
        steps = {name: stats["median"] for name, stats in report.get("steps_ms", {}).items()}
        if not steps:
            steps = {"total": report["end_to_end_ms"]["median"]}
        bars.append((report["scenario"], steps))
        for name in steps:
            if name not in all_steps:
                all_steps.append(name)

    max_total = max(sum(steps.values()) for _, steps in bars) or 1.0
    scale = chart_height / max_total
    width = left + len(bars) * (width_per_bar + gap) + 220
    height = chart_height + bottom + top

    colors = {name: _PALETTE[i % len(_PALETTE)] for i, name in enumerate(all_steps)}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<text x="{left}" y="18" font-size="14">median latency per step (ms)</text>',
    ]
    # y axis ticks
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = top + chart_height - frac * chart_height
        parts.append(
            f'<line x1="{left - 6}" y1="{y:.1f}" x2="{width - 200}" y2="{y:.1f}" stroke="#ddd"/>'
        )
        parts.append(
            f'<text x="{left - 10}" y="{y + 4:.1f}" text-anchor="end">{max_total * frac:.0f}</text>'
        )
    for i, (scenario, steps) in enumerate(bars):
        x = left + i * (width_per_bar + gap)
        y = top + chart_height
        for name in all_steps:
            value = steps.get(name)
            if not value:
                continue
            h = value * scale
            y -= h
            parts.append(
                f'<rect x="{x}" y="{y:.1f}" width="{width_per_bar}" height="{h:.1f}" '
                f'fill="{colors[name]}"><title>{scenario}/{name}: {value:.1f} ms</title></rect>'
            )
        total = sum(steps.values())
        parts.append(
            f'<text x="{x + width_per_bar / 2}" y="{y - 6:.1f}" text-anchor="middle">{total:.0f}</text>'
        )
        parts.append(
            f'<text x="{x + width_per_bar / 2}" y="{top + chart_height + 18}" '
            f'text-anchor="middle">{scenario}</text>'
        )
    legend_x = width - 190
    for i, name in enumerate(all_steps):
        y = top + i * 20
        parts.append(f'<rect x="{legend_x}" y="{y}" width="14" height="14" fill="{colors[name]}"/>')
        parts.append(f'<text x="{legend_x + 20}" y="{y + 11}">{name}</text>')
    parts.append("</svg>")
    svg = "\n".join(parts)
    if path:
        with open(path, "w") as fh:
            fh.write(svg)
    return svg
