"""Schedule exports: SVG Gantt chart and its JSON mirror."""

from __future__ import annotations

import json

BAND_H = 28
BAND_GAP = 8
LEFT_PAD = 70
TOP_PAD = 30
RIGHT_PAD = 20


def schedule_records(sim) -> list[dict]:
    """One {op, machine, start, end} record per scheduled operation."""
    recs = [
        {"op": [e.job, e.step], "machine": e.machine, "start": e.start, "end": e.end}
        for e in sorted(sim.schedule, key=lambda e: (e.machine, e.start))
    ]
    return recs


def _job_color(job: int, n_jobs: int) -> str:
    hue = int(360 * job / max(n_jobs, 1))
    return f"hsl({hue},65%,60%)"


def schedule_svg(sim, title: str = "") -> str:
    inst = sim.inst
    makespan = max((e.end for e in sim.schedule), default=1)
    x_scale = 900.0 / max(makespan, 1)
    width = LEFT_PAD + 900 + RIGHT_PAD
    height = TOP_PAD + inst.n_machines * (BAND_H + BAND_GAP) + 30
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<text x="{LEFT_PAD}" y="16" font-size="13">{title or inst.name} '
        f'(makespan {makespan})</text>',
    ]
    for m in range(1, inst.n_machines + 1):
        y = TOP_PAD + (m - 1) * (BAND_H + BAND_GAP)
        parts.append(f'<text x="8" y="{y + BAND_H * 0.7:.0f}">M{m}</text>')
        parts.append(
            f'<line x1="{LEFT_PAD}" y1="{y + BAND_H}" x2="{LEFT_PAD + 900}" '
            f'y2="{y + BAND_H}" stroke="#ccc"/>')
    for e in sorted(sim.schedule, key=lambda e: (e.machine, e.start)):
        y = TOP_PAD + (e.machine - 1) * (BAND_H + BAND_GAP)
        x = LEFT_PAD + e.start * x_scale
        w = max((e.end - e.start) * x_scale, 0.5)
        color = _job_color(e.job, inst.n_jobs)
        parts.append(
            f'<rect x="{x:.2f}" y="{y}" width="{w:.2f}" height="{BAND_H}" '
            f'fill="{color}" stroke="#333" stroke-width="0.5">'
            f'<title>job {e.job} step {e.step}: [{e.start}, {e.end})</title></rect>')
        if w > 24:
            parts.append(
                f'<text x="{x + 2:.2f}" y="{y + BAND_H * 0.7:.0f}">{e.job}.{e.step}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def write_gantt(sim, svg_path, json_path, title: str = "") -> None:
    with open(svg_path, "w") as fh:
        fh.write(schedule_svg(sim, title))
    with open(json_path, "w") as fh:
        json.dump({"instance": sim.inst.name, "makespan": sim.makespan(),
                   "rectangles": schedule_records(sim)}, fh, indent=1)
