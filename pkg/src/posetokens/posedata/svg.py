"""SVG rendering: skeleton drawings and simple line charts.

Pose drawings use SVG 1.1 with viewBox "0 0 1 1" and stroke widths in user
units; the y axis is flipped so +y points up. 3D poses are drawn by dropping
the z coordinate.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .skeleton import Skeleton

POSE_PALETTE = ("#222222", "#e07020", "#2060c0", "#20a050", "#a040a0")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def render_svg(poses: Sequence, skeleton: Skeleton, path: str | Path,
               highlights: Mapping[int, str] | Sequence[Mapping[int, str] | None] | None = None,
               pose_colors: Sequence[str] | None = None,
               joint_radius: float = 0.012,
               stroke_width: float = 0.008) -> None:
    """Draw one or more overlaid poses as circle+line groups.

    ``poses`` holds Pose objects or (K, D) arrays. ``highlights`` maps joint
    index -> fill color; pass one mapping (applied to every pose) or one per
    pose. Each pose becomes a <g> with |edges| <line> and K <circle> elements.
    """
    if len(poses) == 0:
        raise ValueError("render_svg: empty pose list")
    per_pose: list[Mapping[int, str] | None]
    if highlights is None or isinstance(highlights, Mapping):
        per_pose = [highlights] * len(poses)
    else:
        per_pose = list(highlights)
        if len(per_pose) != len(poses):
            raise ValueError("render_svg: one highlight map per pose required")

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        'viewBox="0 0 1 1" width="480" height="480">',
        '<g transform="translate(0,1) scale(1,-1)">',
    ]
    for idx, item in enumerate(poses):
        coords = np.asarray(getattr(item, "joints", item), dtype=np.float64)
        color = (pose_colors[idx] if pose_colors is not None
                 else POSE_PALETTE[idx % len(POSE_PALETTE)])
        tags = per_pose[idx] or {}
        parts.append(f'<g stroke="{color}" fill="{color}">')
        for a, b in skeleton.edges:
            parts.append(
                f'<line x1="{_fmt(coords[a, 0])}" y1="{_fmt(coords[a, 1])}" '
                f'x2="{_fmt(coords[b, 0])}" y2="{_fmt(coords[b, 1])}" '
                f'stroke-width="{_fmt(stroke_width)}"/>'
            )
        for j in range(coords.shape[0]):
            fill = f' fill="{tags[j]}"' if j in tags else ""
            parts.append(
                f'<circle cx="{_fmt(coords[j, 0])}" cy="{_fmt(coords[j, 1])}" '
                f'r="{_fmt(joint_radius)}"{fill}/>'
            )
        parts.append("</g>")
    parts.append("</g>")
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def render_line_chart(series: Mapping[str, Sequence[tuple[float, float]]],
                      path: str | Path, title: str = "",
                      x_label: str = "", y_label: str = "") -> None:
    """Minimal multi-series line chart (fixed 640x480 canvas with margins)."""
    if not series:
        raise ValueError("render_line_chart: no series")
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    if not xs:
        raise ValueError("render_line_chart: empty series")
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0
    left, right, top, bottom = 70, 610, 50, 430

    def px(x):
        return left + (x - x_lo) / x_span * (right - left)

    def py(y):
        return bottom - (y - y_lo) / y_span * (bottom - top)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        'viewBox="0 0 640 480" width="640" height="480">',
        '<rect x="0" y="0" width="640" height="480" fill="white"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>',
    ]
    if title:
        parts.append(f'<text x="320" y="28" text-anchor="middle" '
                     f'font-size="18">{title}</text>')
    if x_label:
        parts.append(f'<text x="320" y="465" text-anchor="middle" '
                     f'font-size="14">{x_label}</text>')
    if y_label:
        parts.append(f'<text x="18" y="240" text-anchor="middle" font-size="14" '
                     f'transform="rotate(-90 18 240)">{y_label}</text>')
    for tick in (x_lo, x_hi):
        parts.append(f'<text x="{_fmt(px(tick))}" y="{bottom + 18}" '
                     f'text-anchor="middle" font-size="12">{_fmt(tick)}</text>')
    for tick in (y_lo, y_hi):
        parts.append(f'<text x="{left - 8}" y="{_fmt(py(tick) + 4)}" '
                     f'text-anchor="end" font-size="12">{_fmt(tick)}</text>')
    for idx, (label, pts) in enumerate(series.items()):
        color = POSE_PALETTE[(idx + 1) % len(POSE_PALETTE)]
        ordered = sorted(pts)
        coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in ordered)
        parts.append(f'<polyline points="{coords}" fill="none" '
                     f'stroke="{color}" stroke-width="2"/>')
        for x, y in ordered:
            parts.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" '
                         f'r="3" fill="{color}"/>')
        parts.append(f'<text x="{right - 4}" y="{top + 16 + 16 * idx}" '
                     f'text-anchor="end" font-size="12" fill="{color}">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
