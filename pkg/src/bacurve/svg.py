"""Static SVG rendering of a planar coordinate net.

Two polyline families: along each grid row the first flow variable varies,
along each column the second.  Gap samples split a line into separate
polylines instead of bridging across the hole.
"""
from __future__ import annotations


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def render_coordinate_net(xy: list[list[tuple[float, float] | None]],
                          stroke_u1: str = "#1f6fb2", stroke_u2: str = "#b23a1f") -> str:
    """xy[i][j] is the image (x, y) of the (i, j) grid sample, or None for a gap."""
    pts = [p for row in xy for p in row if p is not None]
    if not pts:
        raise ValueError("no solved samples to draw")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    span = max(x1 - x0, y1 - y0, 1e-9)
    pad = 0.05 * span
    width = (x1 - x0) + 2 * pad
    height = (y1 - y0) + 2 * pad
    stroke = 0.004 * span

    def path_chunks(line: list[tuple[float, float] | None]) -> list[list[tuple[float, float]]]:
        chunks, cur = [], []
        for p in line:
            if p is None:
                if len(cur) >= 2:
                    chunks.append(cur)
                cur = []
            else:
                cur.append(p)
        if len(cur) >= 2:
            chunks.append(cur)
        return chunks

    def polyline(chunk: list[tuple[float, float]], color: str) -> str:
        # flip y so the Euclidean plane reads the usual way up
        coords = " ".join(f"{_fmt(px)},{_fmt(y0 + y1 - py)}" for px, py in chunk)
        return (f'<polyline fill="none" stroke="{color}" '
                f'stroke-width="{_fmt(stroke)}" points="{coords}"/>')

    n1 = len(xy)
    n2 = len(xy[0]) if n1 else 0
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_fmt(x0 - pad)} {_fmt(y0 - pad)} '
        f'{_fmt(width)} {_fmt(height)}">',
    ]
    for j in range(n2):  # u1 varies along a column of fixed u2
        for chunk in path_chunks([xy[i][j] for i in range(n1)]):
            lines.append(polyline(chunk, stroke_u1))
    for i in range(n1):  # u2 varies along a row of fixed u1
        for chunk in path_chunks(list(xy[i])):
            lines.append(polyline(chunk, stroke_u2))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
