"""Disc map of mined blocks: a Moore curve pushed through the Shirley-Chiu
square-to-disc map, one curve cell per block, agents in first-mined order."""
from __future__ import annotations

import colorsys
import csv
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .model import Chain

AXIOM = "LFL+F+LFL"
RULES = {"L": "-RF+LFL+FR-", "R": "+LF-RFR-FL+"}

# high-contrast fills for the largest agents
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f")


@dataclass(frozen=True)
class CurveCell:
    index: int
    row: int
    col: int


def moore_curve(order: int) -> list[CurveCell]:
    """Closed Moore curve on a ``2**order`` square lattice, starting at the bottom edge."""
    if order < 1:
        raise ValueError("order must be >= 1")
    program = AXIOM
    for _ in range(order - 1):
        program = "".join(RULES.get(c, c) for c in program)
    x, y, dx, dy = 0, 0, 0, 1
    pts = [(x, y)]
    for c in program:
        if c == "F":
            x, y = x + dx, y + dy
            pts.append((x, y))
        elif c == "+":
            dx, dy = dy, -dx  # clockwise
        elif c == "-":
            dx, dy = -dy, dx
    x0 = min(p[0] for p in pts)
    y0 = min(p[1] for p in pts)
    return [CurveCell(i, py - y0, px - x0) for i, (px, py) in enumerate(pts)]


def shirley_chiu(a, b):
    """Concentric equal-area map from ``[-1, 1]^2`` to the unit disc.

    Accepts scalars or arrays.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(np.abs(a) > 1 + 1e-12) or np.any(np.abs(b) > 1 + 1e-12):
        raise ValueError("point outside the square [-1, 1]^2")
    wide = np.abs(a) > np.abs(b)
    # the unused branch of np.where may divide by zero or overflow
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        r = np.where(wide, a, b)
        phi = np.where(wide, (math.pi / 4) * (b / a), math.pi / 2 - (math.pi / 4) * (a / b))
    zero = (a == 0) & (b == 0)
    r = np.where(zero, 0.0, r)
    phi = np.where(zero, 0.0, phi)
    x, y = r * np.cos(phi), r * np.sin(phi)
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def polygon_area(points) -> float:
    """Absolute shoelace area."""
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


@dataclass
class DiscLayout:
    order: int
    heights: list[int] = field(default_factory=list)
    agents: list[int] = field(default_factory=list)
    cells: list[int] = field(default_factory=list)
    polygons: list[np.ndarray] = field(default_factory=list)  # 4x2 corners in the disc
    colors: dict[int, str] = field(default_factory=dict)

    def agent_areas(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for a, poly in zip(self.agents, self.polygons):
            out[a] = out.get(a, 0.0) + polygon_area(poly)
        return out


def auto_order(n_blocks: int) -> int:
    m = 1
    while 4 ** m < n_blocks:
        m += 1
    return m


def _hue_color(agent, seed: int) -> str:
    h = hashlib.sha256(f"{seed}:{agent}".encode()).digest()
    hue = int.from_bytes(h[:4], "big") / 2 ** 32
    r, g, b = colorsys.hls_to_rgb(hue, 0.55 + 0.2 * h[4] / 255, 0.45 + 0.3 * h[5] / 255)
    return "#%02x%02x%02x" % (round(r * 255), round(g * 255), round(b * 255))


def agent_colors(agents_by_rank, seed: int = 0, top_k: int = len(PALETTE)) -> dict:
    return {a: PALETTE[i] if i < top_k else _hue_color(a, seed) for i, a in enumerate(agents_by_rank)}


def block_order(chain: Chain, catalog) -> list[tuple[int, int]]:
    """``(height, agent)`` sorted by agent first-mined time, agent id, height."""
    labels = getattr(catalog, "labels", catalog)
    first: dict[int, int] = {}
    rows = []
    for b in chain.blocks:
        a = labels[b.miner_address]
        first[a] = min(first.get(a, b.timestamp), b.timestamp)
        rows.append((b.height, a))
    rows.sort(key=lambda r: (first[r[1]], r[1], r[0]))
    return rows


def render_map(catalog, chain: Chain, order: int | None = None, palette_seed: int = 0,
               size: int = 800) -> tuple[DiscLayout, str]:
    """Lay blocks along the curve and return the layout and an SVG document."""
    rows = block_order(chain, catalog)
    m = auto_order(len(rows)) if order is None else order
    if 4 ** m < len(rows):
        raise ValueError(f"order {m} holds {4 ** m} cells but there are {len(rows)} blocks")
    curve = moore_curve(m)
    side = 2 ** m
    cols = np.array([c.col for c in curve[:len(rows)]], dtype=float)
    rws = np.array([c.row for c in curve[:len(rows)]], dtype=float)
    # cell corners in [-1, 1]^2, counter-clockwise
    cx = np.stack([cols, cols + 1, cols + 1, cols], axis=1) * 2 / side - 1
    cy = np.stack([rws, rws, rws + 1, rws + 1], axis=1) * 2 / side - 1
    dx, dy = shirley_chiu(np.clip(cx, -1, 1), np.clip(cy, -1, 1))
    polys = np.stack([dx, dy], axis=-1)

    if hasattr(catalog, "summaries"):
        ranked = [s.agent_id for s in sorted(catalog.summaries, key=lambda s: s.rank)]
    else:
        counts: dict[int, int] = {}
        for _, a in rows:
            counts[a] = counts.get(a, 0) + 1
        ranked = sorted(counts, key=lambda a: (-counts[a], a))
    layout = DiscLayout(m, [h for h, _ in rows], [a for _, a in rows], list(range(len(rows))),
                        list(polys), agent_colors(ranked, palette_seed))
    return layout, to_svg(layout, size)


def to_svg(layout: DiscLayout, size: int = 800) -> str:
    half = size / 2

    def pt(p):
        # y flipped so the lattice bottom is drawn at the bottom
        return f"{half + p[0] * half:.3f},{half - p[1] * half:.3f}"

    paths: dict[int, list[str]] = {}
    for a, poly in zip(layout.agents, layout.polygons):
        paths.setdefault(a, []).append("M" + "L".join(pt(p) for p in poly) + "Z")
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<circle cx="{half:.3f}" cy="{half:.3f}" r="{half:.3f}" fill="none" stroke="#cccccc"/>',
    ]
    for a in paths:  # curve order
        color = layout.colors.get(a, "#000000")
        out.append(f'<path data-agent="{a}" fill="{color}" stroke="{color}" stroke-width="0.2" '
                   f'd="{"".join(paths[a])}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_cells_csv(layout: DiscLayout, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["height", "agent", "cell", "polygon"])
        for h, a, c, poly in zip(layout.heights, layout.agents, layout.cells, layout.polygons):
            w.writerow([h, a, c, " ".join(f"{x:.6f},{y:.6f}" for x, y in poly)])
