"""Extranonce trajectory detection.

A mining session shows up as a near-linear run of (height, extranonce)
points. Blocks are assigned greedily in height order; a block that fits
two live trajectories is left unassigned rather than guessed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import Chain


@dataclass(frozen=True)
class Trajectory:
    id: int
    heights: tuple[int, ...]
    extranonces: tuple[int, ...]
    slope: float
    residual: float

    @property
    def start(self) -> int:
        return self.heights[0]

    @property
    def end(self) -> int:
        return self.heights[-1]

    def __len__(self):
        return len(self.heights)


class _Live:
    __slots__ = ("h", "e", "sh", "se", "shh", "she", "slope")

    def __init__(self, h, e):
        self.h = [h]
        self.e = [e]
        self.sh, self.se, self.shh, self.she = h, e, h * h, h * e
        self.slope = None

    def add(self, h, e, lo, hi):
        self.h.append(h)
        self.e.append(e)
        self.sh += h
        self.se += e
        self.shh += h * h
        self.she += h * e
        n = len(self.h)
        den = n * self.shh - self.sh * self.sh
        slope = (n * self.she - self.sh * self.se) / den if den else hi
        self.slope = min(max(slope, lo), hi)


def overlap_length(a: tuple[int, int], b: tuple[int, int]) -> int:
    """Number of heights shared by two closed intervals."""
    return max(0, min(a[1], b[1]) - max(a[0], b[0]) + 1)


def detect_trajectories(
    chain: Chain,
    tolerance: float = 8,
    slope_min: float = 0.8,
    slope_max: float = 16.0,
    gap_limit: int = 144,
    min_len: int = 3,
) -> list[Trajectory]:
    """Group extranonce-bearing blocks into linear trajectories.

    A live trajectory with two or more members predicts
    ``last + slope * (h - last_h)`` and accepts a block within ``tolerance``.
    A single-member trajectory accepts any later, larger extranonce whose
    implied slope lies in ``[slope_min, slope_max]`` (widened by the
    tolerance); it is only consulted when no established trajectory matches.
    Extranonces within a trajectory strictly increase. Trajectories close
    after ``gap_limit`` heights without a new member and are kept when they
    reach ``min_len`` members.
    """
    live: list[_Live] = []
    done: list[_Live] = []
    for block in chain.blocks:
        e = block.extranonce
        if e is None:
            continue
        h = block.height
        still = []
        for t in live:
            (still if h - t.h[-1] <= gap_limit else done).append(t)
        live = still

        # a block near a trajectory but behind its last extranonce is
        # explained by it; it may not join and must not seed a new one
        near = []
        nascent = []
        for t in live:
            last_h, last_e = t.h[-1], t.e[-1]
            if h == last_h:
                continue
            dh = h - last_h
            if t.slope is not None:
                if abs(e - (last_e + t.slope * dh)) <= tolerance:
                    near.append(t)
            elif e > last_e and slope_min * dh - tolerance <= e - last_e <= slope_max * dh + tolerance:
                nascent.append(t)
        if near:
            if len(near) == 1 and e > near[0].e[-1]:
                near[0].add(h, e, slope_min, slope_max)
        elif len(nascent) == 1:
            nascent[0].add(h, e, slope_min, slope_max)
        elif not nascent:
            live.append(_Live(h, e))
        # two or more candidates: ambiguous, leave the block unassigned
    done.extend(live)

    kept = [t for t in done if len(t.h) >= min_len]
    kept.sort(key=lambda t: (t.h[0], t.e[0]))
    out = []
    for i, t in enumerate(kept):
        hs = np.asarray(t.h, dtype=float)
        es = np.asarray(t.e, dtype=float)
        intercept = float(np.mean(es - t.slope * hs))
        resid = float(np.max(np.abs(es - (intercept + t.slope * hs))))
        out.append(Trajectory(i, tuple(t.h), tuple(t.e), float(t.slope), resid))
    return out


def trajectory_of_height(trajectories) -> dict[int, int]:
    """Height -> trajectory id for every assigned block."""
    return {h: t.id for t in trajectories for h in t.heights}


def detect_patoshi(trajectories, slope_min: float = 1.5, len_min: int = 20) -> set[int]:
    """Heights on steep, long trajectories (``slope >= slope_min``)."""
    out: set[int] = set()
    for t in trajectories:
        if t.slope >= slope_min and len(t) >= len_min:
            out.update(t.heights)
    return out
