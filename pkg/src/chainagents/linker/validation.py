"""Pairwise validation of an agent assignment against identity tags."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from math import comb
from typing import Mapping


@dataclass(frozen=True)
class ValidationReport:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def sensitivity(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    @property
    def specificity(self) -> float:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else float("nan")

    @property
    def pairs(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def as_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn,
                "sensitivity": self.sensitivity, "specificity": self.specificity}

    def percent(self, digits: int = 2) -> tuple[float, float]:
        return round(100 * self.sensitivity, digits), round(100 * self.specificity, digits)


def validate(labels: Mapping, tags: Mapping) -> ValidationReport:
    """Compare every pair of tagged addresses.

    Same tag and same agent is a true positive, different tag and different
    agent a true negative; same tag split across agents is a false negative
    and different tags sharing an agent a false positive. Counting works on
    the agent-by-tag contingency table, so cost is linear in the tags.
    """
    labels = getattr(labels, "labels", labels)
    tags = tags.as_dict() if hasattr(tags, "as_dict") else tags
    cells: Counter = Counter()
    by_agent: Counter = Counter()
    by_tag: Counter = Counter()
    n = 0
    for addr, tag in tags.items():
        agent = labels.get(addr)
        if agent is None:
            continue
        cells[agent, tag] += 1
        by_agent[agent] += 1
        by_tag[tag] += 1
        n += 1
    if n < 2:
        raise ValueError("need at least two tagged addresses present in the catalog")
    tp = sum(comb(c, 2) for c in cells.values())
    fn = sum(comb(c, 2) for c in by_tag.values()) - tp
    fp = sum(comb(c, 2) for c in by_agent.values()) - tp
    tn = comb(n, 2) - tp - fn - fp
    return ValidationReport(tp, tn, fp, fn)
