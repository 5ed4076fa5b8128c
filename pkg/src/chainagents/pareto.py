"""Per-interval mining income and power-law tail fits."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .model import Chain

SUPPRESS_BLOCKS = (2000, 4000)
MIN_TAIL = 10
N_CANDIDATES = 200


@dataclass(frozen=True)
class ParetoFit:
    interval: int | None
    x_min: float
    alpha_density: float
    pareto_exponent: float
    n_tail: int
    ks_stat: float
    n_suppressed: int = 0

    @property
    def warning(self) -> bool:
        # exponents below one imply an infinite mean
        return self.pareto_exponent < 1


@dataclass
class IncomeTable:
    bounds: list[tuple[float, float]]
    income: list[dict[int, int]] = field(default_factory=list)
    blocks: list[dict[int, int]] = field(default_factory=list)

    def __len__(self):
        return len(self.bounds)

    def fractions(self, i: int) -> dict[int, float]:
        total = sum(self.income[i].values())
        return {a: v / total for a, v in self.income[i].items()} if total else {}


def interval_incomes(chain: Chain, catalog, n_intervals: int = 6) -> IncomeTable:
    """Mined satoshi per agent in ``n_intervals`` equal-duration intervals.

    The last interval is closed on the right so the final block is counted.
    """
    if n_intervals < 1:
        raise ValueError("n_intervals must be >= 1")
    labels = getattr(catalog, "labels", catalog)
    t0, t1 = chain.blocks[0].timestamp, chain.blocks[-1].timestamp
    span = (t1 - t0) / n_intervals
    bounds = [(t0 + i * span, t0 + (i + 1) * span) for i in range(n_intervals)]
    table = IncomeTable(bounds, [{} for _ in bounds], [{} for _ in bounds])
    for b in chain.blocks:
        i = n_intervals - 1 if span == 0 else min(int((b.timestamp - t0) / span), n_intervals - 1)
        agent = labels[b.miner_address]
        table.blocks[i][agent] = table.blocks[i].get(agent, 0) + 1
        for a, v in b.coinbase_outputs:
            if v:
                ag = labels[a]
                table.income[i][ag] = table.income[i].get(ag, 0) + v
    return table


def _alpha(tail: np.ndarray, x_min: float) -> float:
    s = float(np.sum(np.log(tail / x_min)))
    if s <= 0:
        raise ValueError("degenerate sample: every tail value equals x_min")
    return 1.0 + tail.size / s


def _ks(tail: np.ndarray, x_min: float, alpha: float) -> float:
    n = tail.size
    cdf = 1.0 - (tail / x_min) ** (1.0 - alpha)
    i = np.arange(n)
    return float(max(np.max(np.abs((i + 1) / n - cdf)), np.max(np.abs(i / n - cdf))))


def fit_pareto(samples, x_min: float | None = None, *, min_tail: int = MIN_TAIL,
               block_counts=None, suppress=SUPPRESS_BLOCKS, n_candidates: int = N_CANDIDATES,
               interval: int | None = None) -> ParetoFit:
    """Continuous power-law MLE with a Kolmogorov-Smirnov choice of ``x_min``.

    ``block_counts`` (aligned with ``samples``) enables suppression of
    entries whose block count is listed in ``suppress``. Without a fixed
    ``x_min`` the candidates are the distinct sample values, thinned to
    ``n_candidates`` quantiles; the smallest KS distance wins and ties go
    to the smaller threshold.
    """
    x = np.asarray(samples, dtype=float)
    n_sup = 0
    if block_counts is not None:
        bc = np.asarray(block_counts)
        if bc.shape != x.shape:
            raise ValueError("block_counts must align with samples")
        keep = ~np.isin(bc, list(suppress))
        n_sup = int(np.sum(~keep))
        x = x[keep]
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ValueError("samples must be positive and finite")
    x = np.sort(x)
    if x.size and x[0] == x[-1]:
        raise ValueError("degenerate sample: all values equal")

    if x_min is not None:
        tail = x[x >= x_min]
        if tail.size < min_tail:
            raise ValueError(f"only {tail.size} samples at or above x_min; need {min_tail}")
        a = _alpha(tail, x_min)
        return ParetoFit(interval, float(x_min), a, a - 1, int(tail.size), _ks(tail, x_min, a), n_sup)

    cands = np.unique(x[: max(0, x.size - min_tail + 1)])
    if cands.size == 0:
        raise ValueError(f"need at least {min_tail} samples, got {x.size}")
    if cands.size > n_candidates:
        idx = np.unique(np.round(np.linspace(0, cands.size - 1, n_candidates)).astype(int))
        cands = cands[idx]
    best = None
    for xm in cands:
        tail = x[np.searchsorted(x, xm):]
        if tail.size < min_tail or tail[-1] == xm:
            continue
        a = _alpha(tail, xm)
        d = _ks(tail, xm, a)
        if best is None or d < best[0]:
            best = (d, float(xm), a, int(tail.size))
    if best is None:
        raise ValueError("no threshold leaves a non-degenerate tail")
    d, xm, a, nt = best
    return ParetoFit(interval, xm, a, a - 1, nt, d, n_sup)


def fit_intervals(table: IncomeTable, *, min_tail: int = MIN_TAIL, suppress=SUPPRESS_BLOCKS,
                  threads: int = 1) -> list[ParetoFit | None]:
    """One fit per interval of income fractions; None where the fit is refused."""

    def one(i):
        agents = sorted(table.income[i])
        frac = table.fractions(i)
        xs = [frac[a] for a in agents]
        bc = [table.blocks[i].get(a, 0) for a in agents]
        try:
            return fit_pareto(xs, min_tail=min_tail, block_counts=bc, suppress=suppress, interval=i)
        except ValueError:
            return None

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, range(len(table))))
    return [one(i) for i in range(len(table))]


def concentration_curve(table: IncomeTable, targets=(0.5, 0.7)) -> list[dict[float, int]]:
    """Per interval, the fewest top earners whose combined share reaches each target."""
    for t in targets:
        if not 0 < t <= 1:
            raise ValueError(f"target {t} outside (0, 1]")
    out = []
    for inc in table.income:
        vals = sorted(inc.values(), reverse=True)
        total = sum(vals)
        cum = np.cumsum(vals) if vals else np.zeros(0)
        row = {}
        for t in targets:
            if not total:
                row[t] = 0
                continue
            # integer cumulative sums; compare without dividing
            row[t] = int(np.argmax(cum >= t * total)) + 1
        out.append(row)
    return out


def ccdf_points(samples) -> list[tuple[float, float]]:
    """Empirical ``P(X >= x)`` at each distinct value."""
    x = np.sort(np.asarray(samples, dtype=float))
    vals, first = np.unique(x, return_index=True)
    return [(float(v), (x.size - i) / x.size) for v, i in zip(vals, first)]


class ParetoTailEstimator(BaseEstimator):
    def __init__(self, x_min=None, min_tail=MIN_TAIL, n_candidates=N_CANDIDATES):
        self.x_min = x_min
        self.min_tail = min_tail
        self.n_candidates = n_candidates

    def fit(self, X, y=None):
        fit = fit_pareto(np.ravel(X), self.x_min, min_tail=self.min_tail, n_candidates=self.n_candidates)
        self.fit_ = fit
        self.x_min_ = fit.x_min
        self.alpha_density_ = fit.alpha_density
        self.pareto_exponent_ = fit.pareto_exponent
        return self


def sample_pareto(alpha_density: float, n: int, x_min: float = 1.0, seed=0) -> np.ndarray:
    """Inverse-CDF draws from a continuous power law."""
    rng = np.random.default_rng(seed)
    return x_min * (1.0 - rng.random(n)) ** (-1.0 / (alpha_density - 1.0))


def write_fits_csv(fits, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["interval", "x_min", "alpha_density", "pareto_exponent", "n_tail", "ks_stat", "warning"])
        for i, f in enumerate(fits):
            if f is None:
                w.writerow([i, "", "", "", 0, "", ""])
            else:
                w.writerow([i, repr(f.x_min), repr(f.alpha_density), repr(f.pareto_exponent),
                            f.n_tail, repr(f.ks_stat), int(f.warning)])


def write_ccdf_csv(table: IncomeTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["interval", "x", "ccdf"])
        for i in range(len(table)):
            for x, p in ccdf_points(list(table.fractions(i).values())):
                w.writerow([i, repr(x), repr(p)])
