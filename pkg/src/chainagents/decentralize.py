"""Streaks, effective population size and windowed hashrate dominance.

Every block is attributed to the agent that received its coinbase. A *streak*
of length ``k`` is a run of ``k`` consecutive blocks satisfying one of three
predicates:

* ``unilateral``: one agent mined all ``k`` blocks;
* ``bilateral``: at most two agents mined them;
* ``majority``: one agent mined at least ``k // 2 + 1`` of them.

Window counting (the default) counts every length-``k`` window; maximal-run
counting counts each maximal stretch once. Theoretical expectations come in
two flavours: the closed forms as published (``formula="paper"``) and the
exact per-window probabilities under i.i.d. uniform miners
(``formula="exact"``). They agree for unilateral streaks only.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .model import Chain

KINDS = ("unilateral", "bilateral", "majority")
COUNTINGS = ("window", "maximal-run")
FORMULAS = ("paper", "exact")
M_BOUNDS = (1.0, 1e6)


def majority_threshold(k: int) -> int:
    return k // 2 + 1


@dataclass(frozen=True)
class StreakQuery:
    n_blocks: int
    k: int
    m_agents: float
    kind: str = "unilateral"
    counting: str = "window"
    exclusions: frozenset = frozenset()

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.n_blocks < self.k:
            raise ValueError(f"n_blocks ({self.n_blocks}) must be >= k ({self.k})")
        if not self.m_agents >= 1:
            raise ValueError(f"m_agents must be >= 1, got {self.m_agents}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown streak kind {self.kind!r}")
        if self.counting not in COUNTINGS:
            raise ValueError(f"unknown counting {self.counting!r}")
        object.__setattr__(self, "exclusions", frozenset(self.exclusions))

    def with_m(self, m: float) -> "StreakQuery":
        return StreakQuery(self.n_blocks, self.k, m, self.kind, self.counting, self.exclusions)


@dataclass(frozen=True)
class StreakInterval:
    start: int
    end: int
    agents: tuple

    def __len__(self):
        return self.end - self.start + 1


@dataclass
class StreakReport:
    kind: str
    counting: str
    m_agents: float
    observed: dict[int, int] = field(default_factory=dict)
    n_eligible: dict[int, int] = field(default_factory=dict)
    expected_paper: dict[int, float] = field(default_factory=dict)
    expected_oracle: dict[int, float] = field(default_factory=dict)
    intervals: dict[int, list[StreakInterval]] = field(default_factory=dict)

    def rows(self):
        for k in sorted(self.observed):
            yield k, self.observed[k], self.expected_paper[k], self.expected_oracle[k]


@dataclass
class EffectivePopFit:
    per_k: dict[tuple[str, int], float]
    observed: dict[tuple[str, int], int]
    n_blocks: dict[tuple[str, int], int]
    clipped: tuple = ()
    formula: str = "paper"

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.per_k.values())))

    def values(self, kind: str | None = None) -> list[float]:
        return [m for (kd, _), m in sorted(self.per_k.items()) if kind is None or kd == kind]


@dataclass(frozen=True)
class HashrateWindow:
    start: int
    end: int
    length: int
    top: tuple  # ((agent_id, share), ...) best first
    attackable: bool

    @property
    def max_share(self) -> float:
        return self.top[0][1] if self.top else 0.0


# -- observed counts ---------------------------------------------------------

def miner_agents(chain: Chain, catalog) -> list:
    """Agent id per block, in height order."""
    labels = getattr(catalog, "labels", catalog)
    out = []
    for b in chain.blocks:
        try:
            out.append(labels[b.miner_address])
        except KeyError:
            raise ValueError(f"catalog has no agent for miner {b.miner_address!r} at height {b.height}") from None
    return out


def _qualifies(cnt: Counter, kind: str, need: int) -> bool:
    if kind == "unilateral":
        return len(cnt) == 1
    if kind == "bilateral":
        return len(cnt) <= 2
    return max(cnt.values()) >= need


def window_flags(seq, k: int, kind: str, exclusions=()) -> np.ndarray:
    """Boolean per window start: does ``seq[i:i+k]`` satisfy ``kind``?

    Windows touching an excluded agent are False.
    """
    n = len(seq)
    if k > n:
        raise ValueError(f"k={k} exceeds sequence length {n}")
    excl = set(exclusions)
    need = majority_threshold(k)
    flags = np.zeros(n - k + 1, dtype=bool)
    cnt: Counter = Counter()
    bad = 0
    for i, a in enumerate(seq):
        if a in excl:
            bad += 1
        else:
            cnt[a] += 1
        if i >= k:
            old = seq[i - k]
            if old in excl:
                bad -= 1
            else:
                cnt[old] -= 1
                if not cnt[old]:
                    del cnt[old]
        if i >= k - 1 and not bad:
            flags[i - k + 1] = _qualifies(cnt, kind, need)
    return flags


def eligible_windows(seq, k: int, exclusions=()) -> int:
    """Number of length-``k`` windows free of excluded agents."""
    excl = set(exclusions)
    run = total = 0
    for a in seq:
        run = 0 if a in excl else run + 1
        if run >= k:
            total += 1
    return total


def count_windows(seq, k: int, kind: str, exclusions=(), threads: int = 1) -> int:
    """Window count; the sequence is split into chunks overlapping by ``k - 1``."""
    n = len(seq)
    if threads <= 1 or n < 4 * k * threads:
        return int(window_flags(seq, k, kind, exclusions).sum())
    step = math.ceil((n - k + 1) / threads)
    parts = [seq[s:s + step + k - 1] for s in range(0, n - k + 1, step)]
    with ThreadPoolExecutor(threads) as pool:
        return sum(pool.map(lambda p: int(window_flags(p, k, kind, exclusions).sum()), parts))


def _runs_two_pointer(seq, k, kind, excl):
    # unilateral and bilateral are hereditary, so each right end has a
    # smallest feasible left end and maximal runs are read off directly
    out = []
    n = len(seq)
    i = 0
    while i < n:
        if seq[i] in excl:
            i += 1
            continue
        j = i
        while j < n and seq[j] not in excl:
            j += 1
        cnt: Counter = Counter()
        left = i
        lefts = []
        for r in range(i, j):
            cnt[seq[r]] += 1
            while not _qualifies(cnt, kind, 0):
                cnt[seq[left]] -= 1
                if not cnt[seq[left]]:
                    del cnt[seq[left]]
                left += 1
            lefts.append(left)
        for idx, r in enumerate(range(i, j)):
            last = r == j - 1 or lefts[idx + 1] > lefts[idx]
            if last and r - lefts[idx] + 1 >= k:
                out.append((lefts[idx], r))
        i = j
    return out


def _runs_union(flags, k):
    out = []
    cur = None
    for s in np.flatnonzero(flags):
        s = int(s)
        if cur is not None and s <= cur[1]:
            cur[1] = s + k - 1
        else:
            if cur is not None:
                out.append(tuple(cur))
            cur = [s, s + k - 1]
    if cur is not None:
        out.append(tuple(cur))
    return out


def streak_runs(seq, k: int, kind: str, exclusions=()) -> list[tuple[int, int]]:
    """Maximal streak stretches ``(first_index, last_index)`` of length >= ``k``.

    Majority stretches are unions of overlapping qualifying windows since the
    majority predicate does not carry over to sub-windows.
    """
    excl = set(exclusions)
    if kind == "majority":
        return _runs_union(window_flags(seq, k, kind, excl), k)
    return _runs_two_pointer(seq, k, kind, excl)


def _interval_agents(seq, lo, hi, kind, k):
    cnt = Counter(seq[lo:hi + 1])
    if kind != "majority":
        return tuple(sorted(cnt))
    need = majority_threshold(k)
    agents = set()
    for s in range(lo, hi - k + 2):
        w = Counter(seq[s:s + k])
        agents.update(x for x, cx in w.items() if cx >= need)
    return tuple(sorted(agents))


def find_streaks(chain: Chain, catalog, query: StreakQuery, k_values=None) -> StreakReport:
    """Observed streak counts for ``query`` and its expectations.

    ``k_values`` defaults to ``(query.k,)``. Expectations use ``query.m_agents``
    and, per ``k``, the effective length ``eligible windows + k - 1`` so that
    excluded agents shrink ``N`` rather than count as misses.
    """
    seq = miner_agents(chain, catalog)
    ks = tuple(k_values) if k_values is not None else (query.k,)
    heights = chain.heights
    rep = StreakReport(query.kind, query.counting, query.m_agents)
    for k in ks:
        if k > len(seq):
            raise ValueError(f"k={k} exceeds chain length {len(seq)}")
        runs = streak_runs(seq, k, query.kind, query.exclusions)
        if query.counting == "window":
            rep.observed[k] = count_windows(seq, k, query.kind, query.exclusions)
        else:
            rep.observed[k] = len(runs)
        n_elig = eligible_windows(seq, k, query.exclusions)
        rep.n_eligible[k] = n_elig
        rep.intervals[k] = [StreakInterval(heights[lo], heights[hi], _interval_agents(seq, lo, hi, query.kind, k))
                            for lo, hi in runs]
        if n_elig:
            q = StreakQuery(n_elig + k - 1, k, query.m_agents, query.kind)
            rep.expected_paper[k] = expected_streaks(q)
            rep.expected_oracle[k] = expected_streaks_exact(q)
        else:
            rep.expected_paper[k] = rep.expected_oracle[k] = 0.0
    return rep


def tick_marks(chain: Chain, catalog, min_len: int = 6, exclusions=()) -> list[StreakInterval]:
    """Stretches of at least ``min_len`` blocks where one agent holds a majority."""
    seq = miner_agents(chain, catalog)
    heights = chain.heights
    return [StreakInterval(heights[lo], heights[hi], _interval_agents(seq, lo, hi, "majority", min_len))
            for lo, hi in streak_runs(seq, min_len, "majority", exclusions)]


# -- expectations ------------------------------------------------------------

def expected_streaks(query: StreakQuery) -> float:
    """Expected window count from the published closed forms, evaluated as printed."""
    n, k, m = query.n_blocks, query.k, float(query.m_agents)
    # direct evaluation keeps M = 1 and powers of two exact; factors stay in range for M <= 1e6
    base = (n - k + 1) * m ** -(k - 1)
    if query.kind == "unilateral":
        return base
    if query.kind == "bilateral":
        return base * (1 + (2.0 ** k - 2) / m)
    # the printed summand carries (M-1)^(k-1) for every j
    binom = sum(math.comb(k, j) for j in range(majority_threshold(k), k + 1))
    return (n - k + 1) * binom * ((m - 1) / m) ** (k - 1)


def window_probability(k: int, m: float, kind: str) -> float:
    """Exact probability that one window satisfies ``kind`` under uniform i.i.d. miners."""
    m = float(m)
    if kind == "unilateral":
        return math.exp(-(k - 1) * math.log(m))
    if kind == "bilateral":
        # one agent, or exactly two agents each present at least once
        pairs = m * (m - 1) / 2
        return math.exp(math.log(m + pairs * (2.0 ** k - 2)) - k * math.log(m))
    total = 0.0
    for j in range(majority_threshold(k), k + 1):
        if m == 1:
            total += 1.0 if j == k else 0.0
            continue
        total += math.exp(math.log(math.comb(k, j)) + (k - j) * math.log(m - 1) - (k - 1) * math.log(m))
    return total


def expected_streaks_exact(query: StreakQuery) -> float:
    return (query.n_blocks - query.k + 1) * window_probability(query.k, query.m_agents, query.kind)


def _mc_counts(draws: np.ndarray, k: int, kind: str, m: int) -> np.ndarray:
    # per-agent window occupancy via prefix sums; independent of window_flags
    trials, n = draws.shape
    distinct = np.zeros((trials, n - k + 1), dtype=np.int64)
    best = np.zeros((trials, n - k + 1), dtype=np.int64)
    for a in range(m):
        cs = np.zeros((trials, n + 1), dtype=np.int64)
        np.cumsum(draws == a, axis=1, out=cs[:, 1:])
        occ = cs[:, k:] - cs[:, :-k]
        distinct += occ > 0
        np.maximum(best, occ, out=best)
    if kind == "unilateral":
        hit = distinct == 1
    elif kind == "bilateral":
        hit = distinct <= 2
    else:
        hit = best >= majority_threshold(k)
    return hit.sum(axis=1)


def expected_streaks_oracle(query: StreakQuery, trials: int = 200, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo window count over uniform i.i.d. miners: ``(mean, stderr)``.

    ``m_agents`` is rounded to the nearest integer.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    m = int(round(query.m_agents))
    rng = np.random.default_rng(seed)
    batch = max(1, 2_000_000 // (query.n_blocks * max(m, 1)))
    counts = []
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        draws = rng.integers(0, m, size=(b, query.n_blocks))
        counts.append(_mc_counts(draws, query.k, query.kind, m))
        done += b
    c = np.concatenate(counts).astype(float)
    stderr = float(c.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return float(c.mean()), stderr


# -- effective population ----------------------------------------------------

def _expected(query: StreakQuery, formula: str) -> float:
    return expected_streaks(query) if formula == "paper" else expected_streaks_exact(query)


def solve_population(observed: float, query: StreakQuery, formula: str = "paper",
                     bounds=M_BOUNDS, iters: int = 200) -> tuple[float, bool]:
    """Bisection for the ``M`` whose expectation equals ``observed``.

    Works in ``log M``; the expectation is monotone in ``M`` for every kind
    but its direction depends on the formula, so it is read off the bounds.
    Returns ``(M, clipped)``; ``clipped`` is True when ``observed`` lies
    outside the attainable range and the nearer bound is returned.
    """
    if formula not in FORMULAS:
        raise ValueError(f"unknown formula {formula!r}")
    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    f = lambda x: _expected(query.with_m(math.exp(x)), formula) - observed
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return math.exp(lo), False
    if fhi == 0:
        return math.exp(hi), False
    if (flo > 0) == (fhi > 0):
        return (math.exp(lo) if abs(flo) < abs(fhi) else math.exp(hi)), True
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0 or hi - lo < 1e-15:
            lo = hi = mid
            break
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi)), False


def _as_kinds(kinds) -> tuple[str, ...]:
    kinds = (kinds,) if isinstance(kinds, str) else tuple(kinds)
    for kd in kinds:
        if kd not in KINDS:
            raise ValueError(f"unknown streak kind {kd!r}")
    return kinds


def fit_counts(seq, kinds="bilateral", k_range=range(3, 13), exclusions=(), formula="paper") -> EffectivePopFit:
    """Fit ``M`` per (kind, k) to the window counts of an agent sequence."""
    per_k, observed, n_blocks, clipped = {}, {}, {}, []
    for kind in _as_kinds(kinds):
        for k in k_range:
            if k > len(seq):
                continue
            obs = count_windows(seq, k, kind, exclusions)
            if obs <= 0:
                continue
            n = eligible_windows(seq, k, exclusions) + k - 1
            m, clip = solve_population(obs, StreakQuery(n, k, 1.0, kind), formula)
            per_k[(kind, k)] = m
            observed[(kind, k)] = obs
            n_blocks[(kind, k)] = n
            if clip:
                clipped.append((kind, k))
    if not per_k:
        raise ValueError("no streak length has a positive observed count")
    return EffectivePopFit(per_k, observed, n_blocks, tuple(clipped), formula)


def fit_effective_population(chain: Chain, catalog, kinds="bilateral", k_range=range(3, 13),
                             exclusions=(), formula: str = "paper") -> EffectivePopFit:
    """Effective population size: mean of the per-k fitted ``M``."""
    return fit_counts(miner_agents(chain, catalog), kinds, k_range, exclusions, formula)


class EffectivePopulationEstimator(BaseEstimator):
    """Estimator wrapper; ``X`` is the per-block agent sequence."""

    def __init__(self, kinds="bilateral", k_min=3, k_max=12, exclusions=(), formula="paper"):
        self.kinds = kinds
        self.k_min = k_min
        self.k_max = k_max
        self.exclusions = exclusions
        self.formula = formula

    def fit(self, X, y=None):
        fit = fit_counts(list(X), self.kinds, range(self.k_min, self.k_max + 1), self.exclusions, self.formula)
        self.fit_ = fit
        self.per_k_ = dict(fit.per_k)
        self.effective_population_ = fit.mean
        return self


# -- hashrate windows --------------------------------------------------------

def hashrate_windows(chain: Chain, catalog, window_blocks: int, top_n: int = 5) -> list[HashrateWindow]:
    """Non-overlapping windows with the ``top_n`` agents by block share.

    Ties rank the smaller agent id first. A trailing partial window is kept
    with its actual length.
    """
    if window_blocks < 1:
        raise ValueError("window_blocks must be >= 1")
    seq = miner_agents(chain, catalog)
    heights = chain.heights
    out = []
    for s in range(0, len(seq), window_blocks):
        part = seq[s:s + window_blocks]
        cnt = Counter(part)
        ranked = sorted(cnt.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
        top = tuple((a, c / len(part)) for a, c in ranked)
        out.append(HashrateWindow(heights[s], heights[s + len(part) - 1], len(part), top,
                                  bool(top) and top[0][1] > 0.5))
    return out


# -- CSV ---------------------------------------------------------------------

def write_streaks_csv(report: StreakReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "observed", "expected_paper", "expected_oracle"])
        for k, obs, ep, eo in report.rows():
            w.writerow([k, obs, repr(ep), repr(eo)])


def write_windows_csv(windows, path, top_n: int = 5) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["start", "end", "length"]
        for i in range(1, top_n + 1):
            head += [f"agent_{i}", f"share_{i}"]
        w.writerow(head + ["attackable"])
        for win in windows:
            row = [win.start, win.end, win.length]
            for i in range(top_n):
                row += list(win.top[i]) if i < len(win.top) else ["", ""]
            w.writerow(row + [int(win.attackable)])


def write_ticks_csv(ticks, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start", "end", "length", "agents"])
        for t in ticks:
            w.writerow([t.start, t.end, len(t), " ".join(map(str, t.agents))])


def write_fit_csv(fit: EffectivePopFit, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "k", "observed", "n_blocks", "fitted_m", "clipped"])
        for (kind, k), m in sorted(fit.per_k.items()):
            w.writerow([kind, k, fit.observed[(kind, k)], fit.n_blocks[(kind, k)], repr(m),
                        int((kind, k) in fit.clipped)])
