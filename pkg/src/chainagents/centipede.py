"""N-player Centipede game: payoffs, backward induction, simulated sessions
and the proportion tests used to summarise experimental sessions.

Seat ``n`` moves in round ``n`` and cooperates there iff its strategy
``s >= n``. The first defection ends the game.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from statistics import NormalDist

import numpy as np
from scipy import stats

VARIANTS = ("standard", "LR", "HS", "4P")
# bonus cap of 1.28 currency units is the defector's take in the final round
DEFAULT_UNIT = 1.28 / (4 * 2 ** 7)


@dataclass(frozen=True)
class GameParams:
    n_rounds: int = 8
    d: float = 2.0
    b: float = 4.0
    unit: float = DEFAULT_UNIT
    variant: str = "standard"

    def __post_init__(self):
        if self.n_rounds < 2:
            raise ValueError("n_rounds must be >= 2")
        if not self.b > self.d > 1:
            raise ValueError(f"need b > d > 1, got b={self.b}, d={self.d}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "4P" and self.n_rounds != 4:
            raise ValueError("the 4P variant has exactly 4 rounds")

    @classmethod
    def preset(cls, variant: str = "standard", **kw) -> "GameParams":
        if variant == "4P":
            kw.setdefault("n_rounds", 4)
        return cls(variant=variant, **kw)

    @property
    def scale(self) -> float:
        return self.unit * (10 if self.variant == "HS" else 1)

    @property
    def lagged(self) -> bool:
        return self.variant == "LR"

    def with_unit(self, unit: float) -> "GameParams":
        return replace(self, unit=unit)


@dataclass(frozen=True)
class Outcome:
    end_round: int  # n_rounds + 1 when nobody defected
    payoffs: tuple[float, ...]


def seat_payoff(n_rounds, d, b, seat, end_round, lagged=False) -> float:
    """Unscaled payoff of ``seat`` when the game ends at ``end_round``."""
    if end_round > n_rounds:
        return d ** n_rounds
    if seat > end_round:
        return 0.0
    if seat == end_round:
        return b * d ** (end_round - 1)
    if lagged and seat < end_round - 1:
        return d ** (end_round - 2)
    return d ** (end_round - 1)


def end_round(profile, n_rounds: int) -> int:
    for n, s in enumerate(profile, start=1):
        if s < n:
            return n
    return n_rounds + 1


def play(params: GameParams, profile) -> Outcome:
    """Play one game; ``profile[n-1]`` is the strategy of the seat moving in round ``n``."""
    profile = list(profile)
    if len(profile) != params.n_rounds:
        raise ValueError(f"profile needs {params.n_rounds} strategies, got {len(profile)}")
    for s in profile:
        if not 0 <= s <= params.n_rounds:
            raise ValueError(f"strategy {s} outside [0, {params.n_rounds}]")
    n = end_round(profile, params.n_rounds)
    pay = tuple(params.scale * seat_payoff(params.n_rounds, params.d, params.b, seat, n, params.lagged)
                for seat in range(1, params.n_rounds + 1))
    return Outcome(n, pay)


@dataclass(frozen=True)
class InductionStep:
    round: int
    take: float
    pass_: float
    defect: bool


@dataclass(frozen=True)
class SPNE:
    profile: tuple[int, ...]
    table: tuple[InductionStep, ...]


def spne(params: GameParams) -> SPNE:
    """Backward induction; each mover compares taking now with the outcome of passing."""
    n_rounds = params.n_rounds
    end_after = n_rounds + 1  # where the game ends once round n is passed
    steps = []
    actions = {}
    for n in range(n_rounds, 0, -1):
        take = params.scale * seat_payoff(n_rounds, params.d, params.b, n, n, params.lagged)
        cont = params.scale * seat_payoff(n_rounds, params.d, params.b, n, end_after, params.lagged)
        defect = take > cont
        actions[n] = defect
        steps.append(InductionStep(n, take, cont, defect))
        if defect:
            end_after = n
    profile = tuple(0 if actions[n] else n_rounds for n in range(1, n_rounds + 1))
    return SPNE(profile, tuple(reversed(steps)))


def simulate_sessions(params: GameParams, population, n_games: int, seed=0,
                      replace_draws: bool | None = None, chunk: int = 50_000) -> np.ndarray:
    """Stop-round frequencies over ``n_games`` randomly seated games.

    Index ``n - 1`` holds the share of games ending in round ``n``; the last
    entry is the share reaching the end. Seats are drawn without replacement
    when the population is large enough, unless ``replace_draws`` says so.
    """
    pop = np.asarray(list(population), dtype=np.int64)
    if pop.size == 0:
        raise ValueError("population is empty")
    N = params.n_rounds
    if replace_draws is None:
        replace_draws = pop.size < N
    rng = np.random.default_rng(seed)
    counts = np.zeros(N + 1, dtype=np.int64)
    rounds = np.arange(1, N + 1)
    done = 0
    if not replace_draws:
        chunk = max(1, min(chunk, 5_000_000 // pop.size))
    while done < n_games:
        m = min(chunk, n_games - done)
        if replace_draws:
            seats = pop[rng.integers(0, pop.size, size=(m, N))]
        else:
            seats = pop[rng.permuted(np.tile(np.arange(pop.size), (m, 1)), axis=1)[:, :N]]
        defect = seats < rounds
        first = np.where(defect.any(axis=1), defect.argmax(axis=1), N)
        counts += np.bincount(first, minlength=N + 1)
        done += m
    return counts / n_games


# -- statistics ---------------------------------------------------------------

@dataclass(frozen=True)
class StatResult:
    p_value: float
    ci_low: float
    ci_high: float
    estimate: float


def clopper_pearson(k: int, n: int, conf: float = 0.95) -> tuple[float, float]:
    a = 1 - conf
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def binom_test_two_sided(k: int, n: int, p0: float = 0.5, conf: float = 0.95) -> StatResult:
    """Exact two-sided binomial test with a Clopper-Pearson interval.

    The p-value sums the probabilities of all outcomes no likelier than
    ``k``, with a small relative slack for floating ties.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    if not 0 <= p0 <= 1:
        raise ValueError("p0 must lie in [0, 1]")
    pmf = stats.binom.pmf(np.arange(n + 1), n, p0)
    p = float(min(1.0, pmf[pmf <= pmf[k] * (1 + 1e-7)].sum()))
    lo, hi = clopper_pearson(k, n, conf)
    return StatResult(p, lo, hi, k / n)


def two_proportion_test(k1: int, n1: int, k2: int, n2: int, correct: bool = True,
                        conf: float = 0.95) -> StatResult:
    """Pearson chi-square test of ``p1 == p2`` with an interval for ``p1 - p2``.

    ``correct`` applies the continuity correction, capped at the observed
    difference as in common statistical packages.
    """
    if n1 < 1 or n2 < 1:
        raise ValueError("sample sizes must be >= 1")
    if not (0 <= k1 <= n1 and 0 <= k2 <= n2):
        raise ValueError("counts must lie within their sample sizes")
    pooled = (k1 + k2) / (n1 + n2)
    if pooled in (0.0, 1.0):
        raise ValueError("degenerate counts: all successes or all failures")
    p1, p2 = k1 / n1, k2 / n2
    delta = p1 - p2
    inv = 1 / n1 + 1 / n2
    yates = min(0.5, abs(delta) / inv) if correct else 0.0
    observed = np.array([[k1, n1 - k1], [k2, n2 - k2]], dtype=float)
    expected = np.outer([n1, n2], [pooled, 1 - pooled])
    stat = float(np.sum((np.abs(observed - expected) - yates) ** 2 / expected))
    p = math.erfc(math.sqrt(stat / 2))
    z = NormalDist().inv_cdf(0.5 + conf / 2)
    width = z * math.sqrt(p1 * (1 - p1) / n1 + p2 * (1 - p2) / n2) + yates * inv
    return StatResult(p, max(delta - width, -1.0), min(delta + width, 1.0), delta)


def cohens_h(p1: float, p2: float) -> float:
    for p in (p1, p2):
        if not 0 <= p <= 1:
            raise ValueError("proportions must lie in [0, 1]")
    return abs(2 * math.asin(math.sqrt(p1)) - 2 * math.asin(math.sqrt(p2)))


# Session counts from the 8-player experiment and its 2-player comparison.
ONE_SAMPLE_ROWS = (
    ("first-round defection, 8-player", 38, 438, 1.0),
    ("last-round defection, 8-player", 78, 224, 1.0),
)
TWO_SAMPLE_ROWS = (
    ("first-round defection, repetitions 1-2 vs 4-5", 21, 179, 10, 171, False),
    ("first-round defection, 8-player vs 2-player", 38, 438, 35, 209, True),
    ("last-round defection, 8-player vs 2-player", 78, 224, 25, 67, True),
    ("round-7 defection, 8-player vs 2-player", 47, 271, 36, 103, True),
)


def results_table() -> list[dict]:
    """Test results for the recorded session counts."""
    rows = []
    for name, k, n, p0 in ONE_SAMPLE_ROWS:
        r = binom_test_two_sided(k, n, p0)
        rows.append({"test": "binomial", "row": name, "counts": f"{k}/{n} vs p0={p0}",
                     "estimate": r.estimate, "p_value": r.p_value, "ci_low": r.ci_low, "ci_high": r.ci_high})
    for name, k1, n1, k2, n2, correct in TWO_SAMPLE_ROWS:
        r = two_proportion_test(k1, n1, k2, n2, correct=correct)
        rows.append({"test": "two-proportion" + ("" if correct else " (uncorrected)"), "row": name,
                     "counts": f"{k1}/{n1} vs {k2}/{n2}", "estimate": r.estimate,
                     "p_value": r.p_value, "ci_low": r.ci_low, "ci_high": r.ci_high})
    return rows


def write_results_csv(rows, path) -> None:
    cols = ["test", "row", "counts", "estimate", "p_value", "ci_low", "ci_high"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: repr(v) if isinstance(v, float) else v for c, v in r.items()})


def write_stop_histogram_csv(freqs_by_label, path) -> None:
    """``freqs_by_label``: mapping label -> stop-round frequency vector."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "end_round", "frequency"])
        for label, freqs in freqs_by_label.items():
            for n, f in enumerate(freqs, start=1):
                w.writerow([label, n, repr(float(f))])
