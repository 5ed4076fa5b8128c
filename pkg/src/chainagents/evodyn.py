"""Finite-population evolutionary dynamics of the N-player Centipede game.

A population of ``M`` individuals plays strategies ``s in 0..N``. Fitness
is ``f = 1 - w + w * pi`` with ``pi`` the expected payoff over random
groups; a focal individual sits in a uniformly random seat and every other
seat is filled independently from the population. Under rare mutation the
population moves between monomorphic states, so the long-run frequencies
follow from pairwise Moran fixation probabilities.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .centipede import seat_payoff

# relative slack when picking the most frequent strategy
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class EvoParams:
    M: int = 25
    N: int = 8
    d: float = 2.0
    b: float = 4.0
    w: float = 1.0
    exclude_self: bool = False
    lagged: bool = False

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("M must be >= 2")
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if not 0 <= self.w <= 1:
            raise ValueError("w must lie in [0, 1]")
        if not self.b > self.d > 1:
            raise ValueError("need b > d > 1")

    @property
    def n_strategies(self) -> int:
        return self.N + 1


@dataclass(frozen=True)
class StationaryResult:
    frequencies: np.ndarray
    rho: np.ndarray  # rho[s_mut, s_res]
    most_frequent: int

    @property
    def p_defect_round1(self) -> float:
        # only s = 0 defects in round 1
        return float(self.frequencies[0])


def _payoff_table(N, d, b, lagged):
    # G[p-1, n-1]: payoff of seat p when the game ends in round n (n = N+1: nobody defected)
    return np.array([[seat_payoff(N, d, b, p, n, lagged) for n in range(1, N + 2)]
                     for p in range(1, N + 1)])


def payoff_tensor(params: EvoParams, x) -> np.ndarray:
    """Expected payoff ``P[a, o, j]`` of a focal playing ``a`` among others
    who play ``a`` with probability ``x[j]`` and ``o`` otherwise.
    """
    N, S = params.N, params.n_strategies
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = np.arange(S)
    rounds = np.arange(1, N + 1)
    coop_by_s = (s[:, None] >= rounds[None, :]).astype(float)  # (S, N)
    # cooperation probability of a non-focal seat in each round
    q = (x[None, None, :, None] * coop_by_s[:, None, None, :]
         + (1 - x)[None, None, :, None] * coop_by_s[None, :, None, :])  # (S, S, J, N)
    G = _payoff_table(N, params.d, params.b, params.lagged)
    early = np.zeros(q.shape[:3])
    full = np.zeros(q.shape[:3])
    for p in range(1, N + 1):
        qp = q.copy()
        qp[..., p - 1] = coop_by_s[:, None, None, p - 1]
        survive = np.concatenate([np.ones(qp.shape[:3] + (1,)), np.cumprod(qp, axis=-1)], axis=-1)
        ends = survive[..., :-1] * (1 - qp)  # P(first defection in round n)
        early += ends @ G[p - 1, :N]
        full += survive[..., -1]
    # every seat gets d^N when nobody defects; kept apart so full cooperation is exact
    return early / N + (full / N) * G[0, N]


def _share(params: EvoParams, i):
    i = np.asarray(i, dtype=float)
    if params.exclude_self:
        return (i - 1) / (params.M - 1)
    return i / params.M


def expected_payoff(params: EvoParams, s_focal: int, s_other: int, i: int) -> float:
    """Payoff of an ``s_focal`` player when ``i`` of ``M`` individuals play ``s_focal``."""
    if not 1 <= i <= params.M:
        raise ValueError(f"i must lie in [1, {params.M}]")
    for s in (s_focal, s_other):
        if not 0 <= s <= params.N:
            raise ValueError(f"strategy {s} outside [0, {params.N}]")
    return float(payoff_tensor(params, [_share(params, i)])[s_focal, s_other, 0])


def _fitness(params, pi):
    return 1 - params.w + params.w * pi


def _rho_from_log_ratios(log_ratios: np.ndarray) -> np.ndarray:
    # rho = 1 / (1 + sum_q exp(c_q)), c_q = cumulative log ratio; shifted when large
    c = np.cumsum(log_ratios, axis=-1)
    top = np.max(c, axis=-1)
    safe = top < 700
    plain = 1 / (1 + np.sum(np.exp(np.where(safe[..., None], c, 0)), axis=-1))
    shift = np.maximum(top, 0)[..., None]
    scaled = np.exp(-shift[..., 0]) / (np.exp(-shift[..., 0]) + np.sum(np.exp(c - shift), axis=-1))
    return np.where(safe, plain, scaled)


def fixation_matrix(params: EvoParams) -> np.ndarray:
    """``rho[m, r]``: probability that one ``m`` mutant takes over an ``r`` population."""
    M = params.M
    i = np.arange(1, M)
    P_mut = payoff_tensor(params, _share(params, i))            # mutant a=m among o=r, i mutants
    P_res = payoff_tensor(params, _share(params, M - i))        # resident a=r among o=m, M-i residents
    f_mut = _fitness(params, P_mut)
    f_res = _fitness(params, np.swapaxes(P_res, 0, 1))          # index [m, r, j]
    rho = _rho_from_log_ratios(np.log(f_res) - np.log(f_mut))
    np.fill_diagonal(rho, 0.0)
    return rho


def fixation_probability(params: EvoParams, s_mutant: int, s_resident: int) -> float:
    if s_mutant == s_resident:
        raise ValueError("mutant and resident strategies must differ")
    return float(fixation_matrix(params)[s_mutant, s_resident])


def _most_frequent(freq: np.ndarray) -> int:
    return int(np.flatnonzero(freq >= freq.max() * (1 - TIE_RTOL))[0])


def stationary_from_rho(rho: np.ndarray) -> np.ndarray:
    S = rho.shape[0]
    T = rho.T / (S - 1)  # T[r, m]: resident r replaced by m
    np.fill_diagonal(T, 0.0)
    np.fill_diagonal(T, 1 - T.sum(axis=1))
    if np.array_equal(T, T.T):
        # doubly stochastic: uniform is stationary, returned exactly
        return np.full(S, 1.0 / S)
    A = T.T - np.eye(S)
    A[-1] = 1.0
    rhs = np.zeros(S)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("embedded chain is singular") from exc
    return pi


def stationary_distribution(params: EvoParams) -> StationaryResult:
    """Low-mutation stationary frequencies; ties in the mode go to the smallest ``s``."""
    rho = fixation_matrix(params)
    freq = stationary_from_rho(rho)
    return StationaryResult(freq, rho, _most_frequent(freq))


@dataclass(frozen=True)
class HeatmapCell:
    N: int
    w: float
    d: float
    result: StationaryResult


DEFAULT_W = tuple(float(v) for v in np.logspace(-3, 0, 40))
# d = b is excluded since the game needs b > d
DEFAULT_D = tuple(float(v) for v in np.linspace(1.1, 4.0, 41)[:-1])


def heatmap(b: float = 4.0, M: int = 25, N_values=(8,), w_values=DEFAULT_W, d_values=DEFAULT_D,
            exclude_self: bool = False, threads: int = 1) -> list[HeatmapCell]:
    """Stationary summaries over a (w, d) grid, ordered by N, then d, then w.

    Payoffs depend on ``d`` but not ``w``, so each ``(N, d)`` column shares
    one payoff evaluation.
    """
    jobs = [(N, d) for N in N_values for d in d_values if b > d]

    def column(job):
        N, d = job
        base = EvoParams(M, N, d, b, 1.0, exclude_self)
        i = np.arange(1, M)
        P_mut = payoff_tensor(base, _share(base, i))
        P_res = np.swapaxes(payoff_tensor(base, _share(base, M - i)), 0, 1)
        cells = []
        for w in w_values:
            p = EvoParams(M, N, d, b, w, exclude_self)
            rho = _rho_from_log_ratios(np.log(_fitness(p, P_res)) - np.log(_fitness(p, P_mut)))
            np.fill_diagonal(rho, 0.0)
            freq = stationary_from_rho(rho)
            cells.append(HeatmapCell(N, float(w), float(d), StationaryResult(freq, rho, _most_frequent(freq))))
        return cells

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            cols = list(pool.map(column, jobs))
    else:
        cols = [column(j) for j in jobs]
    return [c for col in cols for c in col]


def write_heatmap_csv(cells, path, b: float, M: int) -> None:
    width = max((c.N for c in cells), default=0) + 1
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["w", "d", "N", "M", "b", "most_frequent_s", "p_defect_round1"]
                    + [f"freq_s{s}" for s in range(width)])
        for c in cells:
            freq = [repr(float(v)) for v in c.result.frequencies]
            wr.writerow([repr(c.w), repr(c.d), c.N, M, repr(float(b)), c.result.most_frequent,
                         repr(c.result.p_defect_round1)] + freq + [""] * (width - len(freq)))
