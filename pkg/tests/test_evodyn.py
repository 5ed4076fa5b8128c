import csv
from itertools import product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chainagents.centipede import end_round, seat_payoff
from chainagents.evodyn import (
    DEFAULT_D, DEFAULT_W, EvoParams, expected_payoff, fixation_matrix, fixation_probability, heatmap,
    payoff_tensor, stationary_distribution, stationary_from_rho, write_heatmap_csv,
)


def brute_payoff(p: EvoParams, s_focal, s_other, i):
    """Average over focal seat and every ordered draw of the other seats."""
    if p.exclude_self:
        pool = [s_focal] * (i - 1) + [s_other] * (p.M - i)
    else:
        pool = [s_focal] * i + [s_other] * (p.M - i)
    total, count = 0.0, 0
    for seat in range(1, p.N + 1):
        for others in product(pool, repeat=p.N - 1):
            profile = list(others[:seat - 1]) + [s_focal] + list(others[seat - 1:])
            n = end_round(profile, p.N)
            total += seat_payoff(p.N, p.d, p.b, seat, n, p.lagged)
            count += 1
    return total / count


@pytest.mark.parametrize("N", [2, 3, 4])
@pytest.mark.parametrize("M", [2, 3, 4, 5])
@pytest.mark.parametrize("exclude_self", [False, True])
def test_payoff_matches_enumeration(N, M, exclude_self):
    p = EvoParams(M, N, 2.0, 4.0, exclude_self=exclude_self)
    for s_f, s_o in product(range(N + 1), repeat=2):
        for i in range(1, M + 1):
            assert expected_payoff(p, s_f, s_o, i) == pytest.approx(brute_payoff(p, s_f, s_o, i), abs=1e-12)


def test_lagged_payoff_matches_enumeration():
    p = EvoParams(4, 4, 1.5, 3.0, lagged=True)
    for s_f, s_o in product(range(5), repeat=2):
        for i in range(1, 5):
            assert expected_payoff(p, s_f, s_o, i) == pytest.approx(brute_payoff(p, s_f, s_o, i), abs=1e-12)


@given(st.integers(2, 12), st.floats(1.01, 3), st.floats(0.01, 3))
def test_monomorphic_payoffs(N, d, extra):
    p = EvoParams(10, N, d, d + extra)
    assert expected_payoff(p, N, 0, 10) == d ** N
    assert expected_payoff(p, 0, N, 10) == pytest.approx((d + extra) / N, rel=1e-12)


def test_payoff_errors():
    p = EvoParams(5, 3)
    with pytest.raises(ValueError):
        expected_payoff(p, 0, 1, 0)
    with pytest.raises(ValueError):
        expected_payoff(p, 4, 1, 2)
    with pytest.raises(ValueError):
        EvoParams(w=1.5)


def test_tensor_shape():
    assert payoff_tensor(EvoParams(N=5), [0.2, 0.5]).shape == (6, 6, 2)


# -- fixation ---------------------------------------------------------------------

def absorbing_chain_rho(p: EvoParams, m, r):
    """Fixation of one ``m`` mutant by solving the birth-death chain directly."""
    M = p.M
    f = lambda pi: 1 - p.w + p.w * pi
    T = np.zeros((M + 1, M + 1))
    T[0, 0] = T[M, M] = 1.0
    for i in range(1, M):
        fm = f(brute_payoff(p, m, r, i))
        fr = f(brute_payoff(p, r, m, M - i))
        tot = i * fm + (M - i) * fr
        up = i * fm / tot * (M - i) / M
        down = (M - i) * fr / tot * i / M
        T[i, i + 1], T[i, i - 1], T[i, i] = up, down, 1 - up - down
    # absorption at M: (I - Q) h = R[:, M]
    Q = T[1:M, 1:M]
    h = np.linalg.solve(np.eye(M - 1) - Q, T[1:M, M])
    return h[0]


@pytest.mark.parametrize("w", [0.1, 0.5, 1.0])
def test_rho_matches_absorbing_chain(w):
    p = EvoParams(4, 3, 2.0, 4.0, w)
    rho = fixation_matrix(p)
    for m, r in product(range(4), repeat=2):
        if m != r:
            assert rho[m, r] == pytest.approx(absorbing_chain_rho(p, m, r), abs=1e-10)


@given(st.integers(2, 40), st.integers(2, 8), st.booleans())
def test_neutral_rho_exact(M, N, excl):
    rho = fixation_matrix(EvoParams(M, N, w=0.0, exclude_self=excl))
    off = ~np.eye(N + 1, dtype=bool)
    assert np.all(rho[off] == 1 / M)


def test_dominant_mutant_above_neutral():
    # in a group of cooperators the s = N-1 mutant takes the defector bonus
    p = EvoParams(25, 8, 2.0, 4.0, 1.0)
    for i in range(1, 25):
        assert expected_payoff(p, 7, 8, i) > expected_payoff(p, 8, 7, 25 - i)
    assert fixation_probability(p, 7, 8) > 1 / 25
    with pytest.raises(ValueError):
        fixation_probability(p, 3, 3)


def test_rho_in_unit_interval_large_population():
    rho = fixation_matrix(EvoParams(100, 8, 1.2, 4.0, 1.0))
    off = ~np.eye(9, dtype=bool)
    assert np.all(np.isfinite(rho)) and np.all(rho[off] >= 0) and np.all(rho[off] <= 1)


# -- stationary ---------------------------------------------------------------------

@pytest.mark.parametrize("N", [2, 5, 8])
def test_neutral_uniform_exact(N):
    res = stationary_distribution(EvoParams(25, N, w=0.0))
    assert np.all(res.frequencies == 1 / (N + 1))
    assert res.most_frequent == 0
    assert res.p_defect_round1 == 1 / (N + 1)


@given(st.integers(2, 30), st.integers(2, 8), st.floats(0, 1), st.floats(1.05, 3.5))
def test_frequencies_normalised(M, N, w, d):
    res = stationary_distribution(EvoParams(M, N, d, 4.0, w))
    assert abs(res.frequencies.sum() - 1) < 1e-12
    assert np.all(res.frequencies >= -1e-15)


def test_stationary_balance():
    rng = np.random.default_rng(0)
    rho = rng.uniform(0.01, 0.5, (5, 5))
    np.fill_diagonal(rho, 0)
    pi = stationary_from_rho(rho)
    T = rho.T / 4
    np.fill_diagonal(T, 1 - T.sum(axis=1))
    assert np.allclose(pi @ T, pi, atol=1e-14)


def test_strong_selection_small_d_defects():
    assert stationary_distribution(EvoParams(25, 8, 1.1, 4.0, 1.0)).most_frequent == 0


def test_large_d_cooperates():
    assert stationary_distribution(EvoParams(25, 8, 3.9, 4.0, 1.0)).most_frequent >= 7


def test_single_cell_heatmap_matches_direct():
    cell, = heatmap(4.0, 25, (8,), (0.3,), (2.0,))
    res = stationary_distribution(EvoParams(25, 8, 2.0, 4.0, 0.3))
    assert np.array_equal(cell.result.frequencies, res.frequencies)
    assert cell.result.most_frequent == res.most_frequent


def test_neutral_cell():
    cell, = heatmap(4.0, 25, (6,), (0.0,), (2.5,))
    assert cell.result.most_frequent == 0
    assert cell.result.p_defect_round1 == 1 / 7


def test_default_grid_monotone_in_d():
    assert len(DEFAULT_W) == 40 and max(DEFAULT_D) < 4.0
    cells = heatmap(N_values=(8,))
    grid = {(c.w, c.d): c.result.most_frequent for c in cells}
    violations = sum(grid[w, d1] > grid[w, d2]
                     for w in DEFAULT_W for d1, d2 in zip(DEFAULT_D, DEFAULT_D[1:]))
    assert violations == 0


def test_threads_and_order():
    a = heatmap(4.0, 10, (3, 4), (0.1, 1.0), (1.5, 2.5), threads=3)
    b = heatmap(4.0, 10, (3, 4), (0.1, 1.0), (1.5, 2.5))
    assert [(c.N, c.d, c.w) for c in a] == [(c.N, c.d, c.w) for c in b]
    assert [(c.N, c.d, c.w) for c in a][:3] == [(3, 1.5, 0.1), (3, 1.5, 1.0), (3, 2.5, 0.1)]
    assert all(np.array_equal(x.result.frequencies, y.result.frequencies) for x, y in zip(a, b))


def test_heatmap_csv(tmp_path):
    cells = heatmap(4.0, 10, (3, 5), (1.0,), (2.0,))
    write_heatmap_csv(cells, tmp_path / "h.csv", 4.0, 10)
    rows = list(csv.DictReader(open(tmp_path / "h.csv")))
    assert len(rows) == 2 and rows[0]["freq_s5"] == ""
    assert float(rows[1]["p_defect_round1"]) == cells[1].result.frequencies[0]
