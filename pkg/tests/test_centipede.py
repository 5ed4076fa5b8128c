import csv
import math
from collections import Counter
from itertools import permutations, product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chainagents.centipede import (
    DEFAULT_UNIT, GameParams, binom_test_two_sided, clopper_pearson, cohens_h, end_round, play,
    results_table, seat_payoff, simulate_sessions, spne, two_proportion_test, write_results_csv,
    write_stop_histogram_csv,
)

P = GameParams()
U = P.unit


def test_all_cooperate():
    assert play(P, [8] * 8) == play(P, range(1, 9))
    assert play(P, [8] * 8).payoffs == (256 * U,) * 8
    assert play(P, [8] * 8).end_round == 9


def test_immediate_defection():
    out = play(P, [0] + [8] * 7)
    assert out.end_round == 1
    assert out.payoffs == (4 * U,) + (0.0,) * 7


def test_defection_at_round_five():
    out = play(P, [8, 8, 8, 8, 4, 8, 8, 8])
    assert out.end_round == 5
    assert out.payoffs == (16 * U,) * 4 + (64 * U,) + (0.0,) * 3


@pytest.mark.parametrize("n", range(1, 10))
def test_closed_form_every_stop_round(n):
    profile = [8 if seat != n else seat - 1 for seat in range(1, 9)]
    out = play(P, profile)
    assert out.end_round == n
    for seat, pay in enumerate(out.payoffs, start=1):
        if n == 9:
            expect = 2 ** 8
        elif seat < n:
            expect = 2 ** (n - 1)
        elif seat == n:
            expect = 4 * 2 ** (n - 1)
        else:
            expect = 0
        assert pay == expect * U


@given(st.lists(st.integers(0, 6), min_size=6, max_size=6), st.floats(1.01, 5), st.floats(0.01, 3))
def test_defector_ratio_is_b(profile, d, extra):
    params = GameParams(6, d, d + extra, unit=1.0)
    out = play(params, profile)
    n = out.end_round
    if 1 < n <= 6:
        assert out.payoffs[n - 1] / out.payoffs[0] == pytest.approx(params.b, rel=1e-12)


@given(st.lists(st.integers(0, 5), min_size=5, max_size=5))
def test_lagged_matches_standard_at_ends(profile):
    std, lr = play(GameParams(5), profile), play(GameParams.preset("LR", n_rounds=5), profile)
    if std.end_round in (1, 6):
        assert std == lr
    else:
        assert lr.payoffs[std.end_round - 1] == std.payoffs[std.end_round - 1]


def test_lagged_payoffs():
    out = play(GameParams.preset("LR", unit=1.0), [8, 8, 8, 8, 4, 8, 8, 8])
    assert out.payoffs == (8.0, 8.0, 8.0, 16.0, 64.0, 0.0, 0.0, 0.0)


def test_variants():
    assert GameParams.preset("HS").scale == 10 * DEFAULT_UNIT
    assert GameParams.preset("4P").n_rounds == 4
    with pytest.raises(ValueError):
        GameParams(variant="4P")
    with pytest.raises(ValueError, match="b > d"):
        GameParams(d=2, b=2)
    with pytest.raises(ValueError):
        play(P, [8] * 7)
    with pytest.raises(ValueError):
        play(P, [9] * 8)


def test_unit_anchor():
    # the defector's final-round take is the largest payoff in the game
    assert 4 * 2 ** 7 * DEFAULT_UNIT == pytest.approx(1.28)


# -- equilibrium ----------------------------------------------------------------

def test_spne_all_defect():
    eq = spne(P)
    assert eq.profile == (0,) * 8
    assert all(step.defect for step in eq.table)
    assert [s.round for s in eq.table] == list(range(1, 9))


@given(st.floats(1.01, 10), st.floats(0.001, 10))
def test_spne_two_rounds(d, extra):
    assert spne(GameParams(2, d, d + extra)).profile == (0, 0)


@given(st.integers(2, 12), st.floats(1.01, 5), st.floats(0.001, 5))
def test_last_round_identity(n, d, extra):
    params = GameParams(n, d, d + extra, unit=1.0)
    last = spne(params).table[-1]
    assert last.take == pytest.approx(params.b * d ** (n - 1))
    assert last.pass_ == pytest.approx(d ** n)
    assert last.defect == (params.b > d)


@given(st.floats(1e-6, 1e6), st.sampled_from(["standard", "LR", "HS"]))
def test_spne_unit_invariant(unit, variant):
    base = GameParams.preset(variant)
    assert spne(base.with_unit(unit)).profile == spne(base).profile


def test_spne_four_player():
    assert spne(GameParams.preset("4P")).profile == (0, 0, 0, 0)


# -- simulation ---------------------------------------------------------------------

def exact_stop_distribution(n_rounds, pop, replace):
    counts = Counter()
    draws = product(range(len(pop)), repeat=n_rounds) if replace else permutations(range(len(pop)), n_rounds)
    total = 0
    for seats in draws:
        counts[end_round([pop[i] for i in seats], n_rounds)] += 1
        total += 1
    return np.array([counts[n] / total for n in range(1, n_rounds + 2)])


def test_all_defectors_stop_first():
    assert simulate_sessions(P, [0] * 20, 1000).tolist() == [1.0] + [0.0] * 8


def test_all_cooperators_reach_end():
    assert simulate_sessions(P, [8] * 20, 1000).tolist() == [0.0] * 8 + [1.0]


@pytest.mark.parametrize("replace", [False, True])
def test_matches_exact_enumeration(replace):
    params = GameParams(4, unit=1.0)
    pop = [0, 1, 2, 3, 4, 4, 3, 2]
    freq = simulate_sessions(params, pop, 100_000, seed=3, replace_draws=replace, chunk=7_000)
    exact = exact_stop_distribution(4, pop, replace)
    assert 0.5 * np.abs(freq - exact).sum() < 0.01


def test_simulation_deterministic():
    a = simulate_sessions(P, range(9), 5000, seed=11)
    assert np.array_equal(a, simulate_sessions(P, range(9), 5000, seed=11))
    assert a.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        simulate_sessions(P, [], 10)


# -- statistics ---------------------------------------------------------------------

def test_binomial_anchors():
    r = binom_test_two_sided(38, 438, 1.0)
    assert r.p_value < 0.001
    assert (r.ci_low, r.ci_high) == pytest.approx((0.062, 0.117), abs=1e-3)
    r = binom_test_two_sided(78, 224, 1.0)
    assert (r.ci_low, r.ci_high) == pytest.approx((0.286, 0.415), abs=1e-3)
    assert binom_test_two_sided(10, 10, 1.0).p_value == 1.0


def test_binomial_against_enumeration():
    # n=10, p=0.5, k=2: outcomes {0,1,2,8,9,10}
    p = sum(math.comb(10, j) for j in (0, 1, 2, 8, 9, 10)) / 2 ** 10
    assert binom_test_two_sided(2, 10).p_value == pytest.approx(p, rel=1e-12)
    assert binom_test_two_sided(5, 10).p_value == pytest.approx(1.0)


@given(st.integers(1, 200), st.data())
def test_clopper_pearson_covers_estimate(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = clopper_pearson(k, n)
    assert 0 <= lo <= k / n <= hi <= 1


def test_binomial_errors():
    with pytest.raises(ValueError):
        binom_test_two_sided(0, 0)
    with pytest.raises(ValueError):
        binom_test_two_sided(5, 4)


def test_two_proportion_anchors():
    r = two_proportion_test(38, 438, 35, 209)
    assert float(f"{r.p_value:.1g}") == 0.004
    assert (r.ci_low, r.ci_high) == pytest.approx((-0.141, -0.020), abs=1e-3)
    r = two_proportion_test(47, 271, 36, 103)
    assert r.p_value < 0.001
    assert (r.ci_low, r.ci_high) == pytest.approx((-0.285, -0.067), abs=1e-3)


def test_two_proportion_identical_and_symmetric():
    assert two_proportion_test(10, 50, 20, 100).p_value == pytest.approx(1.0)
    a, b = two_proportion_test(12, 80, 30, 90), two_proportion_test(30, 90, 12, 80)
    assert a.p_value == pytest.approx(b.p_value, rel=1e-12)
    assert (a.ci_low, a.ci_high) == pytest.approx((-b.ci_high, -b.ci_low))


def test_uncorrected_matches_z_test():
    k1, n1, k2, n2 = 21, 179, 10, 171
    p1, p2, pool = k1 / n1, k2 / n2, (k1 + k2) / (n1 + n2)
    z = (p1 - p2) / math.sqrt(pool * (1 - pool) * (1 / n1 + 1 / n2))
    assert two_proportion_test(k1, n1, k2, n2, correct=False).p_value == pytest.approx(
        math.erfc(abs(z) / math.sqrt(2)), rel=1e-10)
    assert two_proportion_test(k1, n1, k2, n2).p_value > two_proportion_test(k1, n1, k2, n2, correct=False).p_value


def test_two_proportion_errors():
    with pytest.raises(ValueError, match="degenerate"):
        two_proportion_test(0, 10, 0, 20)
    with pytest.raises(ValueError):
        two_proportion_test(1, 0, 1, 2)


def test_cohens_h():
    assert cohens_h(0.3, 0.3) == 0
    assert cohens_h(0.05, 0.10) == pytest.approx(0.192, abs=5e-4)
    with pytest.raises(ValueError):
        cohens_h(1.2, 0.1)


@given(st.floats(0, 1), st.floats(0, 1))
def test_cohens_h_symmetric(p1, p2):
    assert cohens_h(p1, p2) == cohens_h(p2, p1) >= 0


def test_results_table_and_writers(tmp_path):
    rows = results_table()
    assert len(rows) == 6
    write_results_csv(rows, tmp_path / "r.csv")
    back = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert float(back[0]["ci_low"]) == rows[0]["ci_low"]
    write_stop_histogram_csv({"a": [0.5, 0.5]}, tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text() == "label,end_round,frequency\na,1,0.5\na,2,0.5\n"
