import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from gazeaeg.evaluation import (
    DegenerateVarianceError,
    MetricContractError,
    correct_close,
    paired_ttest_2tailed,
    qwk,
    student_t_sf2,
)
from gazeaeg.selftest import _qwk_bruteforce


def test_qwk_examples():
    assert qwk([0, 1, 2, 2], [0, 1, 2, 2], 0, 2) == 1.0
    assert qwk([0, 2], [2, 0], 0, 2) == -1.0
    assert qwk([0, 1, 2], [1, 1, 1], 0, 2) == 0.0


def test_qwk_contract():
    with pytest.raises(MetricContractError):
        qwk([0, 1], [0], 0, 2)
    with pytest.raises(MetricContractError):
        qwk([0, 3], [0, 1], 0, 2)


def test_qwk_empty_categories_are_harmless():
    # unused categories at either end leave both weighted sums unchanged up to the common scale
    a = qwk([1, 2, 2, 3], [1, 2, 3, 3], 1, 3)
    b = qwk([1, 2, 2, 3], [1, 2, 3, 3], 0, 6)
    assert a == pytest.approx(b, abs=1e-12)
    assert qwk([2, 2], [2, 2], 0, 4) == 1.0


def test_qwk_oracle_1000_pairs():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 201))
        hi = int(rng.integers(1, 61))
        g, p = rng.integers(0, hi + 1, n), rng.integers(0, hi + 1, n)
        worst = max(worst, abs(qwk(g, p, 0, hi) - _qwk_bruteforce(list(g), list(p), 0, hi)))
    assert worst <= 1e-12


pairs = st.integers(1, 12).flatmap(lambda hi: st.tuples(
    st.just(hi), st.lists(st.tuples(st.integers(0, hi), st.integers(0, hi)), min_size=2, max_size=40)))


@given(pairs)
def test_qwk_symmetric(case):
    hi, rows = case
    g, p = zip(*rows)
    assert qwk(g, p, 0, hi) == pytest.approx(qwk(p, g, 0, hi), abs=1e-12)


@given(pairs, st.integers(-20, 20))
def test_qwk_shift_invariant(case, c):
    hi, rows = case
    g, p = (np.array(x) for x in zip(*rows))
    assert qwk(g + c, p + c, c, hi + c) == pytest.approx(qwk(g, p, 0, hi), abs=1e-12)


@given(pairs)
def test_qwk_bounded(case):
    hi, rows = case
    g, p = zip(*rows)
    assert -1 - 1e-12 <= qwk(g, p, 0, hi) <= 1 + 1e-12


def test_correct_close_examples():
    x = list(range(48))
    assert correct_close(x, x) == (48, 48)
    assert correct_close([1, 2, 3], [2, 3, 2]) == (0, 3)
    gold = [5] * 48
    pred = [5] * 29 + [6] * 8 + [4] * 8 + [8] * 3
    assert correct_close(gold, pred) == (29, 45)
    with pytest.raises(MetricContractError):
        correct_close([1], [1, 2])


@given(st.lists(st.tuples(st.integers(0, 10), st.integers(0, 10)), max_size=30))
def test_correct_close_ordering(rows):
    g, p = (list(x) for x in zip(*rows)) if rows else ([], [])
    c, cl = correct_close(g, p)
    assert 0 <= c <= cl <= len(rows)


def _t_pdf(s, df):
    return math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2)) * (1 + s * s / df) ** (-(df + 1) / 2)


def test_ttest_example_against_quadrature():
    t, p = paired_ttest_2tailed([1, 2, 3], [0, 0, 0])
    assert t == pytest.approx(2 * math.sqrt(3), abs=1e-12)
    assert abs(t - 3.4641) < 1e-4
    assert abs(p - 0.0742) < 1e-3
    quad = 2 * integrate.quad(_t_pdf, t, np.inf, args=(2,))[0]
    assert abs(p - quad) < 1e-8


@pytest.mark.parametrize("df", [1, 4, 9, 30])
@pytest.mark.parametrize("t", [0.0, 0.5, 2.0, 6.0])
def test_t_tail_against_quadrature(t, df):
    quad = 2 * integrate.quad(_t_pdf, t, np.inf, args=(df,))[0]
    assert abs(student_t_sf2(t, df) - quad) < 1e-8


def test_ttest_degenerate_cases():
    assert paired_ttest_2tailed([0.3, 0.4, 0.5], [0.3, 0.4, 0.5]) == (0.0, 1.0)
    with pytest.raises(DegenerateVarianceError):
        paired_ttest_2tailed([5, 5, 5], [0, 0, 0])
    with pytest.raises(MetricContractError):
        paired_ttest_2tailed([1], [2])


finite = st.floats(-1, 1, allow_nan=False)


@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=10))
def test_ttest_antisymmetric(rows):
    x, y = (list(v) for v in zip(*rows))
    try:
        t1, p1 = paired_ttest_2tailed(x, y)
    except DegenerateVarianceError:
        return
    t2, p2 = paired_ttest_2tailed(y, x)
    assert t1 == -t2 and p1 == pytest.approx(p2, abs=1e-15)
    assert 0.0 <= p1 <= 1.0
