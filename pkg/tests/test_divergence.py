import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from domainshift.divergence import js_divergence, kl_divergence
from domainshift.errors import LengthMismatch, NotADistribution


def textbook_kl_bits(p, q):
    """Independent direct evaluation: sum p*log2(p/q), 0-convention."""
    total = 0.0
    for pi, qi in zip(p, q):
        if pi == 0:
            continue
        if qi == 0:
            return math.inf
        total += pi * math.log2(pi / qi)
    return total


def textbook_js_bits(p, q):
    m = [(pi + qi) / 2 for pi, qi in zip(p, q)]
    return 0.5 * (textbook_kl_bits(p, m) + textbook_kl_bits(q, m))


def test_kl_identical_is_zero():
    assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0


def test_kl_analytic_hand_value():
    # 0.5*log2(2) + 0.5*log2(2/3)
    expected = 0.5 * math.log2(2.0) + 0.5 * math.log2(2.0 / 3.0)
    got = kl_divergence([0.5, 0.5], [0.25, 0.75])
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(0.20752, abs=1e-5)


def test_kl_disjoint_support_infinite():
    assert kl_divergence([1.0, 0.0], [0.0, 1.0]) == math.inf


def test_kl_smoothing_makes_finite():
    v = kl_divergence([1.0, 0.0], [0.0, 1.0], smoothing=1e-6)
    assert math.isfinite(v) and v > 0


def test_kl_smoothing_matches_direct_formula():
    p = np.array([0.7, 0.3])
    q = np.array([0.2, 0.8])
    eps = 1e-3
    ps = (p + eps) / (1 + 2 * eps)
    qs = (q + eps) / (1 + 2 * eps)
    assert kl_divergence(p, q, smoothing=eps) == pytest.approx(
        textbook_kl_bits(ps, qs), abs=1e-12
    )


def test_js_identical_is_zero():
    p = np.array([0.2, 0.3, 0.5])
    assert js_divergence(p, p) == 0.0


def test_js_disjoint_saturates_at_one():
    assert js_divergence([1.0, 0.0], [0.0, 1.0]) == 1.0


def test_js_analytic_hand_value():
    # P=(1,0), Q=(0.5,0.5), M=(0.75,0.25)
    expected = 0.5 * (math.log2(1 / 0.75) + (0.5 * math.log2(0.5 / 0.75) + 0.5 * math.log2(0.5 / 0.25)))
    got = js_divergence([1.0, 0.0], [0.5, 0.5])
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(0.31128, abs=1e-5)


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        js_divergence([0.5, 0.5], [0.3, 0.3, 0.4])
    with pytest.raises(LengthMismatch):
        kl_divergence([0.5, 0.5], [0.3, 0.3, 0.4])


def test_not_a_distribution():
    with pytest.raises(NotADistribution):
        js_divergence([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(NotADistribution):
        kl_divergence([-0.1, 1.1], [0.5, 0.5])


def test_quarter_step_grid_matches_textbook_oracle():
    # all length-3 vectors with components in {0, .25, .5, .75, 1} summing to 1
    steps = [0.0, 0.25, 0.5, 0.75, 1.0]
    grid = [
        v for v in itertools.product(steps, repeat=3) if abs(sum(v) - 1.0) < 1e-15
    ]
    assert len(grid) == 15
    for p in grid:
        for q in grid:
            assert js_divergence(p, q) == pytest.approx(
                textbook_js_bits(p, q), abs=1e-12
            )
            kl = kl_divergence(p, q)
            oracle = textbook_kl_bits(p, q)
            if math.isinf(oracle):
                assert math.isinf(kl)
            else:
                assert kl == pytest.approx(oracle, abs=1e-12)


@st.composite
def prob_pair(draw, n):
    raw_p = draw(
        st.lists(st.floats(1e-6, 1.0), min_size=n, max_size=n)
    )
    raw_q = draw(
        st.lists(st.floats(1e-6, 1.0), min_size=n, max_size=n)
    )
    p = np.array(raw_p) / math.fsum(raw_p)
    q = np.array(raw_q) / math.fsum(raw_q)
    return p, q


@settings(max_examples=200, deadline=None)
@given(prob_pair(n=8))
def test_js_symmetry_and_bounds(pair):
    p, q = pair
    a = js_divergence(p, q)
    b = js_divergence(q, p)
    assert abs(a - b) < 1e-12
    assert 0.0 <= a <= 1.0


@settings(max_examples=200, deadline=None)
@given(prob_pair(n=6))
def test_kl_nonnegative(pair):
    p, q = pair
    assert kl_divergence(p, q, smoothing=1e-9) >= -1e-12
