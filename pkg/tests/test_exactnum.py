import math
from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from harmonic_process.errors import DomainError
from harmonic_process.exactnum import (
    binom,
    check_two_s,
    gamma_ratio,
    h_weight,
    insertion_weight,
    kappa,
    phi_rate,
    to_rat,
    total_insertion_rate,
)


@pytest.mark.parametrize("a,b,want", [(3, 3, F(1)), (5, 3, F(12)), (2, 4, F(1, 6))])
def test_gamma_ratio_values(a, b, want):
    assert gamma_ratio(a, b) == want


def test_gamma_ratio_matches_factorials():
    for a in range(1, 12):
        for b in range(1, 12):
            assert gamma_ratio(a, b) == F(math.factorial(a - 1), math.factorial(b - 1))


@pytest.mark.parametrize("a,b", [(0, 3), (3, 0), (-1, 2)])
def test_gamma_ratio_rejects_nonpositive(a, b):
    with pytest.raises(DomainError):
        gamma_ratio(a, b)


@given(st.integers(1, 60), st.integers(1, 60))
def test_gamma_ratio_reciprocal(a, b):
    assert gamma_ratio(a, b) * gamma_ratio(b, a) == 1


@pytest.mark.parametrize(
    "two_s,m,k,want", [(1, 3, 2, F(1, 2)), (2, 2, 1, F(2, 3)), (1, 1, 1, F(1))]
)
def test_phi_rate_values(two_s, m, k, want):
    assert phi_rate(two_s, m, k) == want


def test_phi_rate_is_one_over_k_at_two_s_one():
    for m in range(1, 15):
        for k in range(1, m + 1):
            assert phi_rate(1, m, k) == F(1, k)


@pytest.mark.parametrize("m,k", [(2, 3), (2, 0), (0, 1)])
def test_phi_rate_rejects_impossible_jumps(m, k):
    with pytest.raises(DomainError):
        phi_rate(1, m, k)


@pytest.mark.parametrize("two_s,m,want", [(1, 0, F(0)), (3, 0, F(0)), (1, 3, F(11, 6)), (2, 2, F(5, 6))])
def test_h_weight_values(two_s, m, want):
    assert h_weight(two_s, m) == want


@pytest.mark.parametrize("two_s,m,want", [(1, 0, 1), (4, 0, 1), (1, 7, 1), (2, 3, 4)])
def test_kappa_values(two_s, m, want):
    assert kappa(two_s, m) == want


@given(st.integers(1, 8), st.integers(0, 40))
def test_kappa_is_binomial(two_s, m):
    assert kappa(two_s, m) == binom(two_s + m - 1, m)


def test_stochasticity_sum_rule():
    # outflow of a site equals its weight, exactly
    for two_s in range(1, 7):
        for m in range(0, 101):
            total = sum((phi_rate(two_s, m, k) for k in range(1, m + 1)), F(0))
            assert total == h_weight(two_s, m)


@pytest.mark.parametrize("beta,k,want", [("1/2", 1, F(1, 2)), ("1/2", 3, F(1, 24)), ("1/3", 2, F(1, 18))])
def test_insertion_weight_values(beta, k, want):
    assert insertion_weight(beta, k) == want


@pytest.mark.parametrize("beta", ["0", "1", "3/2", "-1/4"])
def test_insertion_weight_domain(beta):
    with pytest.raises(DomainError):
        insertion_weight(beta, 1)


def test_insertion_partial_sums_monotone_and_bounded():
    beta = F(2, 5)
    cap = total_insertion_rate(beta)
    partial, prev = F(0), F(-1)
    for k in range(1, 60):
        partial += insertion_weight(beta, k)
        assert partial > prev
        assert float(partial) <= cap + 1e-15
        prev = partial
    assert float(partial) == pytest.approx(cap, rel=1e-15)


def test_total_insertion_rate_values():
    assert total_insertion_rate(0.5) == pytest.approx(math.log(2))
    assert total_insertion_rate(0.2) == pytest.approx(0.22314355131420976)
    assert total_insertion_rate(1e-300) == pytest.approx(0.0, abs=1e-299)
    with pytest.raises(DomainError):
        total_insertion_rate(1.0)


def test_to_rat_is_exact():
    assert to_rat("2/5") == F(2, 5)
    assert to_rat(0.5) == F(1, 2)
    assert to_rat(3) == F(3)
    with pytest.raises(TypeError):
        to_rat(None)


@pytest.mark.parametrize("bad", [0, -2, 1.5, True, "2"])
def test_check_two_s(bad):
    with pytest.raises(DomainError):
        check_two_s(bad)
