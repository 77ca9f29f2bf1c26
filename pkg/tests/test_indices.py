import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhdlab.indices import (
    DARK,
    INF,
    LIGHT,
    OUTSIDE,
    MhdIndices,
    embedding_barrier,
    eps_le,
    exact,
    inv,
    lifetime_lower_bound,
    prop2_admissible,
    random_thm1_indices,
    region_classify,
    region_raster,
    sigma_exponents,
    thm1_admissible,
    thm3_admissible,
    time_unconstrained,
    young_inverse,
)

F = Fraction


def test_exact_arithmetic():
    assert exact(0.1) == F(1, 10)
    assert exact("inf") == INF and inv(INF) == 0
    assert exact(math.pi) == math.pi  # no small-denominator rational nearby
    assert young_inverse(2, 4) == F(1, 4)


def test_eps_convention():
    assert eps_le(1, 1, 0) and not eps_le(1, 1, F(1, 3))
    assert eps_le(F(9, 10), 1, 5)


def test_derived_values_are_reproducible():
    a, b = MhdIndices(3, 4, 1.25, 5, 2), MhdIndices(3, 4, 1.25, 5, 2)
    assert a.derived() == b.derived()
    assert a.eta0 == F(2) and a.delta == F(1, 5)
    assert a.holder_inverse == F(9, 20)


def test_p0_star():
    idx = MhdIndices(3, INF, 1, 4, 2)  # delta = 1/2, d/delta = 6
    assert idx.p0_star == (6, True)
    assert MhdIndices(3, 5, 1, 4, 2).p0_star == (5, False)
    assert MhdIndices(3, 5, 1, 8, 2).p0_star == (5, False)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 39), st.integers(3, 2000))
def test_delta_range(i, p1_num):
    d = 2 + i % 2
    p1 = F(p1_num, 1000) + d
    idx = MhdIndices(d, INF, 1, p1, 1)
    assert 0 <= idx.delta < 1


def test_fast_b_regime_admits_eta0_d_plus_1():
    # d = 3, p1 = inf, eta1 = 3 >= (d+1+delta)/2, p0 = 4, eta0 = 4
    assert thm1_admissible(MhdIndices(3, 4, F(13, 4), INF, 3))


def test_large_p1_removes_lower_bound():
    idx = MhdIndices(2, INF, 0, 4, 2)
    assert idx.delta == 0 and idx.eta0 == 0
    assert thm1_admissible(idx)


def test_delta_lower_bound_is_strict():
    lo = MhdIndices(3, INF, F(1, 2), 4, 1)
    assert lo.delta == F(1, 2)
    v = thm1_admissible(lo)
    assert not v and v.failed_conditions == ["delta + eps_delta <= eta0"]
    assert thm1_admissible(MhdIndices(3, INF, F(6, 10), 4, 1))


def test_verdict_lists_failures_iff_inadmissible():
    for idx in (MhdIndices(2, 1, 0, INF, 0), MhdIndices(2, INF, 4, INF, 0), MhdIndices(2, INF, 1, INF, 2)):
        v = thm1_admissible(idx)
        assert bool(v) == (not v.failed_conditions)


def test_navier_stokes_limit():
    # B = 0 limit: only eta0 <= d+1 - eps_{1/p0} survives
    assert not thm3_admissible(MhdIndices(2, 4, F(5, 2), INF, 100))
    assert thm3_admissible(MhdIndices(2, 4, F(12, 5), INF, 100))
    assert thm3_admissible(MhdIndices(2, INF, 3, INF, 100))


def test_dark_gray_witness():
    idx = MhdIndices(2, INF, 2, INF, F(3, 2))
    assert thm3_admissible(idx)
    assert region_classify(INF, 2, INF, F(3, 2), 2) == DARK


def test_p0_equal_d_rejected():
    v = thm3_admissible(MhdIndices(2, 2, 1, INF, 2))
    assert "d < p0 <= inf" in v.failed_conditions


def test_lifetime_comparison_degenerate_pair_matches_persistence():
    for idx in (MhdIndices(2, INF, 2, INF, F(3, 2)), MhdIndices(2, 4, 3, INF, 1)):
        assert bool(prop2_admissible(idx, idx)) == bool(thm3_admissible(idx))


def test_lifetime_comparison_hand_example():
    a = MhdIndices(2, INF, 2, INF, F(3, 2))
    b = MhdIndices(2, 8, F(7, 4), INF, F(3, 2))
    assert prop2_admissible(a, b) and prop2_admissible(b, a)


def test_lifetime_comparison_scaling_clause():
    a = MhdIndices(2, INF, 1, F(5, 2), 2)
    b = MhdIndices(2, 8, 1, F(5, 2), 2)
    v = prop2_admissible(a, b)
    assert not v and "2/p1 < min{1/p0 + 1/d; 1/p0~ + 1/d}" in v.failed_conditions


def test_lifetime_comparison_shared_u_variant():
    a = MhdIndices(2, INF, 2, INF, F(3, 2))
    b = MhdIndices(2, INF, 2, 8, F(3, 2))
    v = prop2_admissible(a, b)
    assert v and v.notes == ["variant: shared (p0, theta0)"]


def test_lifetime_comparison_rejects_mismatched_pairs():
    with pytest.raises(ValueError):
        prop2_admissible(MhdIndices(2, INF, 2, INF, 1), MhdIndices(2, 8, 1, 8, 2))


def test_region_examples():
    assert region_classify(INF, F(31, 10), INF, 5, 2) == OUTSIDE
    assert region_classify(4, F(5, 2), INF, 2, 2) == LIGHT  # eta0 = d+1 with finite p0


PANELS = [(INF, F(3, 2)), (4, 1), (3, F(1, 2))]


@pytest.mark.parametrize("p1,theta1", PANELS)
def test_raster_columns_are_intervals(p1, theta1):
    rows = region_raster(2, p1, theta1, raster=100)
    for i in range(100):
        col = [cls for _, _, cls in rows[i * 100 : (i + 1) * 100]]
        inside = [j for j, c in enumerate(col) if c != OUTSIDE]
        if inside:
            assert inside == list(range(inside[0], inside[-1] + 1))
            # within the admissible band every dark point lies below the light cap only
            dark = [j for j in inside if col[j] == DARK]
            assert all(col[j] == DARK for j in range(dark[0], dark[-1] + 1)) if dark else True


def test_barrier_fast_b_branch():
    idx = MhdIndices(2, 4, F(5, 2), INF, 2)
    b = embedding_barrier(idx, F(1, 100))
    assert (b.q, b.mu, b.branch) == (4, F(249, 100), "fast-B")


def test_barrier_theta0_above_twice_theta1():
    idx = MhdIndices(2, INF, F(3, 2), 4, F(1, 2))
    b = embedding_barrier(idx, F(1, 100))
    assert b.branch == "theta0>2theta1" and b.mu == 2 * idx.theta1


def test_barrier_rejects_bad_input():
    with pytest.raises(ValueError):
        embedding_barrier(MhdIndices(2, INF, 2, INF, F(3, 2)), 0)
    with pytest.raises(ValueError):
        embedding_barrier(MhdIndices(2, INF, 4, INF, 3), F(1, 100))


@pytest.mark.parametrize("d", [2, 3])
def test_random_barriers_land_dark(d):
    rng = random.Random(1234 + d)
    for _ in range(50):
        idx = random_thm1_indices(rng, d)
        b = embedding_barrier(idx, F(1, 100))
        assert b.mu + (0 if b.q == INF else d / b.q) == idx.eta0 - F(1, 100)
        assert region_classify(b.q, b.mu, idx.p1, idx.theta1, d) == DARK


def test_sigma_examples():
    s = sigma_exponents(MhdIndices(3, INF, 1, INF, 2))
    assert s.sigma0 == -1
    s = sigma_exponents(MhdIndices(2, INF, 1, 8, 2))
    assert s.sigma0_prime == -1 - F(4, 8) and s.sigma0_prime > -2
    with pytest.raises(ValueError):
        sigma_exponents(MhdIndices(2, INF, 4, INF, 1))


def test_sigma_conditions_hold_for_random_admissible():
    rng = random.Random(7)
    seen = 0
    while seen < 40:
        idx = random_thm1_indices(rng, 2)
        if not thm3_admissible(idx):
            continue
        s = sigma_exponents(idx)
        assert s.sigma0 > -2 and s.sigma0_prime > -2 and s.sigma1 > -s.N + idx.d - 1
        seen += 1


def test_lifetime_bound():
    idx = MhdIndices(3, 6, 1, INF, 2)
    assert lifetime_lower_bound(0.0, idx, c=0.3) == 0.3
    t1, t2 = lifetime_lower_bound(3.0, idx), lifetime_lower_bound(6.0, idx)
    assert t2 < t1 and t1 / t2 <= 2 ** (2 / (1 - 3 / 6)) * (1 + 1e-12)
    with pytest.raises(ValueError):
        lifetime_lower_bound(-1.0, idx)
    assert time_unconstrained(MhdIndices(2, INF, 1, INF, 1))
    assert not time_unconstrained(idx)
