import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import fftconvolve

from conftest import gaussian, smooth_random
from mhdlab.convolution import (
    envelopes,
    free_convolve,
    gamma_kernel,
    ijk_decompose,
    is_log_case,
    lemma1_check,
    lemma1_conditions,
    prop1_conditions,
    prop1_sweep,
    remark_constants,
    stress_family,
)
from mhdlab.field import GridSpec, crop, l2_norm, pad
from mhdlab.weighted import WeightedIndex, envelope_exponent, lp_norm, weighted_norm

W = WeightedIndex


def test_delta_kernel_is_identity(grid2):
    K = np.zeros(grid2.shape)
    K[grid2.origin_index] = 1 / grid2.cell_volume
    f = smooth_random(grid2, np.random.default_rng(0))
    assert np.max(np.abs(free_convolve(K, f, grid2) - f)) <= 1e-12 * np.max(np.abs(f))


@pytest.mark.parametrize("d", [2, 3])
def test_gaussians_add_variances(d):
    g = GridSpec(d, 64 if d == 2 else 32, 8.0)
    v1, v2 = 0.5, 0.8
    dens = lambda v: gaussian(g, v) / (2 * np.pi * v) ** (d / 2)
    got = free_convolve(dens(v1), dens(v2), g)
    want = dens(v1 + v2)
    assert l2_norm(got - want, g) <= 1e-6 * l2_norm(want, g)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_commutativity(seed):
    g = GridSpec(2, 32, 4.0)
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    ab, ba = free_convolve(a, b, g), free_convolve(b, a, g)
    assert np.max(np.abs(ab - ba)) <= 1e-12 * np.max(np.abs(ab))


def test_no_wrap_around():
    g = GridSpec(2, 64, 8.0)
    rng = np.random.default_rng(5)
    inside = g.radius <= g.L / 2
    a = np.where(inside, rng.standard_normal(g.shape), 0.0)
    b = np.where(inside, rng.standard_normal(g.shape), 0.0)
    big = g.enlarged(2)
    ref = crop(free_convolve(pad(a, g), pad(b, g), big), g)
    got = free_convolve(a, b, g)
    assert np.max(np.abs(got - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_matches_direct_linear_convolution():
    g = GridSpec(2, 32, 4.0)
    rng = np.random.default_rng(6)
    a, b = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    full = fftconvolve(a, b) * g.cell_volume  # index i+j; the origin sits at n/2 + n/2
    n = g.n
    want = full[n // 2 : n // 2 + n, n // 2 : n // 2 + n]
    assert np.allclose(free_convolve(a, b, g), want, atol=1e-12 * np.abs(want).max())


def test_mismatched_shapes_rejected(grid2):
    with pytest.raises(ValueError):
        free_convolve(np.zeros((10, 10)), np.zeros(grid2.shape), grid2)
    with pytest.raises(ValueError):
        free_convolve(np.zeros(grid2.shape), np.zeros((10, 10)), grid2)


def test_gamma_kernel_samples_and_scaling():
    g = GridSpec(2, 64, 8.0)
    N = 3.0
    k1, k2 = gamma_kernel(1.0, N, g, enlarged=False), gamma_kernel(2.0, N, g, enlarged=False)
    assert np.array_equal(k1, (1 + g.radius) ** -N)
    c = g.n // 2
    # Gamma_2(x) = 2^-N Gamma_1(x/2): grid point 2i maps to i
    half = k1[c - 16 : c + 16, c - 16 : c + 16]
    full = k2[c - 32 : c + 32 : 2, c - 32 : c + 32 : 2]
    assert np.allclose(full, 2**-N * half, rtol=1e-14, atol=0)
    with pytest.raises(ValueError):
        gamma_kernel(0.0, N, g)


def test_envelope_exponents_main_case():
    rc = remark_constants(2, 3, 2, 4)
    assert (rc.eps, rc.m) == (0.5, 1)


def test_log_case_detection():
    assert is_log_case(2, 3, math.inf, 2)
    assert not is_log_case(2, 3, 2, 4)
    e_plain = envelopes(0.25, 2, 3, 2, 4)
    e_log = envelopes(0.25, 2, 3, math.inf, 2)
    rc = remark_constants(2, 3, math.inf, 2)
    lam = 0.25
    assert e_log[0] == pytest.approx(lam**-3 * (1 + lam) ** 3 * (1 + math.log(4)))
    assert e_log[1] == pytest.approx(lam ** (-3 + 1 + float(rc.eps)) * (1 + lam) ** float(rc.m) * (1 + math.log(4)))
    assert e_plain[0] == pytest.approx(lam**-3 * (1 + lam) ** 3)


@pytest.mark.parametrize(
    "N,src,dst,name",
    [
        (2, W(2, 2), W(4, 0), "N > d"),
        (3, W(2, 0), W(4, 1), "(i) theta <= alpha"),
        (3, W(2, 2), W(2, 2), "(i) theta + d/p <= N - eps_1/p"),
        (3, W(4, 1), W(2, 0.5), "(i) theta + d/p <= alpha + d/a - eps_(alpha-theta)"),
        (3, W(1, 2), W(math.inf, 0), "(ii) 1/a < 1/p + 1/d"),
    ],
)
def test_convolution_bound_rejections_name_the_clause(N, src, dst, name):
    assert name in prop1_conditions(2, N, src, dst)
    g = GridSpec(2, 32, 2.0)
    with pytest.raises(ValueError, match=re_escape(name)):
        prop1_sweep(np.ones(g.shape), g, N, src, dst, [1.0])


def re_escape(s):
    import re

    return re.escape(s)


def test_convolution_bound_sweep_small_grid():
    g = GridSpec(2, 256, 2.0)
    f = (1 + g.radius**2) ** -2.0
    lams = [2.0**-k for k in range(7)]
    rep = prop1_sweep(f, g, 3, W(2, 2), W(4, 0), lams)
    assert rep.skipped == [2.0**-5, 2.0**-6]  # below 4h
    r = np.array([row.ratio2 for row in rep.rows])
    assert np.all(np.isfinite(r)) and np.all(r > 0)
    assert r.max() / r.min() <= 4
    assert np.all(rep.normalized() <= 10)
    assert rep.eps == 0.5 and rep.m == 1.0
    rows = list(rep.csv_rows())
    assert list(rows[0]) == ["lambda", "measured", "envelope1", "envelope2", "ratio1", "ratio2", "flag_log_case"]


def test_ijk_zero_field():
    g = GridSpec(2, 32, 4.0)
    res = ijk_decompose(np.zeros(g.shape), g, 1.0, 3, 0.0, 2.0)
    assert (res.norm_I, res.norm_J, res.norm_K) == (0.0, 0.0, 0.0)


def test_ijk_triangle_inequality_random_fields():
    g = GridSpec(2, 32, 4.0)
    rng = np.random.default_rng(11)
    for _ in range(20):
        f = rng.standard_normal(g.shape)
        theta, p, lam = rng.uniform(0, 2), rng.choice([1.0, 2.0, 4.0, math.inf]), rng.uniform(0.25, 2)
        res = ijk_decompose(f, g, lam, 3, theta, p)
        full = lp_norm(res.weighted_conv, g, p)
        assert full <= res.norm_I + res.norm_J + res.norm_K + 1e-8
        # the pieces reassemble the weighted convolution exactly
        assert np.allclose(res.I + res.J + res.K, res.weighted_conv, rtol=1e-12, atol=0)
        # and match the FFT path
        ref = (1 + g.radius) ** theta * free_convolve(gamma_kernel(lam, 3, g), np.abs(f), g)
        assert np.allclose(res.weighted_conv, ref, rtol=1e-9, atol=1e-12 * ref.max())


def test_ijk_k_term_supported_outside_ball_and_decays():
    g = GridSpec(2, 256, 32.0)
    f = (g.radius <= 0.25).astype(float)
    res = ijk_decompose(f, g, 1.0, 3, 0.0, 2.0)
    assert np.all(res.K[g.radius <= 1.0] == 0)
    # (1+r)^-3 has local slope 3r/(1+r), so the fit stays in [L/4, L]
    fit = envelope_exponent(res.K, g, 8.0, 32.0)
    assert fit.exponent >= 3 - 0 - 0.3


def test_weighted_young_rejects_theta_above_alpha():
    assert "theta <= alpha" in lemma1_conditions(2, 2, 0, 2, 0, math.inf, 1, 2)
    g = GridSpec(2, 32, 4.0)
    f = gaussian(g)
    with pytest.raises(ValueError, match="theta <= alpha"):
        lemma1_check(f, f, g, W(2, 0), W(2, 0), W(math.inf, 1), 2)


@pytest.mark.parametrize("a,b,p,s", [(2, 2, math.inf, 2), (1, 2, 2, 2), (4 / 3, 4 / 3, 2, 4)])
def test_weighted_young_unweighted_instance(a, b, p, s):
    g = GridSpec(2, 64, 8.0)
    f = gaussian(g, 0.5, center=(0.5, 0.0))
    h = gaussian(g, 1.2, center=(-1.0, 0.3))
    ratio = lemma1_check(f, h, g, W(a, 0), W(b, 0), W(p, 0), s)
    direct = fftconvolve(f, h, mode="same") * g.cell_volume
    young = lp_norm(direct, g, p) / (lp_norm(f, g, a) * lp_norm(h, g, b))
    assert ratio <= 1.05 * young
    assert young <= 1.0 + 1e-12


def test_weighted_young_kernel_branch():
    g = GridSpec(2, 64, 8.0)
    ratios = []
    for f in stress_family(g).values():
        ratios.append(lemma1_check(f, gamma_kernel(1.0, 3, g), g, W(4, 2), W(math.inf, 3), W(4, 0), math.inf))
    assert np.all(np.isfinite(ratios)) and max(ratios) < 10


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([3.0, 4.0, math.inf]), st.sampled_from([3.0, 6.0, math.inf]),
       st.floats(0, 2), st.floats(0, 2))
def test_holder_pre_estimates(seed, p0, p1, th0, th1):
    g = GridSpec(2, 32, 4.0)
    rng = np.random.default_rng(seed)
    u = smooth_random(g, rng, ncomp=2, width=0.2)
    B = smooth_random(g, rng, ncomp=2, width=0.2)
    H = 1 / (1 / p0 + 1 / p1) if (p0, p1) != (math.inf, math.inf) else math.inf
    uB = u[:, None] * B[None, :]
    lhs = weighted_norm(uB, g, W(H, th0 + th1))
    rhs = weighted_norm(u, g, W(p0, th0)) * weighted_norm(B, g, W(p1, th1))
    assert lhs <= rhs * (1 + 1e-12)
    BB = B[:, None] * B[None, :]
    assert weighted_norm(BB, g, W(p1 / 2, 2 * th1)) <= weighted_norm(B, g, W(p1, th1)) ** 2 * (1 + 1e-12)


def test_stress_family_members():
    g = GridSpec(2, 64, 8.0)
    fam = stress_family(g)
    assert list(fam) == ["gaussian", "algebraic_3.5", "algebraic_5", "anisotropic_bump", "random_smooth"]
    assert all(np.isfinite(v).all() and np.abs(v).max() <= 1 + 1e-12 for v in fam.values())
    assert np.array_equal(stress_family(g, seed=3)["random_smooth"], stress_family(g, seed=3)["random_smooth"])
