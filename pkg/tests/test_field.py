import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import gaussian, smooth_random
from mhdlab.field import (
    GridSpec,
    crop,
    dealias,
    divergence,
    from_spectral,
    gradient,
    heat_semigroup,
    inner,
    l2_norm,
    leray_project,
    pad,
    perp_gradient,
    read_snapshot,
    to_spectral,
    write_snapshot,
)

seeds = st.integers(min_value=0, max_value=2**31 - 1)


@pytest.mark.parametrize("args", [(1, 64, 1.0), (2, 24, 1.0), (2, 8, 1.0), (2, 64, 0.0), (4, 16, 1.0)])
def test_grid_rejects_bad_parameters(args):
    with pytest.raises(ValueError):
        GridSpec(*args)


def test_grid_coordinates():
    g = GridSpec(2, 16, 3.0)
    assert g.h == 6.0 / 16
    assert g.axis[0] == -3.0 and np.isclose(g.axis[-1], 3.0 - g.h)
    assert g.axis[g.origin_index[0]] == 0.0


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_transform_round_trip(seed):
    g = GridSpec(2, 32, 4.0)
    f = np.random.default_rng(seed).standard_normal((2,) + g.shape)
    back = from_spectral(to_spectral(f, g), g)
    assert np.max(np.abs(back - f)) <= 1e-12 * np.max(np.abs(f))


def test_divergence_of_constant_is_zero(grid2):
    f = np.ones((2,) + grid2.shape)
    assert np.max(np.abs(divergence(f, grid2))) < 1e-14


def test_divergence_closed_form(grid2):
    # f = (x1 w, 0) with w = exp(-|x|^2/2): div f = w + x1 d1 w = w (1 - x1^2)
    w = gaussian(grid2)
    x1 = np.broadcast_to(grid2.coords[0], grid2.shape)
    f = np.stack([x1 * w, np.zeros_like(w)])
    expect = w * (1 - x1**2)
    inner_box = grid2.radius < grid2.L / 2
    assert np.max(np.abs(divergence(f, grid2) - expect)[inner_box]) < 1e-6


def test_perp_gradient_is_divergence_free(grid2):
    psi = gaussian(grid2, var=2.0, center=(0.5, -1.0))
    assert np.max(np.abs(divergence(perp_gradient(psi, grid2), grid2))) < 1e-10


def test_leray_kills_gradients(grid2):
    q = gaussian(grid2, var=1.5)
    f = gradient(q, grid2)
    assert l2_norm(leray_project(f, grid2), grid2) <= 1e-10 * l2_norm(f, grid2)


def test_leray_identity_on_divergence_free(grid2):
    f = perp_gradient(gaussian(grid2, var=1.5), grid2)
    assert l2_norm(leray_project(f, grid2) - f, grid2) <= 1e-10 * l2_norm(f, grid2)


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_leray_idempotent_self_adjoint_divfree(seed):
    g = GridSpec(3, 16, 4.0) if seed % 2 else GridSpec(2, 32, 4.0)
    rng = np.random.default_rng(seed)
    f = smooth_random(g, rng, ncomp=g.d, width=0.3)
    h = smooth_random(g, rng, ncomp=g.d, width=0.3)
    pf = leray_project(f, g)
    scale = l2_norm(f, g)
    assert l2_norm(leray_project(pf, g) - pf, g) <= 1e-12 * scale
    lhs, rhs = inner(pf, h, g), inner(f, leray_project(h, g), g)
    assert abs(lhs - rhs) <= 1e-10 * scale * l2_norm(h, g)
    assert l2_norm(divergence(pf, g), g) <= 1e-10 * scale


def test_heat_identity_at_zero(grid2):
    f = np.random.default_rng(1).standard_normal(grid2.shape)
    assert np.array_equal(to_spectral(heat_semigroup(f, 0.0, grid2), grid2), to_spectral(f, grid2))


def test_heat_rejects_negative_time(grid2):
    with pytest.raises(ValueError):
        heat_semigroup(np.zeros(grid2.shape), -1.0, grid2)


@pytest.mark.parametrize("d", [2, 3])
def test_heat_evolves_gaussian(d):
    g = GridSpec(d, 64 if d == 2 else 32, 10.0)
    var, t = 1.0, 0.75
    f = gaussian(g, var) / (2 * np.pi * var) ** (d / 2)
    v2 = var + 2 * t
    expect = gaussian(g, v2) / (2 * np.pi * v2) ** (d / 2)
    got = heat_semigroup(f, t, g)
    assert l2_norm(got - expect, g) < 1e-6 * l2_norm(expect, g)


@settings(max_examples=20, deadline=None)
@given(seeds, st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_heat_preserves_mean_and_composes(seed, s, t):
    g = GridSpec(2, 32, 4.0)
    f = np.random.default_rng(seed).standard_normal(g.shape)
    two = to_spectral(heat_semigroup(heat_semigroup(f, s, g), t, g), g)
    one = to_spectral(heat_semigroup(f, s + t, g), g)
    assert np.allclose(two, one, rtol=1e-12, atol=1e-12 * np.abs(one).max())
    assert np.isclose(two[0, 0].real, to_spectral(f, g)[0, 0].real, rtol=1e-12)


def test_pad_crop_round_trip(grid2):
    f = np.random.default_rng(2).standard_normal((2,) + grid2.shape)
    big = pad(f, grid2)
    assert big.shape == (2, 128, 128)
    assert np.array_equal(crop(big, grid2), f)
    assert np.sum(np.abs(big)) == pytest.approx(np.sum(np.abs(f)))


def test_dealias_removes_high_modes(grid2):
    x = np.broadcast_to(grid2.coords[0], grid2.shape)
    k = np.pi / grid2.L
    high, low = np.cos(28 * k * x), np.cos(10 * k * x)
    assert np.max(np.abs(dealias(high, grid2))) < 1e-12
    assert np.max(np.abs(dealias(low, grid2) - low)) < 1e-12


@pytest.mark.parametrize("ncomp", [None, 2])
def test_snapshot_round_trip(tmp_path, grid2, ncomp):
    f = smooth_random(grid2, np.random.default_rng(3), ncomp=ncomp)
    p = write_snapshot(tmp_path / "f.bin", f, grid2, "u")
    back, g, kind = read_snapshot(p)
    assert g == grid2 and kind == "u"
    assert np.array_equal(back, f)
    head = p.read_bytes().split(b"\n", 1)[0]
    assert head == b"MHDLAB1 2 64 8.0 u"


def test_snapshot_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"NOPE 2 16 1.0 u\n" + bytes(8))
    with pytest.raises(ValueError):
        read_snapshot(p)
