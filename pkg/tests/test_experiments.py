import math

import numpy as np
import pytest

from mhdlab.experiments import (
    DataSpec,
    asymmetric_bump,
    box_window,
    decay_ceiling,
    e_membership,
    equivariance_residual,
    fit_window,
    make_cyclic,
    make_divfree,
    moment_matrix,
    rotation,
    spectral_interpolate,
)
from mhdlab.field import GridSpec, divergence, l2_norm, write_snapshot
from mhdlab.solver import MhdState

G = GridSpec(2, 128, 16.0)


def test_parse_keyword_forms():
    s = DataSpec.parse("cyclic:n=3,radial=0.5,seed=4")
    assert (s.kind, s.n, s.radial, s.seed) == ("cyclic", 3, 0.5, 4)
    assert DataSpec.parse("stream-bump").kind == "stream-bump"
    assert DataSpec.parse("stream-bump:s=3.5,width=2").s == 3.5


@pytest.mark.parametrize(
    "text", ["spiral", "stream-bump:width=0", "stream-bump:s=1", "cyclic:n=1", "custom-file"]
)
def test_parse_rejects(text):
    with pytest.raises(ValueError):
        DataSpec.parse(text)


def test_parse_existing_path_is_custom_file(tmp_path):
    f = make_divfree(DataSpec(), G)
    p = tmp_path / "u.snap"
    write_snapshot(p, f, G, "u")
    spec = DataSpec.parse(str(p))
    assert spec.kind == "custom-file"
    np.testing.assert_array_equal(make_divfree(spec, G), f)
    with pytest.raises(ValueError):
        make_divfree(spec, GridSpec(2, 64, 16.0))


@pytest.mark.parametrize(
    "spec",
    [
        DataSpec(),
        DataSpec(s=3.5, width=1.5, aspect=0.5),
        DataSpec(kind="cyclic", n=3, radial=0.5),
        DataSpec(kind="random-divfree", seed=2),
        DataSpec(kind="cyclic", n=3, perturbation=0.1),
    ],
)
def test_generated_fields_are_divergence_free(spec):
    u = make_divfree(spec, G)
    assert l2_norm(divergence(u, G), G) <= 1e-10 * l2_norm(u, G)
    assert np.max(np.sqrt(np.sum(u**2, axis=0))) == pytest.approx(spec.amplitude)


def test_random_fields_are_seeded():
    a = make_divfree(DataSpec(kind="random-divfree", seed=7), G)
    b = make_divfree(DataSpec(kind="random-divfree", seed=7), G)
    c = make_divfree(DataSpec(kind="random-divfree", seed=8), G)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_three_dimensional_random_field():
    g = GridSpec(3, 32, 8.0)
    u = make_divfree(DataSpec(kind="random-divfree", seed=1), g)
    assert l2_norm(divergence(u, g), g) <= 1e-10 * l2_norm(u, g)


def test_window_is_one_inside_and_zero_at_faces():
    w, grads = box_window(G)
    inner = np.all([np.abs(np.broadcast_to(c, G.shape)) <= 0.6 * G.L for c in G.coords], axis=0)
    assert np.all(w[inner] == 1.0)
    assert np.all(w[0] == 0.0) and np.all(w[:, 0] == 0.0)
    assert np.all((w >= 0) & (w <= 1))


def test_moment_matrix_vanishes_for_equal_fields():
    u = make_divfree(DataSpec(aspect=0.5), G)
    mm = moment_matrix(MhdState(u, u.copy(), 0.0), G)
    assert np.all(np.abs(mm.M) <= 1e-10)
    assert mm.relative_defect <= 1e-10


def test_moment_matrix_of_round_vortex_is_isotropic():
    u = make_divfree(DataSpec(), G)
    mm = moment_matrix(MhdState(u, np.zeros_like(u), 0.0), G)
    assert mm.relative_defect <= 1e-8
    # kinetic energy splits evenly between the two diagonal entries
    assert mm.c == pytest.approx(mm.energy / 2, rel=1e-8)


def test_moment_matrix_of_elliptical_vortex_has_defect():
    u = make_divfree(DataSpec(aspect=0.4), G)
    mm = moment_matrix(MhdState(u, np.zeros_like(u), 0.0), G)
    assert mm.relative_defect > 0.1


@pytest.mark.parametrize("n", [2, 3, 4, 6])
def test_cyclic_fields_are_equivariant(n):
    u = make_cyclic(G, n, radial=0.5)
    assert equivariance_residual(u, G, n) <= 1e-8


def test_perturbed_cyclic_field_breaks_equivariance():
    u = make_divfree(DataSpec(kind="cyclic", n=3, radial=0.5, perturbation=0.1), G)
    assert equivariance_residual(u, G, 3) > 1e-3


def test_cyclic_order_four_is_isotropic():
    u = make_cyclic(G, 4, radial=0.5)
    mm = moment_matrix(MhdState(u, np.zeros_like(u), 0.0), G)
    assert mm.relative_defect <= 1e-8


def test_cyclic_rejections():
    with pytest.raises(ValueError):
        make_cyclic(GridSpec(3, 16, 8.0), 3)
    with pytest.raises(ValueError):
        make_cyclic(GridSpec(2, 16, 8.0), 7)


def test_spectral_interpolation_reproduces_grid_values():
    u = make_divfree(DataSpec(), G)
    idx = [(64, 64), (70, 50), (33, 90)]
    pts = np.array([[G.axis[i], G.axis[j]] for i, j in idx])
    vals = spectral_interpolate(u, G, pts)
    for k, (i, j) in enumerate(idx):
        np.testing.assert_allclose(vals[:, k], u[:, i, j], atol=1e-12)


def test_rotation_matrix():
    A = rotation(math.pi / 2)
    np.testing.assert_allclose(A @ [1, 0], [0, 1], atol=1e-15)
    np.testing.assert_allclose(A @ A.T, np.eye(2), atol=1e-15)


def test_asymmetric_bump_is_unit_size():
    b = asymmetric_bump(G)
    assert np.max(np.sqrt(np.sum(b**2, axis=0))) == pytest.approx(1.0)


def test_decay_ceiling():
    assert decay_ceiling(2, None) == 3.0
    assert decay_ceiling(3, math.inf) == 4.0
    assert decay_ceiling(2, 1.6) == 3.0
    # slower magnetic decay caps the velocity below the kernel bound
    assert decay_ceiling(2, 1.2) < 3.0


def test_zero_state_has_zero_e_norms():
    z = np.zeros((2,) + G.shape)
    m = e_membership(MhdState(z, z, 0.0), G)
    assert m.E_norm_u == 0.0 and m.E_norm_sq == 0.0
    assert m.tail_vanishes


def test_tail_trend_separates_fast_and_slow_decay():
    g = GridSpec(2, 256, 64.0)
    fast = make_divfree(DataSpec(), g)
    slow = make_divfree(DataSpec(s=2.5), g)
    m_fast = e_membership(MhdState(fast, np.zeros_like(fast), 0.0), g)
    m_slow = e_membership(MhdState(slow, np.zeros_like(slow), 0.0), g)
    assert m_fast.E_norm_u > 0 and m_fast.tail_vanishes
    assert not m_slow.tail_vanishes


def test_fit_window():
    assert fit_window(G) == (2.0, 8.0)
