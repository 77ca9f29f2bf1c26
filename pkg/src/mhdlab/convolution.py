"""Free-space convolution, the kernel family ``Gamma_lambda^N``, and weighted convolution checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.fft as sfft

from mhdlab.field import GridSpec, crop, pad
from mhdlab.indices import eps_le, exact, inv, le, lt
from mhdlab.weighted import WeightedIndex, lp_norm, weighted_norm

MIN_LAMBDA_CELLS = 4


def _axes(d: int) -> tuple[int, ...]:
    return tuple(range(-d, 0))


def free_convolve(K: np.ndarray, f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Linear (non-circular) convolution ``h^d sum_y K(x - y) f(y)`` restricted to ``grid``.

    ``K`` is sampled either on the zero-padding grid (``2n`` points per axis, same
    spacing) or on ``grid`` itself.  Leading axes of ``K`` and ``f`` broadcast.
    Both inputs are placed on the ``2n`` grid and multiplied spectrally; for outputs
    inside the base box every offset ``x - y`` lies in ``[-2L, 2L)``, so the circular
    product on the ``2n`` grid reproduces the linear sum exactly.
    """
    big = grid.enlarged(2)
    ax = _axes(grid.d)
    if f.shape[f.ndim - grid.d :] != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    tail = K.shape[K.ndim - grid.d :]
    if tail == grid.shape:
        K = pad(K, grid)
    elif tail != big.shape:
        raise ValueError(f"kernel shape {K.shape} matches neither {grid.shape} nor {big.shape}")
    Kh = sfft.rfftn(sfft.ifftshift(K, axes=ax), axes=ax)
    Fh = sfft.rfftn(pad(f, grid), axes=ax)
    out = sfft.irfftn(Kh * Fh, s=big.shape, axes=ax) * grid.cell_volume
    return crop(out, grid)


def gamma_kernel(lam: float, N: float, grid: GridSpec, enlarged: bool = True) -> np.ndarray:
    """``(lambda + |x|)^{-N}`` sampled at cell centres of ``grid`` or its padding grid."""
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    g = grid.enlarged(2) if enlarged else grid
    return (lam + g.radius) ** (-float(N))


@dataclass(frozen=True)
class RemarkConstants:
    eps: object
    m: object


def remark_constants(d: int, N, a, p) -> RemarkConstants:
    """``eps = min{d/p - d/a + 1; (N-d+1)/2}``, ``m = max{N-d+1-2 eps; -N + d(1/p - 1/a + 1)}``."""
    N = exact(N)
    eps = min(d * inv(p) - d * inv(a) + 1, (N - d + 1) / 2)
    m = max(N - d + 1 - 2 * eps, -N + d * (inv(p) - inv(a) + 1))
    return RemarkConstants(eps, m)


def is_log_case(d: int, N, a, p) -> bool:
    return exact(N) == d * (1 + inv(p) - inv(a))


def prop1_conditions(d: int, N, src: WeightedIndex, dst: WeightedIndex, need_ii: bool = True) -> list[str]:
    """Names of violated clauses among N > d, (i) and optionally (ii)."""
    N = exact(N)
    a, alpha, p, theta = exact(src.a), exact(src.alpha), exact(dst.a), exact(dst.alpha)
    failed = []
    if not lt(d, N):
        failed.append("N > d")
    if not le(theta, alpha):
        failed.append("(i) theta <= alpha")
    lhs = theta + d * inv(p)
    if not eps_le(lhs, N, inv(p)):
        failed.append("(i) theta + d/p <= N - eps_1/p")
    if not eps_le(lhs, alpha + d * inv(a), alpha - theta):
        failed.append("(i) theta + d/p <= alpha + d/a - eps_(alpha-theta)")
    if need_ii and not lt(inv(a), inv(p) + Fraction(1, d)):
        failed.append("(ii) 1/a < 1/p + 1/d")
    return failed


def envelopes(lam: float, d: int, N, a, p) -> tuple[float, float]:
    """Right-hand-side shapes of the two convolution bounds (constants dropped)."""
    rc = remark_constants(d, N, a, p)
    Nf, eps, m = float(N), float(rc.eps), float(rc.m)
    e1 = lam ** (-Nf) * (1 + lam) ** Nf
    e2 = lam ** (-Nf + d - 1 + eps) * (1 + lam) ** m
    if is_log_case(d, N, a, p):
        corr = 1 + abs(math.log(lam))
        e1 *= corr
        e2 *= corr
    return e1, e2


@dataclass
class Prop1Row:
    lam: float
    measured: float
    envelope1: float
    envelope2: float
    ratio1: float
    ratio2: float
    log_case: bool


@dataclass
class Prop1Report:
    rows: list[Prop1Row]
    f_norm: float
    skipped: list[float] = field(default_factory=list)
    eps: float = 0.0
    m: float = 0.0

    def normalized(self, which: int = 2) -> np.ndarray:
        """Ratios divided by their value at lambda = 1 (the envelope constant)."""
        ratios = np.array([r.ratio2 if which == 2 else r.ratio1 for r in self.rows])
        ref = [r for r in self.rows if r.lam == 1.0]
        if not ref:
            raise ValueError("sweep has no lambda = 1 entry")
        base = ref[0].ratio2 if which == 2 else ref[0].ratio1
        return ratios / base

    def csv_rows(self):
        for r in self.rows:
            yield {
                "lambda": r.lam,
                "measured": r.measured,
                "envelope1": r.envelope1,
                "envelope2": r.envelope2,
                "ratio1": r.ratio1,
                "ratio2": r.ratio2,
                "flag_log_case": int(r.log_case),
            }


def prop1_sweep(
    f: np.ndarray, grid: GridSpec, N, src: WeightedIndex, dst: WeightedIndex, lambdas
) -> Prop1Report:
    """Measure ``||Gamma_lambda^N * f||_{L^p_theta}`` against both convolution envelopes."""
    d = grid.d
    failed = prop1_conditions(d, N, src, dst)
    if failed:
        raise ValueError("inadmissible indices: " + "; ".join(failed))
    fn = weighted_norm(f, grid, src)
    log_case = is_log_case(d, N, src.a, dst.a)
    rc = remark_constants(d, N, src.a, dst.a)
    rows, skipped = [], []
    for lam in lambdas:
        lam = float(lam)
        if lam < MIN_LAMBDA_CELLS * grid.h * (1 - 1e-12):
            skipped.append(lam)
            continue
        conv = free_convolve(gamma_kernel(lam, N, grid), f, grid)
        meas = weighted_norm(conv, grid, dst)
        e1, e2 = envelopes(lam, d, N, src.a, dst.a)
        rows.append(Prop1Row(lam, meas, e1, e2, meas / (e1 * fn), meas / (e2 * fn), log_case))
    return Prop1Report(rows, fn, skipped, float(rc.eps), float(rc.m))


@dataclass
class IJKResult:
    norm_I: float
    norm_J: float
    norm_K: float
    I: np.ndarray
    J: np.ndarray
    K: np.ndarray
    weighted_conv: np.ndarray


def ijk_decompose(f: np.ndarray, grid: GridSpec, lam: float, N, theta: float, p, chunk: int = 2048) -> IJKResult:
    """Split ``(1+|x|)^theta (Gamma * |f|)(x)`` at ``|y| = |x|/2`` and at the unit ball.

    Direct masked summation over the support of ``f``: cost is
    ``n^d * |supp f|``, so dense fields should live on small grids.
    """
    if not float(N) > grid.d:
        raise ValueError("N > d required")
    if theta < 0:
        raise ValueError("theta >= 0 required")
    d = grid.d
    af = np.abs(f).ravel()
    support = np.flatnonzero(af)
    X = np.stack([np.broadcast_to(c, grid.shape).ravel() for c in grid.coords], axis=1)
    rx = np.sqrt(np.sum(X**2, axis=1))
    Y = X[support]
    ry = rx[support]
    fy = af[support]
    near = np.zeros(X.shape[0])
    far = np.zeros(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        xs = X[s : s + chunk]
        dist = np.sqrt(np.sum((xs[:, None, :] - Y[None, :, :]) ** 2, axis=2))
        g = (lam + dist) ** (-float(N)) * fy[None, :]
        inner = ry[None, :] <= rx[s : s + chunk, None] / 2
        near[s : s + chunk] = np.sum(np.where(inner, g, 0.0), axis=1)
        far[s : s + chunk] = np.sum(np.where(inner, 0.0, g), axis=1)
    dv = grid.cell_volume
    w = (1 + rx) ** theta
    I = (far * dv * w).reshape(grid.shape)
    ball = (rx <= 1.0).reshape(grid.shape)
    JK = (near * dv * w).reshape(grid.shape)
    J = np.where(ball, JK, 0.0)
    K = np.where(ball, 0.0, JK)
    total = ((near + far) * dv * w).reshape(grid.shape)
    return IJKResult(lp_norm(I, grid, p), lp_norm(J, grid, p), lp_norm(K, grid, p), I, J, K, total)


def lemma1_conditions(d: int, a, alpha, b, beta, p, theta, s) -> list[str]:
    a, alpha, b, beta, p, theta, s = (exact(v) for v in (a, alpha, b, beta, p, theta, s))
    ds = d * inv(s)
    failed = []
    if not le(theta, alpha):
        failed.append("theta <= alpha")
    if not le(ds, d * inv(a)):
        failed.append("d/s <= d/a")
    if not eps_le(ds, (alpha + d * inv(a)) - (theta + d * inv(p)), alpha - theta):
        failed.append("d/s <= (alpha + d/a) - (theta + d/p) - eps_(alpha-theta)")
    if not le(ds, d * (1 - inv(b))):
        failed.append("d/s <= d(1 - 1/b)")
    if not le(d * inv(a) - d * inv(p), ds):
        failed.append("d/s >= d/a - d/p")
    # d/s >= 0 always, so the positive part only adds the eps_beta strictness
    if not eps_le(d - (beta + d * inv(b)), ds, beta):
        failed.append("d/s >= [d - (beta + d/b) + eps_beta]^+")
    return failed


def lemma1_check(
    f: np.ndarray,
    g: np.ndarray,
    grid: GridSpec,
    src: WeightedIndex,
    kernel_index: WeightedIndex,
    dst: WeightedIndex,
    s,
) -> float:
    """``||I_theta||_{L^p} / (||f||_{L^a_alpha} ||g||_{L^b_beta})`` with ``I_theta = (1+|x|)^{theta-alpha} (F * g)``.

    ``g`` may be sampled on the padding grid (kernels) or on ``grid``.
    """
    d = grid.d
    failed = lemma1_conditions(d, src.a, src.alpha, kernel_index.a, kernel_index.alpha, dst.a, dst.alpha, s)
    if failed:
        raise ValueError("s violates the lemma conditions: " + "; ".join(failed))
    w = 1 + grid.radius
    F = w**src.alpha * np.abs(f)
    I = w ** (dst.alpha - src.alpha) * free_convolve(g, F, grid)
    g_grid = grid if g.shape == grid.shape else grid.enlarged(2)
    denom = weighted_norm(f, grid, src) * weighted_norm(g, g_grid, kernel_index)
    return lp_norm(I, grid, dst.a) / denom


STRESS_POWERS = (3.5, 5.0)


def stress_family(grid: GridSpec, seed: int = 0) -> dict[str, np.ndarray]:
    """Five test fields spanning fast, algebraic, anisotropic and irregular decay.

    Algebraic members ``(1+|x|^2)^{-s/2}`` use ``s`` large enough to lie in
    ``L^2_2`` for d = 2 (``s > 3``).
    """
    r2 = grid.radius**2
    x = [np.broadcast_to(c, grid.shape) for c in grid.coords]
    fam = {"gaussian": np.exp(-r2)}
    for s in STRESS_POWERS:
        fam[f"algebraic_{s:g}"] = (1 + r2) ** (-s / 2)
    q = (x[0] / 0.8) ** 2 + sum((xi / 0.25) ** 2 for xi in x[1:])
    fam["anisotropic_bump"] = np.where(q < 1, np.exp(-1 / np.maximum(1 - q, 1e-300)), 0.0)
    # blobs drawn from the seed alone, so the field does not change under refinement
    rng = np.random.default_rng(seed)
    smooth = np.zeros(grid.shape)
    for _ in range(12):
        c = rng.uniform(-1.5, 1.5, grid.d)
        w = rng.uniform(0.3, 0.8)
        dist2 = sum((xi - ci) ** 2 for xi, ci in zip(x, c))
        smooth += rng.choice((-1.0, 1.0)) * rng.uniform(0.5, 1.0) * np.exp(-dist2 / (2 * w**2))
    fam["random_smooth"] = smooth / np.max(np.abs(smooth)) * np.exp(-r2 / 2)
    return fam
