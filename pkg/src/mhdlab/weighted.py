"""Weighted Lebesgue norms, the E-norm, embedding ratios and decay-rate estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from mhdlab.field import GridSpec, pointwise_magnitude

NOISE_FLOOR = 1e-28
# FFT roundoff leaves ~1e-16 |f|_max pointwise; shells below this fraction of the total mass are noise
RELATIVE_FLOOR = 1e-24
SUPERPOLY_ETA = 8.0


@dataclass(frozen=True)
class WeightedIndex:
    """Exponent pair (a, alpha) of the space L^a_alpha; ``a`` may be ``math.inf``."""

    a: float
    alpha: float

    def __post_init__(self):
        if not self.a >= 1:
            raise ValueError(f"a must be >= 1, got {self.a}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    def localization(self, d: int) -> float:
        return self.alpha + d / self.a


def _mag(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return pointwise_magnitude(f, grid)


def weighted_norm(f: np.ndarray, grid: GridSpec, idx: WeightedIndex) -> float:
    """Midpoint-rule ``(int |f|^a (1+|x|)^{a alpha} dx)^{1/a}``; grid max for a = inf."""
    mag = _mag(f, grid)
    w = 1.0 + grid.radius
    if math.isinf(idx.a):
        return float(np.max(mag * w**idx.alpha))
    a = idx.a
    # factor out the max to keep large a from underflowing
    scale = float(np.max(mag * w**idx.alpha))
    if scale == 0.0:
        return 0.0
    s = np.sum((mag * w**idx.alpha / scale) ** a) * grid.cell_volume
    return float(scale * s ** (1.0 / a))


def lp_norm(f: np.ndarray, grid: GridSpec, a: float) -> float:
    return weighted_norm(f, grid, WeightedIndex(a, 0.0))


@dataclass
class ENorm:
    value: float
    inner: float
    tail_sup: float
    tail: dict[float, float] = field(default_factory=dict)
    outer_radius: float = 0.0


def e_norm(f: np.ndarray, grid: GridSpec) -> ENorm:
    """``int_{|x|<=1}|f| + sup_R R int_{R<=|x|<=L/2} |f|`` over R in {1, 2, 4, ..., L/2}.

    The outer truncation at L/2 is recorded in ``outer_radius``.
    """
    mag = _mag(f, grid)
    r = grid.radius
    dv = grid.cell_volume
    outer = grid.L / 2
    inner = float(np.sum(mag[r <= 1.0]) * dv)
    tail = {}
    R = 1.0
    while R <= outer:
        tail[R] = R * float(np.sum(mag[(r >= R) & (r <= outer)]) * dv)
        R *= 2.0
    sup = max(tail.values()) if tail else 0.0
    return ENorm(value=inner + sup, inner=inner, tail_sup=sup, tail=tail, outer_radius=outer)


@dataclass
class ShellProfile:
    radii: np.ndarray
    masses: np.ndarray

    @property
    def log_mass(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.masses)

    def rows(self):
        for R, m, lm in zip(self.radii, self.masses, self.log_mass):
            yield {"R": float(R), "mass": float(m), "log_mass": float(lm)}


def _check_range(grid: GridSpec, R_min: float, R_max: float) -> None:
    if R_min < 4 * grid.h * (1 - 1e-12):
        raise ValueError(f"R_min={R_min} below 4h={4 * grid.h}")
    if R_max > grid.L / 2 * (1 + 1e-12):
        raise ValueError(f"R_max={R_max} beyond L/2={grid.L / 2}")


def shell_radii(R_min: float, R_max: float, per_octave: int = 4) -> np.ndarray:
    """Inner radii ``R_min 2^{k/per_octave}`` of shells [R, 2R] lying inside [R_min, R_max]."""
    k_max = int(math.floor(per_octave * math.log2(R_max / (2 * R_min)) + 1e-9))
    return R_min * 2.0 ** (np.arange(k_max + 1) / per_octave)


def shell_profile(f: np.ndarray, grid: GridSpec, R_min: float, R_max: float, per_octave: int = 4) -> ShellProfile:
    _check_range(grid, R_min, R_max)
    mag2 = _mag(f, grid) ** 2
    r = grid.radius
    radii = shell_radii(R_min, R_max, per_octave)
    masses = np.array([np.sum(mag2[(r >= R) & (r < 2 * R)]) * grid.cell_volume for R in radii])
    return ShellProfile(radii=radii, masses=masses)


@dataclass
class DecayFit:
    """L^2 decay-rate estimate ``eta = (d - slope)/2`` from log shell mass vs log R."""

    eta: float
    stderr: float
    slope: float
    n_used: int
    superpolynomial: bool
    profile: ShellProfile


def decay_rate_estimate(
    f: np.ndarray, grid: GridSpec, R_min: float | None = None, R_max: float | None = None, per_octave: int = 4
) -> DecayFit:
    """Fit over shells in ``[R_min, R_max]``.

    The default window starts at ``max(4h, L/16)``: shells closer in sit in the core
    of typical data and bias the slope towards slower decay.
    """
    R_min = max(4 * grid.h, grid.L / 16) if R_min is None else R_min
    R_max = grid.L / 2 if R_max is None else R_max
    prof = shell_profile(f, grid, R_min, R_max, per_octave)
    if prof.radii.size < 4:
        raise ValueError(f"need at least 4 shells in [{R_min}, {R_max}], got {prof.radii.size}")
    total = float(np.sum(_mag(f, grid) ** 2) * grid.cell_volume)
    keep = prof.masses > max(NOISE_FLOOR, RELATIVE_FLOOR * total)
    n_used = int(np.count_nonzero(keep))
    if n_used < 2:
        return DecayFit(math.inf, 0.0, -math.inf, n_used, True, prof)
    x = np.log(prof.radii[keep])
    y = np.log(prof.masses[keep])
    fit = stats.linregress(x, y)
    eta = (grid.d - fit.slope) / 2
    stderr = fit.stderr / 2 if n_used > 2 else 0.0
    superpoly = bool(eta > SUPERPOLY_ETA or n_used < prof.radii.size)
    if superpoly:
        eta = math.inf
    return DecayFit(float(eta), float(stderr), float(fit.slope), n_used, superpoly, prof)


@dataclass
class EnvelopeFit:
    """Pointwise decay exponent from ``log max_{|x| ~ R} |f|`` vs ``log R``."""

    exponent: float
    stderr: float
    radii: np.ndarray
    envelope: np.ndarray


def envelope_exponent(f: np.ndarray, grid: GridSpec, R_min: float, R_max: float, per_octave: int = 4) -> EnvelopeFit:
    if R_max > grid.L * (1 + 1e-12) or R_min <= 0:
        raise ValueError("envelope range outside the grid")
    mag = _mag(f, grid)
    r = grid.radius
    n_rings = int(math.floor(per_octave * math.log2(R_max / R_min) + 1e-9))
    if n_rings < 3:
        raise ValueError("need at least 3 rings for an envelope fit")
    edges = R_min * 2.0 ** (np.arange(n_rings + 1) / per_octave)
    env = np.array([np.max(mag[(r >= lo) & (r < hi)]) for lo, hi in zip(edges[:-1], edges[1:])])
    centers = np.sqrt(edges[:-1] * edges[1:])
    keep = env > 0
    fit = stats.linregress(np.log(centers[keep]), np.log(env[keep]))
    return EnvelopeFit(float(-fit.slope), float(fit.stderr), centers, env)


def embedding_check(f: np.ndarray, grid: GridSpec, src: WeightedIndex, dst: WeightedIndex) -> float:
    """Ratio ``||f||_dst / ||f||_src`` for an admissible inclusion ``L^src subset L^dst``."""
    d = grid.d
    same = src == dst
    if not same and not (dst.a <= src.a and dst.localization(d) < src.localization(d)):
        raise ValueError(
            f"inclusion needs dst.a <= src.a and dst.alpha+d/dst.a < src.alpha+d/src.a; got {src} -> {dst}"
        )
    top = weighted_norm(f, grid, src)
    if top == 0.0:
        return 0.0 if not same else 1.0
    return weighted_norm(f, grid, dst) / top
