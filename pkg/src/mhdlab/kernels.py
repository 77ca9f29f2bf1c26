"""Kernels of ``e^{t Lap} P grad`` (family F) and ``e^{t Lap} grad`` (family G).

Components are indexed ``[k, j, h]`` for ``K^k_{j,h}``:

* ``F^k_{j,h}``: symbol ``i xi_h exp(-t|xi|^2) (delta_jk - xi_j xi_k / |xi|^2)``
* ``G^k_{j,h}``: symbol ``i xi_h exp(-t|xi|^2) delta_jk``

Kernels are produced by inverse DFT of the exact symbol on the zero-padding
grid (twice the extent of the working grid).  That inverse DFT is the
``4L``-periodisation of the free-space kernel.  G is Gaussian, so its images are
negligible; the images of F's algebraic tail are subtracted in closed form
(see :func:`image_correction`).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from mhdlab.field import GridSpec, pointwise_magnitude

FAMILIES = ("F", "G")
# Far image rings (|m|_inf from 2 up to this) are summed on a coarse grid and
# interpolated; the remainder beyond it is O(|x| L^-4 M^-2) in d = 2.
IMAGE_SHELLS = {2: 48, 3: 6}
COARSE_POINTS = {2: 33, 3: 17}


def oseen_symbol(xi, t: float, j: int, h: int, k: int) -> complex:
    """Symbol of ``F^k_{j,h}`` at one frequency (0-based indices); 0 at xi = 0."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    xi = np.asarray(xi, dtype=float)
    k2 = float(xi @ xi)
    if k2 == 0.0:
        return 0j
    proj = (1.0 if j == k else 0.0) - xi[j] * xi[k] / k2
    return 1j * xi[h] * np.exp(-t * k2) * proj


def _full_wavevector(grid: GridSpec, nyquist: bool) -> tuple[np.ndarray, ...]:
    k = 2 * np.pi * sfft.fftfreq(grid.n, d=grid.h)
    if not nyquist:
        k = k.copy()
        k[grid.n // 2] = 0.0
    out = []
    for i in range(grid.d):
        shp = [1] * grid.d
        shp[i] = grid.n
        out.append(k.reshape(shp))
    return tuple(out)


def kernel_symbol(family: str, t: float, grid: GridSpec) -> np.ndarray:
    """Full (complex-FFT layout) symbol array, shape ``(d, d, d, *grid.shape)``."""
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    d = grid.d
    kd = _full_wavevector(grid, nyquist=False)
    kfull = _full_wavevector(grid, nyquist=True)
    k2 = sum(k**2 for k in kfull)
    heat = np.exp(-t * k2)
    kk = sum(k**2 for k in kd)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(kk > 0, 1.0 / kk, 0.0)
    out = np.zeros((d, d, d) + grid.shape, dtype=complex)
    for k in range(d):
        for j in range(d):
            if family == "F":
                proj = (1.0 if j == k else 0.0) - kd[j] * kd[k] * inv
                # zero frequency: the projector is irrelevant because xi_h = 0 there
            else:
                proj = 1.0 if j == k else 0.0
            if np.isscalar(proj) and proj == 0.0:
                continue
            for h in range(d):
                out[k, j, h] = 1j * kd[h] * heat * proj
    return out


@dataclass(frozen=True)
class KernelTensor:
    """Sampled kernel on the enlarged grid of ``grid``; ``values[k, j, h]``."""

    grid: GridSpec
    t: float
    family: str
    values: np.ndarray
    imag_residue: float

    @property
    def sample_grid(self) -> GridSpec:
        return self.grid.enlarged(2)

    def magnitude(self) -> np.ndarray:
        return pointwise_magnitude(self.values, self.sample_grid)

    def bound_constant(self, N: float, radius: float | None = None) -> float:
        r = self.grid.L / 2 if radius is None else radius
        return bound_constant(self.magnitude(), self.sample_grid, N, t=self.t, radius=r)


def check_resolvable(t: float, grid: GridSpec) -> None:
    if t <= 0:
        raise ValueError(f"kernel time must be > 0, got {t}")
    if np.sqrt(t) < 2 * grid.h:
        raise ValueError(f"unresolvable kernel: sqrt(t)={np.sqrt(t):.4g} < 2h={2 * grid.h:.4g}")


def _far_unique(points: tuple[np.ndarray, ...], d: int) -> dict[tuple[int, int, int], np.ndarray]:
    r2 = sum(p**2 for p in points)
    if d == 2:
        a, b, c = 1.0 / np.pi, 4.0 / np.pi, 2
    else:
        a, b, c = 3.0 / (4 * np.pi), 15.0 / (4 * np.pi), 2.5
    lin = [a * p / r2**c for p in points]
    cub = b / r2 ** (c + 1)
    out = {}
    for k, j, h in itertools.combinations_with_replacement(range(d), 3):
        v = -cub * points[h] * points[j] * points[k]
        if j == k:
            v += lin[h]
        if h == j:
            v += lin[k]
        if h == k:
            v += lin[j]
        out[(k, j, h)] = v
    return out


def _expand(unique: dict, d: int, shape) -> np.ndarray:
    out = np.empty((d, d, d) + tuple(shape))
    for key, v in unique.items():
        for perm in set(itertools.permutations(key)):
            out[perm] = v
    return out


def far_field(points: tuple[np.ndarray, ...], d: int) -> np.ndarray:
    """``d_h d_j d_k Gamma`` with ``Gamma`` the fundamental solution of ``-Lap``.

    Away from the origin F equals this up to terms of order ``exp(-|x|^2 / 4t)``:
    the heat factor averages a harmonic function against a Gaussian.  The tensor
    is fully symmetric in ``(k, j, h)``.
    """
    shape = np.broadcast_shapes(*(p.shape for p in points))
    return _expand(_far_unique(points, d), d, shape)


def _lattice(d: int, lo: int, hi: int) -> np.ndarray:
    """Integer vectors with ``lo <= |m|_inf <= hi``."""
    axes = np.meshgrid(*([np.arange(-hi, hi + 1)] * d), indexing="ij")
    m = np.stack([a.ravel() for a in axes], axis=1)
    norm = np.max(np.abs(m), axis=1)
    return m[(norm >= lo) & (norm <= hi)]


def _image_sum(points: tuple[np.ndarray, ...], shifts: np.ndarray, period: float, d: int) -> dict:
    """Unique components of the far field summed over ``points + period * shifts``."""
    shape = np.broadcast_shapes(*(p.shape for p in points))
    npts = int(np.prod(shape))
    chunk = max(1, 2**22 // npts)
    acc: dict = {}
    for start in range(0, len(shifts), chunk):
        block = shifts[start : start + chunk]
        pts = tuple(p[None] + period * block[:, i].reshape((-1,) + (1,) * len(shape)) for i, p in enumerate(points))
        for key, v in _far_unique(pts, d).items():
            part = v.sum(axis=0)
            acc[key] = acc[key] + part if key in acc else part
    return acc


def image_correction(big: GridSpec, shells: int | None = None) -> np.ndarray:
    """Sum of F's far field over the periodic images ``x + 2 L_big m``, ``m != 0``.

    The ring ``|m|_inf = 1`` is evaluated on the grid.  Rings ``2..shells`` are
    smooth across the box, so they are summed on a coarse grid and interpolated
    by separable cubic splines.  The far field is odd, so symmetric truncation
    cancels the leading remainder.
    """
    from scipy.interpolate import CubicSpline

    d = big.d
    M = IMAGE_SHELLS[d] if shells is None else shells
    period = 2 * big.L
    coords = tuple(np.broadcast_to(c, big.shape) for c in big.coords)
    total = _image_sum(coords, _lattice(d, 1, 1), period, d)
    if M >= 2:
        axis = np.linspace(-big.L, big.L, COARSE_POINTS[d])
        coarse = tuple(np.meshgrid(*([axis] * d), indexing="ij"))
        for key, v in _image_sum(coarse, _lattice(d, 2, M), period, d).items():
            for ax in range(d):
                v = CubicSpline(axis, v, axis=ax)(big.axis)
            total[key] += v
    return _expand(total, d, big.shape)


def sample_kernel(family: str, t: float, grid: GridSpec) -> KernelTensor:
    """Free-space kernel sampled on the zero-padding grid of ``grid``."""
    check_resolvable(t, grid)
    big = grid.enlarged(2)
    sym = kernel_symbol(family, t, big)
    axes = tuple(range(-big.d, 0))
    raw = sfft.ifftn(sym, axes=axes) / big.cell_volume
    raw = sfft.fftshift(raw, axes=axes)
    resid = float(np.max(np.abs(raw.imag)) / max(np.max(np.abs(raw.real)), 1e-300))
    values = raw.real
    if family == "F":
        values -= image_correction(big)
    return KernelTensor(grid=grid, t=float(t), family=family, values=np.ascontiguousarray(values), imag_residue=resid)


def profile(family: str, grid: GridSpec) -> KernelTensor:
    """Self-similar profile (Phi for F, Psi for G): the kernel at t = 1."""
    return sample_kernel(family, 1.0, grid)


def heat_kernel(t: float, grid: GridSpec) -> np.ndarray:
    r2 = grid.radius**2
    return (4 * np.pi * t) ** (-grid.d / 2) * np.exp(-r2 / (4 * t))


def heat_kernel_gradient(t: float, grid: GridSpec) -> np.ndarray:
    """Closed form ``grad[(4 pi t)^{-d/2} exp(-|x|^2/4t)]``, shape ``(d, *grid.shape)``."""
    g = heat_kernel(t, grid)
    return np.stack([-(np.broadcast_to(c, grid.shape)) / (2 * t) * g for c in grid.coords])


def bound_constant(values: np.ndarray, grid: GridSpec, N: float, t: float = 1.0, radius: float | None = None) -> float:
    """``sup_{|x| <= radius} |K(x)| (sqrt(t) + |x|)^N`` on the grid; radius defaults to L/2."""
    r = grid.L / 2 if radius is None else radius
    mag = values if values.ndim == grid.d else pointwise_magnitude(values, grid)
    mask = grid.radius <= r
    return float(np.max(np.abs(mag[mask]) * (np.sqrt(t) + grid.radius[mask]) ** N))
