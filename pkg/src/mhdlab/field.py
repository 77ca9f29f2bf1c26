"""Uniform centered grids, spectral transforms and the basic differential operators.

Scalar fields are real arrays of shape ``grid.shape``; vector fields carry a
leading component axis, shape ``(d, *grid.shape)``.  Every operator acts on the
trailing ``d`` axes so both kinds go through the same code path.

Fourier convention: ``f_hat(xi) = int f(x) exp(-i x.xi) dx``, so that
``d/dx_h <-> i xi_h``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

SNAPSHOT_MAGIC = "MHDLAB1"


@dataclass(frozen=True)
class GridSpec:
    """Centered box ``[-L, L)^d`` sampled with ``n`` points per axis."""

    d: int
    n: int
    L: float

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @cached_property
    def axis(self) -> np.ndarray:
        """1-D coordinates ``x_i = -L + i h``."""
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.d), indexing="ij", sparse=True))

    @cached_property
    def radius(self) -> np.ndarray:
        r2 = sum(c**2 for c in self.coords)
        return np.sqrt(np.broadcast_to(r2, self.shape))

    @cached_property
    def origin_index(self) -> tuple[int, ...]:
        return (self.n // 2,) * self.d

    def enlarged(self, factor: int = 2) -> "GridSpec":
        """Grid with the same spacing and ``factor`` times the extent (zero padding)."""
        return GridSpec(self.d, self.n * factor, self.L * factor)

    # -- spectral side ---------------------------------------------------------

    @cached_property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.d - 1) + (self.n // 2 + 1,)

    def _freqs(self, nyquist: bool) -> tuple[np.ndarray, ...]:
        full = 2 * np.pi * sfft.fftfreq(self.n, d=self.h)
        half = 2 * np.pi * sfft.rfftfreq(self.n, d=self.h)
        if not nyquist:
            full = full.copy()
            half = half.copy()
            full[self.n // 2] = 0.0
            half[-1] = 0.0
        axes = [full] * (self.d - 1) + [half]
        out = []
        for i, k in enumerate(axes):
            shp = [1] * self.d
            shp[i] = k.size
            out.append(k.reshape(shp))
        return tuple(out)

    @cached_property
    def wavevector(self) -> tuple[np.ndarray, ...]:
        """Frequencies for odd-order derivatives; Nyquist modes are zeroed."""
        return self._freqs(nyquist=False)

    @cached_property
    def k2(self) -> np.ndarray:
        """``|xi|^2`` including Nyquist modes (used by the heat multiplier)."""
        return np.broadcast_to(sum(k**2 for k in self._freqs(nyquist=True)), self.spectral_shape)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kmax = np.pi / self.h
        mask = np.ones(self.spectral_shape, dtype=bool)
        for k in self._freqs(nyquist=True):
            mask = mask & (np.abs(k) < (2.0 / 3.0) * kmax)
        return mask


def _axes(grid: GridSpec) -> tuple[int, ...]:
    return tuple(range(-grid.d, 0))


def to_spectral(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sfft.rfftn(f, axes=_axes(grid))


def from_spectral(fh: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sfft.irfftn(fh, s=grid.shape, axes=_axes(grid))


def check_finite(f: np.ndarray, what: str = "field") -> np.ndarray:
    if not np.all(np.isfinite(f)):
        raise FloatingPointError(f"{what} contains non-finite values")
    return f


def gradient(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    fh = to_spectral(f, grid)
    return np.stack([from_spectral(1j * k * fh, grid) for k in grid.wavevector])


def perp_gradient(psi: np.ndarray, grid: GridSpec) -> np.ndarray:
    """``(-d2 psi, d1 psi)``; only defined for d = 2."""
    if grid.d != 2:
        raise ValueError("perp_gradient needs d = 2")
    g = gradient(psi, grid)
    return np.stack([-g[1], g[0]])


def divergence(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    fh = to_spectral(f, grid)
    out = sum(1j * k * fh[j] for j, k in enumerate(grid.wavevector))
    return check_finite(from_spectral(out, grid), "divergence")


def leray_symbol_apply(fh: np.ndarray, kvec: tuple[np.ndarray, ...]) -> np.ndarray:
    """Apply ``I - xi xi^T / |xi|^2`` to a spectral vector field; xi = 0 passes through."""
    kk = sum(k**2 for k in kvec)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(kk > 0, 1.0 / kk, 0.0)
    proj = sum(k * fh[j] for j, k in enumerate(kvec)) * inv
    return np.stack([fh[j] - k * proj for j, k in enumerate(kvec)])


def leray_project(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    fh = to_spectral(f, grid)
    return check_finite(from_spectral(leray_symbol_apply(fh, grid.wavevector), grid), "projection")


def heat_multiplier(t: float, grid: GridSpec) -> np.ndarray:
    if t < 0:
        raise ValueError(f"heat semigroup needs t >= 0, got {t}")
    return np.exp(-t * grid.k2)


def heat_semigroup(f: np.ndarray, t: float, grid: GridSpec) -> np.ndarray:
    mult = heat_multiplier(t, grid)
    if t == 0:
        return f.copy()
    return from_spectral(to_spectral(f, grid) * mult, grid)


def dealias(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """2/3-rule truncation of the trailing-axes spectrum."""
    return from_spectral(to_spectral(f, grid) * grid.dealias_mask, grid)


def pad(f: np.ndarray, grid: GridSpec, factor: int = 2) -> np.ndarray:
    """Embed a base-grid field into the centre of the enlarged grid (zeros elsewhere)."""
    big = grid.enlarged(factor)
    lead = f.shape[: f.ndim - grid.d]
    out = np.zeros(lead + big.shape, dtype=f.dtype)
    off = (big.n - grid.n) // 2
    sl = (Ellipsis,) + (slice(off, off + grid.n),) * grid.d
    out[sl] = f
    return out


def crop(F: np.ndarray, grid: GridSpec, factor: int = 2) -> np.ndarray:
    """Inverse of :func:`pad`: restrict an enlarged-grid field to the base box."""
    off = (grid.n * factor - grid.n) // 2
    sl = (Ellipsis,) + (slice(off, off + grid.n),) * grid.d
    return np.ascontiguousarray(F[sl])


def l2_norm(f: np.ndarray, grid: GridSpec) -> float:
    return float(np.sqrt(np.sum(np.abs(f) ** 2) * grid.cell_volume))


def inner(f: np.ndarray, g: np.ndarray, grid: GridSpec) -> float:
    return float(np.sum(f * g) * grid.cell_volume)


def pointwise_magnitude(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    """|f| at each point: absolute value for scalars, Euclidean norm over leading axes otherwise."""
    if f.ndim == grid.d:
        return np.abs(f)
    lead = f.shape[: f.ndim - grid.d]
    flat = f.reshape((int(np.prod(lead)),) + grid.shape)
    return np.sqrt(np.sum(flat**2, axis=0))


# -- snapshot files ------------------------------------------------------------


def write_snapshot(path: str | Path, f: np.ndarray, grid: GridSpec, kind: str) -> Path:
    """Header ``MHDLAB1 d n L kind`` then little-endian float64 blocks, one per component."""
    if " " in kind or not kind:
        raise ValueError(f"bad snapshot kind {kind!r}")
    path = Path(path)
    data = np.ascontiguousarray(f, dtype="<f8")
    header = f"{SNAPSHOT_MAGIC} {grid.d} {grid.n} {grid.L!r} {kind}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(data.tobytes(order="C"))
    return path


def read_snapshot(path: str | Path) -> tuple[np.ndarray, GridSpec, str]:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    parts = raw[:nl].decode("ascii").split()
    if len(parts) != 5 or parts[0] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a {SNAPSHOT_MAGIC} snapshot")
    grid = GridSpec(int(parts[1]), int(parts[2]), float(parts[3]))
    values = np.frombuffer(raw[nl + 1 :], dtype="<f8")
    block = grid.n**grid.d
    if values.size % block:
        raise ValueError(f"{path}: payload is not a whole number of components")
    ncomp = values.size // block
    shape = grid.shape if ncomp == 1 else (ncomp,) + grid.shape
    if parts[4].startswith("kernel") and ncomp == grid.d**3:
        shape = (grid.d,) * 3 + grid.shape
    return values.reshape(shape).astype(np.float64), grid, parts[4]
