"""Initial data, the moment matrix, and the decay experiments built on the solver."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from mhdlab.field import GridSpec, divergence, l2_norm, leray_project, perp_gradient, read_snapshot
from mhdlab.indices import MhdIndices
from mhdlab.solver import MhdState, SolverConfig, picard_solve
from mhdlab.weighted import NOISE_FLOOR, decay_rate_estimate, e_norm, envelope_exponent, shell_profile

log = logging.getLogger(__name__)

KINDS = ("stream-bump", "random-divfree", "cyclic", "custom-file")
SAMPLE_TIMES = (0.0, 0.0625, 0.125, 0.25, 0.5)
WINDOW_START = 0.6
WINDOW_END = 0.95


@dataclass(frozen=True)
class DataSpec:
    """Recipe for one divergence-free vector field.

    ``s`` is the pointwise decay target of algebraic stream bumps (``None`` for
    Gaussian profiles).  ``amplitude`` is the sup norm of the result.
    """

    kind: str = "stream-bump"
    s: float | None = None
    n: int = 3
    seed: int = 0
    width: float = 1.0
    aspect: float = 1.0
    shift: float = 0.0
    amplitude: float = 1.0
    radial: float = 0.0
    perturbation: float = 0.0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.width <= 0 or self.aspect <= 0:
            raise ValueError("width and aspect must be > 0")
        if self.s is not None and self.s <= 1:
            raise ValueError("decay target s must exceed 1")
        if self.kind == "cyclic" and self.n < 2:
            raise ValueError("symmetry order must be >= 2")
        if self.kind == "custom-file" and not self.path:
            raise ValueError("custom-file data needs a path")

    @classmethod
    def parse(cls, text: str) -> "DataSpec":
        """``kind[:key=value,...]``, e.g. ``cyclic:n=3,radial=0.5`` or a snapshot path."""
        if ":" not in text and Path(text).exists():
            return cls(kind="custom-file", path=text)
        kind, _, rest = text.partition(":")
        kw: dict = {}
        for item in filter(None, rest.split(",")):
            key, _, val = item.partition("=")
            key = key.strip()
            if key in ("n", "seed"):
                kw[key] = int(val)
            elif key == "path":
                kw[key] = val
            else:
                kw[key] = float(val)
        return cls(kind=kind.strip(), **kw)


# -- smooth window ----------------------------------------------------------------


def _taper(a: np.ndarray, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """C-infinity step from 1 (|a| <= lo) to 0 (|a| >= hi) and its derivative in a."""
    t = np.clip((np.abs(a) - lo) / (hi - lo), 0.0, 1.0)
    inside = (t > 0) & (t < 1)
    ts = np.where(inside, t, 0.5)
    f1 = np.exp(-1 / ts)
    f2 = np.exp(-1 / (1 - ts))
    val = np.where(t <= 0, 1.0, np.where(t >= 1, 0.0, f2 / (f1 + f2)))
    dval_dt = -(f1 * f2 * (1 / ts**2 + 1 / (1 - ts) ** 2)) / (f1 + f2) ** 2
    dval = np.where(inside, dval_dt / (hi - lo) * np.sign(a), 0.0)
    return val, dval


def box_window(grid: GridSpec) -> tuple[np.ndarray, list[np.ndarray]]:
    """Product window equal to 1 for ``max|x_i| <= 0.6 L`` and 0 near the box faces."""
    x = [np.broadcast_to(c, grid.shape) for c in grid.coords]
    parts = [_taper(xi, WINDOW_START * grid.L, WINDOW_END * grid.L) for xi in x]
    w = np.prod([p[0] for p in parts], axis=0)
    grads = []
    for i in range(grid.d):
        g = parts[i][1]
        for j in range(grid.d):
            if j != i:
                g = g * parts[j][0]
        grads.append(g)
    return w, grads


# -- stream functions with analytic gradients ---------------------------------------


def _coords(grid: GridSpec, shift: float = 0.0) -> list[np.ndarray]:
    x = [np.broadcast_to(c, grid.shape).astype(float) for c in grid.coords]
    x[0] = x[0] - shift
    return x


def _quadratic(x, width, aspect):
    """``q = (x/w)^2 + (y/(a w))^2 + ...`` and its gradient."""
    scales = [width, aspect * width] + [width] * (len(x) - 2)
    q = sum((xi / s) ** 2 for xi, s in zip(x, scales))
    dq = [2 * xi / s**2 for xi, s in zip(x, scales)]
    return q, dq


def stream_bump(grid: GridSpec, spec: DataSpec) -> tuple[np.ndarray, list[np.ndarray]]:
    """Gaussian ``exp(-q/2)`` or algebraic ``(1+q)^{-(s-1)/2}`` potential and its gradient."""
    x = _coords(grid, spec.shift)
    q, dq = _quadratic(x, spec.width, spec.aspect)
    if spec.s is None:
        psi = np.exp(-q / 2)
        dpsi = -0.5 * psi
    else:
        e = (spec.s - 1) / 2
        psi = (1 + q) ** (-e)
        dpsi = -e * (1 + q) ** (-e - 1)
    return psi, [dpsi * g for g in dq]


def cyclic_stream(grid: GridSpec, n: int, width: float = 1.0, radial: float = 0.0):
    """``(Re(z^n)/w^n + radial) exp(-r^2/(2 w^2))`` and its gradient (d = 2)."""
    x, y = _coords(grid)
    z = (x + 1j * y) / width
    g = np.exp(-(x**2 + y**2) / (2 * width**2))
    zn = z**n
    zn1 = z ** (n - 1)
    ang = zn.real + radial
    psi = ang * g
    dx = (n * zn1.real / width) * g - ang * x / width**2 * g
    dy = (-n * zn1.imag / width) * g - ang * y / width**2 * g
    return psi, [dx, dy]


def _rot_from_potential(psi, dpsi, grid: GridSpec) -> np.ndarray:
    """Windowed ``grad^perp`` (d = 2) or ``curl(0, 0, psi)`` (d = 3), computed analytically."""
    w, dw = box_window(grid)
    g = [w * dp + psi * dwi for dp, dwi in zip(dpsi, dw)]
    if grid.d == 2:
        return np.stack([-g[1], g[0]])
    return np.stack([g[1], -g[0], np.zeros(grid.shape)])


def _normalize(u: np.ndarray, amplitude: float) -> np.ndarray:
    m = float(np.max(np.sqrt(np.sum(u**2, axis=0))))
    return u if m == 0 else u * (amplitude / m)


def make_cyclic(
    grid: GridSpec, n: int, width: float = 1.0, radial: float = 0.0, amplitude: float = 1.0
) -> np.ndarray:
    """Velocity equivariant under rotation by ``2 pi / n`` (d = 2)."""
    if grid.d != 2:
        raise ValueError("cyclic data is two-dimensional")
    if n < 2:
        raise ValueError("symmetry order must be >= 2")
    if n >= math.pi * grid.n / 8:
        raise ValueError(f"symmetry order {n} is under-resolved on n={grid.n}")
    psi, dpsi = cyclic_stream(grid, n, width, radial)
    return _normalize(leray_project(_rot_from_potential(psi, dpsi, grid), grid), amplitude)


def asymmetric_bump(grid: GridSpec, width: float = 1.0) -> np.ndarray:
    """Off-centre elliptical vortex used to break symmetries (resolved for width >= 1 at h = 1/4)."""
    spec = DataSpec(width=1.5 * width, aspect=0.5, shift=0.7 * width)
    psi, dpsi = stream_bump(grid, spec)
    return _normalize(_rot_from_potential(psi, dpsi, grid), 1.0)


def make_divfree(spec: DataSpec, grid: GridSpec) -> np.ndarray:
    """Generate the field described by ``spec``; divergence-free to roundoff."""
    if spec.kind == "custom-file":
        f, g, _ = read_snapshot(spec.path)
        if g != grid:
            raise ValueError(f"snapshot grid {g} does not match {grid}")
        return f
    if spec.kind == "stream-bump":
        if spec.s is not None and spec.width < 2 * grid.h:
            raise ValueError("bump width below two grid cells")
        psi, dpsi = stream_bump(grid, spec)
        u = _rot_from_potential(psi, dpsi, grid)
    elif spec.kind == "cyclic":
        u = make_cyclic(grid, spec.n, spec.width, spec.radial)
    else:
        rng = np.random.default_rng(spec.seed)
        env = np.exp(-(grid.radius**2) / (2 * spec.width**2))
        k2 = grid.k2
        if grid.d == 2:
            noise = rng.standard_normal(grid.shape)
            sm = np.fft.irfftn(np.fft.rfftn(noise) * np.exp(-k2 * spec.width**2), s=grid.shape, axes=(0, 1))
            psi = sm * env
            u = perp_gradient(psi, grid)
        else:
            noise = rng.standard_normal((grid.d,) + grid.shape)
            sm = np.fft.irfftn(np.fft.rfftn(noise, axes=(1, 2, 3)) * np.exp(-k2 * spec.width**2), s=grid.shape, axes=(1, 2, 3))
            u = leray_project(sm * env, grid)
    if spec.perturbation:
        if grid.d != 2:
            raise ValueError("symmetry-breaking perturbations are two-dimensional")
        u = _normalize(u, 1.0) + spec.perturbation * asymmetric_bump(grid, spec.width)
    # the analytic curl is not the spectral one; project so both agree to roundoff
    return _normalize(leray_project(u, grid), spec.amplitude)



# -- moments ------------------------------------------------------------------------


@dataclass
class MomentMatrix:
    """``M_jk = int (u^j u^k - B^j B^k) dx`` with its isotropy defect."""

    M: np.ndarray
    energy: float
    defect: float
    c: float

    @property
    def relative_defect(self) -> float:
        return self.defect / self.energy if self.energy > 0 else 0.0


def moment_matrix(state: MhdState, grid: GridSpec) -> MomentMatrix:
    u, B = state.u, state.B
    d = grid.d
    dv = grid.cell_volume
    M = np.empty((d, d))
    for j in range(d):
        for k in range(j, d):
            M[j, k] = M[k, j] = float(np.sum(u[j] * u[k] - B[j] * B[k]) * dv)
    en = float(np.sum(u**2 + B**2) * dv)
    off = max((abs(M[j, k]) for j in range(d) for k in range(d) if j != k), default=0.0)
    diag = np.diag(M)
    defect = max(off, float(diag.max() - diag.min()))
    m = np.sum(u**2, axis=0) + np.sum(B**2, axis=0)
    if en > 0 and float(np.sum(m[grid.radius >= grid.L / 2]) * dv) > 1e-10 * en:
        log.warning("moment integrand is not negligible beyond L/2 at t=%g", state.t)
    return MomentMatrix(M, en, defect, float(np.mean(diag)))


def spectral_interpolate(f: np.ndarray, grid: GridSpec, points: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant of ``f`` (leading axes allowed) at ``points`` of shape ``(m, d)``."""
    axes = tuple(range(-grid.d, 0))
    fh = np.fft.fftn(f, axes=axes) / grid.n**grid.d
    k = 2 * np.pi * np.fft.fftfreq(grid.n, d=grid.h)
    k[grid.n // 2] = 0.0  # symmetric treatment of the Nyquist mode
    letters = "abc"[: grid.d]
    expr = "..." + letters + "," + ",".join(letters) + "->..."
    out = np.empty(f.shape[: f.ndim - grid.d] + (points.shape[0],))
    for i, p in enumerate(points):
        phases = [np.exp(1j * k * (p[a] + grid.L)) for a in range(grid.d)]
        out[..., i] = np.einsum(expr, fh, *phases).real
    return out


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def equivariance_residual(u: np.ndarray, grid: GridSpec, n: int, n_points: int = 256, seed: int = 0) -> float:
    """``max |A u(x) - u(A x)| / max |u|`` over random points in ``|x| <= L/4``, ``A`` the rotation by ``2 pi/n``."""
    rng = np.random.default_rng(seed)
    r = grid.L / 4 * np.sqrt(rng.random(n_points))
    phi = 2 * np.pi * rng.random(n_points)
    pts = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
    A = rotation(2 * np.pi / n)
    at_x = spectral_interpolate(u, grid, pts)
    at_Ax = spectral_interpolate(u, grid, pts @ A.T)
    resid = np.max(np.abs(A @ at_x - at_Ax))
    return float(resid / np.max(np.sqrt(np.sum(u**2, axis=0))))


# -- reports ------------------------------------------------------------------------

REPORT_COLUMNS = ("t", "eta_u", "eta_B", "ceiling", "defect", "c_of_t", "E_norm_u", "E_norm_sq")
INF = math.inf


def decay_ceiling(d: int, eta1: float | None, p1=INF) -> float:
    """``min{d+1; 2 eta1 - delta}``; with ``B = 0`` only the kernel bound ``d+1`` applies."""
    if eta1 is None or math.isinf(eta1):
        return float(d + 1)
    theta1 = eta1 - (0 if p1 == INF else d / p1)
    idx = MhdIndices(d, INF, 0, p1, theta1)
    return float(min(d + 1, 2 * idx.eta1 - idx.delta))


@dataclass
class EMembership:
    t: float
    E_norm_u: float
    E_norm_sq: float
    tail_trend_u: float

    @property
    def tail_vanishes(self) -> bool:
        return self.tail_trend_u < 0.5


def e_membership(state: MhdState, grid: GridSpec) -> EMembership:
    """E-norms of ``|u|`` and ``|u|^2 + |B|^2`` plus the tail trend of ``|u|``.

    The trend compares ``R int_{|x| >= R} |u|`` at ``R = L/8`` with ``R = L/32``:
    about 1 when the tail integral stalls (``|u| ~ |x|^{-(d+1)}``), small when it
    keeps shrinking.
    """
    mag = np.sqrt(np.sum(state.u**2, axis=0))
    Eu = e_norm(mag, grid)
    Esq = e_norm(np.sum(state.u**2, axis=0) + np.sum(state.B**2, axis=0), grid)
    r = grid.radius
    dv = grid.cell_volume

    def tail(R):
        return R * float(np.sum(mag[(r >= R) & (r <= grid.L / 2)]) * dv)

    far, near = tail(grid.L / 8), tail(grid.L / 32)
    trend = far / near if near > 0 else 0.0
    return EMembership(state.t, Eu.value, Esq.value, trend)


def e_membership_report(traj, grid: GridSpec) -> dict:
    rows = [e_membership(s, grid) for s in traj.states]
    later = [m for m in rows if m.t > 0]
    return {
        "rows": rows,
        "sup_E_norm_u": max((m.E_norm_u for m in rows), default=0.0),
        "sup_E_norm_sq": max((m.E_norm_sq for m in rows), default=0.0),
        "tail_vanishes": all(m.tail_vanishes for m in later) if later else True,
    }


@dataclass
class ExperimentRow:
    t: float
    eta_u: float
    eta_B: float
    ceiling: float
    defect: float
    c_of_t: float
    E_norm_u: float
    E_norm_sq: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_COLUMNS}


@dataclass
class ExperimentReport:
    rows: list[ExperimentRow]
    far_shell_mass: dict[float, float] = field(default_factory=dict)
    envelope: dict[float, float] = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def row_at(self, t: float) -> ExperimentRow:
        for r in self.rows:
            if abs(r.t - t) < 1e-12:
                return r
        raise KeyError(t)

    @property
    def far_shell_growth(self) -> float:
        """Largest far-shell mass at t > 0 relative to its initial value."""
        m0 = self.far_shell_mass.get(0.0, 0.0)
        later = max((m for t, m in self.far_shell_mass.items() if t > 0), default=0.0)
        return math.inf if m0 == 0 else later / m0


def _safe_eta(f: np.ndarray, grid: GridSpec, R_min: float, R_max: float) -> float:
    if not np.any(f):
        return math.inf
    return decay_rate_estimate(f, grid, R_min, R_max).eta


def fit_window(grid: GridSpec) -> tuple[float, float]:
    """Radii ``[L/8, L/2]`` used by every decay fit of the experiments."""
    return grid.L / 8, grid.L / 2


def run_report(
    u0: np.ndarray,
    B0: np.ndarray,
    grid: GridSpec,
    cfg: SolverConfig,
    eta1: float | None = None,
    sample_times=SAMPLE_TIMES,
) -> tuple[ExperimentReport, object]:
    """Evolve and tabulate decay rates, moments and E-norms at the sampled times."""
    cfg = replace(cfg, T=max(cfg.T, max(sample_times)))
    traj = picard_solve(u0, B0, grid, cfg)
    lo, hi = fit_window(grid)
    ceiling = decay_ceiling(grid.d, eta1)
    rows, far, env = [], {}, {}
    for s in traj.states:
        if not any(abs(s.t - ts) < 1e-9 for ts in sample_times):
            continue
        mm = moment_matrix(s, grid)
        em = e_membership(s, grid)
        rows.append(
            ExperimentRow(
                t=s.t,
                eta_u=_safe_eta(s.u, grid, lo, hi),
                eta_B=_safe_eta(s.B, grid, lo, hi),
                ceiling=ceiling,
                defect=mm.relative_defect,
                c_of_t=mm.c,
                E_norm_u=em.E_norm_u,
                E_norm_sq=em.E_norm_sq,
            )
        )
        far[s.t] = float(shell_profile(s.u, grid, grid.L / 4, grid.L / 2).masses[0])
        env[s.t] = envelope_exponent(s.u, grid, lo, hi).exponent if np.any(s.u) else math.inf
    report = ExperimentReport(rows, far, env)
    report.notes["contraction_factor"] = traj.contraction_factor()
    report.notes["max_residual"] = traj.max_residual()
    return report, traj


def spreading_experiment(
    u_spec: DataSpec, grid: GridSpec, cfg: SolverConfig, B_spec: DataSpec | None = None, sample_times=SAMPLE_TIMES
) -> ExperimentReport:
    """Evolve generic data and record how fast algebraic tails appear in ``u``."""
    u0 = make_divfree(u_spec, grid)
    B0 = make_divfree(B_spec, grid) if B_spec is not None else np.zeros_like(u0)
    eta1 = None if B_spec is None else (B_spec.s if B_spec.s is not None else math.inf)
    report, _ = run_report(u0, B0, grid, cfg, eta1=eta1, sample_times=sample_times)
    report.notes["initial_defect"] = moment_matrix(MhdState(u0, B0, 0.0), grid).relative_defect
    return report


def slow_field_experiment(
    grid: GridSpec, cfg: SolverConfig, eta1: float = 1.6, sample_times=SAMPLE_TIMES
) -> ExperimentReport:
    """Rapidly decaying ``u0`` with a magnetic field decaying like ``|x|^{-eta1}``."""
    u_spec = DataSpec(width=1.5, aspect=0.5, amplitude=0.5)
    B_spec = DataSpec(s=eta1, width=1.5, aspect=0.5, amplitude=0.5)
    return spreading_experiment(u_spec, grid, cfg, B_spec, sample_times)


def symmetry_decay_experiment(
    n: int,
    grid: GridSpec,
    cfg: SolverConfig,
    radial: float = 0.5,
    perturbation: float = 0.0,
    magnetic: bool = False,
    times=(0.25, 0.5),
) -> ExperimentReport:
    """Cyclic-``n`` data (optionally perturbed); pointwise envelope exponents of ``u(t)``.

    ``radial`` adds the rotation-invariant mode so the data is generic within
    its symmetry class.  ``magnetic`` adds a cyclic-symmetric ``B0``.
    """
    if grid.d != 2:
        raise ValueError("symmetry experiments are two-dimensional")
    spec = DataSpec(kind="cyclic", n=n, radial=radial, perturbation=perturbation)
    u0 = make_divfree(spec, grid)
    B0 = 0.5 * make_cyclic(grid, n, width=1.2, radial=radial) if magnetic else np.zeros_like(u0)
    report, _ = run_report(u0, B0, grid, cfg, sample_times=(0.0,) + tuple(times))
    report.notes["equivariance"] = equivariance_residual(u0, grid, n) if perturbation == 0 else math.nan
    return report
