"""Mild-solution engine for incompressible MHD on a free-space-emulating grid.

Time stepping is exponential collocation: inside a macro step the nonlinear
term is interpolated by a polynomial through Gauss-Legendre nodes and the
Duhamel integral against the heat semigroup is done exactly per Fourier mode.
All convolutions with the algebraic kernels run on the zero-padded grid so the
free-space kernels are not periodised.

Operator conventions (for a pair of vector fields ``f``, ``g``):

* ``U(f, g)^k = P sum_h d_h (f^j g^h)`` projected on index ``j -> k``,
  i.e. ``P (g . grad) f`` for divergence-free ``g``;
* ``Bop(f, g)^k = sum_h d_h (f^h g^k)``, i.e. ``(f . grad) g``.

With these, ``V2(v, v) = Bop(u, B) - Bop(B, u)`` is ``div(u (x) B - B (x) u)`` and
the update reads ``v = e^{t Lap} v0 - V(v, v)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from mhdlab.field import (
    GridSpec,
    check_finite,
    crop,
    divergence,
    from_spectral,
    l2_norm,
    leray_project,
    leray_symbol_apply,
    pad,
    to_spectral,
)
from mhdlab.convolution import free_convolve
from mhdlab.kernels import sample_kernel

log = logging.getLogger(__name__)

SUPPORT_FRACTION = 0.9999
ESCAPE_TOLERANCE = 1e-8


class NonContractionError(RuntimeError):
    """Picard residuals stopped shrinking before reaching the tolerance."""

    def __init__(self, message: str, T: float, residuals: list[float]):
        super().__init__(message)
        self.T = T
        self.residuals = residuals


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.0625
    T: float = 0.5
    quad_nodes: int = 4
    picard_max: int = 60
    tol: float = 1e-10
    S: float = 1.0
    Re: float = 1.0
    Rm: float = 1.0
    mode: str = "stepwise"
    navier_stokes: bool = False

    def __post_init__(self):
        for name in ("S", "Re", "Rm", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if self.quad_nodes < 3:
            raise ValueError("quad_nodes must be >= 3")
        if self.mode not in ("stepwise", "global"):
            raise ValueError("mode must be 'stepwise' or 'global'")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt))) if self.T > 0 else 0

    @property
    def step_times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


@dataclass
class MhdState:
    u: np.ndarray
    B: np.ndarray
    t: float

    def copy(self) -> "MhdState":
        return MhdState(self.u.copy(), self.B.copy(), self.t)


@dataclass
class Trajectory:
    grid: GridSpec
    config: SolverConfig
    states: list[MhdState] = field(default_factory=list)
    residuals: list[list[float]] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> MhdState:
        return self.states[-1]

    def contraction_factor(self) -> float:
        """Geometric-mean residual ratio over all recorded iterations above roundoff."""
        ratios = []
        for hist in self.residuals:
            for a, b in zip(hist[:-1], hist[1:]):
                if a > 0 and b > 0:
                    ratios.append(b / a)
        return float(np.exp(np.mean(np.log(ratios)))) if ratios else 0.0

    def max_residual(self) -> float:
        return max((h[-1] for h in self.residuals if h), default=0.0)

    def divergence_rows(self):
        for s in self.states:
            yield s.t, l2_norm(divergence(s.u, self.grid), self.grid), l2_norm(divergence(s.B, self.grid), self.grid)


def energy(state: MhdState, grid: GridSpec, S: float = 1.0) -> float:
    """``(1/2) int |u|^2 + S |B|^2``."""
    return 0.5 * (l2_norm(state.u, grid) ** 2 + S * l2_norm(state.B, grid) ** 2)


# -- exponential quadrature --------------------------------------------------------


def phi_functions(z: np.ndarray, kmax: int) -> list[np.ndarray]:
    """``phi_0 .. phi_kmax`` with ``phi_0 = e^z`` and ``phi_{k+1}(z) = (phi_k(z) - 1/k!)/z``.

    Taylor series where ``|z| < 1``, forward recurrence elsewhere.
    """
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1.0
    zs = z[small]
    zb = np.where(small, 1.0, z)
    out = [np.exp(z)]
    cur = np.exp(zb)
    for k in range(kmax):
        cur = (cur - 1.0 / math.factorial(k)) / zb
        series = np.zeros_like(zs)
        for j in range(20, -1, -1):
            series = series * zs + 1.0 / math.factorial(j + k + 1)
        val = cur.copy()
        val[small] = series
        out.append(val)
    return out


@lru_cache(maxsize=8)
def gauss_nodes(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on (0, 1); no node touches either end."""
    x, w = np.polynomial.legendre.leggauss(q)
    return (x + 1) / 2, w / 2


@lru_cache(maxsize=8)
def lagrange_coefficients(q: int) -> np.ndarray:
    """``C[q, m]``: monomial coefficients of the Lagrange basis through the nodes."""
    y, _ = gauss_nodes(q)
    return np.linalg.inv(np.vander(y, q, increasing=True)).T


def duhamel_weights(lam: np.ndarray, dt: float, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Propagators and exact-integration weights at the nodes and the step end.

    Returns ``E[r]`` and ``W[r, q]`` such that for ``N(t0 + y dt) = sum_q l_q(y) N_q``
    ``int_0^{y_r dt} e^{-lam (y_r dt - s)} N(t0 + s) ds = sum_q W[r, q] N_q``,
    with ``y_r`` the nodes followed by ``1``.
    """
    y, _ = gauss_nodes(q)
    C = lagrange_coefficients(q)
    ys = np.append(y, 1.0)
    E = np.empty((q + 1,) + lam.shape)
    W = np.zeros((q + 1, q) + lam.shape)
    for r, yr in enumerate(ys):
        phis = phi_functions(-lam * yr * dt, q)
        E[r] = phis[0]
        for m in range(q):
            term = dt * yr ** (m + 1) * math.factorial(m) * phis[m + 1]
            for qi in range(q):
                if C[qi, m] != 0.0:
                    W[r, qi] += C[qi, m] * term
    return E, W


# -- nonlinear terms ---------------------------------------------------------------


class _Spectral:
    """Padded-grid spectral helpers shared by the stepper and the bilinear operators."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.big = grid.enlarged(2)
        self.kvec = self.big.wavevector
        self.k2 = self.big.k2
        self.mask = grid.dealias_mask
        # products of truncated fields alias into the top third of the band
        kmax = (2.0 / 3.0) * np.pi / grid.h
        self.band = np.ones(self.big.spectral_shape, dtype=bool)
        for k in self.kvec:
            self.band &= np.abs(k) <= kmax * (1 + 1e-12)

    def dealias(self, f: np.ndarray) -> np.ndarray:
        return from_spectral(to_spectral(f, self.grid) * self.mask, self.grid)

    def lift(self, f: np.ndarray) -> np.ndarray:
        return to_spectral(pad(f, self.grid), self.big)

    def lift_product(self, f: np.ndarray) -> np.ndarray:
        return self.lift(f) * self.band

    def drop(self, fh: np.ndarray) -> np.ndarray:
        return crop(from_spectral(fh, self.big), self.grid)

    def div_pairs(self, T: dict[tuple[int, int], np.ndarray], first_slot_derivative: bool) -> np.ndarray:
        """``sum_h i xi_h T[(j, h)]`` (or ``T[(h, j)]``) for each ``j``, on the padded grid."""
        d = self.grid.d
        lifted: dict[int, np.ndarray] = {}
        Th = {}
        for key, val in T.items():
            if id(val) not in lifted:
                lifted[id(val)] = self.lift_product(val)
            Th[key] = lifted[id(val)]
        out = []
        for j in range(d):
            acc = 0
            for h in range(d):
                key = (h, j) if first_slot_derivative else (j, h)
                if key in Th:
                    acc = acc + 1j * self.kvec[h] * Th[key]
            out.append(acc if not np.isscalar(acc) else np.zeros(self.big.spectral_shape, complex))
        return np.stack(out)

    def project(self, fh: np.ndarray) -> np.ndarray:
        return leray_symbol_apply(fh, self.kvec)


def _outer(f: np.ndarray, g: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    d = f.shape[0]
    return {(j, h): f[j] * g[h] for j in range(d) for h in range(d)}


class _MhdTerms:
    """Spectral right-hand sides ``P div(u(x)u - S B(x)B)`` and ``div(u(x)B - B(x)u)``."""

    def __init__(self, grid: GridSpec, S: float):
        self.sp = _Spectral(grid)
        self.S = S

    def velocity(self, u: np.ndarray, B: np.ndarray | None) -> np.ndarray:
        d = self.sp.grid.d
        T = {}
        for j in range(d):
            for h in range(j, d):
                T[(j, h)] = u[j] * u[h]
                if B is not None:
                    T[(j, h)] = T[(j, h)] - self.S * (B[j] * B[h])
        full = {}
        for (j, h), val in T.items():
            full[(j, h)] = val
            full[(h, j)] = val
        return self.sp.project(self.sp.div_pairs(full, first_slot_derivative=False))

    def magnetic(self, u: np.ndarray, B: np.ndarray) -> np.ndarray:
        """``sum_h d_h (u^h B^k - B^h u^k)`` via the antisymmetric tensor."""
        d = self.sp.grid.d
        A = {}
        for h in range(d):
            for k in range(h + 1, d):
                a = u[h] * B[k] - B[h] * u[k]
                A[(h, k)] = a
                A[(k, h)] = -a
        return self.sp.div_pairs(A, first_slot_derivative=True)


# -- stepping ----------------------------------------------------------------------


def _sq(f: np.ndarray, grid: GridSpec) -> float:
    return float(np.sum(f * f) * grid.cell_volume)


class DuhamelStepper:
    """One macro step of the collocation scheme, with Picard iteration on the node values."""

    def __init__(self, grid: GridSpec, cfg: SolverConfig):
        self.grid = grid
        self.cfg = cfg
        self.terms = _MhdTerms(grid, cfg.S)
        k2 = self.terms.sp.k2
        q = cfg.quad_nodes
        self.Eu, self.Wu = duhamel_weights(k2 / cfg.Re, cfg.dt, q)
        if cfg.Rm == cfg.Re:
            self.EB, self.WB = self.Eu, self.Wu
        else:
            self.EB, self.WB = duhamel_weights(k2 / cfg.Rm, cfg.dt, q)

    @property
    def mhd(self) -> bool:
        return not self.cfg.navier_stokes

    def heat_seed(self, u0: np.ndarray, B0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Node and end values of the linear flow from the step start."""
        sp = self.terms.sp
        uh = sp.lift(u0)
        us = np.stack([sp.drop(self.Eu[r] * uh) for r in range(self.cfg.quad_nodes + 1)])
        if not self.mhd:
            return us, np.zeros_like(us)
        Bh = sp.lift(B0)
        Bs = np.stack([sp.drop(self.EB[r] * Bh) for r in range(self.cfg.quad_nodes + 1)])
        return us, Bs

    def sweep(self, u0, B0, us, Bs) -> tuple[np.ndarray, np.ndarray, float]:
        """One Picard update of the node values; returns new values and the residual.

        ``us``/``Bs`` hold the ``quad_nodes`` node values followed by the step end.
        """
        sp = self.terms.sp
        q = self.cfg.quad_nodes
        Nu, NB = [], []
        for r in range(q):
            ud = sp.dealias(us[r])
            if self.mhd:
                Bd = sp.dealias(Bs[r])
                Nu.append(self.terms.velocity(ud, Bd))
                NB.append(self.terms.magnetic(ud, Bd))
            else:
                Nu.append(self.terms.velocity(ud, None))
        uh = sp.lift(u0)
        new_u = np.empty_like(us)
        for r in range(q + 1):
            acc = self.Eu[r] * uh
            for qi in range(q):
                acc = acc - self.Wu[r, qi] * Nu[qi]
            new_u[r] = sp.drop(acc)
        res = sum(_sq(new_u[r] - us[r], self.grid) for r in range(q + 1))
        if self.mhd:
            Bh = sp.lift(B0)
            new_B = np.empty_like(Bs)
            for r in range(q + 1):
                acc = self.EB[r] * Bh
                for qi in range(q):
                    acc = acc - self.WB[r, qi] * NB[qi]
                new_B[r] = sp.drop(acc)
            res = res + sum(_sq(new_B[r] - Bs[r], self.grid) for r in range(q + 1))
        else:
            new_B = Bs
        check_finite(new_u, "velocity")
        return new_u, new_B, math.sqrt(res)

    def finish(self, u: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Re-project the cropped end values on the base grid."""
        u = leray_project(u, self.grid)
        if self.mhd:
            B = leray_project(B, self.grid)
        return u, B


def _check_ratio(residuals: list[float], tol: float, T: float) -> None:
    if len(residuals) >= 2 and residuals[-1] > tol and residuals[-2] > 0 and residuals[-1] >= residuals[-2]:
        raise NonContractionError(
            f"Picard residual stopped contracting at T={T:g}: "
            f"{residuals[-2]:.3e} -> {residuals[-1]:.3e}",
            T,
            list(residuals),
        )


def _check_initial(u0: np.ndarray, B0: np.ndarray, grid: GridSpec) -> None:
    scale = l2_norm(u0, grid) + l2_norm(B0, grid)
    for name, f in (("u0", u0), ("B0", B0)):
        check_finite(f, name)
        if f.shape != (grid.d,) + grid.shape:
            raise ValueError(f"{name} has shape {f.shape}, expected {(grid.d,) + grid.shape}")
        dv = l2_norm(divergence(f, grid), grid)
        if dv > 1e-8 * max(scale, 1e-300):
            raise ValueError(f"{name} is not divergence-free: |div| = {dv:.3e}")
    mass = np.sqrt(np.sum(u0**2, axis=0)) + np.sqrt(np.sum(B0**2, axis=0))
    total = float(np.sum(mass))
    if total > 0 and float(np.sum(mass[grid.radius <= grid.L / 4])) < SUPPORT_FRACTION * total:
        log.warning("initial data has more than %.2g%% of its L1 mass beyond L/4", 100 * (1 - SUPPORT_FRACTION))


def _escaped(u: np.ndarray, B: np.ndarray, grid: GridSpec) -> float:
    m = np.sum(u**2, axis=0) + np.sum(B**2, axis=0)
    tot = float(np.sum(m))
    return float(np.sum(m[grid.radius >= grid.L / 2])) / tot if tot > 0 else 0.0


def step_duhamel(state: MhdState, history, dt: float, grid: GridSpec, cfg: SolverConfig | None = None) -> MhdState:
    """Advance ``state`` by ``dt``; ``history`` is an optional node-value guess ``(us, Bs)``."""
    cfg = SolverConfig(dt=dt, T=dt) if cfg is None else SolverConfig(**{**cfg.__dict__, "dt": dt})
    st = DuhamelStepper(grid, cfg)
    us, Bs = st.heat_seed(state.u, state.B) if history is None else history
    res: list[float] = []
    for _ in range(cfg.picard_max):
        us, Bs, r = st.sweep(state.u, state.B, us, Bs)
        res.append(r)
        if r <= cfg.tol:
            break
        _check_ratio(res, cfg.tol, dt)
    u, B = st.finish(us[-1], Bs[-1])
    return MhdState(u, B, state.t + dt)


def picard_solve(
    u0: np.ndarray,
    B0: np.ndarray,
    grid: GridSpec,
    cfg: SolverConfig,
    seed: str = "heat",
    keep_nodes: bool = False,
) -> Trajectory:
    """Solve ``v = e^{t Lap} v0 - V(v, v)`` on ``[0, cfg.T]``.

    ``cfg.mode == "stepwise"`` converges the iteration inside each macro step;
    ``"global"`` iterates whole-trajectory sweeps, which is the literal Picard
    map on ``[0, T]``.  ``seed`` is ``"heat"`` (linear flow) or ``"zero"``.
    """
    if seed not in ("heat", "zero"):
        raise ValueError("seed must be 'heat' or 'zero'")
    if cfg.navier_stokes and np.any(B0 != 0):
        raise ValueError("navier_stokes run needs B0 = 0")
    _check_initial(u0, B0, grid)
    st = DuhamelStepper(grid, cfg)
    traj = Trajectory(grid, cfg)
    s0 = MhdState(u0.copy(), B0.copy(), 0.0)
    traj.states.append(s0)
    traj.energies.append(energy(s0, grid, cfg.S))
    warned = False

    def guess(u, B):
        us, Bs = st.heat_seed(u, B)
        return (np.zeros_like(us), np.zeros_like(Bs)) if seed == "zero" else (us, Bs)

    if cfg.mode == "stepwise":
        nodes = []
        for m in range(cfg.n_steps):
            cur = traj.states[-1]
            us, Bs = guess(cur.u, cur.B)
            res: list[float] = []
            for _ in range(cfg.picard_max):
                us, Bs, r = st.sweep(cur.u, cur.B, us, Bs)
                res.append(r)
                if r <= cfg.tol:
                    break
                _check_ratio(res, cfg.tol, (m + 1) * cfg.dt)
            traj.residuals.append(res)
            if keep_nodes:
                nodes.append((us, Bs))
            u, B = st.finish(us[-1], Bs[-1])
            nxt = MhdState(u, B, (m + 1) * cfg.dt)
            traj.states.append(nxt)
            traj.energies.append(energy(nxt, grid, cfg.S))
            if not warned and _escaped(u, B, grid) > ESCAPE_TOLERANCE:
                log.warning("field mass beyond L/2 exceeds %g at t=%g", ESCAPE_TOLERANCE, nxt.t)
                warned = True
        traj.nodes = nodes if keep_nodes else None
        return traj

    # global sweeps: node values for every step are kept between iterations
    starts = [(u0, B0)]
    nodes = []
    for m in range(cfg.n_steps):
        g = guess(*starts[-1])
        nodes.append(g)
        starts.append((g[0][-1], g[1][-1]))
    res = []
    for _ in range(cfg.picard_max):
        worst = 0.0
        u, B = u0, B0
        for m in range(cfg.n_steps):
            us, Bs, r = st.sweep(u, B, *nodes[m])
            nodes[m] = (us, Bs)
            worst = max(worst, r)
            u, B = st.finish(us[-1], Bs[-1])
        res.append(worst)
        if worst <= cfg.tol:
            break
        _check_ratio(res, cfg.tol, cfg.T)
    traj.residuals.append(res)
    u, B = u0, B0
    for m in range(cfg.n_steps):
        u, B = st.finish(nodes[m][0][-1], nodes[m][1][-1])
        s = MhdState(u, B, (m + 1) * cfg.dt)
        traj.states.append(s)
        traj.energies.append(energy(s, grid, cfg.S))
    traj.nodes = nodes if keep_nodes else None
    return traj


def ie_residual(traj: Trajectory) -> float:
    """Largest change of one more Picard sweep applied to a converged trajectory.

    Needs a trajectory computed with ``keep_nodes=True``.
    """
    nodes = getattr(traj, "nodes", None)
    if not nodes:
        raise ValueError("trajectory was computed without keep_nodes=True")
    st = DuhamelStepper(traj.grid, traj.config)
    worst = 0.0
    for m, (us, Bs) in enumerate(nodes):
        s = traj.states[m]
        _, _, r = st.sweep(s.u, s.B, us, Bs)
        worst = max(worst, r)
    return worst


# -- public bilinear operators -----------------------------------------------------


def _node_times(t: float, q: int) -> np.ndarray:
    y, _ = gauss_nodes(q)
    return y * t


def _padded_spectrum(f_nodes, g_nodes, t, grid, family):
    sp = _Spectral(grid)
    q = f_nodes.shape[0]
    _, W = duhamel_weights(sp.k2, t, q)
    acc = 0
    for qi in range(q):
        fd, gd = sp.dealias(f_nodes[qi]), sp.dealias(g_nodes[qi])
        if family == "F":
            Nh = sp.project(sp.div_pairs(_outer(fd, gd), first_slot_derivative=False))
        else:
            Nh = sp.div_pairs(_outer(fd, gd), first_slot_derivative=True)
        acc = acc + W[q, qi] * Nh
    return acc


def high_band_fraction(f_nodes, g_nodes, t: float, grid: GridSpec, family: str = "G") -> float:
    """Energy share of the free-space bilinear output above 2/3 of the base Nyquist.

    Measured on the doubled grid before cropping: the cropped field carries
    its algebraic tail up to the box edge and is not periodic there.
    """
    f_nodes = np.asarray(f_nodes, dtype=float)
    g_nodes = np.asarray(g_nodes, dtype=float)
    acc = _padded_spectrum(f_nodes, g_nodes, t, grid, family)
    high = ~_Spectral(grid).band
    power = np.abs(acc) ** 2
    return float(power[:, high].sum() / power.sum())


def _bilinear(f_nodes, g_nodes, t, grid, family, method):
    f_nodes = np.asarray(f_nodes, dtype=float)
    g_nodes = np.asarray(g_nodes, dtype=float)
    if f_nodes.shape != g_nodes.shape or f_nodes.shape[1:] != (grid.d,) + grid.shape:
        raise ValueError("histories must have shape (nodes, d, *grid.shape)")
    q = f_nodes.shape[0]
    if t <= 0:
        return np.zeros(f_nodes.shape[1:])
    if method == "spectral":
        return _Spectral(grid).drop(_padded_spectrum(f_nodes, g_nodes, t, grid, family))
    if method == "kernel":
        _, w = gauss_nodes(q)
        s = _node_times(t, q)
        out = np.zeros(f_nodes.shape[1:])
        for qi in range(q):
            K = sample_kernel(family, t - s[qi], grid).values
            # G pairs its derivative index with the second product slot
            T = _outer(f_nodes[qi], g_nodes[qi]) if family == "F" else _outer(g_nodes[qi], f_nodes[qi])
            for k in range(grid.d):
                for (j, h), prod in T.items():
                    out[k] += w[qi] * t * free_convolve(K[k, j, h], prod, grid)
        return out
    raise ValueError("method must be 'spectral' or 'kernel'")


def bilinear_U(f_nodes, g_nodes, t: float, grid: GridSpec, method: str = "spectral") -> np.ndarray:
    """``U(f, g)(t)`` from histories sampled at the Gauss-Legendre nodes of ``(0, t)``.

    ``"spectral"`` integrates the polynomial interpolant of the product exactly
    against the heat factor; ``"kernel"`` applies Gauss-Legendre quadrature to
    sampled F kernels and rejects nodes whose kernel is unresolvable.
    """
    # the cropped algebraic tail is not periodic on the base box; re-project there
    return leray_project(_bilinear(f_nodes, g_nodes, t, grid, "F", method), grid)


def bilinear_Bop(f_nodes, g_nodes, t: float, grid: GridSpec, method: str = "spectral") -> np.ndarray:
    """``Bop(f, g)(t)``, the unprojected counterpart of :func:`bilinear_U` (``(f . grad) g``)."""
    return _bilinear(f_nodes, g_nodes, t, grid, "G", method)


def node_history(f: np.ndarray, q: int) -> np.ndarray:
    """Constant-in-time history of ``f`` at ``q`` nodes."""
    return np.broadcast_to(f, (q,) + f.shape).copy()


def bilinear_V(u_nodes, B_nodes, t: float, grid: GridSpec, S: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """``(U(u,u) - S U(B,B), Bop(u,B) - Bop(B,u))`` at time ``t``."""
    v1 = bilinear_U(u_nodes, u_nodes, t, grid) - S * bilinear_U(B_nodes, B_nodes, t, grid)
    v2 = bilinear_Bop(u_nodes, B_nodes, t, grid) - bilinear_Bop(B_nodes, u_nodes, t, grid)
    return v1, v2


# -- contraction constants ---------------------------------------------------------

SCALE_FAMILY = (0.75, 1.0, 1.5, 2.0, 3.0)


def _stream_bump(grid: GridSpec, width: float, shift: float = 0.0) -> np.ndarray:
    """Divergence-free field of unit sup norm from an elliptical Gaussian potential.

    The potential is a stream function in d = 2 and the last component of a
    vector potential in d = 3.  The 2:1 aspect ratio matters: a radial vortex
    is a steady Euler flow, so its projected self-interaction vanishes.
    """
    x = [np.broadcast_to(c, grid.shape) for c in grid.coords]
    x0 = x[0] - shift * width
    scales = [width, width / 2] + [width] * (grid.d - 2)
    psi = np.exp(-0.5 * ((x0 / scales[0]) ** 2 + sum((xi / s) ** 2 for xi, s in zip(x[1:], scales[1:]))))
    d0 = -x0 / scales[0] ** 2 * psi
    d1 = -x[1] / scales[1] ** 2 * psi
    if grid.d == 2:
        u = np.stack([-d1, d0])
    else:
        u = np.stack([d1, -d0, np.zeros(grid.shape)])
    return u / np.max(np.sqrt(np.sum(u**2, axis=0)))


def measure_bilinear_constant(
    T: float,
    grid: GridSpec,
    kind: str = "U",
    idx_in=None,
    idx_out=None,
    family=SCALE_FAMILY,
    quad_nodes: int = 4,
) -> float:
    """Lower estimate of the norm of ``f -> U(f, f)(T)`` (or ``Bop(f, g)``) on constant histories.

    The sup runs over divergence-free bumps of width ``c sqrt(T)``, ``c`` in ``family``,
    which is the scale-covariant probe set for the operator at time ``T``.
    """
    from mhdlab.weighted import WeightedIndex, weighted_norm

    idx_in = WeightedIndex(math.inf, 0.0) if idx_in is None else idx_in
    idx_out = WeightedIndex(math.inf, 0.0) if idx_out is None else idx_out
    best = 0.0
    for c in family:
        w = c * math.sqrt(T)
        f = _stream_bump(grid, w)
        hf = node_history(f, quad_nodes)
        if kind == "U":
            out = bilinear_U(hf, hf, T, grid)
            denom = weighted_norm(f, grid, idx_in) ** 2
        elif kind == "B":
            g = _stream_bump(grid, w, shift=0.5)
            hg = node_history(g, quad_nodes)
            out = bilinear_Bop(hf, hg, T, grid) - bilinear_Bop(hg, hf, T, grid)
            denom = weighted_norm(f, grid, idx_in) * weighted_norm(g, grid, idx_in)
        else:
            raise ValueError("kind must be 'U' or 'B'")
        best = max(best, weighted_norm(out, grid, idx_out) / denom)
    return best


@dataclass
class Calibration:
    """Power-law fit ``C_T = C T^gamma`` and the contraction horizons it implies."""

    C: float
    gamma: float
    gamma_stderr: float
    T_values: np.ndarray
    C_values: np.ndarray
    horizons: dict[float, float]
    c: float
    d: int
    T_max: float
    unconstrained: bool

    def horizon(self, norm: float) -> float:
        if norm <= 0:
            return self.T_max
        return min(self.T_max, (4 * self.C * norm) ** (-1 / self.gamma))


def contraction_calibrate(
    grid: GridSpec,
    d: int | None = None,
    T_values=(0.025, 0.05, 0.1, 0.2),
    norms=(0.5, 1.0, 2.0, 4.0, 8.0, 16.0),
    T_max: float = 8.0,
) -> Calibration:
    """Fit the operator-norm growth in ``T`` and derive the lifetime constant ``c``.

    The Picard map on the ball of radius ``2 |e^{t Lap} v0|`` contracts while
    ``4 C_T |v0| < 1``; the horizon for data norm ``a`` is therefore
    ``(4 C a)^{-1/gamma}``, capped at ``T_max``.  With sup-norm data the
    lifetime bound reads ``c a^{-2}``, so ``c`` is the median of
    ``horizon(a) a^2`` over uncapped ladder entries.
    """
    from scipy import stats

    d = grid.d if d is None else d
    if d != grid.d:
        raise ValueError("dimension mismatch between grid and d")
    Ts = np.asarray(T_values, dtype=float)
    Cs = np.array([measure_bilinear_constant(T, grid) for T in Ts])
    fit = stats.linregress(np.log(Ts), np.log(Cs))
    cal = Calibration(
        C=float(np.exp(fit.intercept)),
        gamma=float(fit.slope),
        gamma_stderr=float(fit.stderr),
        T_values=Ts,
        C_values=Cs,
        horizons={},
        c=0.0,
        d=d,
        T_max=T_max,
        unconstrained=(d == 2),
    )
    cal.horizons = {float(a): cal.horizon(a) for a in norms}
    scaled = [h * a**2 for a, h in cal.horizons.items() if h < T_max]
    cal.c = float(np.median(scaled)) if scaled else T_max
    return cal
