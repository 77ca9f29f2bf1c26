"""Exponent arithmetic: admissibility predicates, region classifier, barriers, sigma exponents.

Numbers are kept as :class:`fractions.Fraction` whenever the input is rational
(ints, Fractions, or floats that are within 1e-12 of a small-denominator
rational) so that region boundaries are decided exactly.  ``math.inf`` stands
for an infinite integrability exponent, with ``1/inf = 0``.

The epsilon convention ``A <= B - eps_t`` means ``A <= B`` when ``t == 0`` and
``A < B`` otherwise; it is compiled by :func:`eps_le`.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

GUARD = 1e-12
INF = math.inf


def exact(x):
    """Fraction for rational-looking input, ``math.inf`` for infinity, float otherwise."""
    if isinstance(x, (Fraction, int)) and not isinstance(x, bool):
        return Fraction(x)
    if isinstance(x, str):
        if x.strip().lower() in ("inf", "+inf", "infinity"):
            return INF
        return exact(Fraction(x.strip()))
    x = float(x)
    if math.isinf(x):
        return INF if x > 0 else -INF
    fr = Fraction(x).limit_denominator(10**6)
    if abs(float(fr) - x) < GUARD:
        return fr
    return x


def inv(p):
    """``1/p`` with ``1/inf = 0``."""
    p = exact(p)
    if p == INF:
        return Fraction(0)
    return 1 / p if isinstance(p, Fraction) else 1.0 / p


def pos(x):
    """Positive part."""
    return x if x > 0 else Fraction(0)


def _is_exact(*xs) -> bool:
    return all(isinstance(x, Fraction) or x in (INF, -INF) for x in xs)


def is_zero(x) -> bool:
    return x == 0 if _is_exact(x) else abs(x) <= GUARD


def le(A, B) -> bool:
    return A <= B if _is_exact(A, B) else A <= B + GUARD


def lt(A, B) -> bool:
    return A < B if _is_exact(A, B) else A < B - GUARD


def eps_le(A, B, param) -> bool:
    """``A <= B - eps_param``."""
    return le(A, B) if is_zero(param) else lt(A, B)


@dataclass
class Verdict:
    admissible: bool
    failed_conditions: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.admissible

    @classmethod
    def from_checks(cls, checks: list[tuple[str, bool]], notes=None) -> "Verdict":
        failed = [name for name, ok in checks if not ok]
        return cls(not failed, failed, list(notes or []))


@dataclass(frozen=True)
class MhdIndices:
    """Integrability/weight exponents of ``(u0, B0) in L^{p0}_{theta0} x L^{p1}_{theta1}``."""

    d: int
    p0: object
    theta0: object
    p1: object
    theta1: object

    def __post_init__(self):
        for name in ("p0", "theta0", "p1", "theta1"):
            object.__setattr__(self, name, exact(getattr(self, name)))
        if self.d < 2:
            raise ValueError("d must be >= 2")

    @cached_property
    def inv_p0(self):
        return inv(self.p0)

    @cached_property
    def inv_p1(self):
        return inv(self.p1)

    @cached_property
    def eta0(self):
        return self.theta0 + self.d * self.inv_p0

    @cached_property
    def eta1(self):
        return self.theta1 + self.d * self.inv_p1

    @cached_property
    def delta(self):
        return pos(2 * self.d * self.inv_p1 - 1)

    @cached_property
    def p0_star(self) -> tuple[object, bool]:
        """``min{p0; d/delta - eps_delta}`` as ``(value, strict)``; strict means 'any value below'."""
        if is_zero(self.delta):
            return self.p0, False
        cap = self.d / self.delta
        if lt(self.p0, cap):
            return self.p0, False
        return cap, True

    @cached_property
    def holder_inverse(self):
        """``1/H(p0, p1) = 1/p0 + 1/p1``."""
        return self.inv_p0 + self.inv_p1

    def derived(self) -> dict:
        return {
            "eta0": self.eta0,
            "eta1": self.eta1,
            "delta": self.delta,
            "p0_star": self.p0_star,
            "holder_inverse": self.holder_inverse,
        }


def young_inverse(a, s):
    """``1/Y(a, s') = 1/a - 1/s``."""
    return inv(a) - inv(s)


def _base_checks(idx: MhdIndices, with_p1: bool) -> list[tuple[str, bool]]:
    d = idx.d
    checks = [
        ("theta0 >= 0", le(0, idx.theta0)),
        ("theta1 >= 0", le(0, idx.theta1)),
        ("d < p0 <= inf", lt(idx.inv_p0, Fraction(1, d))),
    ]
    if with_p1:
        checks.append(("d < p1 <= inf", lt(idx.inv_p1, Fraction(1, d))))
    return checks


def thm1_admissible(idx: MhdIndices) -> Verdict:
    """Hypotheses for weak (shell-averaged) decay: ``delta + eps_delta <= eta0 <= min{d+1; 2 eta1 - delta}``."""
    d = idx.d
    checks = _base_checks(idx, with_p1=True)
    checks += [
        ("delta + eps_delta <= eta0", eps_le(idx.delta, idx.eta0, idx.delta)),
        ("eta0 <= d+1", le(idx.eta0, d + 1)),
        ("eta0 <= 2 eta1 - delta", le(idx.eta0, 2 * idx.eta1 - idx.delta)),
    ]
    notes = [f"eps_delta {'strict' if not is_zero(idx.delta) else 'non-strict'} (delta={idx.delta})"]
    return Verdict.from_checks(checks, notes)


def _local_checks(idx: MhdIndices, suffix: str = "") -> list[tuple[str, bool]]:
    d = idx.d
    return [
        (f"eta0{suffix} <= d+1 - eps_1/p0", eps_le(idx.eta0, d + 1, idx.inv_p0)),
        (f"eta0{suffix} <= 2 eta1 - eps_(2theta1-theta0)", eps_le(idx.eta0, 2 * idx.eta1, 2 * idx.theta1 - idx.theta0)),
        (f"eta0{suffix} <= 2 eta1 + d/p0 - 2d/p1", le(idx.eta0, 2 * idx.eta1 + d * idx.inv_p0 - 2 * d * idx.inv_p1)),
    ]


def _hypo(idx: MhdIndices) -> bool:
    return lt(2 * idx.inv_p1, idx.inv_p0 + Fraction(1, idx.d))


def thm3_admissible(idx: MhdIndices) -> Verdict:
    """Hypotheses for persistence in the weighted space: (hypo) and the three eta0 ceilings."""
    checks = _base_checks(idx, with_p1=False)
    checks.append(("2/p1 < 1/p0 + 1/d", _hypo(idx)))
    checks += _local_checks(idx)
    return Verdict.from_checks(checks)


def prop2_admissible(idx: MhdIndices, other: MhdIndices) -> Verdict:
    """Lifetime-comparison hypotheses for two index sets sharing (p1,theta1) or (p0,theta0)."""
    if idx.d != other.d:
        raise ValueError("index sets must share d")
    share_b = (idx.p1, idx.theta1) == (other.p1, other.theta1)
    share_u = (idx.p0, idx.theta0) == (other.p0, other.theta0)
    if not (share_b or share_u):
        raise ValueError("index sets must share (p1, theta1) or (p0, theta0)")
    d = idx.d
    if share_b:
        checks = [
            ("theta0 >= 0", le(0, idx.theta0) and le(0, other.theta0)),
            ("theta1 >= 0", le(0, idx.theta1)),
            ("d < p0, p0~ <= inf", lt(idx.inv_p0, Fraction(1, d)) and lt(other.inv_p0, Fraction(1, d))),
            ("2/p1 < min{1/p0 + 1/d; 1/p0~ + 1/d}", _hypo(idx) and _hypo(other)),
        ]
        checks += _local_checks(idx) + _local_checks(other, "~")
        return Verdict.from_checks(checks, ["variant: shared (p1, theta1)"])
    checks = [
        ("theta0 >= 0", le(0, idx.theta0)),
        ("theta1 >= 0", le(0, idx.theta1) and le(0, other.theta1)),
        ("d < p0 <= inf", lt(idx.inv_p0, Fraction(1, d))),
        ("max{2/p1; 2/p1~} < 1/p0 + 1/d", _hypo(idx) and _hypo(other)),
        ("eta0 <= d+1 - eps_1/p0", eps_le(idx.eta0, d + 1, idx.inv_p0)),
        ("eta0 <= 2 eta1 - eps_(2theta1-theta0)", eps_le(idx.eta0, 2 * idx.eta1, 2 * idx.theta1 - idx.theta0)),
        ("eta0 <= 2 eta1~ - eps_(2theta1~-theta0)", eps_le(idx.eta0, 2 * other.eta1, 2 * other.theta1 - idx.theta0)),
        ("eta0 <= 2 eta1 + d/p0 - 2d/p1", le(idx.eta0, 2 * idx.eta1 + d * idx.inv_p0 - 2 * d * idx.inv_p1)),
        ("eta0 <= 2 eta1~ + d/p0 - 2d/p1~", le(idx.eta0, 2 * other.eta1 + d * idx.inv_p0 - 2 * d * other.inv_p1)),
    ]
    return Verdict.from_checks(checks, ["variant: shared (p0, theta0)"])


DARK, LIGHT, OUTSIDE = "dark_gray", "light_gray", "outside"


def region_classify(p0, theta0, p1, theta1, d: int) -> str:
    idx = MhdIndices(d, p0, theta0, p1, theta1)
    if thm3_admissible(idx):
        return DARK
    if thm1_admissible(idx):
        return LIGHT
    return OUTSIDE


def region_raster(d: int, p1, theta1, raster: int = 100, theta_max=None):
    """Classify a ``raster x raster`` lattice of ``(1/p0, theta0)`` in ``[0, 1/d) x [0, theta_max]``.

    Returns a list of ``(inv_p0, theta0, class)`` rows with exact rational coordinates.
    """
    theta_max = exact(d + 2 if theta_max is None else theta_max)
    rows = []
    for i in range(raster):
        ip0 = Fraction(i, raster * d)
        p0 = INF if ip0 == 0 else 1 / ip0
        for j in range(raster):
            th0 = theta_max * Fraction(j, raster - 1)
            rows.append((ip0, th0, region_classify(p0, th0, p1, theta1, d)))
    return rows


@dataclass(frozen=True)
class Barrier:
    q: object
    mu: object
    branch: str


def _barrier_ok(idx: MhdIndices, x, mu) -> bool:
    """Embedding ``L^{p0}_{theta0} subset L^q_mu`` (with d/q = x) lands in the dark region."""
    d = idx.d
    if not (le(0, mu) and le(d * idx.inv_p0, x) and lt(x, 1)):
        return False
    if not lt(mu + x, idx.eta0):
        return False
    q = INF if is_zero(x) else d / x
    return bool(thm3_admissible(MhdIndices(d, q, mu, idx.p1, idx.theta1)))


def embedding_barrier(idx: MhdIndices, eps) -> Barrier:
    """Intermediate space ``L^q_mu`` with ``mu + d/q = eta0 - eps`` reached by embedding.

    The case analysis follows the barrier lines of the admissibility diagram; when a
    case's own formula does not land in the weighted-persistence region (possible at
    the corners the case list does not single out), the midpoint of the feasible
    segment of ``d/q`` is used instead.
    """
    eps = exact(eps)
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if not thm1_admissible(idx):
        raise ValueError(f"indices not admissible: {thm1_admissible(idx).failed_conditions}")
    d = idx.d
    target = idx.eta0 - eps
    cands: list[tuple[str, object]] = []
    if le((d + 1 + idx.delta) / 2, idx.eta1):
        cands.append(("fast-B", d * idx.inv_p0))
    elif le(2 * d, idx.p1):
        if lt(2 * idx.theta1, idx.theta0):
            cands.append(("theta0>2theta1", idx.theta0 - 2 * idx.theta1 + d * idx.inv_p0 - eps))
        else:
            cands.append(("eta0=2eta1", d * idx.inv_p0))
    else:
        kappa = 1 - (idx.eta0 - idx.delta - eps) / (2 * (idx.eta1 - idx.delta))
        cands.append(("slow-B kappa", 1 - (1 - idx.delta) * kappa))
    for name, x in cands:
        if _barrier_ok(idx, x, target - x):
            return Barrier(INF if is_zero(x) else d / x, target - x, name)
    # feasible d/q: [max(d/p0, target - 2 theta1, 0), min(target, 1)) and above delta for (hypo)
    lo = max(d * idx.inv_p0, target - 2 * idx.theta1, Fraction(0))
    hi = min(target, Fraction(1))
    lo = max(lo, 2 * d * idx.inv_p1 - 1)
    x = (lo + hi) / 2
    if not _barrier_ok(idx, x, target - x):
        raise ValueError(f"no barrier for eps={eps}: feasible d/q interval [{lo}, {hi}) is empty (eps too large?)")
    return Barrier(INF if is_zero(x) else d / x, target - x, "feasible-midpoint")


@dataclass(frozen=True)
class SigmaExponents:
    sigma0: object
    sigma0_prime: object
    sigma1: object
    N: object

    def time_exponents(self, d: int) -> tuple:
        """Powers of T in the operator-norm bound of the bilinear map."""
        return (
            1 + self.sigma0 / 2,
            1 + self.sigma0_prime / 2,
            1 + (self.sigma1 + self.N - d - 1) / 2,
        )


def sigma_exponents(idx: MhdIndices) -> SigmaExponents:
    v = thm3_admissible(idx)
    if not v:
        raise ValueError(f"indices not admissible: {v.failed_conditions}")
    d = idx.d
    s0 = -1 - d * idx.inv_p0
    s0p = -1 - pos(2 * d * idx.inv_p1 - d * idx.inv_p0)
    N = max(Fraction(d + 1), idx.eta1)
    if not is_zero(idx.inv_p1):
        N = N + Fraction(1, 2)
    s1 = -N + d - d * idx.inv_p0
    assert lt(-2, s0) and lt(-2, s0p) and lt(-N + d - 1, s1), "sigma conditions violated"
    return SigmaExponents(s0, s0p, s1, N)


def lifetime_lower_bound(data_norm: float, idx: MhdIndices, c: float = 1.0) -> float:
    """``c min{1; |data|^{-2/(1-d/p0)}; |data|^{-2/(1-(2d/p1-d/p0)^+)}}``."""
    v = thm3_admissible(idx)
    if not v:
        raise ValueError(f"indices not admissible: {v.failed_conditions}")
    if data_norm < 0:
        raise ValueError("data norm must be >= 0")
    if data_norm == 0:
        return float(c)
    d = idx.d
    e1 = 2 / (1 - float(d * idx.inv_p0))
    e2 = 2 / (1 - float(pos(2 * d * idx.inv_p1 - d * idx.inv_p0)))
    return float(c) * min(1.0, data_norm ** (-e1), data_norm ** (-e2))


def time_unconstrained(idx: MhdIndices) -> bool:
    """In two dimensions the existence time can be taken arbitrarily large."""
    return idx.d == 2


def random_thm1_indices(rng: random.Random, d: int = 2, tries: int = 10_000) -> MhdIndices:
    """Draw a rational index set satisfying the weak-decay hypotheses."""
    for _ in range(tries):
        ip0 = Fraction(rng.randrange(0, 20), 20 * d) * Fraction(19, 20)
        ip1 = Fraction(rng.randrange(0, 20), 20 * d) * Fraction(19, 20)
        th1 = Fraction(rng.randrange(0, 40), 10)
        th0 = Fraction(rng.randrange(1, 40), 10)
        p0 = INF if ip0 == 0 else 1 / ip0
        p1 = INF if ip1 == 0 else 1 / ip1
        idx = MhdIndices(d, p0, th0, p1, th1)
        if thm1_admissible(idx):
            return idx
    raise RuntimeError("could not draw admissible indices")
