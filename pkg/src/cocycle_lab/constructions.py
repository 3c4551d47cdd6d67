"""Explicit constructions: separating functions, companion cocycles,
oscillating witness points, reference cocycles over rotations, and the
periodic-times-mixing product testbed.

The non-uniformity demonstration runs on the binary full shift rather
than a uniquely ergodic minimal system (constructing the latter is out
of desk-scale reach); the companion-cocycle mechanics are identical and
non-convergence at the witness point is exhibited directly.  All
constructions produce immutable values safe for concurrent evaluation.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import dynsys
from .cocycles import MatrixGenerator, SemiconjugacyError
from .dynsys import (
    CirclePoint,
    Point,
    ShiftPoint,
    SystemDescriptor,
    periodic_shift_point,
)


class DegenerateFactorError(ValueError):
    """Eigenfunction is constant: the induced circle factor collapses."""


# ---------------------------------------------------------------------------
# Separating functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleSet:
    """Closed-set proxy given by finitely many sample points."""

    points: tuple
    metric_fn: Callable[[Point, Point], float]

    def distance(self, x: Point) -> float:
        return min(self.metric_fn(x, s) for s in self.points)


@dataclass(frozen=True)
class ShiftBallComplement:
    """The closed set {y : d(y, center) >= 2^-levels} on the shift.

    Membership means disagreeing with the center somewhere in |k| <=
    levels; non-members sit at distance exactly 2^-levels (flip one
    symbol at |k| = levels), so distances are exact.
    """

    center: ShiftPoint
    levels: int

    def distance(self, y: ShiftPoint) -> float:
        j = self.levels
        wy = y.window(-j, j + 1)
        wc = self.center.window(-j, j + 1)
        return 0.0 if wy != wc else 2.0**-j


@dataclass(frozen=True)
class SeparatingFunction:
    """phi(x) = d(x, F) / (d(x, F) + d(x, E)): 1 on E, 0 on F, in [0, 1]."""

    e_set: object
    f_set: object

    def __call__(self, x: Point) -> float:
        df = self.f_set.distance(x)
        if df == 0.0:
            return 0.0
        de = self.e_set.distance(x)
        return df / (df + de)


def separating_function(e_samples, f_samples, metric_fn) -> SeparatingFunction:
    """Build phi from sample sets (or any object with .distance for F).

    Rejects overlapping sets: the formula is ill-defined where both
    distances vanish.
    """
    if not e_samples:
        raise ValueError("E needs at least one sample")
    e_set = SampleSet(tuple(e_samples), metric_fn)
    if hasattr(f_samples, "distance"):
        f_set = f_samples
    else:
        if not f_samples:
            raise ValueError("F needs at least one sample")
        f_set = SampleSet(tuple(f_samples), metric_fn)
    gap = min(f_set.distance(e) for e in e_set.points)
    if isinstance(f_set, SampleSet):
        gap = min(gap, min(e_set.distance(f) for f in f_set.points))
    if gap <= 0.0:
        raise ValueError("E and F samples overlap: separation gap is zero")
    return SeparatingFunction(e_set, f_set)


def witness_separating_function() -> SeparatingFunction:
    """The shift-testbed phi: E = {(01)^inf}, F = {y : d(y, (01)^inf) >= 1/4}.

    Values are exact: 0 on any point disagreeing with (01)^inf within
    |k| <= 2, and (1/4)/(1/4 + 2^-m) at first disagreement m > 2.
    """
    w = periodic_shift_point("01")
    shift = dynsys.shift_system()
    return separating_function([w], ShiftBallComplement(w, 2), shift.metric_fn)


# ---------------------------------------------------------------------------
# Companion cocycle and phase averages
# ---------------------------------------------------------------------------


def companion_cocycle(phi: Callable[[Point], float], p: int) -> MatrixGenerator:
    """The p x p generator with superdiagonal identity and e^{phi} corner;
    its p-th step is diag(e^{phi(x)}, ..., e^{phi(f^{p-1} x)}) exactly."""
    if p < 2:
        raise ValueError(f"companion dimension must be >= 2, got {p}")
    exp = math.exp

    def mat(x):
        M = np.zeros((p, p))
        for i in range(p - 1):
            M[i, i + 1] = 1.0
        M[p - 1, 0] = exp(phi(x))
        return M

    def inv(x):
        M = np.zeros((p, p))
        M[0, p - 1] = exp(-phi(x))
        for i in range(p - 1):
            M[i + 1, i] = 1.0
        return M

    e2 = e2i = None
    if p == 2:
        e2 = lambda x: (0.0, 1.0, exp(phi(x)), 0.0)
        e2i = lambda x: (0.0, exp(-phi(x)), 1.0, 0.0)
    return MatrixGenerator(
        dimension=p,
        matrix=mat,
        inverse=inv,
        name=f"companion(p={p})",
        entries2=e2,
        entries2_inv=e2i,
    )


def phase_average(
    phi: Callable[[Point], float],
    system: SystemDescriptor,
    x: Point,
    n: int,
    p: int,
) -> float:
    """(1/p) max over residues r of the n-term Birkhoff mean of phi along
    f^{ip+r}; equals (1/np) log||A(np, x)||_inf for the companion cocycle."""
    if n < 1 or p < 2:
        raise ValueError(f"need n >= 1 and p >= 2, got n={n} p={p}")
    sums = [0.0] * p
    for i, point in enumerate(dynsys.orbit(system, x, n * p, 1)):
        sums[i % p] += phi(point)
    return max(sums) / (n * p)


# ---------------------------------------------------------------------------
# Oscillating witness points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockSchedule:
    """Phase block lengths (in f^p steps), late blocks dominating."""

    lengths: tuple[int, ...]

    def __post_init__(self):
        ls = self.lengths
        if not ls or any(n < 1 for n in ls):
            raise ValueError("block lengths must be positive")
        if any(b <= a for a, b in zip(ls, ls[1:])):
            raise ValueError("block lengths must be strictly increasing")
        total = ls[0]
        for nxt in ls[1:]:
            if nxt < 2 * total:
                raise ValueError(
                    f"block {nxt} must be >= twice the preceding total {total}"
                )
            total += nxt

    @classmethod
    def geometric(cls, base: int = 4, count: int = 8) -> "BlockSchedule":
        return cls(tuple(base**k for k in range(1, count + 1)))


def oscillating_point(schedule: BlockSchedule) -> ShiftPoint:
    """A two-sided sequence alternating (01)^{n_k} and (10)^{n_k} blocks.

    Under the square of the shift its empirical measures keep two
    accumulation points: block interiors look like one phase of the
    period-2 orbit, and each block boundary carries the single repeated
    symbol that flips the phase.
    """
    blocks = tuple(
        ("01" if k % 2 == 0 else "10", n) for k, n in enumerate(schedule.lengths)
    )
    right = blocks[-1][0]
    return ShiftPoint(dynsys.ShiftProgram("01", blocks, right, 0), 0)


# ---------------------------------------------------------------------------
# Reference cocycle over rotations
# ---------------------------------------------------------------------------


def herman_reference(lam: float) -> MatrixGenerator:
    """A(theta) = diag(lam, 1/lam) . R(2 pi theta): the classical one-
    parameter family with |det| == 1, non-uniform over irrational
    rotations (growth evidence is probed, not proved here)."""
    if lam <= 1.0:
        raise ValueError(f"herman parameter must exceed 1, got {lam}")
    tau = 2.0 * math.pi
    cos, sin = math.cos, math.sin

    def ent(x):
        c, s = cos(tau * x.angle), sin(tau * x.angle)
        return (lam * c, -lam * s, s / lam, c / lam)

    def ent_inv(x):
        c, s = cos(tau * x.angle), sin(tau * x.angle)
        return (c / lam, s * lam, -s / lam, c * lam)

    return MatrixGenerator(
        dimension=2,
        matrix=lambda x: np.array(ent(x)).reshape(2, 2),
        inverse=lambda x: np.array(ent_inv(x)).reshape(2, 2),
        name=f"herman({lam})",
        entries2=ent,
        entries2_inv=ent_inv,
    )


def rotation_generator() -> MatrixGenerator:
    """A(theta) = R(2 pi theta): orthogonal, zero growth in the 2-norm;
    the boundary case the herman family approaches as lam -> 1."""
    tau = 2.0 * math.pi
    cos, sin = math.cos, math.sin

    def ent(x):
        c, s = cos(tau * x.angle), sin(tau * x.angle)
        return (c, -s, s, c)

    def ent_inv(x):
        c, s = cos(tau * x.angle), sin(tau * x.angle)
        return (c, s, -s, c)

    return MatrixGenerator(
        dimension=2,
        matrix=lambda x: np.array(ent(x)).reshape(2, 2),
        inverse=lambda x: np.array(ent_inv(x)).reshape(2, 2),
        name="rotation_generator",
        entries2=ent,
        entries2_inv=ent_inv,
    )


# ---------------------------------------------------------------------------
# Circle factors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CircleFactor:
    """A factor map onto a circle rotation, with the fitted angle."""

    map: Callable[[Point], CirclePoint]
    alpha: float


def circle_factor(
    system: SystemDescriptor,
    eigen_map: Callable[[Point], complex],
    seed: int = 0,
    sample_count: int = 16,
    tol: float = 1e-9,
) -> CircleFactor:
    """Normalize a nonvanishing eigenfunction to a circle factor map.

    The rotation angle is fitted from one probe pair and validated on the
    whole sample; a constant eigenfunction is rejected as degenerate.
    """
    tau = 2.0 * math.pi

    def pi_map(x: Point) -> CirclePoint:
        z = eigen_map(x)
        if z == 0:
            raise ValueError("eigenfunction vanishes at a probe point")
        return CirclePoint((cmath.phase(z) / tau) % 1.0)

    pts = dynsys.sample(system, seed, sample_count)
    images = [pi_map(x) for x in pts]
    spread = max(
        dynsys._circle_metric(a, b) for a in images for b in images
    )
    if spread < 1e-12:
        raise DegenerateFactorError(
            "eigenfunction is constant on the sample: factor collapses to a point"
        )
    x0 = pts[0]
    alpha = (pi_map(dynsys.step(system, x0, 1)).angle - pi_map(x0).angle) % 1.0
    defect = 0.0
    for x in pts:
        lhs = pi_map(dynsys.step(system, x, 1))
        rhs = CirclePoint((pi_map(x).angle + alpha) % 1.0)
        defect = max(defect, dynsys._circle_metric(lhs, rhs))
    if defect > tol:
        raise SemiconjugacyError(
            f"pi o f != R_alpha o pi: max defect {defect:.3e} exceeds {tol:.1e}"
        )
    return CircleFactor(map=pi_map, alpha=alpha)


# ---------------------------------------------------------------------------
# Product testbed
# ---------------------------------------------------------------------------


def _is_prime(p: int) -> bool:
    if p < 2:
        return False
    f = 2
    while f * f <= p:
        if p % f == 0:
            return False
        f += 1
    return True


@dataclass(frozen=True)
class ProductTestbed:
    """cycle(p) x base with the expected decomposition structure of powers:
    a single component for g^i (i < p), p distinct components for g^p."""

    system: SystemDescriptor
    p: int
    expectations: dict
    warnings: tuple[str, ...]


def product_testbed(p: int, base: Optional[SystemDescriptor] = None) -> ProductTestbed:
    if not _is_prime(p):
        raise ValueError(f"testbed period must be prime, got {p}")
    if base is None:
        base = dynsys.torus_automorphism_system([[2, 1], [1, 1]])
    system = dynsys.product_system(dynsys.cycle_system(p), base)
    expectations = {i: "single" for i in range(1, p)}
    expectations[p] = "distinct"
    warnings = ()
    if not base.mixing:
        warnings = (
            f"base {base.name} not mixing: product-ergodicity hypotheses unmet",
        )
    return ProductTestbed(
        system=system, p=p, expectations=expectations, warnings=warnings
    )
