"""Phase spaces, invertible maps, metrics, and reference-measure samplers.

Supported systems: circle rotations, finite cycles, hyperbolic toral
automorphisms, the two-sided binary full shift, and finite products of
these.  Everything is an immutable value and every operation is pure
given (seed, inputs), so concurrent evaluation is safe.

Long-orbit arithmetic for the float systems is done over exact dyadic
rationals internally (Python integers), so iterating 10^6-10^7 steps
produces no drift: group-action identities hold to the last bit for
cycle/shift/torus orbits and to one output rounding for rotations.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator, NamedTuple, Union

import numpy as np

GOLDEN_ALPHA = (math.sqrt(5.0) - 1.0) / 2.0

# Coordinates of torus points are snapped to this grid so that integer
# matrix dynamics stay exact under mod-1 arithmetic (hyperbolic maps
# amplify any rounding exponentially; on the grid there is none).
_TORUS_GRID = 1 << 53


class PointKindError(TypeError):
    """A point was fed to a system of a different phase-space kind."""


class BudgetExceededError(RuntimeError):
    """Cumulative map applications exceeded the configured budget."""


class InvalidSystemError(ValueError):
    """System parameters violate a documented precondition."""


class Budget:
    """Caps total map applications; shared mutable counter.

    One product-system step counts as one application.  Orbit walks of
    n points at stride q charge n*q.
    """

    def __init__(self, limit: int = 10**9):
        self.limit = int(limit)
        self.used = 0

    def charge(self, amount: int) -> None:
        self.used += int(amount)
        if self.used > self.limit:
            raise BudgetExceededError(
                f"orbit budget exceeded: {self.used} > {self.limit} map applications"
            )


_BUDGET = Budget()


def get_budget() -> Budget:
    return _BUDGET


def set_budget(budget: Budget) -> None:
    global _BUDGET
    _BUDGET = budget


def reset_budget(limit: int = 10**9) -> Budget:
    set_budget(Budget(limit))
    return _BUDGET


# ---------------------------------------------------------------------------
# Points
# ---------------------------------------------------------------------------


class CirclePoint(NamedTuple):
    angle: float  # in [0, 1)


class CyclePoint(NamedTuple):
    index: int
    modulus: int


class TorusPoint(NamedTuple):
    a: float  # in [0, 1), on the 2^-53 grid
    b: float


def _primitive_root(word: str) -> str:
    """Smallest word u with word == u repeated."""
    n = len(word)
    for p in range(1, n + 1):
        if n % p == 0 and word == word[:p] * (n // p):
            return word[:p]
    return word


@dataclass(frozen=True)
class ShiftProgram:
    """Finite description of a two-sided binary sequence.

    Positions j < start tile with `left` via left[(j - start) % len(left)];
    positions in [start, end) walk the block list (pattern, repeats);
    positions j >= end tile with `right` via right[(j - end) % len(right)].
    Symbol access is O(log #blocks) through a cumulative-offset bisect.
    """

    left: str
    blocks: tuple[tuple[str, int], ...]
    right: str
    start: int = 0

    def __post_init__(self):
        if not self.left or not self.right:
            raise ValueError("tail patterns must be nonempty")
        for pat in (self.left, self.right):
            if set(pat) - {"0", "1"}:
                raise ValueError(f"pattern {pat!r} must be binary")
        for pat, rep in self.blocks:
            if not pat or set(pat) - {"0", "1"} or rep < 1:
                raise ValueError(f"bad block ({pat!r}, {rep})")

    @cached_property
    def _bounds(self) -> tuple[int, ...]:
        out = [self.start]
        for pat, rep in self.blocks:
            out.append(out[-1] + len(pat) * rep)
        return tuple(out)

    @property
    def end(self) -> int:
        return self._bounds[-1]

    def symbol(self, j: int) -> int:
        if j < self.start:
            return int(self.left[(j - self.start) % len(self.left)])
        if j >= self.end:
            return int(self.right[(j - self.end) % len(self.right)])
        i = bisect_right(self._bounds, j) - 1
        pat, _ = self.blocks[i]
        return int(pat[(j - self._bounds[i]) % len(pat)])

    def window(self, lo: int, hi: int) -> str:
        """Symbols at positions [lo, hi) as a '01' string (bulk extraction)."""
        if hi <= lo:
            return ""
        parts = []
        j = lo
        if j < self.start:
            k = min(hi, self.start)
            off = (j - self.start) % len(self.left)
            reps = (k - j + off) // len(self.left) + 2
            parts.append((self.left * reps)[off:off + (k - j)])
            j = k
        bi = bisect_right(self._bounds, j) - 1 if j < self.end else len(self.blocks)
        while j < min(hi, self.end):
            pat, _ = self.blocks[bi]
            bend = self._bounds[bi + 1]
            k = min(hi, bend)
            off = (j - self._bounds[bi]) % len(pat)
            reps = (k - j + off) // len(pat) + 2
            parts.append((pat * reps)[off:off + (k - j)])
            j = k
            bi += 1
        if j < hi:
            off = (j - self.end) % len(self.right)
            reps = (hi - j + off) // len(self.right) + 2
            parts.append((self.right * reps)[off:off + (hi - j)])
        return "".join(parts)

    @cached_property
    def canonical(self) -> tuple[str, str, str, int]:
        """Canonical (left, core, right, start): unique per represented sequence.

        The core is trimmed into the tails as far as symbols match their
        periodic extensions, tail patterns are reduced to primitive roots
        (safe: an anchored tiling by u^m equals the tiling by u), and a
        fully periodic sequence collapses to anchor 0.
        """
        full = self.window(self.start, self.end)
        left, right = self.left, self.right
        L, R = len(left), len(right)
        lo, hi = 0, len(full)
        # absorbing a matching symbol rotates the tail pattern by one
        while lo < hi and full[lo] == left[lo % L]:
            lo += 1
        nright = 0
        while lo < hi and full[hi - 1] == right[(R - 1 - nright) % R]:
            hi -= 1
            nright += 1
        left = left[lo % L:] + left[:lo % L]
        right = right[-(nright % R):] + right[:-(nright % R)] if nright % R else right
        left = _primitive_root(left)
        right = _primitive_root(right)
        core = full[lo:hi]
        start = self.start + lo
        if not core and len(left) == len(right) and left == right:
            p = len(left)
            u0 = "".join(left[(i - start) % p] for i in range(p))
            return (u0, "", u0, 0)
        return (left, core, right, start)


class ShiftPoint(NamedTuple):
    program: ShiftProgram
    offset: int = 0

    def symbol(self, k: int) -> int:
        return self.program.symbol(k + self.offset)

    def window(self, lo: int, hi: int) -> str:
        return self.program.window(lo + self.offset, hi + self.offset)

    def canonical(self) -> tuple[str, str, str, int]:
        left, core, right, start = self.program.canonical
        if not core and left == right and start == 0:
            p = len(left)
            r = self.offset % p
            u = left[r:] + left[:r]
            return (u, "", u, 0)
        return (left, core, right, start - self.offset)

    def same_sequence(self, other: "ShiftPoint") -> bool:
        if self.program is other.program and self.offset == other.offset:
            return True
        return self.canonical() == other.canonical()


class ProductPoint(NamedTuple):
    left: "Point"
    right: "Point"


Point = Union[CirclePoint, CyclePoint, TorusPoint, ShiftPoint, ProductPoint]


def circle_point(angle: float) -> CirclePoint:
    return CirclePoint(angle % 1.0)


def cycle_point(index: int, modulus: int) -> CyclePoint:
    if modulus < 1:
        raise InvalidSystemError(f"cycle modulus must be >= 1, got {modulus}")
    return CyclePoint(index % modulus, modulus)


def torus_point(a: float, b: float) -> TorusPoint:
    return TorusPoint(
        (round((a % 1.0) * _TORUS_GRID) % _TORUS_GRID) / _TORUS_GRID,
        (round((b % 1.0) * _TORUS_GRID) % _TORUS_GRID) / _TORUS_GRID,
    )


def periodic_shift_point(word: str, offset: int = 0) -> ShiftPoint:
    """The two-sided periodic sequence (word)^inf, symbol(0) = word[0] at offset 0."""
    return ShiftPoint(ShiftProgram(word, (), word, 0), offset)


def shift_point(left: str, blocks, right: str, start: int = 0, offset: int = 0) -> ShiftPoint:
    return ShiftPoint(ShiftProgram(left, tuple(blocks), right, start), offset)


# ---------------------------------------------------------------------------
# System descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemDescriptor:
    """A named invertible dynamical system over one point kind.

    `step_fn(x, k)` is f^k including negative k; `orbit_fn(x, n, q)` yields
    the n points x, f^q x, ..., f^{(n-1)q} x incrementally; `metric_fn` is
    the phase-space metric; `sample_fn(rng, count)` draws from the
    designated reference measure.  Budget accounting lives in the public
    wrappers `step` / `orbit` / `sample`, not in the closures.
    """

    name: str
    point_kind: str
    params: dict
    step_fn: Callable[[Point, int], Point] = field(repr=False)
    orbit_fn: Callable[[Point, int, int], Iterator[Point]] = field(repr=False)
    metric_fn: Callable[[Point, Point], float] = field(repr=False)
    sample_fn: Callable[[np.random.Generator, int], list] = field(repr=False)
    mixing: bool = False

    def check_point(self, x: Point) -> None:
        if _kind_of(x) != self.point_kind:
            raise PointKindError(
                f"system {self.name} expects a {self.point_kind} point, "
                f"got {type(x).__name__}"
            )


def _kind_of(x: Point) -> str:
    if isinstance(x, CirclePoint):
        return "circle"
    if isinstance(x, CyclePoint):
        return "cycle"
    if isinstance(x, TorusPoint):
        return "torus"
    if isinstance(x, ShiftPoint):
        return "shift"
    if isinstance(x, ProductPoint):
        return "product"
    raise PointKindError(f"not a phase-space point: {type(x).__name__}")


def step(system: SystemDescriptor, x: Point, k: int) -> Point:
    """f^k(x); composes additively and inverts exactly (k < 0 allowed)."""
    system.check_point(x)
    _BUDGET.charge(abs(k))
    return system.step_fn(x, k)


def orbit(system: SystemDescriptor, x: Point, n: int, q: int = 1) -> Iterator[Point]:
    """Yield x, f^q x, f^{2q} x, ..., f^{(n-1)q} x (n points)."""
    system.check_point(x)
    if n < 1:
        raise ValueError(f"orbit length must be >= 1, got {n}")
    _BUDGET.charge(n * abs(q))
    return system.orbit_fn(x, n, q)


def metric(system: SystemDescriptor, x: Point, y: Point) -> float:
    system.check_point(x)
    system.check_point(y)
    return system.metric_fn(x, y)


def sample(system: SystemDescriptor, seed: int, count: int) -> list:
    """Deterministic sample of `count` points from the reference measure."""
    if count < 1:
        raise ValueError(f"sample count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    return system.sample_fn(rng, count)


# -- circle rotation --------------------------------------------------------


def _rot_step(x: CirclePoint, k: int, an: int, ad: int) -> CirclePoint:
    # frac(angle + k*alpha) over exact dyadic rationals; one output rounding
    px, qx = x.angle.as_integer_ratio()
    q = max(qx, ad)
    num = (px * (q // qx) + k * an * (q // ad)) % q
    return CirclePoint(num / q)


def _rot_orbit(x: CirclePoint, n: int, q: int, an: int, ad: int) -> Iterator[CirclePoint]:
    px, qx = x.angle.as_integer_ratio()
    den = max(qx, ad)
    num = px * (den // qx)
    stride = (q * an * (den // ad)) % den
    for _ in range(n):
        yield CirclePoint(num / den)
        num = (num + stride) % den


def _circle_metric(x: CirclePoint, y: CirclePoint) -> float:
    d = abs(x.angle - y.angle)
    return min(d, 1.0 - d)


def rotation_system(alpha: float) -> SystemDescriptor:
    """Rigid rotation by alpha on the circle; Lebesgue reference measure."""
    if not 0.0 < alpha < 1.0:
        raise InvalidSystemError(f"rotation angle must be in (0, 1), got {alpha}")
    an, ad = float(alpha).as_integer_ratio()
    return SystemDescriptor(
        name=f"rotation({alpha!r})",
        point_kind="circle",
        params={"kind": "rotation", "alpha": alpha},
        step_fn=lambda x, k: _rot_step(x, k, an, ad),
        orbit_fn=lambda x, n, q: _rot_orbit(x, n, q, an, ad),
        metric_fn=_circle_metric,
        sample_fn=lambda rng, count: [CirclePoint(a) for a in rng.random(count)],
        mixing=False,
    )


# -- finite cycle ------------------------------------------------------------


def _cycle_metric(x: CyclePoint, y: CyclePoint) -> float:
    return 0.0 if x.index == y.index else 1.0


def cycle_system(p: int) -> SystemDescriptor:
    """Rotation on p points; uniform reference measure; all arithmetic exact."""
    if p < 1:
        raise InvalidSystemError(f"cycle length must be >= 1, got {p}")

    def orb(x, n, q):
        i = x.index
        s = q % p
        for _ in range(n):
            yield CyclePoint(i, p)
            i = (i + s) % p

    return SystemDescriptor(
        name=f"cycle({p})",
        point_kind="cycle",
        params={"kind": "cycle", "p": p},
        step_fn=lambda x, k: CyclePoint((x.index + k) % p, p),
        orbit_fn=orb,
        metric_fn=_cycle_metric,
        sample_fn=lambda rng, count: [
            CyclePoint(int(i), p) for i in rng.integers(0, p, count)
        ],
        mixing=False,
    )


# -- hyperbolic toral automorphism ------------------------------------------


def _mat2_mul(A, B):
    return (
        A[0] * B[0] + A[1] * B[2],
        A[0] * B[1] + A[1] * B[3],
        A[2] * B[0] + A[3] * B[2],
        A[2] * B[1] + A[3] * B[3],
    )


def _mat2_pow(M, k: int):
    R = (1, 0, 0, 1)
    base = M
    while k:
        if k & 1:
            R = _mat2_mul(R, base)
        base = _mat2_mul(base, base)
        k >>= 1
    return R


def _torus_ints(x: TorusPoint) -> tuple[int, int]:
    return round(x.a * _TORUS_GRID), round(x.b * _TORUS_GRID)


def torus_automorphism_system(matrix) -> SystemDescriptor:
    """Automorphism of the 2-torus by an integer matrix with |det| = 1.

    Requires hyperbolicity (no eigenvalue on the unit circle).  Dynamics
    run on the 2^-53 coordinate grid with exact integer arithmetic, so
    forward/backward iteration is an exact group action.
    """
    M = [[int(matrix[i][j]) for j in range(2)] for i in range(2)]
    if any(M[i][j] != matrix[i][j] for i in range(2) for j in range(2)):
        raise InvalidSystemError(f"matrix entries must be integers, got {matrix}")
    det = M[0][0] * M[1][1] - M[0][1] * M[1][0]
    tr = M[0][0] + M[1][1]
    if abs(det) != 1:
        raise InvalidSystemError(f"matrix must have |det| = 1, got det = {det}")
    if (det == 1 and abs(tr) <= 2) or (det == -1 and tr == 0):
        raise InvalidSystemError(
            f"matrix {M} has an eigenvalue on the unit circle (not hyperbolic)"
        )
    F = (M[0][0], M[0][1], M[1][0], M[1][1])
    # integer inverse: adj / det with det = +-1
    Finv = (det * M[1][1], -det * M[0][1], -det * M[1][0], det * M[0][0])

    def stp(x, k):
        pa, pb = _torus_ints(x)
        P = _mat2_pow(F if k >= 0 else Finv, abs(k))
        na = (P[0] * pa + P[1] * pb) % _TORUS_GRID
        nb = (P[2] * pa + P[3] * pb) % _TORUS_GRID
        return TorusPoint(na / _TORUS_GRID, nb / _TORUS_GRID)

    def orb(x, n, q):
        pa, pb = _torus_ints(x)
        P = _mat2_pow(F if q >= 0 else Finv, abs(q))
        for _ in range(n):
            yield TorusPoint(pa / _TORUS_GRID, pb / _TORUS_GRID)
            pa, pb = (
                (P[0] * pa + P[1] * pb) % _TORUS_GRID,
                (P[2] * pa + P[3] * pb) % _TORUS_GRID,
            )

    def met(x, y):
        return max(
            _circle_metric(CirclePoint(x.a), CirclePoint(y.a)),
            _circle_metric(CirclePoint(x.b), CirclePoint(y.b)),
        )

    return SystemDescriptor(
        name=f"torus_auto({M})",
        point_kind="torus",
        params={"kind": "torus_auto", "matrix": M},
        step_fn=stp,
        orbit_fn=orb,
        metric_fn=met,
        sample_fn=lambda rng, count: [
            torus_point(a, b) for a, b in rng.random((count, 2))
        ],
        mixing=True,
    )


# -- two-sided binary full shift ---------------------------------------------

SHIFT_METRIC_WINDOW = 64


def _shift_metric(x: ShiftPoint, y: ShiftPoint) -> float:
    # 2^-m at the first disagreement |k| = m; searched within the window,
    # beyond it sequences compare by exact (canonical) program equality
    W = SHIFT_METRIC_WINDOW
    wx = x.window(-W, W + 1)
    wy = y.window(-W, W + 1)
    if wx == wy:
        return 0.0 if x.same_sequence(y) else 2.0 ** (-W)
    best = None
    for k in range(0, W + 1):
        if wx[W + k] != wy[W + k] or wx[W - k] != wy[W - k]:
            best = k
            break
    return 2.0 ** (-best)


def _shift_sample(rng: np.random.Generator, count: int, halfwidth: int) -> list:
    # uniform Bernoulli proxy: random core on [-halfwidth, halfwidth] plus
    # random periodic tails; faithful for orbit segments within the core
    out = []
    for _ in range(count):
        core = "".join("01"[b] for b in rng.integers(0, 2, 2 * halfwidth + 1))
        ltail = "".join("01"[b] for b in rng.integers(0, 2, 64))
        rtail = "".join("01"[b] for b in rng.integers(0, 2, 64))
        out.append(
            ShiftPoint(ShiftProgram(ltail, ((core, 1),), rtail, -halfwidth), 0)
        )
    return out


def shift_system(core_halfwidth: int = 4096) -> SystemDescriptor:
    """Two-sided binary full shift; uniform Bernoulli reference sampler.

    Sampled points carry random cores of the given half-width, so sampled
    orbits look Bernoulli only out to roughly that horizon.
    """
    if core_halfwidth < 1:
        raise InvalidSystemError(f"core halfwidth must be >= 1, got {core_halfwidth}")
    return SystemDescriptor(
        name="shift",
        point_kind="shift",
        params={"kind": "shift", "halfwidth": core_halfwidth},
        step_fn=lambda x, k: ShiftPoint(x.program, x.offset + k),
        orbit_fn=lambda x, n, q: (
            ShiftPoint(x.program, x.offset + i * q) for i in range(n)
        ),
        metric_fn=_shift_metric,
        sample_fn=lambda rng, count: _shift_sample(rng, count, core_halfwidth),
        mixing=True,
    )


# -- products -----------------------------------------------------------------


def product_system(left: SystemDescriptor, right: SystemDescriptor) -> SystemDescriptor:
    """Product system (f x g); metric is the max of component distances."""

    def orb(x, n, q):
        lo = left.orbit_fn(x.left, n, q)
        ro = right.orbit_fn(x.right, n, q)
        for a, b in zip(lo, ro):
            yield ProductPoint(a, b)

    def samp(rng, count):
        ls = left.sample_fn(rng, count)
        rs = right.sample_fn(rng, count)
        return [ProductPoint(a, b) for a, b in zip(ls, rs)]

    def stp(x, k):
        left.check_point(x.left)
        right.check_point(x.right)
        return ProductPoint(left.step_fn(x.left, k), right.step_fn(x.right, k))

    return SystemDescriptor(
        name=f"product({left.name}, {right.name})",
        point_kind="product",
        params={"kind": "product", "left": left.params, "right": right.params},
        step_fn=stp,
        orbit_fn=orb,
        metric_fn=lambda x, y: max(
            left.metric_fn(x.left, y.left), right.metric_fn(x.right, y.right)
        ),
        sample_fn=samp,
        mixing=left.mixing and right.mixing,
    )


# ---------------------------------------------------------------------------
# Parameter-record construction
# ---------------------------------------------------------------------------


def make_system(spec) -> SystemDescriptor:
    """Build a system from a parameter record (nested dict, string values ok).

    Kinds: rotation(alpha), cycle(p), torus_auto(matrix), shift([halfwidth]),
    product(left, right).
    """
    if isinstance(spec, SystemDescriptor):
        return spec
    kind = spec.get("kind")
    if kind == "rotation":
        return rotation_system(float(spec["alpha"]))
    if kind == "cycle":
        return cycle_system(int(spec["p"]))
    if kind == "torus_auto":
        m = spec["matrix"]
        if isinstance(m, str):
            vals = [int(v) for v in m.split()]
            if len(vals) != 4:
                raise InvalidSystemError(f"matrix needs 4 integers, got {m!r}")
            m = [vals[:2], vals[2:]]
        return torus_automorphism_system(m)
    if kind == "shift":
        hw = spec.get("halfwidth", 4096)
        return shift_system(int(hw))
    if kind == "product":
        return product_system(make_system(spec["left"]), make_system(spec["right"]))
    raise InvalidSystemError(f"unknown system kind: {kind!r}")
