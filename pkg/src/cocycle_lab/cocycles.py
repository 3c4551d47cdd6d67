"""Matrix cocycle evaluation with overflow control and growth diagnostics.

Running products carry one power-of-two exponent per ROW, so neither the
whole product nor any individual row can over- or underflow across
10^6-10^7 steps; power-of-two rescaling is exact in binary floating
point.  Per-row scales matter: block-permutation generators (companion
cocycles) keep rows that never mix, and a momentarily-dominated row must
survive to carry later growth.  The inf-norm is the working norm;
verdicts are norm-independent and the suite cross-checks the 2-norm.

Generators are immutable and shareable.  Probe points evaluate
independently (optionally on a thread pool) and reports are assembled in
probe order, so results are identical across thread counts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import dynsys
from .dynsys import Point, SystemDescriptor

_LN2 = math.log(2.0)
_RESCALE_HI = 2.0**512
_RESCALE_LO = 2.0**-512


class SingularMatrixError(ArithmeticError):
    """A generator produced a singular or non-finite matrix along an orbit."""


class SemiconjugacyError(ValueError):
    """A claimed factor map failed validation; carries the max defect."""


@dataclass(frozen=True)
class MatrixGenerator:
    """x -> (invertible d x d matrix, its inverse).

    entries2/entries2_inv are optional flat (a, b, c, d) fast paths for
    d == 2 generators, used by the long-orbit loops; they must agree with
    matrix/inverse (the suite cross-checks).
    """

    dimension: int
    matrix: Callable[[Point], np.ndarray] = field(repr=False)
    inverse: Callable[[Point], np.ndarray] = field(repr=False)
    name: str = ""
    entries2: Optional[Callable[[Point], tuple]] = field(default=None, repr=False)
    entries2_inv: Optional[Callable[[Point], tuple]] = field(default=None, repr=False)


@dataclass(frozen=True)
class CocycleValue:
    """A(n, x) factored as unit * 2^pow2 with ||unit||_inf in [1/2, 2].

    Rows more than ~1000 binary orders below the top row flush to zero
    inside unit; they are invisible at output precision in any norm.
    """

    unit: np.ndarray
    pow2: int
    n: int

    @property
    def log_scale(self) -> float:
        return self.pow2 * _LN2

    def matrix(self) -> np.ndarray:
        """The represented matrix; exact power-of-two rescaling (may overflow
        for extreme exponents -- prefer log_norm for growth questions)."""
        return np.ldexp(self.unit, self.pow2)

    def log_norm(self, norm: str = "inf") -> float:
        return self.pow2 * _LN2 + math.log(_norm(self.unit, norm))


def _norm(m: np.ndarray, which: str) -> float:
    if which == "inf":
        return float(np.max(np.sum(np.abs(m), axis=1)))
    if which == "one":
        return float(np.max(np.sum(np.abs(m), axis=0)))
    if which == "two":
        return float(np.linalg.norm(m, 2))
    raise ValueError(f"unknown norm {which!r}")


def log_norm(value: CocycleValue, norm: str = "inf") -> float:
    return value.log_norm(norm)


def _check_finite(m: np.ndarray, j: int) -> None:
    if not np.all(np.isfinite(m)):
        raise SingularMatrixError(f"non-finite generator matrix at orbit step {j}")


_EXP_CLIP = 2100  # past this many binary orders a row scale is a hard 0/overflow


class _RowProduct:
    """Running matrix product with one power-of-two exponent per row.

    Represents diag(2^k) @ U; rows rescale independently when their abs
    sums leave [2^-512, 2^512].  Coefficients that are exactly zero never
    pull a foreign row's scale into the exponent bookkeeping, so rows of
    permutation-like generators keep their own histories.
    """

    def __init__(self, d: int):
        self.U = np.eye(d)
        self.k = np.zeros(d, dtype=np.int64)

    def apply(self, M: np.ndarray, j: int) -> None:
        k = self.k
        if (k == k[0]).all():
            W = M @ self.U
            m = np.full(len(k), k[0])
        else:
            mask = M != 0.0
            if not mask.any(axis=1).all():
                raise SingularMatrixError(f"zero generator row at orbit step {j}")
            K = np.where(mask, k[None, :], np.iinfo(np.int64).min)
            m = K.max(axis=1)
            diffs = np.clip(k[None, :] - m[:, None], -_EXP_CLIP, 0).astype(np.int32)
            W = np.ldexp(M, diffs) @ self.U
        rn = np.sum(np.abs(W), axis=1)
        if not np.all(np.isfinite(rn)) or np.any(rn == 0.0):
            raise SingularMatrixError(
                f"cocycle product degenerate at orbit step {j} (row sums {rn})"
            )
        bad = (rn < _RESCALE_LO) | (rn > _RESCALE_HI)
        if bad.any():
            e = np.where(bad, np.frexp(rn)[1], 0).astype(np.int32)
            W = np.ldexp(W, -e[:, None])
            m = m + e
        self.U = W
        self.k = m

    def log_norm_inf(self) -> float:
        rn = np.sum(np.abs(self.U), axis=1)
        return float(np.max(self.k * _LN2 + np.log(rn)))

    def value(self, n: int) -> CocycleValue:
        kmax = int(self.k.max())
        unit = np.ldexp(
            self.U, np.clip(self.k - kmax, -_EXP_CLIP, 0).astype(np.int32)[:, None]
        )
        nrm = _norm(unit, "inf")
        e = math.frexp(nrm)[1]
        return CocycleValue(np.ldexp(unit, -e), kmax + e, n)


def evaluate(
    gen: MatrixGenerator, system: SystemDescriptor, x: Point, n: int
) -> CocycleValue:
    """The ordered product A(f^{n-1}x)...A(x); identity at n = 0; the
    inverse chain A^{-1}(f^n x)...A^{-1}(f^{-1}x) for n < 0."""
    prod = _RowProduct(gen.dimension)
    if n != 0:
        if n > 0:
            points = dynsys.orbit(system, x, n, 1)
            fetch = gen.matrix
        else:
            points = dynsys.orbit(system, dynsys.step(system, x, -1), -n, -1)
            fetch = gen.inverse
        for j, point in enumerate(points):
            M = fetch(point)
            _check_finite(M, j)
            prod.apply(M, j)
    return prod.value(n)


def log_norm_profile(
    gen: MatrixGenerator,
    system: SystemDescriptor,
    x: Point,
    horizons: Sequence[int],
    norm: str = "inf",
) -> dict[int, float]:
    """log||A(n, x)|| at each horizon, computed in one incremental pass.

    Horizons must be positive and strictly increasing.
    """
    hs = list(horizons)
    if not hs or hs[0] < 1 or any(b <= a for a, b in zip(hs, hs[1:])):
        raise ValueError("horizons must be positive and strictly increasing")
    if gen.dimension == 2 and gen.entries2 is not None and norm == "inf":
        return _profile2(gen, system, x, hs)
    out: dict[int, float] = {}
    prod = _RowProduct(gen.dimension)
    nxt = 0
    for j, point in enumerate(dynsys.orbit(system, x, hs[-1], 1)):
        M = gen.matrix(point)
        _check_finite(M, j)
        prod.apply(M, j)
        if j + 1 == hs[nxt]:
            if norm == "inf":
                out[hs[nxt]] = prod.log_norm_inf()
            else:
                v = prod.value(j + 1)
                out[hs[nxt]] = v.log_norm(norm)
            nxt += 1
            if nxt == len(hs):
                break
    return out


def _profile2(gen, system, x, hs) -> dict[int, float]:
    # flat-float fast path for 2x2 generators, inf-norm only; same per-row
    # exponent scheme as _RowProduct
    out: dict[int, float] = {}
    u00, u01, k0 = 1.0, 0.0, 0
    u10, u11, k1 = 0.0, 1.0, 0
    nxt = 0
    entries = gen.entries2
    frexp, log, ldexp = math.frexp, math.log, math.ldexp
    j = 0
    for point in dynsys.orbit(system, x, hs[-1], 1):
        a, b, c, d = entries(point)
        if k0 == k1:
            w00 = a * u00 + b * u10
            w01 = a * u01 + b * u11
            w10 = c * u00 + d * u10
            w11 = c * u01 + d * u11
            m0 = m1 = k0
        else:
            if a != 0.0:
                m0 = k0 if (b == 0.0 or k0 >= k1) else k1
            elif b != 0.0:
                m0 = k1
            else:
                raise SingularMatrixError(f"zero generator row at orbit step {j}")
            if c != 0.0:
                m1 = k0 if (d == 0.0 or k0 >= k1) else k1
            elif d != 0.0:
                m1 = k1
            else:
                raise SingularMatrixError(f"zero generator row at orbit step {j}")
            s0 = ldexp(a, min(max(k0 - m0, -_EXP_CLIP), 0))
            s1 = ldexp(b, min(max(k1 - m0, -_EXP_CLIP), 0))
            w00 = s0 * u00 + s1 * u10
            w01 = s0 * u01 + s1 * u11
            s0 = ldexp(c, min(max(k0 - m1, -_EXP_CLIP), 0))
            s1 = ldexp(d, min(max(k1 - m1, -_EXP_CLIP), 0))
            w10 = s0 * u00 + s1 * u10
            w11 = s0 * u01 + s1 * u11
        r0 = abs(w00) + abs(w01)
        r1 = abs(w10) + abs(w11)
        if not _RESCALE_LO <= r0 <= _RESCALE_HI:
            if not math.isfinite(r0) or r0 == 0.0:
                raise SingularMatrixError(
                    f"cocycle product degenerate at orbit step {j} (row sum {r0})"
                )
            e = frexp(r0)[1]
            s = ldexp(1.0, -e)
            w00 *= s
            w01 *= s
            m0 += e
        if not _RESCALE_LO <= r1 <= _RESCALE_HI:
            if not math.isfinite(r1) or r1 == 0.0:
                raise SingularMatrixError(
                    f"cocycle product degenerate at orbit step {j} (row sum {r1})"
                )
            e = frexp(r1)[1]
            s = ldexp(1.0, -e)
            w10 *= s
            w11 *= s
            m1 += e
        u00, u01, k0 = w00, w01, m0
        u10, u11, k1 = w10, w11, m1
        j += 1
        if j == hs[nxt]:
            v0 = k0 * _LN2 + log(abs(u00) + abs(u01))
            v1 = k1 * _LN2 + log(abs(u10) + abs(u11))
            out[hs[nxt]] = v0 if v0 >= v1 else v1
            nxt += 1
            if nxt == len(hs):
                break
    return out


# ---------------------------------------------------------------------------
# Structural transforms
# ---------------------------------------------------------------------------


def normalize_det(gen: MatrixGenerator) -> MatrixGenerator:
    """Rescale pointwise to |det| == 1; growth rates shift by the Birkhoff
    average of (1/m) log|det|."""
    m = gen.dimension

    def mat(x):
        M = gen.matrix(x)
        return M / abs(np.linalg.det(M)) ** (1.0 / m)

    def inv(x):
        M = gen.matrix(x)
        return gen.inverse(x) * abs(np.linalg.det(M)) ** (1.0 / m)

    e2 = e2i = None
    if gen.entries2 is not None:

        def e2(x):
            a, b, c, d = gen.entries2(x)
            s = abs(a * d - b * c) ** -0.5
            return (a * s, b * s, c * s, d * s)

    if gen.entries2 is not None and gen.entries2_inv is not None:

        def e2i(x):
            a, b, c, d = gen.entries2(x)
            s = abs(a * d - b * c) ** 0.5
            ia, ib, ic, id_ = gen.entries2_inv(x)
            return (ia * s, ib * s, ic * s, id_ * s)

    return MatrixGenerator(
        dimension=m,
        matrix=mat,
        inverse=inv,
        name=f"detnorm({gen.name})",
        entries2=e2,
        entries2_inv=e2i,
    )


def pad(gen: MatrixGenerator, p: int) -> MatrixGenerator:
    """Embed a |det| == 1 generator block-diagonally into dimension p; the
    identity corner never carries the inf-norm, so growth is unchanged."""
    m = gen.dimension
    if p < m:
        raise ValueError(f"pad target {p} is below generator dimension {m}")
    if p == m:
        return gen

    def embed(block_fn):
        def mat(x):
            M = np.eye(p)
            M[:m, :m] = block_fn(x)
            return M

        return mat

    return MatrixGenerator(
        dimension=p,
        matrix=embed(gen.matrix),
        inverse=embed(gen.inverse),
        name=f"pad({gen.name}, {p})",
    )


def pullback(
    gen_on_y: MatrixGenerator,
    pi: Callable[[Point], Point],
    system_x: SystemDescriptor,
    system_y: SystemDescriptor,
    seed: int = 0,
    sample_count: int = 16,
    tol: float = 1e-9,
) -> MatrixGenerator:
    """Transport a generator along a factor map: B = A o pi.

    Validates the semiconjugacy pi o f = g o pi on a seeded sample and
    rejects with the maximum observed defect if it fails.
    """
    defect = 0.0
    for x in dynsys.sample(system_x, seed, sample_count):
        lhs = pi(dynsys.step(system_x, x, 1))
        rhs = dynsys.step(system_y, pi(x), 1)
        defect = max(defect, dynsys.metric(system_y, lhs, rhs))
    if defect > tol:
        raise SemiconjugacyError(
            f"pi o f != g o pi: max defect {defect:.3e} exceeds {tol:.1e}"
        )
    return MatrixGenerator(
        dimension=gen_on_y.dimension,
        matrix=lambda x: gen_on_y.matrix(pi(x)),
        inverse=lambda x: gen_on_y.inverse(pi(x)),
        name=f"pullback({gen_on_y.name})",
        entries2=(
            (lambda x: gen_on_y.entries2(pi(x))) if gen_on_y.entries2 else None
        ),
        entries2_inv=(
            (lambda x: gen_on_y.entries2_inv(pi(x))) if gen_on_y.entries2_inv else None
        ),
    )


# ---------------------------------------------------------------------------
# Generator factories
# ---------------------------------------------------------------------------


def constant_generator(matrix) -> MatrixGenerator:
    M = np.array(matrix, dtype=float)
    d = M.shape[0]
    if M.shape != (d, d):
        raise ValueError(f"matrix must be square, got shape {M.shape}")
    if abs(np.linalg.det(M)) == 0.0:
        raise ValueError("constant generator must be invertible")
    Minv = np.linalg.inv(M)
    e2 = e2i = None
    if d == 2:
        flat = (M[0, 0], M[0, 1], M[1, 0], M[1, 1])
        flat_inv = (Minv[0, 0], Minv[0, 1], Minv[1, 0], Minv[1, 1])
        e2 = lambda x: flat
        e2i = lambda x: flat_inv
    return MatrixGenerator(
        dimension=d,
        matrix=lambda x: M,
        inverse=lambda x: Minv,
        name=f"constant({M.tolist()})",
        entries2=e2,
        entries2_inv=e2i,
    )


def diagonal_exp_generator(
    g: Callable[[Point], float], name: str = "diagonal"
) -> MatrixGenerator:
    """A(x) = diag(e^{g(x)}, 1)."""
    exp = math.exp

    def mat(x):
        return np.array([[exp(g(x)), 0.0], [0.0, 1.0]])

    def inv(x):
        return np.array([[exp(-g(x)), 0.0], [0.0, 1.0]])

    return MatrixGenerator(
        dimension=2,
        matrix=mat,
        inverse=inv,
        name=name,
        entries2=lambda x: (exp(g(x)), 0.0, 0.0, 1.0),
        entries2_inv=lambda x: (exp(-g(x)), 0.0, 0.0, 1.0),
    )


def scale_generator(gen: MatrixGenerator, c: float) -> MatrixGenerator:
    """Multiply a generator by a constant c > 0."""
    if c <= 0:
        raise ValueError(f"scale must be positive, got {c}")
    e2 = e2i = None
    if gen.entries2 is not None:
        e2 = lambda x: tuple(c * v for v in gen.entries2(x))
    if gen.entries2_inv is not None:
        e2i = lambda x: tuple(v / c for v in gen.entries2_inv(x))
    return MatrixGenerator(
        dimension=gen.dimension,
        matrix=lambda x: c * gen.matrix(x),
        inverse=lambda x: gen.inverse(x) / c,
        name=f"{c} * {gen.name}",
        entries2=e2,
        entries2_inv=e2i,
    )


# ---------------------------------------------------------------------------
# Lyapunov estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubadditivityDiagnostics:
    """a_{n+m} <= (n a_n + m a_m)/(n+m) checks over schedule pairs.

    Each entry is (n, m, violation, bar); the reported bar is three
    combined batch-mean standard errors (plus an epsilon), the noise
    scale Monte Carlo fluctuations should stay inside.
    """

    pairs: tuple[tuple[int, int, float, float], ...]
    max_violation: float
    ok: bool


@dataclass(frozen=True)
class LambdaReport:
    estimate: float
    horizons: tuple[int, ...]
    means: tuple[float, ...]
    stderrs: tuple[float, ...]
    diagnostics: SubadditivityDiagnostics


def lambda_estimate(
    gen: MatrixGenerator,
    system: SystemDescriptor,
    seed: int,
    mc_count: int,
    n_schedule: Sequence[int],
) -> LambdaReport:
    """Monte Carlo estimate of the top exponent: min over the schedule of
    the sampled mean of (1/n) log||A(n, x)||_inf."""
    hs = list(n_schedule)
    if mc_count < 1:
        raise ValueError(f"need mc_count >= 1, got {mc_count}")
    if any(b <= a for a, b in zip(hs, hs[1:])) or not hs:
        raise ValueError("n_schedule must be nonempty and increasing")
    points = dynsys.sample(system, seed, mc_count)
    values = np.empty((mc_count, len(hs)))
    for i, x in enumerate(points):
        prof = log_norm_profile(gen, system, x, hs)
        values[i] = [prof[n] / n for n in hs]
    means = values.mean(axis=0)
    nb = min(10, mc_count)
    batches = np.array_split(values, nb, axis=0)
    bmeans = np.array([b.mean(axis=0) for b in batches])
    if nb > 1:
        stderrs = bmeans.std(axis=0, ddof=1) / math.sqrt(nb)
    else:
        stderrs = np.zeros(len(hs))
    idx = {n: i for i, n in enumerate(hs)}
    pairs = []
    max_v = 0.0
    ok = True
    for i, n in enumerate(hs):
        for m in hs[i:]:
            if n + m not in idx:
                continue
            k = idx[n + m]
            v = means[k] - (n * means[idx[n]] + m * means[idx[m]]) / (n + m)
            bar = 3.0 * (
                stderrs[k]
                + (n * stderrs[idx[n]] + m * stderrs[idx[m]]) / (n + m)
            ) + 1e-12
            pairs.append((n, m, float(v), float(bar)))
            max_v = max(max_v, v)
            if v > bar:
                ok = False
    diag = SubadditivityDiagnostics(tuple(pairs), max_v, ok)
    return LambdaReport(
        estimate=float(means.min()),
        horizons=tuple(hs),
        means=tuple(float(v) for v in means),
        stderrs=tuple(float(v) for v in stderrs),
        diagnostics=diag,
    )


# ---------------------------------------------------------------------------
# Uniformity probing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-horizon spread of (1/n) log||A(n, x)||_inf over a probe set.

    Finite horizons only gather evidence: uniform-consistent when the
    final spread and all per-point last gaps sit inside tol,
    non-uniform-evidence when some point oscillates by 10*tol inside the
    trailing factor-16 horizon window (or the final spread does).
    furman_flags lists probes whose final value exceeds the estimate by
    the heuristic margin 5*tol.
    """

    horizons: tuple[int, ...]
    values: tuple[tuple[float, ...], ...]  # probe-major
    mins: tuple[float, ...]
    maxs: tuple[float, ...]
    means: tuple[float, ...]
    spreads: tuple[float, ...]
    lambda_running: tuple[float, ...]
    lambda_estimate: float
    last_gaps: tuple[float, ...]
    oscillations: tuple[float, ...]
    furman_flags: tuple[int, ...]
    tol: float
    verdict: str


def uniformity_probe(
    gen: MatrixGenerator,
    system: SystemDescriptor,
    probes: Sequence[Point],
    n_schedule: Sequence[int],
    tol: float,
    threads: int = 1,
) -> ConvergenceReport:
    hs = list(n_schedule)
    if len(probes) < 2:
        raise ValueError("need at least 2 probe points")
    if len(hs) < 2 or any(b <= a for a, b in zip(hs, hs[1:])):
        raise ValueError("n_schedule must be increasing with >= 2 entries")
    if hs[-1] < 16 * hs[0]:
        raise ValueError("schedule must span a factor of at least 16")

    def one(x):
        prof = log_norm_profile(gen, system, x, hs)
        return tuple(prof[n] / n for n in hs)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(one, probes))
    else:
        values = [one(x) for x in probes]

    arr = np.array(values)
    mins = arr.min(axis=0)
    maxs = arr.max(axis=0)
    means = arr.mean(axis=0)
    spreads = maxs - mins
    lam_running = np.minimum.accumulate(means)
    lam = float(lam_running[-1])
    last_gaps = np.abs(arr[:, -1] - arr[:, -2])
    tail = [i for i, n in enumerate(hs) if n * 16 >= hs[-1]]
    osc = arr[:, tail].max(axis=1) - arr[:, tail].min(axis=1)
    furman = tuple(int(i) for i in np.nonzero(arr[:, -1] > lam + 5 * tol)[0])

    if spreads[-1] <= tol and np.all(last_gaps <= tol):
        verdict = "uniform-consistent"
    elif float(osc.max()) >= 10 * tol or spreads[-1] >= 10 * tol:
        verdict = "non-uniform-evidence"
    else:
        verdict = "inconclusive"

    return ConvergenceReport(
        horizons=tuple(hs),
        values=tuple(values),
        mins=tuple(float(v) for v in mins),
        maxs=tuple(float(v) for v in maxs),
        means=tuple(float(v) for v in means),
        spreads=tuple(float(v) for v in spreads),
        lambda_running=tuple(float(v) for v in lam_running),
        lambda_estimate=lam,
        last_gaps=tuple(float(v) for v in last_gaps),
        oscillations=tuple(float(v) for v in osc),
        furman_flags=furman,
        tol=tol,
        verdict=verdict,
    )


def report_csv_rows(report: ConvergenceReport) -> list[str]:
    rows = ["n,min,max,mean,spread,lambda_est"]
    for i, n in enumerate(report.horizons):
        rows.append(
            f"{n},{report.mins[i]!r},{report.maxs[i]!r},"
            f"{report.means[i]!r},{report.spreads[i]!r},{report.lambda_running[i]!r}"
        )
    return rows
