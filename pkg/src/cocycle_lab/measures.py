"""Empirical measures over finite partitions and power-decomposition checks.

Histograms store integer visit counts, so mixtures of equal-length
component histograms reconstruct the full-orbit histogram bit-exactly;
the weak* topology is proxied by half-L1 distance over a fixed partition.
Operations are pure; independent starting points or horizons can run in
parallel and cell-wise count addition is an exact, order-free reduction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import dynsys
from .dynsys import (
    CirclePoint,
    CyclePoint,
    Point,
    ProductPoint,
    ShiftPoint,
    SystemDescriptor,
    TorusPoint,
)


class PartitionMismatchError(ValueError):
    """Histograms over different partitions cannot be compared."""


@dataclass(frozen=True)
class Partition:
    """Finite labeled partition of one phase space.

    kind/params identify the cell structure; locate maps a point to its
    unique cell index.
    """

    kind: str
    params: tuple
    labels: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.labels)

    def locate(self, x: Point) -> int:
        return _LOCATORS[self.kind](self.params, x)


def _locate_circle(params, x: CirclePoint) -> int:
    (nbins,) = params
    return min(int(x.angle * nbins), nbins - 1)


def _locate_torus(params, x: TorusPoint) -> int:
    (nbins,) = params
    i = min(int(x.a * nbins), nbins - 1)
    j = min(int(x.b * nbins), nbins - 1)
    return i * nbins + j


def _locate_cycle(params, x: CyclePoint) -> int:
    (p,) = params
    return x.index % p


def _locate_shift(params, x: ShiftPoint) -> int:
    lo, hi = params
    return int(x.window(lo, hi + 1), 2)


def _locate_product(params, x: ProductPoint) -> int:
    left, right = params
    return left.locate(x.left) * right.size + right.locate(x.right)


_LOCATORS: dict[str, Callable] = {
    "circle_bins": _locate_circle,
    "torus_grid": _locate_torus,
    "cycle_cells": _locate_cycle,
    "shift_cylinders": _locate_shift,
    "product": _locate_product,
}


def circle_bins(n: int = 100) -> Partition:
    if n < 1:
        raise ValueError("need at least one bin")
    labels = tuple(f"[{i}/{n},{i + 1}/{n})" for i in range(n))
    return Partition("circle_bins", (n,), labels)


def torus_grid(n: int = 50) -> Partition:
    labels = tuple(f"({i}/{n},{j}/{n})" for i in range(n) for j in range(n))
    return Partition("torus_grid", (n,), labels)


def cycle_cells(p: int) -> Partition:
    return Partition("cycle_cells", (p,), tuple(str(i) for i in range(p)))


def shift_cylinders(lo: int = -3, hi: int = 3) -> Partition:
    """Cylinder sets fixing the symbols at positions lo..hi inclusive."""
    width = hi - lo + 1
    if width < 1 or width > 24:
        raise ValueError(f"cylinder window [{lo},{hi}] out of range")
    labels = tuple(format(i, f"0{width}b") for i in range(2**width))
    return Partition("shift_cylinders", (lo, hi), labels)


def product_partition(left: Partition, right: Partition) -> Partition:
    labels = tuple(f"{a}|{b}" for a in left.labels for b in right.labels)
    return Partition("product", (left, right), labels)


def default_partition(system: SystemDescriptor) -> Partition:
    """100 circle bins, 50x50 torus grid, [-3,3] cylinders, index singletons."""
    kind = system.point_kind
    if kind == "circle":
        return circle_bins(100)
    if kind == "torus":
        return torus_grid(50)
    if kind == "cycle":
        return cycle_cells(system.params["p"])
    if kind == "shift":
        return shift_cylinders(-3, 3)
    if kind == "product":
        lp = default_partition(dynsys.make_system(system.params["left"]))
        rp = default_partition(dynsys.make_system(system.params["right"]))
        return product_partition(lp, rp)
    raise ValueError(f"no default partition for {kind}")


# ---------------------------------------------------------------------------
# Histograms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalHistogram:
    """Visit distribution of an orbit segment over a partition.

    counts are integer visits (sum == n); weights = counts / n.
    q records which power of the map generated the orbit.
    """

    counts: np.ndarray
    n: int
    q: int
    partition: Partition

    @property
    def weights(self) -> np.ndarray:
        return self.counts / self.n

    def check(self, other: "EmpiricalHistogram") -> None:
        if self.partition != other.partition:
            raise PartitionMismatchError("histograms use different partitions")


def empirical(
    system: SystemDescriptor, x: Point, n: int, q: int, partition: Partition
) -> EmpiricalHistogram:
    """Visit histogram of x, f^q x, ..., f^{(n-1)q} x."""
    if n < 1 or q < 1:
        raise ValueError(f"need n >= 1 and q >= 1, got n={n} q={q}")
    counts = np.zeros(partition.size, dtype=np.int64)
    locate = partition.locate
    for point in dynsys.orbit(system, x, n, q):
        counts[locate(point)] += 1
    return EmpiricalHistogram(counts, n, q, partition)


def mixture(histograms: Sequence[EmpiricalHistogram]) -> EmpiricalHistogram:
    """Equal-weight mixture of equal-length histograms, exact over counts."""
    first = histograms[0]
    for h in histograms[1:]:
        first.check(h)
        if h.n != first.n:
            raise ValueError("mixture needs equal orbit lengths")
    counts = np.sum([h.counts for h in histograms], axis=0)
    return EmpiricalHistogram(counts, first.n * len(histograms), first.q, first.partition)


def measure_distance(h1: EmpiricalHistogram, h2: EmpiricalHistogram) -> float:
    """Half-L1 distance in [0, 1]; zero iff identical weights."""
    h1.check(h2)
    return float(np.sum(np.abs(h1.weights - h2.weights))) / 2.0


def birkhoff(
    system: SystemDescriptor, phi: Callable[[Point], float], x: Point, n: int, q: int = 1
) -> float:
    """Mean of phi over the f^q-orbit segment of length n."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    total = 0.0
    for point in dynsys.orbit(system, x, n, q):
        total += phi(point)
    return total / n


# ---------------------------------------------------------------------------
# Generic-point diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GenericVerdict:
    """Outcome of probing empirical-measure convergence along horizons.

    oscillating means the histogram left (>= 10*tol) and came back
    (<= tol), evidence for two distinct accumulation measures; the
    witness pair holds (near, far) histograms in that case.
    """

    status: str  # convergent | oscillating | inconclusive
    limit: Optional[EmpiricalHistogram]
    witness: Optional[tuple[EmpiricalHistogram, EmpiricalHistogram]]
    gaps: tuple[float, ...]


def generic_diagnostic(
    system: SystemDescriptor,
    x: Point,
    q: int,
    partition: Partition,
    horizons: Sequence[int],
    tol: float,
) -> GenericVerdict:
    horizons = list(horizons)
    if len(horizons) < 2 or any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError("horizons must be strictly increasing with >= 2 entries")
    hists = [empirical(system, x, n, q, partition) for n in horizons]
    gaps = tuple(
        measure_distance(a, b) for a, b in zip(hists, hists[1:])
    )
    if all(g <= tol for g in gaps):
        return GenericVerdict("convergent", hists[-1], None, gaps)
    for j in range(1, len(hists) - 1):
        for i in range(j):
            if measure_distance(hists[i], hists[j]) < 10 * tol:
                continue
            for k in range(j + 1, len(hists)):
                if (
                    measure_distance(hists[j], hists[k]) >= 10 * tol
                    and measure_distance(hists[i], hists[k]) <= tol
                ):
                    return GenericVerdict("oscillating", None, (hists[k], hists[j]), gaps)
    return GenericVerdict("inconclusive", None, None, gaps)


# ---------------------------------------------------------------------------
# Power decompositions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerDecompositionReport:
    """Empirical check of the p-fold ergodic decomposition structure.

    components[i] is the f^p-orbit histogram started at f^i(x0); the
    full-orbit histogram must be their equal-weight mixture (an exact
    identity up to binning of numerically identical points).  verdict:
    distinct if all pairwise component distances exceed tol, single if
    all are below tol, else mixed.
    """

    p: int
    n: int
    reconstruction_error: float
    reconstruction_ok: bool
    components: tuple[EmpiricalHistogram, ...]
    pairwise: tuple[tuple[float, ...], ...]
    min_pairwise: float
    max_pairwise: float
    verdict: str


def power_decomposition_check(
    system: SystemDescriptor,
    p: int,
    x0: Point,
    n: int,
    partition: Partition,
    tol: float,
) -> PowerDecompositionReport:
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    comps = []
    for i in range(p):
        xi = dynsys.step(system, x0, i)
        comps.append(empirical(system, xi, n, p, partition))
    mu_hat = empirical(system, x0, n * p, 1, partition)
    rec_err = measure_distance(mu_hat, mixture(comps))
    dists = [
        [measure_distance(comps[i], comps[j]) for j in range(p)] for i in range(p)
    ]
    off = [dists[i][j] for i in range(p) for j in range(p) if i < j]
    mn = min(off) if off else 0.0
    mx = max(off) if off else 0.0
    if not off:
        verdict = "single"
    elif mn > tol:
        verdict = "distinct"
    elif mx < tol:
        verdict = "single"
    else:
        verdict = "mixed"
    return PowerDecompositionReport(
        p=p,
        n=n,
        reconstruction_error=rec_err,
        reconstruction_ok=rec_err <= tol,
        components=tuple(comps),
        pairwise=tuple(tuple(row) for row in dists),
        min_pairwise=mn,
        max_pairwise=mx,
        verdict=verdict,
    )


def _prime_divisors(d: int) -> list[int]:
    out = []
    m = d
    f = 2
    while f * f <= m:
        if m % f == 0:
            out.append(f)
            while m % f == 0:
                m //= f
        f += 1
    if m > 1:
        out.append(m)
    return out


@dataclass(frozen=True)
class PrimeScanReport:
    d: int
    d_check: PowerDecompositionReport
    entries: tuple[tuple[int, PowerDecompositionReport], ...]


def prime_power_scan(
    system: SystemDescriptor,
    d: int,
    x0: Point,
    n: int,
    partition: Partition,
    tol: float,
) -> PrimeScanReport:
    """Decomposition check at d and at every prime divisor of d.

    If the d-power check shows distinct components, at least one prime
    must as well (the scan makes that reduction observable).
    """
    if d < 2:
        raise ValueError(f"need d >= 2, got {d}")
    d_check = power_decomposition_check(system, d, x0, n, partition, tol)
    entries = tuple(
        (p, power_decomposition_check(system, p, x0, n, partition, tol))
        for p in _prime_divisors(d)
    )
    return PrimeScanReport(d=d, d_check=d_check, entries=entries)


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def histogram_csv_rows(h: EmpiricalHistogram) -> list[str]:
    rows = ["cell_label,weight"]
    for label, w in zip(h.partition.labels, h.weights):
        rows.append(f"{label},{w!r}")
    return rows


def verdict_record(v: GenericVerdict) -> str:
    lines = [f"status = {v.status}"]
    lines.append("gaps = " + " ".join(repr(g) for g in v.gaps))
    return "\n".join(lines) + "\n"
