"""Reproducible experiment runner.

Subcommands: probe, decompose, demo, empirical (dump histograms),
lyapunov.  Flags: --config PATH, --seed N (overrides config seeds),
--out DIR, --threads N (speed only, never output).  The environment
variable COCYCLE_LAB_BUDGET caps total map applications per run
(default 10^9).

Exit codes: 0 success (probe: uniform-consistent), 10 probe
non-uniform-evidence, 11 probe inconclusive, 2 config/parse errors,
3 numeric errors.

Config grammar: flat `key = value` lines with dotted sections (see
cocycle_lab.config).  Keys by command:

  probe:     system.*  cocycle.*  probes.*  horizons  tol  out.dir
  decompose: system.*  d  n  seed  tol  partition.*  out.dir
  empirical: system.*  n  q  seed  partition.*  out.dir
  lyapunov:  system.*  cocycle.*  seed  mc  horizons  out.dir

System records:   system.kind = rotation|cycle|shift|torus_auto|product
  rotation: system.alpha = <float in (0,1)>
  cycle:    system.p = <int>
  shift:    system.halfwidth = <int, optional>
  torus_auto: system.matrix = <4 ints, row-major>
  product:  system.left.* and system.right.* (recursive records)

Cocycle records:  cocycle.kind = constant|diagonal|companion|herman|pullback
  constant:  cocycle.entries = <d*d floats, row-major>
  diagonal:  cocycle.function = cos|sin, cocycle.scale = <float>
             (the generator diag(e^{scale * fn(2 pi theta)}, 1))
  herman:    cocycle.lambda = <float > 1>
  companion: cocycle.p = <int >= 2>, cocycle.phi = witness | const:<float>
  pullback:  cocycle.factor = left|identity, cocycle.inner.* (recursive)

Probe records: probes.count/probes.seed (sampled points),
  probes.angles (explicit circle points), probes.periodic_words and
  probes.periodic_count (shift: explicit and seeded periodic points),
  probes.witness_base/probes.witness_count (append the oscillating
  witness with a geometric block schedule).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import cocycles, config, constructions, dynsys, measures
from .config import ConfigError


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split()]


# ---------------------------------------------------------------------------
# Builders from nested records
# ---------------------------------------------------------------------------


def build_cocycle(rec: dict, system_rec: dict) -> cocycles.MatrixGenerator:
    kind = rec.get("kind")
    if kind == "constant":
        vals = _floats(rec["entries"])
        d = math.isqrt(len(vals))
        if d * d != len(vals):
            raise ConfigError(f"cocycle.entries needs a square count, got {len(vals)}")
        return cocycles.constant_generator(np.array(vals).reshape(d, d))
    if kind == "diagonal":
        fn = {"cos": math.cos, "sin": math.sin}.get(rec.get("function", "cos"))
        if fn is None:
            raise ConfigError(f"unknown diagonal function {rec.get('function')!r}")
        scale = float(rec.get("scale", 1.0))
        tau = 2.0 * math.pi
        return cocycles.diagonal_exp_generator(
            lambda x: scale * fn(tau * x.angle),
            name=f"diag(exp({scale} * {rec.get('function', 'cos')}), 1)",
        )
    if kind == "herman":
        return constructions.herman_reference(float(rec["lambda"]))
    if kind == "companion":
        p = int(rec["p"])
        phi_spec = rec.get("phi", "witness")
        if phi_spec == "witness":
            phi = constructions.witness_separating_function()
        elif phi_spec.startswith("const:"):
            c = float(phi_spec.split(":", 1)[1])
            phi = lambda x: c
        else:
            raise ConfigError(f"unknown phi spec {phi_spec!r}")
        return constructions.companion_cocycle(phi, p)
    if kind == "pullback":
        factor = rec.get("factor", "identity")
        inner_rec = rec.get("inner")
        if inner_rec is None:
            raise ConfigError("pullback needs cocycle.inner.*")
        system_x = dynsys.make_system(system_rec)
        if factor == "left":
            if system_rec.get("kind") != "product":
                raise ConfigError("factor = left needs a product system")
            system_y = dynsys.make_system(system_rec["left"])
            pi = lambda pt: pt.left
            inner_system_rec = system_rec["left"]
        elif factor == "identity":
            system_y = system_x
            pi = lambda pt: pt
            inner_system_rec = system_rec
        else:
            raise ConfigError(f"unknown pullback factor {factor!r}")
        inner = build_cocycle(inner_rec, inner_system_rec)
        return cocycles.pullback(inner, pi, system_x, system_y)
    raise ConfigError(f"unknown cocycle kind {kind!r}")


def build_probes(rec: dict, system: dynsys.SystemDescriptor, seed_override=None):
    probes: list = []
    seed = int(rec.get("seed", 0))
    if seed_override is not None:
        seed = seed_override
    if "angles" in rec:
        if system.point_kind != "circle":
            raise ConfigError("probes.angles needs a circle system")
        probes.extend(dynsys.circle_point(a) for a in _floats(rec["angles"]))
    if "periodic_words" in rec:
        if system.point_kind != "shift":
            raise ConfigError("probes.periodic_words needs a shift system")
        for word in rec["periodic_words"].split():
            probes.append(dynsys.periodic_shift_point(word))
    if "periodic_count" in rec:
        if system.point_kind != "shift":
            raise ConfigError("probes.periodic_count needs a shift system")
        rng = np.random.default_rng([seed, 1])
        for _ in range(int(rec["periodic_count"])):
            length = int(rng.integers(2, 9))
            word = "".join("01"[b] for b in rng.integers(0, 2, length))
            probes.append(dynsys.periodic_shift_point(word))
    if "count" in rec:
        probes.extend(dynsys.sample(system, seed, int(rec["count"])))
    if "witness_base" in rec or "witness_count" in rec:
        if system.point_kind != "shift":
            raise ConfigError("witness probes need a shift system")
        base = int(rec.get("witness_base", 4))
        count = int(rec.get("witness_count", 8))
        sched = constructions.BlockSchedule.geometric(base, count)
        probes.append(constructions.oscillating_point(sched))
    if not probes:
        raise ConfigError("no probe points configured")
    return probes


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _write_rows(path: Path, rows: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(rows) + "\n")


def _partition_for(system, rec: dict) -> measures.Partition:
    part_rec = rec.get("partition", {})
    if "bins" in part_rec:
        bins = int(part_rec["bins"])
        if system.point_kind == "circle":
            return measures.circle_bins(bins)
        if system.point_kind == "torus":
            return measures.torus_grid(bins)
        raise ConfigError("partition.bins applies to circle/torus systems")
    if "window" in part_rec:
        w = int(part_rec["window"])
        if system.point_kind != "shift":
            raise ConfigError("partition.window applies to shift systems")
        return measures.shift_cylinders(-w, w)
    return measures.default_partition(system)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

_PROBE_ALLOWED = [
    config.SYSTEM_KEYS,
    config.COCYCLE_KEYS,
    config.PROBE_KEYS,
    config.OUT_KEYS,
    r"horizons",
    r"tol",
]
_DECOMPOSE_ALLOWED = [
    config.SYSTEM_KEYS,
    config.PARTITION_KEYS,
    config.OUT_KEYS,
    r"d",
    r"n",
    r"seed",
    r"tol",
]
_EMPIRICAL_ALLOWED = [
    config.SYSTEM_KEYS,
    config.PARTITION_KEYS,
    config.OUT_KEYS,
    r"n",
    r"q",
    r"seed",
]
_LYAPUNOV_ALLOWED = [
    config.SYSTEM_KEYS,
    config.COCYCLE_KEYS,
    config.OUT_KEYS,
    r"seed",
    r"mc",
    r"horizons",
]


def _need(nested: dict, key: str):
    if key not in nested:
        raise ConfigError(f"missing required key {key!r}")
    return nested[key]


def run_probe(text: str, out_dir: Path, seed_override=None, threads: int = 1) -> int:
    nested = config.parse_record(text, _PROBE_ALLOWED)
    system = dynsys.make_system(_need(nested, "system"))
    gen = build_cocycle(_need(nested, "cocycle"), nested["system"])
    probes = build_probes(_need(nested, "probes"), system, seed_override)
    horizons = _ints(_need(nested, "horizons"))
    tol = float(nested.get("tol", 0.01))
    report = cocycles.uniformity_probe(gen, system, probes, horizons, tol, threads)
    _write_rows(out_dir / "probe_report.csv", cocycles.report_csv_rows(report))
    print(f"probe: {len(probes)} probes, horizons to {horizons[-1]}")
    print(f"lambda_est = {report.lambda_estimate!r}")
    print(f"final spread = {report.spreads[-1]!r}, max oscillation = {max(report.oscillations)!r}")
    if report.furman_flags:
        print(f"furman flags (value > lambda_est + 5 tol): probes {list(report.furman_flags)}")
    print(f"verdict: {report.verdict}")
    return {"uniform-consistent": 0, "non-uniform-evidence": 10, "inconclusive": 11}[
        report.verdict
    ]


def run_decompose(text: str, out_dir: Path, seed_override=None) -> int:
    nested = config.parse_record(text, _DECOMPOSE_ALLOWED)
    system = dynsys.make_system(_need(nested, "system"))
    d = int(_need(nested, "d"))
    if d < 2:
        raise ConfigError(f"d must be >= 2, got {d}")
    n = int(nested.get("n", 10**5))
    seed = int(nested.get("seed", 0)) if seed_override is None else seed_override
    tol = float(nested.get("tol", 0.02))
    partition = _partition_for(system, nested)
    x0 = dynsys.sample(system, seed, 1)[0]
    scan = measures.prime_power_scan(system, d, x0, n, partition, tol)
    rows = ["p,reconstruction_error,min_pairwise_component_distance,verdict"]
    for p, rep in scan.entries:
        rows.append(
            f"{p},{rep.reconstruction_error!r},{rep.min_pairwise!r},{rep.verdict}"
        )
    _write_rows(out_dir / "decompose.csv", rows)
    print(f"decompose: d = {d}, n = {n}, start sampled with seed {seed}")
    print(
        f"d-check: verdict {scan.d_check.verdict}, "
        f"reconstruction_error {scan.d_check.reconstruction_error!r}"
    )
    for p, rep in scan.entries:
        print(f"p = {p}: {rep.verdict} (min pairwise {rep.min_pairwise!r})")
    return 0


def run_empirical(text: str, out_dir: Path, seed_override=None) -> int:
    nested = config.parse_record(text, _EMPIRICAL_ALLOWED)
    system = dynsys.make_system(_need(nested, "system"))
    n = int(_need(nested, "n"))
    q = int(nested.get("q", 1))
    seed = int(nested.get("seed", 0)) if seed_override is None else seed_override
    partition = _partition_for(system, nested)
    x0 = dynsys.sample(system, seed, 1)[0]
    hist = measures.empirical(system, x0, n, q, partition)
    _write_rows(out_dir / "empirical.csv", measures.histogram_csv_rows(hist))
    print(f"empirical: n = {n}, q = {q}, {partition.size} cells")
    print(f"max cell weight = {hist.weights.max()!r}")
    return 0


def run_lyapunov(text: str, out_dir: Path, seed_override=None) -> int:
    nested = config.parse_record(text, _LYAPUNOV_ALLOWED)
    system = dynsys.make_system(_need(nested, "system"))
    gen = build_cocycle(_need(nested, "cocycle"), nested["system"])
    seed = int(nested.get("seed", 0)) if seed_override is None else seed_override
    mc = int(nested.get("mc", 100))
    horizons = _ints(_need(nested, "horizons"))
    report = cocycles.lambda_estimate(gen, system, seed, mc, horizons)
    rows = ["n,a_n,stderr"]
    for i, n in enumerate(report.horizons):
        rows.append(f"{n},{report.means[i]!r},{report.stderrs[i]!r}")
    _write_rows(out_dir / "lyapunov.csv", rows)
    diag = report.diagnostics
    print(f"lyapunov: mc = {mc}, horizons to {horizons[-1]}")
    print(f"estimate = {report.estimate!r}")
    print(
        f"max subadditivity violation = {diag.max_violation!r} "
        f"(within error bars: {diag.ok})"
    )
    return 0


# ---------------------------------------------------------------------------
# Bundled demos
# ---------------------------------------------------------------------------

_DEMO_THEOREM_C = """
# companion cocycle over the binary shift; witness point oscillates while
# periodic probes settle
system.kind = shift
cocycle.kind = companion
cocycle.p = 2
cocycle.phi = witness
probes.periodic_words = 0 1 01 0011
probes.periodic_count = 28
probes.seed = 711
probes.witness_base = 4
probes.witness_count = 8
horizons = 32 512 8192 32768 43688 69900 131072 174760
tol = 0.01
"""

_DEMO_HERMAN_PROBE = """
# herman family over the golden rotation: spread stays tight
system.kind = rotation
system.alpha = 0.6180339887498949
cocycle.kind = herman
cocycle.lambda = 2.0
probes.count = 32
probes.seed = 1905
horizons = 64 1024 16384 65536
tol = 0.01
"""

_DEMO_HERMAN_LAMBDA = """
system.kind = rotation
system.alpha = 0.6180339887498949
cocycle.kind = herman
cocycle.lambda = 2.0
seed = 1905
mc = 100
horizons = 100 200 400 800 1600 3200
"""

_DEMO_THEOREM_E = """
# cycle(2) x cat-map product: the square splits into two fiber components
system.kind = product
system.left.kind = cycle
system.left.p = 2
system.right.kind = torus_auto
system.right.matrix = 2 1 1 1
d = 2
n = 20000
seed = 2718
tol = 0.02
"""


def run_demo(name: str, out_dir: Path, seed_override=None, threads: int = 1) -> int:
    if name == "theorem-c":
        code = run_probe(
            _DEMO_THEOREM_C, out_dir / "theorem-c", seed_override, threads
        )
        print(f"theorem-c probe exit status would be {code} (non-uniform expected)")
        return 0
    if name == "herman":
        run_probe(_DEMO_HERMAN_PROBE, out_dir / "herman", seed_override, threads)
        run_lyapunov(_DEMO_HERMAN_LAMBDA, out_dir / "herman", seed_override)
        return 0
    if name == "theorem-e":
        run_decompose(_DEMO_THEOREM_E, out_dir / "theorem-e", seed_override)
        testbed = constructions.product_testbed(2)
        print(f"expected component structure: {testbed.expectations}")
        for w in testbed.warnings:
            print(f"warning: {w}")
        return 0
    raise ConfigError(f"unknown demo {name!r} (have: theorem-c, herman, theorem-e)")


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cocycle-lab",
        description="cocycle growth and empirical-measure experiments",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("probe", "decompose", "empirical", "lyapunov"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=".")
        p.add_argument("--threads", type=int, default=1)
    p = sub.add_parser("demo")
    p.add_argument("name")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".")
    p.add_argument("--threads", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    dynsys.set_budget(
        dynsys.Budget(int(os.environ.get("COCYCLE_LAB_BUDGET", 10**9)))
    )
    out_dir = Path(args.out)
    try:
        if args.command == "demo":
            return run_demo(args.name, out_dir, args.seed, args.threads)
        text = Path(args.config).read_text()
        if args.command == "probe":
            return run_probe(text, out_dir, args.seed, args.threads)
        if args.command == "decompose":
            return run_decompose(text, out_dir, args.seed)
        if args.command == "empirical":
            return run_empirical(text, out_dir, args.seed)
        if args.command == "lyapunov":
            return run_lyapunov(text, out_dir, args.seed)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, dynsys.InvalidSystemError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (cocycles.SingularMatrixError, dynsys.BudgetExceededError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
