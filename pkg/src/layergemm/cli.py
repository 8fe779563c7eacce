"""Benchmark harness and correctness runner.

Measurement methodology: every benchmark case is measured once per round, the
case list is reshuffled between rounds with a seeded RNG, and rounds repeat
until each case has its requested number of samples.  One warm-up round is
excluded from statistics.  Outputs of variants computing the same problem are
cross-checked (bit-exact checksums for integers, norm tolerance for floats);
a mismatch aborts with a nonzero exit code.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import random
import statistics
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    ContractViolationError,
    ElementType,
    GemmError,
    InfeasibleConfigError,
    InfeasibleGridError,
    Matrix,
    element_type,
    frobenius_rel_error,
    naive_gemm,
    random_matrix,
)
from .macro import OUTER_PRODUCT, GemmPlan, gemm
from .params import CacheConfig, TileParams, derive_block_params

VARIANT_LABELS = ("naive", "tiling", "tiling_packing", "outer_kernel")

FLOAT_TOLERANCES = {"f32": 1e-5, "f64": 1e-12}


class CorrectnessError(GemmError):
    """Benchmark variants disagreed on the same problem."""


@dataclass
class BenchCase:
    """One benchmark configuration: a strategy label on one problem size."""

    label: str
    m: int
    n: int
    k: int
    etype: ElementType
    repeats: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.label not in VARIANT_LABELS:
            raise ContractViolationError(
                f"label must be one of {VARIANT_LABELS}, got {self.label!r}"
            )
        if self.repeats < 1:
            raise ContractViolationError("repeats must be at least 1")
        if min(self.m, self.n, self.k) < 1:
            raise ContractViolationError("dimensions must be at least 1")

    @property
    def problem(self) -> tuple:
        return (self.m, self.n, self.k, self.etype.tag, self.seed)


@dataclass
class BenchResult:
    label: str
    m: int
    n: int
    k: int
    etype_tag: str
    median_ns: float
    mean_ns: float
    ci95_low_ns: float
    ci95_high_ns: float
    gflops: float
    checksum: str
    samples_ns: list = field(default_factory=list, repr=False)


def _variant_runner(label: str, plan: GemmPlan):
    if label == "naive":
        return lambda alpha, A, B, beta, C: naive_gemm(alpha, A, B, beta, C)
    if label == "tiling":
        run_plan = replace(plan, packing=False)
    elif label == "tiling_packing":
        run_plan = replace(plan, packing=True)
    else:
        run_plan = replace(plan, packing=True, kernel=OUTER_PRODUCT)
    return lambda alpha, A, B, beta, C: gemm(alpha, A, B, beta, C, run_plan)


def _checksum(result: Matrix) -> str:
    return hashlib.sha256(result.to_dense().tobytes()).hexdigest()[:16]


def _stats(samples: list, m: int, n: int, k: int) -> tuple:
    med = statistics.median(samples)
    mean = statistics.fmean(samples)
    if len(samples) > 1:
        half = 1.96 * statistics.stdev(samples) / len(samples) ** 0.5
    else:
        half = 0.0
    gflops = 2.0 * m * n * k / med if med > 0 else float("inf")
    return med, mean, med - half, med + half, gflops


def run_bench(cases: list, plan: GemmPlan, *, alpha=1, beta=0,
              shuffle_seed: int = 0, warmup_rounds: int = 1,
              record: list | None = None) -> list:
    """Measure all cases with randomized interleaving; returns one result per case.

    ``record``, when given, collects (round, label, m, n, k) tuples in
    execution order, warm-up excluded.  Raises CorrectnessError if variants
    sharing a problem disagree beyond tolerance.
    """
    inputs: dict[tuple, tuple] = {}
    for case in cases:
        if case.problem not in inputs:
            rng = np.random.default_rng(case.seed)
            A = random_matrix(case.m, case.k, case.etype, rng)
            B = random_matrix(case.k, case.n, case.etype, rng)
            inputs[case.problem] = (A, B)
    samples: dict[int, list] = {idx: [] for idx in range(len(cases))}
    outputs: dict[int, Matrix] = {}
    shuffler = random.Random(shuffle_seed)
    rounds = max(case.repeats for case in cases)
    for rnd in range(-warmup_rounds, rounds):
        order = [idx for idx, case in enumerate(cases)
                 if rnd < 0 or rnd < case.repeats]
        shuffler.shuffle(order)
        for idx in order:
            case = cases[idx]
            A, B = inputs[case.problem]
            runner = _variant_runner(case.label, plan)
            C = Matrix.zeros(case.m, case.n, case.etype.np_accum_dtype, A.order)
            t0 = time.perf_counter_ns()
            result = runner(alpha, A, B, beta, C)
            dt = time.perf_counter_ns() - t0
            if rnd >= 0:
                samples[idx].append(dt)
                if record is not None:
                    record.append((rnd, case.label, case.m, case.n, case.k))
            outputs[idx] = result
    _check_agreement(cases, outputs)
    results = []
    for idx, case in enumerate(cases):
        med, mean, lo, hi, gflops = _stats(samples[idx], case.m, case.n, case.k)
        results.append(BenchResult(
            label=case.label, m=case.m, n=case.n, k=case.k,
            etype_tag=case.etype.tag, median_ns=med, mean_ns=mean,
            ci95_low_ns=lo, ci95_high_ns=hi, gflops=gflops,
            checksum=_checksum(outputs[idx]), samples_ns=samples[idx],
        ))
    return results


def _check_agreement(cases: list, outputs: dict) -> None:
    by_problem: dict[tuple, list] = {}
    for idx, case in enumerate(cases):
        by_problem.setdefault(case.problem, []).append(idx)
    for problem, idxs in by_problem.items():
        if len(idxs) < 2:
            continue
        ref_idx = next((i for i in idxs if cases[i].label == "naive"), idxs[0])
        ref = outputs[ref_idx]
        etype = cases[ref_idx].etype
        for idx in idxs:
            if idx == ref_idx:
                continue
            out = outputs[idx]
            if etype.is_float:
                err = frobenius_rel_error(out, ref)
                tol = FLOAT_TOLERANCES[etype.tag]
                if err > tol:
                    raise CorrectnessError(
                        f"{cases[idx].label} disagrees with {cases[ref_idx].label} "
                        f"on {problem}: relative error {err:.3e} > {tol:.0e}"
                    )
            else:
                if _checksum(out) != _checksum(ref):
                    raise CorrectnessError(
                        f"{cases[idx].label} checksum {_checksum(out)} != "
                        f"{cases[ref_idx].label} checksum {_checksum(ref)} "
                        f"on {problem}"
                    )


CSV_HEADER = "label,m,n,k,etype,median_ns,mean_ns,ci95_low_ns,ci95_high_ns,gflops"


def emit_csv(results: list) -> str:
    """CSV text for a result list: fixed header, one row per result, LF endings."""
    lines = [CSV_HEADER]
    for r in results:
        lines.append(
            f"{r.label},{r.m},{r.n},{r.k},{r.etype_tag},"
            f"{r.median_ns!r},{r.mean_ns!r},{r.ci95_low_ns!r},"
            f"{r.ci95_high_ns!r},{r.gflops!r}"
        )
    return "\n".join(lines) + "\n"


def summary_table(results: list) -> str:
    """Aligned text table of speedups relative to the naive variant."""
    naive_medians = {}
    for r in results:
        if r.label == "naive":
            naive_medians[(r.m, r.n, r.k, r.etype_tag)] = r.median_ns
    header = f"{'label':<16}{'m':>6}{'n':>6}{'k':>6}{'median_ms':>12}{'gflops':>10}{'speedup':>9}"
    lines = [header]
    for r in results:
        base = naive_medians.get((r.m, r.n, r.k, r.etype_tag))
        speedup = f"{base / r.median_ns:.2f}x" if base and r.median_ns else "-"
        lines.append(
            f"{r.label:<16}{r.m:>6}{r.n:>6}{r.k:>6}"
            f"{r.median_ns / 1e6:>12.3f}{r.gflops:>10.2f}{speedup:>9}"
        )
    return "\n".join(lines)


@dataclass
class VerifySizeResult:
    m: int
    n: int
    k: int
    max_rel_error: float
    passed: bool


@dataclass
class VerifyReport:
    etype_tag: str
    entries: list

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)


def verify(sizes, etype: ElementType, plan: GemmPlan, *, alpha=1, beta=1,
           seed: int = 0) -> VerifyReport:
    """Compare the blocked GEMM against the naive reference across a size sweep.

    Integer element types must match exactly; floats must stay within the
    per-type norm tolerance.  Sizes may be bare ints (square) or (m, n, k).
    """
    entries = []
    for size in sizes:
        m, n, k = (size, size, size) if isinstance(size, int) else size
        rng = np.random.default_rng(seed + m + n + k)
        A = random_matrix(m, k, etype, rng)
        B = random_matrix(k, n, etype, rng)
        C = random_matrix(m, n, etype, rng, accum=True)
        expected = naive_gemm(alpha, A, B, beta, C)
        actual = gemm(alpha, A, B, beta, C.copy(), plan)
        if etype.is_float:
            err = frobenius_rel_error(actual, expected)
            ok = err <= FLOAT_TOLERANCES[etype.tag]
        else:
            ok = bool(np.array_equal(actual.to_dense(), expected.to_dense()))
            err = 0.0 if ok else frobenius_rel_error(actual, expected)
        entries.append(VerifySizeResult(m, n, k, err, ok))
    return VerifyReport(etype_tag=etype.tag, entries=entries)


def _add_common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dtype", default="f32",
                   choices=["f32", "f64", "i16", "i8"],
                   help="element type of A and B")
    p.add_argument("--kernel", default="generic",
                   choices=["generic", "outer_product"],
                   help="micro kernel for the tiled variants")
    p.add_argument("--mr", type=int, default=16, help="register-tile rows")
    p.add_argument("--nr", type=int, default=4, help="register-tile columns")
    p.add_argument("--kr", type=int, default=64, help="register-tile depth")
    p.add_argument("--l1", type=int, default=32 * 1024,
                   help="effective L1 data-cache size in bytes")
    p.add_argument("--l2", type=int, default=512 * 1024,
                   help="effective L2 size in bytes")
    p.add_argument("--l3", type=int, default=10 * 1024 * 1024,
                   help="effective L3 size in bytes")
    p.add_argument("--vl", type=int, default=4,
                   help="minimum vector length in elements")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)


_DTYPE_TAGS = {"f32": "f32", "f64": "f64", "i16": "i16_to_i32", "i8": "i8_to_i32"}


def _plan_from_args(args) -> tuple[ElementType, GemmPlan]:
    etype = element_type(_DTYPE_TAGS[args.dtype])
    tile = TileParams(mr=args.mr, kr=args.kr, nr=args.nr)
    cache = CacheConfig(args.l1, args.l2, args.l3, args.vl)
    block = derive_block_params(cache, etype, tile)
    plan = GemmPlan(block=block, tile=tile, kernel=args.kernel)
    plan.validate_for(etype)
    return etype, plan


def _scalar(value: float, etype: ElementType):
    return value if etype.is_float else int(value)


def _cmd_bench(args) -> int:
    etype, plan = _plan_from_args(args)
    labels = [v.strip() for v in args.variants.split(",") if v.strip()]
    for label in labels:
        if label not in VARIANT_LABELS:
            print(f"error: unknown variant {label!r}", file=sys.stderr)
            return 2
    cases = [BenchCase(label, args.m, args.n, args.k, etype,
                       repeats=args.repeats, seed=args.seed)
             for label in labels]
    results = run_bench(cases, plan, alpha=_scalar(args.alpha, etype),
                        beta=_scalar(args.beta, etype), shuffle_seed=args.seed)
    csv_text = emit_csv(results)
    if args.csv:
        with io.open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    if args.summary:
        print(summary_table(results))
    return 0


def _cmd_verify(args) -> int:
    etype, plan = _plan_from_args(args)
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    report = verify(sizes, etype, plan, alpha=_scalar(args.alpha, etype),
                    beta=_scalar(args.beta, etype), seed=args.seed)
    for e in report.entries:
        status = "ok" if e.passed else "FAIL"
        print(f"{e.m:>5} x {e.n:>5} x {e.k:>5}  max rel err {e.max_rel_error:.3e}  {status}")
    if not report.passed:
        worst = max((e for e in report.entries if not e.passed),
                    key=lambda e: e.max_rel_error)
        print(f"verification failed at {worst.m}x{worst.n}x{worst.k}",
              file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layergemm",
        description="Blocked/packed GEMM benchmark harness and correctness runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="measure GEMM variants")
    _add_common_args(bench)
    bench.add_argument("--m", type=int, default=256)
    bench.add_argument("--n", type=int, default=256)
    bench.add_argument("--k", type=int, default=256)
    bench.add_argument("--repeats", type=int, default=20,
                       help="measurement rounds per case")
    bench.add_argument("--variants", default=",".join(VARIANT_LABELS),
                       help="comma-separated list of variants to run")
    bench.add_argument("--csv", default=None, help="write results to this path")
    bench.add_argument("--summary", action="store_true",
                       help="print a speedup table relative to naive")
    bench.set_defaults(func=_cmd_bench)

    ver = sub.add_parser("verify", help="check blocked GEMM against the reference")
    _add_common_args(ver)
    ver.add_argument("--sizes", default="16,100,128,257",
                     help="comma-separated square sizes to sweep")
    ver.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CorrectnessError as exc:
        print(f"correctness failure: {exc}", file=sys.stderr)
        return 1
    except (ContractViolationError, InfeasibleConfigError, InfeasibleGridError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
