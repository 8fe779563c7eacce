"""Fixed-shape tile multiply kernels and the accumulator/issue-schedule model.

Two kernels implement the same mr x kr by kr x nr contract: a generic unrolled
multiply and an outer-product kernel that drives a grid of result accumulators.
The outer-product kernel is paired with an explicit schedule model so the
hardware budgets it assumes (accumulator count, vector-register demand, dual
issue, issue-to-issue latency, single assemble/disassemble) stay checkable on
any host.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    ContractViolationError,
    ElementType,
    InfeasibleGridError,
)
from .packing import COL_MAJOR_TILE, ROW_MAJOR_TILE, IntraTileLayout

MAX_ACCUMULATORS = 8
VECTOR_REGISTERS = 32
ISSUES_PER_CYCLE = 2
ACC_REUSE_LATENCY = 4


def accumulator_shape(etype: ElementType) -> tuple[int, int]:
    """Per-accumulator result shape: 4x4 for 32-bit accumulation, 4x2 for f64."""
    return (4, 2) if etype.tag == "f64" else (4, 4)


@dataclass(frozen=True)
class MicroShape:
    """Register-tile dimensions and element type of one micro-kernel call."""

    mr: int
    kr: int
    nr: int
    etype: ElementType

    def __post_init__(self) -> None:
        if min(self.mr, self.kr, self.nr) < 1:
            raise ContractViolationError("micro-tile dimensions must be at least 1")
        if self.etype.rank > 1 and self.kr % self.etype.rank != 0:
            raise ContractViolationError(
                f"kr ({self.kr}) must be a multiple of the update rank "
                f"({self.etype.rank}) for {self.etype.tag}"
            )

    @property
    def k_steps(self) -> int:
        """Number of rank-wide updates along the kr dimension."""
        return self.kr // self.etype.rank


@dataclass(frozen=True)
class AccumulatorGrid:
    """Arrangement of result accumulators: v_accs x h_accs tiles of acc_rows x acc_cols."""

    v_accs: int
    h_accs: int
    acc_rows: int
    acc_cols: int

    def __post_init__(self) -> None:
        if min(self.v_accs, self.h_accs, self.acc_rows, self.acc_cols) < 1:
            raise ContractViolationError("grid dimensions must be at least 1")

    @property
    def n_accs(self) -> int:
        return self.v_accs * self.h_accs

    @property
    def rows(self) -> int:
        """Result rows covered by one fully occupied grid."""
        return self.v_accs * self.acc_rows

    @property
    def cols(self) -> int:
        return self.h_accs * self.acc_cols


def default_grid(etype: ElementType) -> AccumulatorGrid:
    """2x4 grid of full accumulators for the element type's result shape."""
    rows, cols = accumulator_shape(etype)
    return AccumulatorGrid(2, 4, rows, cols)


# Shrinking arrangements tried under register pressure; (2, 4) maximizes
# operand reuse, the rest trade accumulators for a smaller live-strip count.
_GRID_CANDIDATES = ((2, 4), (2, 2), (1, 2), (1, 1))


def feasible_grid(shape: "MicroShape") -> AccumulatorGrid | None:
    """Largest candidate accumulator arrangement whose budgets fit ``shape``."""
    rows, cols = accumulator_shape(shape.etype)
    for v, h in _GRID_CANDIDATES:
        grid = AccumulatorGrid(v, h, rows, cols)
        if not check_grid(grid, shape):
            return grid
    return None


def register_demand(grid: AccumulatorGrid, kr: int, rank: int) -> int:
    """Operand vector registers needed to keep all strips live: (v+h) * kr/rank."""
    return (grid.v_accs + grid.h_accs) * (kr // rank)


def check_grid(grid: AccumulatorGrid, shape: MicroShape) -> list[str]:
    """All budget and divisibility problems for running ``shape`` on ``grid``."""
    problems = []
    expected = accumulator_shape(shape.etype)
    if (grid.acc_rows, grid.acc_cols) != expected:
        problems.append(
            f"accumulator shape {grid.acc_rows}x{grid.acc_cols} does not match "
            f"the {expected[0]}x{expected[1]} result shape of {shape.etype.tag}"
        )
    if grid.n_accs > MAX_ACCUMULATORS:
        problems.append(
            f"accumulator budget exceeded: {grid.n_accs} > {MAX_ACCUMULATORS}"
        )
    demand = register_demand(grid, shape.kr, shape.etype.rank)
    if demand > VECTOR_REGISTERS:
        problems.append(
            f"vector-register budget exceeded: operand demand {demand} > "
            f"{VECTOR_REGISTERS}"
        )
    if shape.mr % grid.acc_rows != 0:
        problems.append(
            f"mr ({shape.mr}) is not a multiple of the accumulator rows "
            f"({grid.acc_rows})"
        )
    if shape.nr % grid.acc_cols != 0:
        problems.append(
            f"nr ({shape.nr}) is not a multiple of the accumulator columns "
            f"({grid.acc_cols})"
        )
    return problems


@dataclass
class ScheduleReport:
    violations: list[str]
    min_cycles: int


@dataclass
class MicroSchedule:
    """Issue plan for one outer-product kernel invocation.

    ``issues`` lists (cycle, accumulator id, k step); ``reg_assignment`` maps
    operand strips (side, section, strip index, k step) to virtual registers.
    Accumulator ids are logical: every section of a large tile gets fresh ids,
    so each id is assembled and disassembled exactly once.
    """

    issues: list[tuple[int, int, int]] = field(default_factory=list)
    reg_assignment: dict[tuple[str, int, int, int], int] = field(default_factory=dict)
    assembles: list[int] = field(default_factory=list)
    disassembles: list[int] = field(default_factory=list)

    @property
    def n_issues(self) -> int:
        return len(self.issues)

    @property
    def span_cycles(self) -> int:
        return max(c for c, _, _ in self.issues) + 1 if self.issues else 0


def _sections(extent: int, capacity: int) -> list[tuple[int, int]]:
    """(start, length) pieces covering ``extent`` in capacity-sized sections."""
    return [(s, min(capacity, extent - s)) for s in range(0, extent, capacity)]


def emit_schedule(shape: MicroShape, grid: AccumulatorGrid) -> MicroSchedule:
    """Build the issue schedule the outer-product kernel follows.

    Within a section the accumulators are walked in row-major grid order for
    every k step, two issues per cycle, and an accumulator is never reissued
    within four cycles; sections are scheduled one after another.
    """
    problems = check_grid(grid, shape)
    if problems:
        raise InfeasibleGridError("; ".join(problems))
    schedule = MicroSchedule()
    next_vreg = 0
    next_acc = 0
    fill: dict[int, int] = {}
    last_issue: dict[int, int] = {}
    section_floor = 0
    section_index = 0
    for _, sec_rows in _sections(shape.mr, grid.rows):
        for _, sec_cols in _sections(shape.nr, grid.cols):
            v_eff = sec_rows // grid.acc_rows
            h_eff = sec_cols // grid.acc_cols
            acc_ids = [next_acc + v * h_eff + h
                       for v in range(v_eff) for h in range(h_eff)]
            next_acc += len(acc_ids)
            schedule.assembles.extend(acc_ids)
            for k in range(shape.k_steps):
                for v in range(v_eff):
                    key = ("A", section_index, v, k)
                    schedule.reg_assignment[key] = next_vreg
                    next_vreg += 1
                for h in range(h_eff):
                    key = ("B", section_index, h, k)
                    schedule.reg_assignment[key] = next_vreg
                    next_vreg += 1
            section_last = section_floor
            for k in range(shape.k_steps):
                for acc in acc_ids:
                    earliest = section_floor
                    if acc in last_issue:
                        earliest = max(earliest, last_issue[acc] + ACC_REUSE_LATENCY)
                    cycle = earliest
                    while fill.get(cycle, 0) >= ISSUES_PER_CYCLE:
                        cycle += 1
                    fill[cycle] = fill.get(cycle, 0) + 1
                    last_issue[acc] = cycle
                    section_last = max(section_last, cycle)
                    schedule.issues.append((cycle, acc, k))
            schedule.disassembles.extend(acc_ids)
            section_floor = section_last + 1
            section_index += 1
    return schedule


def validate_schedule(schedule: MicroSchedule, grid: AccumulatorGrid) -> ScheduleReport:
    """Check dual-issue, reuse-latency, and assemble/disassemble invariants.

    ``min_cycles`` is the length of a greedy list schedule of the same issues
    honoring the dual-issue width and the four-cycle accumulator reuse gap.
    """
    violations = []
    per_cycle: dict[int, int] = {}
    per_acc: dict[int, list[int]] = {}
    for cycle, acc, _ in schedule.issues:
        per_cycle[cycle] = per_cycle.get(cycle, 0) + 1
        per_acc.setdefault(acc, []).append(cycle)
    for cycle in sorted(per_cycle):
        if per_cycle[cycle] > ISSUES_PER_CYCLE:
            violations.append(
                f"{per_cycle[cycle]} issues at cycle {cycle} exceed the "
                f"dual-issue limit of {ISSUES_PER_CYCLE}"
            )
    for acc in sorted(per_acc):
        cycles = sorted(per_acc[acc])
        for a, b in zip(cycles, cycles[1:]):
            if b - a < ACC_REUSE_LATENCY:
                violations.append(
                    f"accumulator {acc} reissued after {b - a} cycles "
                    f"(minimum {ACC_REUSE_LATENCY})"
                )
    for label, events in (("assembled", schedule.assembles),
                          ("disassembled", schedule.disassembles)):
        seen: dict[int, int] = {}
        for acc in events:
            seen[acc] = seen.get(acc, 0) + 1
        for acc in sorted(per_acc):
            count = seen.get(acc, 0)
            if count != 1:
                violations.append(f"accumulator {acc} {label} {count} times")
    return ScheduleReport(violations=violations, min_cycles=_greedy_length(per_acc))


def _greedy_length(per_acc: dict[int, list[int]]) -> int:
    """Cycles a greedy dual-issue scheduler needs for the given issue counts."""
    remaining = {acc: len(cycles) for acc, cycles in per_acc.items() if cycles}
    if not remaining:
        return 0
    last: dict[int, int] = {}
    cycle = 0
    final = 0
    while remaining:
        slots = ISSUES_PER_CYCLE
        for acc in sorted(remaining):
            if slots == 0:
                break
            if acc in last and cycle - last[acc] < ACC_REUSE_LATENCY:
                continue
            last[acc] = cycle
            final = cycle
            remaining[acc] -= 1
            if remaining[acc] == 0:
                del remaining[acc]
            slots -= 1
        cycle += 1
    return final + 1


def _tile_as_2d(tile: np.ndarray, rows: int, cols: int,
                layout: IntraTileLayout) -> np.ndarray:
    if tile.size != rows * cols:
        raise ContractViolationError(
            f"tile has {tile.size} elements, expected {rows}x{cols}"
        )
    if layout is ROW_MAJOR_TILE:
        return tile.reshape(rows, cols)
    return tile.reshape(cols, rows).T


def _flatten_2d(tile2d: np.ndarray, layout: IntraTileLayout) -> np.ndarray:
    if layout is ROW_MAJOR_TILE:
        return np.ascontiguousarray(tile2d).ravel()
    return np.ascontiguousarray(tile2d.T).ravel()


def extract_operands(tile2d: np.ndarray, k_step: int, strip_index: int,
                     grid: AccumulatorGrid, rank: int, side: str) -> np.ndarray:
    """Operand strip for one accumulator row or column at one k step.

    For side "a" this gathers acc_rows elements from each of the ``rank``
    consecutive columns starting at k_step * rank, slice after slice; for
    side "b", acc_cols elements from the corresponding rows.  With rank 1
    this is simply a run of the k-th column of A or the k-th row of B.
    """
    if side not in ("a", "b"):
        raise ContractViolationError(f"side must be 'a' or 'b', got {side!r}")
    k0 = k_step * rank
    if side == "a":
        r0 = strip_index * grid.acc_rows
        if r0 + grid.acc_rows > tile2d.shape[0] or k0 + rank > tile2d.shape[1]:
            raise ContractViolationError("operand strip outside the tile")
        pieces = [tile2d[r0:r0 + grid.acc_rows, k0 + t] for t in range(rank)]
    else:
        c0 = strip_index * grid.acc_cols
        if c0 + grid.acc_cols > tile2d.shape[1] or k0 + rank > tile2d.shape[0]:
            raise ContractViolationError("operand strip outside the tile")
        pieces = [tile2d[k0 + t, c0:c0 + grid.acc_cols] for t in range(rank)]
    return np.concatenate(pieces)


def ger_update(acc: np.ndarray, a_strip: np.ndarray, b_strip: np.ndarray,
               rank: int) -> np.ndarray:
    """acc += sum of ``rank`` outer products of the strip's k slices, in place.

    Strip slice t occupies elements [t*rows, (t+1)*rows) of a_strip and
    [t*cols, (t+1)*cols) of b_strip.
    """
    rows, cols = acc.shape
    if a_strip.size != rows * rank or b_strip.size != cols * rank:
        raise ContractViolationError(
            f"strip lengths {a_strip.size}/{b_strip.size} do not match "
            f"{rows}x{cols} accumulator at rank {rank}"
        )
    for t in range(rank):
        acc += np.multiply.outer(
            a_strip[t * rows:(t + 1) * rows].astype(acc.dtype, copy=False),
            b_strip[t * cols:(t + 1) * cols].astype(acc.dtype, copy=False),
        )
    return acc


def micro_multiply_generic(a_tile: np.ndarray, b_tile: np.ndarray,
                           shape: MicroShape,
                           a_layout: IntraTileLayout = COL_MAJOR_TILE,
                           b_layout: IntraTileLayout = ROW_MAJOR_TILE,
                           c_layout: IntraTileLayout = ROW_MAJOR_TILE) -> np.ndarray:
    """Unrolled mr x kr by kr x nr multiply; exact for integers.

    Inputs are flat tiles in the given layouts; the result is a flat mr x nr
    tile of the accumulation dtype in ``c_layout``.
    """
    a2 = _tile_as_2d(a_tile, shape.mr, shape.kr, a_layout)
    b2 = _tile_as_2d(b_tile, shape.kr, shape.nr, b_layout)
    accum = shape.etype.np_accum_dtype
    out = a2.astype(accum, copy=False) @ b2.astype(accum, copy=False)
    return _flatten_2d(out, c_layout)


def accumulate_outer(acc2d: np.ndarray, a_tile: np.ndarray, b_tile: np.ndarray,
                     shape: MicroShape, grid: AccumulatorGrid,
                     a_layout: IntraTileLayout = COL_MAJOR_TILE,
                     b_layout: IntraTileLayout = ROW_MAJOR_TILE) -> None:
    """Accumulate a_tile @ b_tile into acc2d with the outer-product k order.

    Float accumulation advances all accumulators together, one rank-wide
    update per k step; integer accumulation wraps modulo 2**32, so any
    evaluation order is bit-identical and a single fused multiply is used.
    """
    problems = check_grid(grid, shape)
    if problems:
        raise InfeasibleGridError("; ".join(problems))
    if acc2d.shape != (shape.mr, shape.nr):
        raise ContractViolationError(
            f"accumulator is {acc2d.shape}, expected {(shape.mr, shape.nr)}"
        )
    accum = shape.etype.np_accum_dtype
    a2 = _tile_as_2d(a_tile, shape.mr, shape.kr, a_layout).astype(accum, copy=False)
    b2 = _tile_as_2d(b_tile, shape.kr, shape.nr, b_layout).astype(accum, copy=False)
    if not shape.etype.is_float:
        acc2d += a2 @ b2
        return
    rank = shape.etype.rank
    for k in range(shape.k_steps):
        k0 = k * rank
        acc2d += a2[:, k0:k0 + rank] @ b2[k0:k0 + rank, :]


def micro_multiply_outer(a_tile: np.ndarray, b_tile: np.ndarray,
                         shape: MicroShape,
                         grid: AccumulatorGrid | None = None,
                         a_layout: IntraTileLayout = COL_MAJOR_TILE,
                         b_layout: IntraTileLayout = ROW_MAJOR_TILE,
                         c_layout: IntraTileLayout = ROW_MAJOR_TILE,
                         ) -> tuple[np.ndarray, MicroSchedule]:
    """Outer-product tile multiply from zeroed accumulators, plus its schedule.

    Tiles larger than the grid's reach are split into grid-sized sections,
    each handled independently with fresh accumulators.  Raises
    InfeasibleGridError when the grid breaks an accumulator or register
    budget, naming the violated budget.
    """
    if grid is None:
        grid = default_grid(shape.etype)
    schedule = emit_schedule(shape, grid)
    acc = np.zeros((shape.mr, shape.nr), dtype=shape.etype.np_accum_dtype)
    accumulate_outer(acc, a_tile, b_tile, shape, grid, a_layout, b_layout)
    return _flatten_2d(acc, c_layout), schedule
