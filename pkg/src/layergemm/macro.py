"""The blocking/packing GEMM driver and its SYR2K variant.

The loop nest stages B blocks (kc x nc), then A blocks (mc x kc), packs each
into tile-major buffers, and walks the register tiles jj/ii/kk with a fresh
accumulation tile per (ii, jj).  beta is applied to each C tile exactly once,
on the first k block; alpha scales the accumulated product before the store.
Edge blocks compute on zero-padded tiles and store through the partial path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ContractViolationError,
    InfeasibleGridError,
    Matrix,
    accum_dtype_for,
    etype_for_dtype,
)
from .micro import (
    AccumulatorGrid,
    MicroShape,
    accumulate_outer,
    check_grid,
    feasible_grid,
    micro_multiply_generic,
)
from .packing import (
    COL_MAJOR_TILE,
    ROW_MAJOR_TILE,
    IntraTileLayout,
    load_tile,
    pack_a,
    pack_b,
    store_tile,
)
from .params import BlockParams, TileParams, validate_params

GENERIC = "generic"
OUTER_PRODUCT = "outer_product"

_FLIP = {COL_MAJOR_TILE: ROW_MAJOR_TILE, ROW_MAJOR_TILE: COL_MAJOR_TILE}


@dataclass
class GemmPlan:
    """Everything the blocked GEMM needs besides its operands.

    ``packing=False`` keeps the same loop nest but gathers register tiles
    straight from the source matrices instead of packed buffers (the
    tiling-only strategy).
    """

    block: BlockParams
    tile: TileParams
    grid: AccumulatorGrid | None = None
    kernel: str = GENERIC
    a_layout: IntraTileLayout = COL_MAJOR_TILE
    b_layout: IntraTileLayout = ROW_MAJOR_TILE
    c_layout: IntraTileLayout = ROW_MAJOR_TILE
    packing: bool = True

    def __post_init__(self) -> None:
        if self.kernel not in (GENERIC, OUTER_PRODUCT):
            raise ContractViolationError(
                f"kernel must be {GENERIC!r} or {OUTER_PRODUCT!r}, got {self.kernel!r}"
            )
        problems = validate_params(self.block, self.tile)
        if problems:
            raise ContractViolationError("; ".join(problems))

    def resolve_grid(self, shape: MicroShape) -> AccumulatorGrid:
        """The pinned grid, or the largest arrangement that fits the tile shape."""
        if self.grid is not None:
            return self.grid
        grid = feasible_grid(shape)
        if grid is None:
            raise InfeasibleGridError(
                f"no accumulator arrangement fits kr={shape.kr} for "
                f"{shape.etype.tag}: even one accumulator needs more than "
                f"the available vector registers"
            )
        return grid

    def validate_for(self, etype) -> None:
        """Raise if the plan cannot run its micro kernel on ``etype``."""
        shape = MicroShape(self.tile.mr, self.tile.kr, self.tile.nr, etype)
        if self.kernel == OUTER_PRODUCT:
            problems = check_grid(self.resolve_grid(shape), shape)
            if problems:
                raise InfeasibleGridError("; ".join(problems))


def _gather_tile(M: Matrix, r0: int, c0: int, rows: int, cols: int,
                 layout: IntraTileLayout) -> np.ndarray:
    """Zero-padded register tile read directly from a matrix (no packing)."""
    lr = max(0, min(rows, M.rows - r0))
    lc = max(0, min(cols, M.cols - c0))
    tile = np.zeros((rows, cols), dtype=M.dtype)
    if lr and lc:
        tile[:lr, :lc] = M.view2d[r0:r0 + lr, c0:c0 + lc]
    if layout is ROW_MAJOR_TILE:
        return tile.ravel()
    return np.ascontiguousarray(tile.T).ravel()


def gemm(alpha, A: Matrix, B: Matrix, beta, C: Matrix, plan: GemmPlan) -> Matrix:
    """Blocked, packed C <- alpha*A@B + beta*C; C is updated in place.

    The result matches the naive reference exactly for integer element types
    and within reassociation tolerance for floats.
    """
    if A.cols != B.rows or C.rows != A.rows or C.cols != B.cols:
        raise ContractViolationError(
            f"dimension mismatch: A {A.rows}x{A.cols}, B {B.rows}x{B.cols}, "
            f"C {C.rows}x{C.cols}"
        )
    if C.data is A.data or C.data is B.data:
        raise ContractViolationError("C must not alias A or B")
    etype = etype_for_dtype(A.dtype)
    if B.dtype != A.dtype:
        raise ContractViolationError("A and B must share an element type")
    accum = accum_dtype_for(A.dtype)
    if C.dtype != accum:
        raise ContractViolationError(
            f"C must use the accumulation dtype {accum}, got {C.dtype}"
        )
    plan.validate_for(etype)

    M, K, N = A.rows, A.cols, B.cols
    mc, kc, nc = plan.block.mc, plan.block.kc, plan.block.nc
    mr, kr, nr = plan.tile.mr, plan.tile.kr, plan.tile.nr
    shape = MicroShape(mr, kr, nr, etype)
    outer = plan.kernel == OUTER_PRODUCT
    grid = plan.resolve_grid(shape) if outer else None
    alpha_s = accum.type(alpha)
    beta_s = accum.type(beta)
    cview = C.view2d
    acc = np.empty((mr, nr), dtype=accum)

    for j in range(0, N, nc):
        ncx = min(nc, N - j)
        for k in range(0, K, kc):
            kcx = min(kc, K - k)
            if plan.packing:
                b_pack = pack_b(B, k, j, kc, nc, kr, nr, plan.b_layout)
            first_k = k == 0
            k_tiles = -(-kcx // kr)
            for i in range(0, M, mc):
                mcx = min(mc, M - i)
                if plan.packing:
                    a_pack = pack_a(A, i, k, mc, kc, mr, kr, plan.a_layout)
                for jj in range(0, ncx, nr):
                    lc = min(nr, ncx - jj)
                    for ii in range(0, mcx, mr):
                        lr = min(mr, mcx - ii)
                        acc.fill(0)
                        for kk in range(k_tiles):
                            if plan.packing:
                                a_tile = load_tile(a_pack, ii // mr, kk)
                                b_tile = load_tile(b_pack, kk, jj // nr)
                            else:
                                a_tile = _gather_tile(A, i + ii, k + kk * kr,
                                                      mr, kr, plan.a_layout)
                                b_tile = _gather_tile(B, k + kk * kr, j + jj,
                                                      kr, nr, plan.b_layout)
                            if outer:
                                accumulate_outer(acc, a_tile, b_tile, shape, grid,
                                                 plan.a_layout, plan.b_layout)
                            else:
                                ab = micro_multiply_generic(
                                    a_tile, b_tile, shape,
                                    plan.a_layout, plan.b_layout, ROW_MAJOR_TILE)
                                acc += ab.reshape(mr, nr)
                        out_tile = alpha_s * acc
                        c_region = cview[i + ii:i + ii + lr, j + jj:j + jj + lc]
                        if first_k:
                            if beta != 0:
                                out_tile[:lr, :lc] += beta_s * c_region
                        else:
                            out_tile[:lr, :lc] += c_region
                        if plan.c_layout is ROW_MAJOR_TILE:
                            flat = out_tile.ravel()
                        else:
                            flat = np.ascontiguousarray(out_tile.T).ravel()
                        store_tile(C, i + ii, j + jj, flat, mr, nr, lr, lc,
                                   plan.c_layout)
    return C


def _triangle_extent(half: str, r0: int, lr: int, c0: int, lc: int) -> str:
    """Classify a tile against the stored triangle: 'all', 'partial', or 'none'."""
    r1, c1 = r0 + lr - 1, c0 + lc - 1
    if half == "lower":
        if r0 >= c1:
            return "all"
        if r1 < c0:
            return "none"
    else:
        if c0 >= r1:
            return "all"
        if c1 < r0:
            return "none"
    return "partial"


def syr2k(alpha, A: Matrix, B: Matrix, beta, C: Matrix, half: str,
          plan: GemmPlan) -> Matrix:
    """Symmetric rank-2k update of one triangle of C, in place.

    Computes the ``half`` triangle of alpha*A@B^T + alpha*B@A^T + beta*C by
    packing a normal and a transposed block of both A and B per cache block
    and issuing two tile multiplications per register tile.  Elements of the
    other triangle are never written.
    """
    if half not in ("lower", "upper"):
        raise ContractViolationError(f"half must be 'lower' or 'upper', got {half!r}")
    if C.rows != C.cols:
        raise ContractViolationError("C must be square")
    if A.rows != C.rows or B.rows != C.rows or A.cols != B.cols:
        raise ContractViolationError("A and B must both be N x K with N matching C")
    if C.data is A.data or C.data is B.data:
        raise ContractViolationError("C must not alias A or B")
    etype = etype_for_dtype(A.dtype)
    accum = accum_dtype_for(A.dtype)
    if B.dtype != A.dtype or C.dtype != accum:
        raise ContractViolationError("operand dtypes are inconsistent")
    plan.validate_for(etype)

    N, K = A.rows, A.cols
    mc, kc, nc = plan.block.mc, plan.block.kc, plan.block.nc
    mr, kr, nr = plan.tile.mr, plan.tile.kr, plan.tile.nr
    shape = MicroShape(mr, kr, nr, etype)
    outer = plan.kernel == OUTER_PRODUCT
    grid = plan.resolve_grid(shape) if outer else None
    # Transposed blocks reuse the left-operand packer with flipped tile layout:
    # a column-major nr x kr tile of X is a row-major kr x nr tile of X^T.
    t_layout = _FLIP[plan.b_layout]
    alpha_s = accum.type(alpha)
    beta_s = accum.type(beta)
    cview = C.view2d
    acc = np.empty((mr, nr), dtype=accum)

    for j in range(0, N, nc):
        ncx = min(nc, N - j)
        for k in range(0, K, kc):
            kcx = min(kc, K - k)
            bt_pack = pack_a(B, j, k, nc, kc, nr, kr, t_layout)
            at_pack = pack_a(A, j, k, nc, kc, nr, kr, t_layout)
            first_k = k == 0
            k_tiles = -(-kcx // kr)
            for i in range(0, N, mc):
                mcx = min(mc, N - i)
                if _triangle_extent(half, i, mcx, j, ncx) == "none":
                    continue
                a_pack = pack_a(A, i, k, mc, kc, mr, kr, plan.a_layout)
                b_pack = pack_a(B, i, k, mc, kc, mr, kr, plan.a_layout)
                for jj in range(0, ncx, nr):
                    lc = min(nr, ncx - jj)
                    for ii in range(0, mcx, mr):
                        lr = min(mr, mcx - ii)
                        where = _triangle_extent(half, i + ii, lr, j + jj, lc)
                        if where == "none":
                            continue
                        acc.fill(0)
                        for kk in range(k_tiles):
                            a_tile = load_tile(a_pack, ii // mr, kk)
                            bt_tile = load_tile(bt_pack, jj // nr, kk)
                            b_tile = load_tile(b_pack, ii // mr, kk)
                            at_tile = load_tile(at_pack, jj // nr, kk)
                            if outer:
                                accumulate_outer(acc, a_tile, bt_tile, shape, grid,
                                                 plan.a_layout, plan.b_layout)
                                accumulate_outer(acc, b_tile, at_tile, shape, grid,
                                                 plan.a_layout, plan.b_layout)
                            else:
                                ab = micro_multiply_generic(
                                    a_tile, bt_tile, shape,
                                    plan.a_layout, plan.b_layout, ROW_MAJOR_TILE)
                                ba = micro_multiply_generic(
                                    b_tile, at_tile, shape,
                                    plan.a_layout, plan.b_layout, ROW_MAJOR_TILE)
                                acc += ab.reshape(mr, nr)
                                acc += ba.reshape(mr, nr)
                        out_tile = alpha_s * acc
                        c_region = cview[i + ii:i + ii + lr, j + jj:j + jj + lc]
                        if first_k:
                            if beta != 0:
                                out_tile[:lr, :lc] += beta_s * c_region
                        else:
                            out_tile[:lr, :lc] += c_region
                        if where == "all":
                            if plan.c_layout is ROW_MAJOR_TILE:
                                flat = out_tile.ravel()
                            else:
                                flat = np.ascontiguousarray(out_tile.T).ravel()
                            store_tile(C, i + ii, j + jj, flat, mr, nr, lr, lc,
                                       plan.c_layout)
                        else:
                            for r in range(lr):
                                gr = i + ii + r
                                for c in range(lc):
                                    gc = j + jj + c
                                    inside = gr >= gc if half == "lower" else gc >= gr
                                    if inside:
                                        cview[gr, gc] = out_tile[r, c]
    return C
