"""Copying cache blocks into contiguous, zero-padded, tile-major buffers.

Left-operand blocks pack their tiles row of tiles first (a row of mr x kr
tiles is contiguous); right-operand blocks pack column of tiles first.  The
intra-tile element order is selectable so the buffers can feed micro kernels
that want either column-major or row-major tiles.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import ContractViolationError, Matrix


class IntraTileLayout(Enum):
    COL_MAJOR_TILE = "col_major_tile"
    ROW_MAJOR_TILE = "row_major_tile"


class TileGridOrder(Enum):
    ROW_OF_TILES = "row_of_tiles"
    COL_OF_TILES = "col_of_tiles"


COL_MAJOR_TILE = IntraTileLayout.COL_MAJOR_TILE
ROW_MAJOR_TILE = IntraTileLayout.ROW_MAJOR_TILE


@dataclass
class PackedBlock:
    """A zero-padded block copied into tile-major order.

    ``buffer`` holds grid_rows * grid_cols tiles of tile_rows * tile_cols
    elements each; positions beyond (logical_rows, logical_cols) are exactly
    zero.
    """

    buffer: np.ndarray
    grid_rows: int
    grid_cols: int
    tile_rows: int
    tile_cols: int
    tile_order: TileGridOrder
    layout: IntraTileLayout
    logical_rows: int
    logical_cols: int

    @property
    def tile_size(self) -> int:
        return self.tile_rows * self.tile_cols

    def tile_offset(self, tile_row: int, tile_col: int) -> int:
        """Buffer offset of a tile's first element."""
        if not (0 <= tile_row < self.grid_rows and 0 <= tile_col < self.grid_cols):
            raise ContractViolationError(
                f"tile ({tile_row}, {tile_col}) outside grid "
                f"{self.grid_rows}x{self.grid_cols}"
            )
        if self.tile_order is TileGridOrder.ROW_OF_TILES:
            linear = tile_row * self.grid_cols + tile_col
        else:
            linear = tile_col * self.grid_rows + tile_row
        return linear * self.tile_size


def _pack(src: Matrix, row0: int, col0: int, block_rows: int, block_cols: int,
          tile_rows: int, tile_cols: int, tile_order: TileGridOrder,
          layout: IntraTileLayout) -> PackedBlock:
    if not (0 <= row0 < src.rows and 0 <= col0 < src.cols):
        raise ContractViolationError(
            f"block offset ({row0}, {col0}) outside {src.rows}x{src.cols} matrix"
        )
    logical_rows = min(block_rows, src.rows - row0)
    logical_cols = min(block_cols, src.cols - col0)
    grid_rows = -(-logical_rows // tile_rows)
    grid_cols = -(-logical_cols // tile_cols)
    padded = np.zeros((grid_rows * tile_rows, grid_cols * tile_cols), dtype=src.dtype)
    padded[:logical_rows, :logical_cols] = \
        src.view2d[row0:row0 + logical_rows, col0:col0 + logical_cols]
    tiles = padded.reshape(grid_rows, tile_rows, grid_cols, tile_cols)
    # Axis order: tile-grid major axis, minor axis, then the in-tile element order.
    if tile_order is TileGridOrder.ROW_OF_TILES:
        grid_axes = (0, 2)
    else:
        grid_axes = (2, 0)
    if layout is IntraTileLayout.ROW_MAJOR_TILE:
        elem_axes = (1, 3)
    else:
        elem_axes = (3, 1)
    buffer = np.ascontiguousarray(tiles.transpose(*grid_axes, *elem_axes)).ravel()
    return PackedBlock(
        buffer=buffer,
        grid_rows=grid_rows,
        grid_cols=grid_cols,
        tile_rows=tile_rows,
        tile_cols=tile_cols,
        tile_order=tile_order,
        layout=layout,
        logical_rows=logical_rows,
        logical_cols=logical_cols,
    )


def pack_a(A: Matrix, i: int, k: int, mc: int, kc: int, mr: int, kr: int,
           layout: IntraTileLayout = COL_MAJOR_TILE) -> PackedBlock:
    """Pack the mc x kc block of A at (i, k) into mr x kr tiles, rows of tiles first."""
    return _pack(A, i, k, mc, kc, mr, kr, TileGridOrder.ROW_OF_TILES, layout)


def pack_b(B: Matrix, k: int, j: int, kc: int, nc: int, kr: int, nr: int,
           layout: IntraTileLayout = ROW_MAJOR_TILE) -> PackedBlock:
    """Pack the kc x nc block of B at (k, j) into kr x nr tiles, columns of tiles first."""
    return _pack(B, k, j, kc, nc, kr, nr, TileGridOrder.COL_OF_TILES, layout)


def load_tile(packed: PackedBlock, tile_row: int, tile_col: int) -> np.ndarray:
    """Flat tile at grid position (tile_row, tile_col), in the block's layout.

    The returned vector is a slice of the packed buffer (one contiguous run);
    callers must not write through it.
    """
    offset = packed.tile_offset(tile_row, tile_col)
    return packed.buffer[offset:offset + packed.tile_size]


def store_tile(C: Matrix, i: int, j: int, tile: np.ndarray, tile_rows: int,
               tile_cols: int, logical_rows: int, logical_cols: int,
               layout: IntraTileLayout = ROW_MAJOR_TILE) -> None:
    """Write a flat tile into C at (i, j), touching only the logical region.

    Full tiles are stored as one strided block copy; partial tiles fall back
    to element-by-element stores so padded lanes never reach C.
    """
    if not (0 <= i < C.rows and 0 <= j < C.cols):
        raise ContractViolationError(f"store offset ({i}, {j}) outside C")
    if logical_rows > tile_rows or logical_cols > tile_cols:
        raise ContractViolationError("logical extents exceed the tile shape")
    if i + logical_rows > C.rows or j + logical_cols > C.cols:
        raise ContractViolationError("logical region extends past C")
    if tile.size != tile_rows * tile_cols:
        raise ContractViolationError(
            f"tile has {tile.size} elements, expected {tile_rows * tile_cols}"
        )
    if layout is IntraTileLayout.ROW_MAJOR_TILE:
        tile2d = tile.reshape(tile_rows, tile_cols)
    else:
        tile2d = tile.reshape(tile_cols, tile_rows).T
    if logical_rows == tile_rows and logical_cols == tile_cols:
        C.view2d[i:i + tile_rows, j:j + tile_cols] = tile2d
        return
    view = C.view2d
    for r in range(logical_rows):
        for c in range(logical_cols):
            view[i + r, j + c] = tile2d[r, c]
