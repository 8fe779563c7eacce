"""Dense matrix types, element-type descriptors, and naive reference kernels.

Everything else in the package is checked against the oracles in this module:
``naive_gemm`` and ``naive_syr2k`` accumulate with a fixed, documented loop
order so their rounding behavior is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class GemmError(Exception):
    """Base class for errors raised by this package."""


class ContractViolationError(GemmError):
    """Arguments violate an operation's preconditions (shape, bounds, aliasing)."""


class InfeasibleConfigError(GemmError):
    """A cache/vector configuration is too small to yield usable blocking factors."""


class InfeasibleGridError(GemmError):
    """An accumulator grid exceeds a hardware budget; message names the budget."""


class Order(Enum):
    COLUMN_MAJOR = "column_major"
    ROW_MAJOR = "row_major"


@dataclass(frozen=True)
class ElementType:
    """Input element type together with its accumulation type and update rank.

    ``rank`` is the number of outer products folded into one micro update:
    1 for f32/f64, 2 for 16-bit integers, 4 for 8-bit integers.  Accumulation
    is 32-bit for f32/i16/i8 inputs and 64-bit for f64.
    """

    tag: str
    element_bytes: int
    accum_bytes: int
    rank: int
    np_dtype: np.dtype
    np_accum_dtype: np.dtype

    @property
    def is_float(self) -> bool:
        return np.issubdtype(self.np_dtype, np.floating)

    @property
    def eps(self) -> float:
        """Machine epsilon of the input type (floats only)."""
        return float(np.finfo(self.np_dtype).eps)

    def __str__(self) -> str:
        return self.tag


F32 = ElementType("f32", 4, 4, 1, np.dtype(np.float32), np.dtype(np.float32))
F64 = ElementType("f64", 8, 8, 1, np.dtype(np.float64), np.dtype(np.float64))
I16_TO_I32 = ElementType("i16_to_i32", 2, 4, 2, np.dtype(np.int16), np.dtype(np.int32))
I8_TO_I32 = ElementType("i8_to_i32", 1, 4, 4, np.dtype(np.int8), np.dtype(np.int32))

ELEMENT_TYPES = {t.tag: t for t in (F32, F64, I16_TO_I32, I8_TO_I32)}

_ACCUM_FOR_DTYPE = {
    np.dtype(np.float32): np.dtype(np.float32),
    np.dtype(np.float64): np.dtype(np.float64),
    np.dtype(np.int16): np.dtype(np.int32),
    np.dtype(np.int8): np.dtype(np.int32),
    np.dtype(np.int32): np.dtype(np.int32),
}


def element_type(tag: str) -> ElementType:
    try:
        return ELEMENT_TYPES[tag]
    except KeyError:
        raise ContractViolationError(f"unknown element type {tag!r}") from None


def etype_for_dtype(dtype: np.dtype) -> ElementType:
    """Map a numpy input dtype back to its element-type descriptor."""
    for t in ELEMENT_TYPES.values():
        if t.np_dtype == dtype:
            return t
    raise ContractViolationError(f"no element type for dtype {dtype}")


def accum_dtype_for(dtype: np.dtype) -> np.dtype:
    try:
        return _ACCUM_FOR_DTYPE[np.dtype(dtype)]
    except KeyError:
        raise ContractViolationError(f"no accumulation type for dtype {dtype}") from None


@dataclass(eq=False)
class Matrix:
    """A dense matrix stored in a flat buffer with a leading dimension.

    ``ld`` is the stride, in elements, between consecutive columns
    (column-major) or rows (row-major).
    """

    rows: int
    cols: int
    ld: int
    order: Order
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.rows < 0 or self.cols < 0:
            raise ContractViolationError("matrix dimensions must be non-negative")
        minor = self.rows if self.order is Order.COLUMN_MAJOR else self.cols
        major = self.cols if self.order is Order.COLUMN_MAJOR else self.rows
        if self.ld < minor:
            raise ContractViolationError(
                f"leading dimension {self.ld} smaller than minor extent {minor}"
            )
        if self.data.ndim != 1:
            raise ContractViolationError("matrix buffer must be one-dimensional")
        if self.data.size < self.ld * major:
            raise ContractViolationError(
                f"buffer holds {self.data.size} elements, need {self.ld * major}"
            )

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def index(self, i: int, j: int) -> int:
        """Flat buffer index of logical element (i, j)."""
        if self.order is Order.COLUMN_MAJOR:
            return i + j * self.ld
        return i * self.ld + j

    @property
    def view2d(self) -> np.ndarray:
        """Writable (rows, cols) view of the logical elements."""
        if self.order is Order.COLUMN_MAJOR:
            return self.data[: self.ld * self.cols].reshape(self.cols, self.ld)[:, : self.rows].T
        return self.data[: self.ld * self.rows].reshape(self.rows, self.ld)[:, : self.cols]

    def to_dense(self) -> np.ndarray:
        """Logical (rows, cols) contents as a fresh C-contiguous array."""
        return np.ascontiguousarray(self.view2d)

    def copy(self) -> "Matrix":
        return Matrix(self.rows, self.cols, self.ld, self.order, self.data.copy())

    @classmethod
    def zeros(cls, rows: int, cols: int, dtype, order: Order = Order.COLUMN_MAJOR,
              ld: int | None = None) -> "Matrix":
        minor = rows if order is Order.COLUMN_MAJOR else cols
        major = cols if order is Order.COLUMN_MAJOR else rows
        ld = minor if ld is None else ld
        return cls(rows, cols, ld, order, np.zeros(ld * major, dtype=dtype))

    @classmethod
    def from_dense(cls, array, order: Order = Order.COLUMN_MAJOR,
                   ld: int | None = None) -> "Matrix":
        arr = np.asarray(array)
        if arr.ndim != 2:
            raise ContractViolationError("from_dense expects a 2-D array")
        rows, cols = arr.shape
        out = cls.zeros(rows, cols, arr.dtype, order, ld)
        out.view2d[:] = arr
        return out


def random_matrix(rows: int, cols: int, etype: ElementType, seed, *,
                  order: Order = Order.COLUMN_MAJOR, ld: int | None = None,
                  accum: bool = False) -> Matrix:
    """Seeded random matrix: floats uniform in [-1, 1], integers full-range.

    With ``accum=True`` the buffer uses the accumulation dtype (for C operands
    of integer GEMMs) while values stay in the input-type range.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if etype.is_float:
        values = rng.uniform(-1.0, 1.0, size=rows * cols).astype(etype.np_dtype)
    else:
        info = np.iinfo(etype.np_dtype)
        store = etype.np_accum_dtype if accum else etype.np_dtype
        values = rng.integers(info.min, info.max, size=rows * cols,
                              endpoint=True, dtype=np.int64).astype(store)
    dtype = etype.np_accum_dtype if (accum and not etype.is_float) else values.dtype
    out = Matrix.zeros(rows, cols, dtype, order, ld)
    out.view2d[:] = values.reshape(rows, cols)
    return out


def _sequential_matmul(a: np.ndarray, b: np.ndarray, accum: np.dtype) -> np.ndarray:
    """a @ b with each output element accumulated in increasing-k order.

    Equivalent, element for element, to the scalar i,j,k triple loop with k
    innermost: one rank-1 update per k, all in the accumulation dtype.
    """
    a = a.astype(accum, copy=False)
    b = b.astype(accum, copy=False)
    m, k = a.shape
    n = b.shape[1]
    acc = np.zeros((m, n), dtype=accum)
    tmp = np.empty((m, n), dtype=accum)
    for step in range(k):
        np.multiply.outer(a[:, step], b[step], out=tmp)
        np.add(acc, tmp, out=acc)
    return acc


def _check_gemm_shapes(A: Matrix, B: Matrix, C: Matrix) -> None:
    if A.cols != B.rows:
        raise ContractViolationError(
            f"inner dimensions disagree: A is {A.rows}x{A.cols}, B is {B.rows}x{B.cols}"
        )
    if C.rows != A.rows or C.cols != B.cols:
        raise ContractViolationError(
            f"C is {C.rows}x{C.cols}, expected {A.rows}x{B.cols}"
        )
    if C.data is A.data or C.data is B.data:
        raise ContractViolationError("C must not alias A or B")


def naive_gemm(alpha, A: Matrix, B: Matrix, beta, C: Matrix) -> Matrix:
    """Reference C' = beta*C + alpha*A@B with i,j,k loop order.

    Accumulation happens in the accumulation dtype of the input element type;
    integer results wrap modulo 2**32.  beta == 0 ignores C's prior contents.
    Returns a fresh matrix; C is left untouched.
    """
    _check_gemm_shapes(A, B, C)
    accum = accum_dtype_for(A.dtype)
    acc = _sequential_matmul(A.view2d, B.view2d, accum)
    alpha_s = accum.type(alpha)
    beta_s = accum.type(beta)
    if beta == 0:
        result = alpha_s * acc
    else:
        result = beta_s * C.to_dense().astype(accum, copy=False) + alpha_s * acc
    out = Matrix.zeros(C.rows, C.cols, accum, C.order)
    out.view2d[:] = result
    return out


def naive_syr2k(alpha, A: Matrix, B: Matrix, beta, C: Matrix, half: str) -> Matrix:
    """Reference SYR2K: the selected triangle of alpha*(A@B^T + B@A^T) + beta*C.

    A and B are N x K; C is N x N.  Only the ``half`` ("lower" or "upper")
    triangle is updated; the other triangle is copied from C bit for bit.
    """
    if half not in ("lower", "upper"):
        raise ContractViolationError(f"half must be 'lower' or 'upper', got {half!r}")
    if C.rows != C.cols:
        raise ContractViolationError("C must be square")
    if A.rows != C.rows or B.rows != C.rows or A.cols != B.cols:
        raise ContractViolationError("A and B must both be N x K with N matching C")
    accum = accum_dtype_for(A.dtype)
    a2 = A.view2d
    b2 = B.view2d
    first = _sequential_matmul(a2, b2.T, accum)
    second = _sequential_matmul(b2, a2.T, accum)
    alpha_s = accum.type(alpha)
    beta_s = accum.type(beta)
    c_old = C.to_dense().astype(accum, copy=False)
    base = np.zeros_like(c_old) if beta == 0 else beta_s * c_old
    full = base + alpha_s * first + alpha_s * second
    mask = np.tril(np.ones(C.shape, dtype=bool)) if half == "lower" \
        else np.triu(np.ones(C.shape, dtype=bool))
    out = Matrix.zeros(C.rows, C.cols, accum, C.order)
    out.view2d[:] = np.where(mask, full, c_old)
    return out


def frobenius_rel_error(X: Matrix, Y: Matrix) -> float:
    """||X - Y||_F / max(||Y||_F, tiny), computed in double precision.

    ``tiny`` is the smallest positive normal of Y's dtype for float matrices,
    of float64 otherwise.
    """
    if X.shape != Y.shape:
        raise ContractViolationError(f"shape mismatch: {X.shape} vs {Y.shape}")
    xd = X.to_dense().astype(np.float64)
    yd = Y.to_dense().astype(np.float64)
    num = float(np.linalg.norm(xd - yd))
    den = float(np.linalg.norm(yd))
    if np.issubdtype(Y.dtype, np.floating):
        tiny = float(np.finfo(Y.dtype).tiny)
    else:
        tiny = float(np.finfo(np.float64).tiny)
    return num / max(den, tiny)
