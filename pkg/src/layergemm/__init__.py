"""layergemm: cache-blocked, packed, micro-kernel-driven matrix multiplication.

The layers mirror a high-performance BLAS implementation: blocking factors are
derived from cache sizes, cache blocks are packed into tile-major buffers, and
fixed-shape micro kernels (a generic unrolled multiply and an outer-product
accumulator model with a schedule validator) do the arithmetic.  A benchmark
harness compares the strategies with randomized interleaved measurement.
"""

from .core import (
    ELEMENT_TYPES,
    F32,
    F64,
    I8_TO_I32,
    I16_TO_I32,
    ContractViolationError,
    ElementType,
    GemmError,
    InfeasibleConfigError,
    InfeasibleGridError,
    Matrix,
    Order,
    element_type,
    frobenius_rel_error,
    naive_gemm,
    naive_syr2k,
    random_matrix,
)
from .params import (
    BlockClampWarning,
    BlockParams,
    CacheConfig,
    TileParams,
    derive_block_params,
    validate_params,
)
from .packing import (
    COL_MAJOR_TILE,
    ROW_MAJOR_TILE,
    IntraTileLayout,
    PackedBlock,
    TileGridOrder,
    load_tile,
    pack_a,
    pack_b,
    store_tile,
)
from .micro import (
    ACC_REUSE_LATENCY,
    ISSUES_PER_CYCLE,
    MAX_ACCUMULATORS,
    VECTOR_REGISTERS,
    AccumulatorGrid,
    MicroSchedule,
    MicroShape,
    ScheduleReport,
    accumulate_outer,
    accumulator_shape,
    check_grid,
    default_grid,
    emit_schedule,
    extract_operands,
    ger_update,
    micro_multiply_generic,
    micro_multiply_outer,
    register_demand,
    validate_schedule,
)
from .macro import GENERIC, OUTER_PRODUCT, GemmPlan, gemm, syr2k
from .cli import (
    BenchCase,
    BenchResult,
    CorrectnessError,
    VerifyReport,
    emit_csv,
    run_bench,
    summary_table,
    verify,
)

__version__ = "0.1.0"
