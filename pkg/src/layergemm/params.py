"""Cache-blocking factor derivation from cache sizes and vector length.

The derivation budgets half of L1 for a kc x VL strip of the packed right
operand, sizes an intermediate working length kl from the other half, and
then fills the L2/L1 and L3/L2 gaps with mc x kl and kl x nc pieces.  Every
blocking factor is floored to a multiple of its register-tiling factor.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .core import ContractViolationError, ElementType, InfeasibleConfigError


class BlockClampWarning(UserWarning):
    """A derived blocking factor fell below one register tile and was clamped."""


@dataclass(frozen=True)
class CacheConfig:
    """Effective per-core cache sizes in bytes and minimum vector length."""

    l1_bytes: int
    l2_bytes: int
    l3_bytes: int
    vl: int

    def __post_init__(self) -> None:
        if min(self.l1_bytes, self.l2_bytes, self.l3_bytes) <= 0:
            raise ContractViolationError("cache sizes must be positive")
        if not (self.l1_bytes < self.l2_bytes < self.l3_bytes):
            raise ContractViolationError("cache sizes must satisfy L1 < L2 < L3")
        if self.vl < 1:
            raise ContractViolationError("vector length must be at least 1")


@dataclass(frozen=True)
class TileParams:
    """Register-tile dimensions of the micro kernel, in elements."""

    mr: int
    kr: int
    nr: int

    def __post_init__(self) -> None:
        if min(self.mr, self.kr, self.nr) < 1:
            raise ContractViolationError("tile dimensions must be at least 1")


@dataclass(frozen=True)
class BlockParams:
    """Cache-block dimensions (mc, kc, nc) and the L1 working length kl."""

    mc: int
    kc: int
    nc: int
    kl: int


def _floor_to_multiple(value: int, step: int, name: str) -> int:
    floored = (value // step) * step
    if floored < step:
        warnings.warn(
            f"{name} bound {value} is below one tile; clamping to {step}",
            BlockClampWarning,
            stacklevel=3,
        )
        return step
    return floored


def derive_block_params(cache: CacheConfig, etype: ElementType,
                        tile: TileParams) -> BlockParams:
    """Derive (mc, kc, nc, kl) for a cache configuration and tile shape.

    kc fills half of L1 with a kc x VL strip; kl is what remains of that half
    after a VL x VL result tile, split between one strip of each operand; mc
    and nc fill the L2-minus-L1 and L3-minus-L2 budgets with kl-deep pieces.
    Results are floored to multiples of kr/mr/nr and clamped up to one tile
    (with a BlockClampWarning) when a budget is smaller than a single tile.
    """
    t = etype.element_bytes
    half_l1_elems = cache.l1_bytes // 2 // t
    kc_bound = half_l1_elems // cache.vl
    kl = (half_l1_elems - cache.vl * cache.vl) // (2 * cache.vl)
    if kl <= 0:
        raise InfeasibleConfigError(
            f"L1 of {cache.l1_bytes} bytes leaves no working length "
            f"(kl = {kl}) for {etype.tag} with VL = {cache.vl}"
        )
    mc_bound = (cache.l2_bytes - cache.l1_bytes) // t // kl
    nc_bound = (cache.l3_bytes - cache.l2_bytes) // t // kl
    kc = _floor_to_multiple(kc_bound, tile.kr, "kc")
    mc = _floor_to_multiple(mc_bound, tile.mr, "mc")
    nc = _floor_to_multiple(nc_bound, tile.nr, "nc")
    return BlockParams(mc=mc, kc=kc, nc=nc, kl=kl)


def validate_params(block: BlockParams, tile: TileParams) -> list[str]:
    """Check block/tile compatibility; returns a description of each violation.

    An empty list means the parameters are valid.
    """
    violations = []
    for name, value, factor, step in (
        ("kc", block.kc, "kr", tile.kr),
        ("mc", block.mc, "mr", tile.mr),
        ("nc", block.nc, "nr", tile.nr),
    ):
        if value < step:
            violations.append(
                f"{name} ({value}) is smaller than one tile ({factor} = {step})"
            )
        elif value % step != 0:
            violations.append(
                f"{name} ({value}) is not a multiple of {factor} ({step})"
            )
    return violations
