"""Throughput and memory-cache models.

Training throughput is the lesser of a compute ceiling and what the
storage path delivers. The memory model captures how much of an epoch is
served from RAM: a cyclic full-dataset scan defeats block-LRU caching
entirely below the full-residency threshold, while a random-residency pool
serves hits in proportion to the memory-to-dataset ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError

POLICY_LRU_CYCLIC = "lru-cyclic"
POLICY_RANDOM_RESIDENCY = "random-residency"
MEMORY_POLICIES = (POLICY_LRU_CYCLIC, POLICY_RANDOM_RESIDENCY)

MODE_REM = "REM"
MODE_NVME_COPY = "NVME_COPY"
MODE_HOARD = "HOARD"
ACCESS_MODES = (MODE_REM, MODE_NVME_COPY, MODE_HOARD)


@dataclass(frozen=True)
class ModelProfile:
    """Input-side profile of one training job (all of its GPUs combined)."""

    name: str
    fps_compute_ceiling: float  # images/second when storage is no constraint
    bytes_per_image: float
    images_per_epoch: int
    batch_size: int

    def validate(self) -> None:
        for field_name in ("fps_compute_ceiling", "bytes_per_image",
                           "images_per_epoch", "batch_size"):
            if getattr(self, field_name) <= 0:
                raise ConfigError(f"model {self.name!r}: {field_name} must be > 0")

    def epoch_bytes(self) -> float:
        return self.images_per_epoch * self.bytes_per_image


@dataclass(frozen=True)
class MemoryCacheModel:
    """mdr = free memory (or dedicated cache pool) / dataset size."""

    mdr: float
    policy: str = POLICY_LRU_CYCLIC
    full_cache_threshold: float = 1.1

    def validate(self) -> None:
        if self.mdr < 0:
            raise ConfigError("mdr must be >= 0")
        if self.policy not in MEMORY_POLICIES:
            raise ConfigError(f"memory policy must be one of {MEMORY_POLICIES}")
        if self.full_cache_threshold <= 0:
            raise ConfigError("full_cache_threshold must be > 0")


def mem_hit_rate(model: MemoryCacheModel, epoch_index: int) -> float:
    """Fraction of an epoch's bytes served from memory.

    Epoch 1 is always cold. From epoch 2 on, a pool at or above the
    full-cache threshold serves everything; below it, a cyclic scan gets
    nothing from an LRU pool while a random-residency pool hits in
    proportion to mdr.
    """
    if epoch_index < 1:
        raise ConfigError(f"epoch_index must be >= 1, got {epoch_index}")
    if epoch_index == 1:
        return 0.0
    if model.mdr >= model.full_cache_threshold:
        return 1.0
    if model.policy == POLICY_LRU_CYCLIC:
        return 0.0
    return min(model.mdr, 1.0)


def fps(model: ModelProfile, storage_bandwidth_Bps: float) -> float:
    """Achieved images/second for a given storage read bandwidth."""
    if storage_bandwidth_Bps < 0:
        raise ConfigError("storage bandwidth must be >= 0")
    return min(model.fps_compute_ceiling,
               storage_bandwidth_Bps / model.bytes_per_image)
