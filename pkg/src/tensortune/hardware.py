"""Hardware descriptions and their numeric feature encoding.

A target is described by a small set of integer parameters (cache line width,
core count, thread limits...). Models never see the raw integers: they see a
fixed-length vector of log2-scaled values plus a presence mask, so a CPU and a
GPU live in the same feature space even though different parameters apply to
each class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import DataValidationError

HARDWARE_CLASSES = ("CPU", "GPU")

# Canonical feature slot order. Slot 0 encodes the hardware class itself
# (code 1 = CPU, 2 = GPU, stored as log2 of the code so every present slot
# holds a log2 value); slots 1..8 are the remaining parameters in alphabetical
# order.
FEATURE_SLOTS = (
    "hardware_class",
    "cache_line_bytes",
    "max_local_memory_per_block",
    "max_shared_memory_per_block",
    "max_threads_per_block",
    "max_vthread_extent",
    "num_cores",
    "vector_unit_bytes",
    "warp_size",
)
N_FEATURE_SLOTS = len(FEATURE_SLOTS)

# Which parameters apply to which class. Shared slots are present for both.
_CLASS_FIELDS = {
    "CPU": ("cache_line_bytes", "num_cores", "vector_unit_bytes"),
    "GPU": (
        "cache_line_bytes",
        "max_local_memory_per_block",
        "max_shared_memory_per_block",
        "max_threads_per_block",
        "max_vthread_extent",
        "vector_unit_bytes",
        "warp_size",
    ),
}

_CLASS_CODES = {"CPU": 1, "GPU": 2}


@dataclass(frozen=True)
class HardwareParams:
    """Static description of one measurement target."""

    target_id: str
    hardware_class: str
    cache_line_bytes: int
    vector_unit_bytes: int
    num_cores: int | None = None
    max_local_memory_per_block: int | None = None
    max_shared_memory_per_block: int | None = None
    max_threads_per_block: int | None = None
    max_vthread_extent: int | None = None
    warp_size: int | None = None

    def validate(self) -> None:
        if not self.target_id:
            raise DataValidationError("hardware entry has an empty target_id")
        if self.hardware_class not in HARDWARE_CLASSES:
            raise DataValidationError(
                f"hardware {self.target_id!r}: unknown class {self.hardware_class!r}"
            )
        applicable = set(_CLASS_FIELDS[self.hardware_class])
        for name in FEATURE_SLOTS[1:]:
            value = getattr(self, name)
            if name in applicable:
                if value is None:
                    raise DataValidationError(
                        f"hardware {self.target_id!r}: missing {name}"
                    )
                if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                    raise DataValidationError(
                        f"hardware {self.target_id!r}: {name} must be a positive "
                        f"integer, got {value!r}"
                    )
            elif value is not None:
                raise DataValidationError(
                    f"hardware {self.target_id!r}: {name} does not apply to "
                    f"{self.hardware_class} targets"
                )

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "target_id": self.target_id,
            "hardware_class": self.hardware_class,
        }
        for name in FEATURE_SLOTS[1:]:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "HardwareParams":
        known = {"target_id", "hardware_class", *FEATURE_SLOTS[1:]}
        unknown = set(obj) - known
        if unknown:
            raise DataValidationError(
                f"hardware entry has unknown fields: {sorted(unknown)}"
            )
        try:
            hw = cls(**obj)
        except TypeError as exc:
            raise DataValidationError(f"malformed hardware entry: {exc}") from exc
        hw.validate()
        return hw


@dataclass(frozen=True)
class HardwareFeatureVector:
    """log2-scaled parameter values plus a per-slot presence mask."""

    values: tuple[float, ...]
    presence_mask: tuple[bool, ...]

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.asarray(self.values, dtype=np.float64),
            np.asarray(self.presence_mask, dtype=bool),
        )


def feature_vector(hw: HardwareParams) -> HardwareFeatureVector:
    """Encode a target as (values, mask) in the canonical slot order.

    Present slots hold log2 of the raw value; absent slots hold 0 with the
    mask cleared.
    """
    hw.validate()
    values = [math.log2(_CLASS_CODES[hw.hardware_class])]
    mask = [True]
    applicable = set(_CLASS_FIELDS[hw.hardware_class])
    for name in FEATURE_SLOTS[1:]:
        if name in applicable:
            values.append(math.log2(getattr(hw, name)))
            mask.append(True)
        else:
            values.append(0.0)
            mask.append(False)
    return HardwareFeatureVector(tuple(values), tuple(mask))


# Per-slot rewrite actions used when moving a model between targets.
ACTION_KEEP = "keep"
ACTION_REPLACE = "replace-with-dst"
ACTION_ZERO = "zero"


@dataclass(frozen=True)
class FeatureMapping:
    """Slot-wise rewrite taking one target's feature vector to another's."""

    src_id: str
    dst_id: str
    actions: tuple[str, ...]
    dst_vector: HardwareFeatureVector

    def apply(self, vec: HardwareFeatureVector) -> HardwareFeatureVector:
        dst_values, dst_mask = self.dst_vector.values, self.dst_vector.presence_mask
        values = []
        mask = []
        for i, action in enumerate(self.actions):
            if action == ACTION_KEEP:
                values.append(vec.values[i])
                mask.append(vec.presence_mask[i])
            elif action == ACTION_REPLACE:
                values.append(dst_values[i])
                mask.append(dst_mask[i])
            else:
                values.append(0.0)
                mask.append(False)
        return HardwareFeatureVector(tuple(values), tuple(mask))


def map_features(src: HardwareParams, dst: HardwareParams) -> FeatureMapping:
    """Derive the slot actions that rewrite src's vector into dst's.

    Slots equal on both sides are kept, slots present on dst are replaced
    with dst's value, slots present only on src are zeroed.
    """
    sv = feature_vector(src)
    dv = feature_vector(dst)
    actions = []
    for i in range(N_FEATURE_SLOTS):
        s_on, d_on = sv.presence_mask[i], dv.presence_mask[i]
        if d_on:
            if s_on and sv.values[i] == dv.values[i]:
                actions.append(ACTION_KEEP)
            else:
                actions.append(ACTION_REPLACE)
        elif s_on:
            actions.append(ACTION_ZERO)
        else:
            actions.append(ACTION_KEEP)  # absent on both sides, 0 stays 0
    return FeatureMapping(src.target_id, dst.target_id, tuple(actions), dv)


# Fixture registry: two CPUs and two GPUs with distinct parameter sets. The
# GPU pair differs only in shared-memory capacity, which exercises the
# minimal-rewrite path of map_features.
DEFAULT_TARGETS: tuple[HardwareParams, ...] = (
    HardwareParams(
        target_id="cpu-xeon24",
        hardware_class="CPU",
        cache_line_bytes=64,
        num_cores=24,
        vector_unit_bytes=64,
    ),
    HardwareParams(
        target_id="cpu-small4",
        hardware_class="CPU",
        cache_line_bytes=64,
        num_cores=4,
        vector_unit_bytes=32,
    ),
    HardwareParams(
        target_id="gpu-t4ish",
        hardware_class="GPU",
        cache_line_bytes=64,
        max_local_memory_per_block=2147483647,
        max_shared_memory_per_block=49152,
        max_threads_per_block=1024,
        max_vthread_extent=8,
        vector_unit_bytes=16,
        warp_size=32,
    ),
    HardwareParams(
        target_id="gpu-bigsmem",
        hardware_class="GPU",
        cache_line_bytes=64,
        max_local_memory_per_block=2147483647,
        max_shared_memory_per_block=98304,
        max_threads_per_block=1024,
        max_vthread_extent=8,
        vector_unit_bytes=16,
        warp_size=32,
    ),
)


def registry() -> tuple[HardwareParams, ...]:
    """The targets shipped with the package."""
    return DEFAULT_TARGETS


def registry_by_id() -> dict[str, HardwareParams]:
    return {hw.target_id: hw for hw in DEFAULT_TARGETS}
