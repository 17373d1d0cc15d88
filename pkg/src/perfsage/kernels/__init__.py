"""Kernel definitions, operand generation and runnable variants."""

from perfsage.kernels.blur import blur_tiled, max_threads
from perfsage.kernels.instance import KernelInstance, make_instance, nnz_for, reference_result
from perfsage.kernels.params import InstanceParams, KernelKind, ScheduleCandidate, complexity, validate
from perfsage.kernels.schedules import CPU_BLUR_SPACE, DEFAULT_SCHEDULE, GPU_BLUR_SPACE, ScheduleSpace
from perfsage.kernels.variants import (
    REGISTRY,
    VariantDescriptor,
    bind,
    get_variant,
    register,
    register_external,
    run_variant,
    unregister,
    variants_for,
)

__all__ = [
    "CPU_BLUR_SPACE",
    "DEFAULT_SCHEDULE",
    "GPU_BLUR_SPACE",
    "ScheduleSpace",
    "REGISTRY",
    "InstanceParams",
    "KernelInstance",
    "KernelKind",
    "ScheduleCandidate",
    "VariantDescriptor",
    "bind",
    "blur_tiled",
    "complexity",
    "get_variant",
    "make_instance",
    "max_threads",
    "nnz_for",
    "reference_result",
    "register",
    "register_external",
    "run_variant",
    "unregister",
    "validate",
    "variants_for",
]
