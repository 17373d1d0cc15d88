"""Wall-clock measurement of kernel variants."""

from __future__ import annotations

import statistics
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

from threadpoolctl import threadpool_limits

from perfsage.datagen import external
from perfsage.errors import ParameterError
from perfsage.kernels.instance import KernelInstance
from perfsage.kernels.variants import VariantDescriptor, bind
from perfsage.models.features import featurize

# one timed region at a time, process-wide
TIMING_LOCK = threading.Lock()


@dataclass(frozen=True)
class TimingPolicy:
    warmups: int = 1
    reps: int = 5

    def __post_init__(self):
        if self.warmups < 0 or self.reps < 1:
            raise ParameterError(f"need warmups >= 0 and reps >= 1, got {self.warmups}, {self.reps}")


def measure(
    instance: KernelInstance,
    variant: VariantDescriptor,
    n_thd: int,
    policy: TimingPolicy = TimingPolicy(),
    clock: Optional[Callable[[], float]] = None,
    raw: Optional[list] = None,
) -> float:
    """Median runtime in seconds over ``policy.reps`` runs after the warmups.

    Operand conversion happens before the clock starts. Pass ``raw`` to collect
    the individual timings. BLAS is pinned to one thread so ``n_thd`` is the
    only source of parallelism.
    """
    if variant.is_external:
        feats = featurize(instance.params, augmented=False, threads=variant.uses_threads).values
        times = []
        with TIMING_LOCK:
            for i in range(policy.warmups + policy.reps):
                t = external.query(variant.command, feats, variant.variant_id)
                if i >= policy.warmups:
                    times.append(t)
    else:
        clock = clock or time.perf_counter
        run = bind(instance, variant)
        times = []
        with TIMING_LOCK, threadpool_limits(limits=1):
            for _ in range(policy.warmups):
                run(n_thd)
            for _ in range(policy.reps):
                start = clock()
                run(n_thd)
                times.append(clock() - start)
    if raw is not None:
        raw.extend(times)
    return float(statistics.median(times))
