"""Random instance parameters drawn from the data-generation ranges."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from perfsage.errors import ParameterError
from perfsage.kernels.params import InstanceParams, KernelKind, ScheduleCandidate
from perfsage.kernels.schedules import CPU_BLUR_SPACE, ScheduleSpace

THREADS_ENV = "PERFSAGE_THREADS"

MC_FILTERS = (3, 5, 7)
MP_WINDOWS = (2, 3, 4, 5)
MP_STRIDES = (1, 2)


def host_max_threads() -> int:
    """Hardware threads, capped by PERFSAGE_THREADS when set."""
    n = os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ParameterError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)


def density_ladder(rows: int, cols: int) -> tuple[float, ...]:
    """1, 1/2, 1/4, ... down to 1/2**floor(log2(rows*cols))."""
    depth = int(math.floor(math.log2(rows * cols)))
    return tuple(2.0**-i for i in range(depth + 1))


@dataclass(frozen=True)
class ParamSpace:
    kind: KernelKind
    max_dim: int = 1024
    max_threads: int = field(default_factory=host_max_threads)
    filters: tuple[int, ...] = MC_FILTERS
    windows: tuple[int, ...] = MP_WINDOWS
    strides: tuple[int, ...] = MP_STRIDES
    schedules: ScheduleSpace = CPU_BLUR_SPACE
    # blur image sides; None means schedules.sizes
    sizes: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind.parse(self.kind))
        if self.max_dim < 1 or self.max_threads < 1:
            raise ParameterError("max_dim and max_threads must be >= 1")
        if self.kind is KernelKind.MC and min(self.filters) > self.max_dim:
            raise ParameterError("filter sizes exceed max_dim")
        if self.kind is KernelKind.MP and min(self.windows) > self.max_dim:
            raise ParameterError("pool windows exceed max_dim")
        if any(s > min(self.windows) for s in self.strides):
            raise ParameterError("pool strides must not exceed the smallest window")

    @property
    def blur_sizes(self) -> tuple[int, ...]:
        return self.sizes if self.sizes is not None else self.schedules.sizes


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _dim(rng, lo, hi) -> int:
    return int(rng.integers(lo, hi + 1))


def _density(rng, rows, cols) -> float:
    ladder = density_ladder(rows, cols)
    return ladder[int(rng.integers(len(ladder)))]


def sample_schedule(space: ScheduleSpace, rng, n: Optional[int] = None) -> ScheduleCandidate:
    """Each factor uniform over its legal values given the ones drawn before it."""
    rng = _rng(rng)
    cap = n if n is not None else math.inf
    pick = lambda vals: int(vals[int(rng.integers(len(vals)))])  # noqa: E731
    s1 = pick([v for v in space.s1 if v <= cap])
    s2 = pick([v for v in space.s2 if v <= cap])
    s3_vals = [v for v in space.s3 if v <= cap and (not space.chained or v <= s2)]
    s3 = pick(s3_vals)
    s4 = pick([v for v in space.s4 if v <= cap and (not space.chained or v <= s3)])
    return ScheduleCandidate(s1, s2, s3, s4)


def sample_params(space: ParamSpace, rng_seed) -> InstanceParams:
    """Draw one instance. ``rng_seed`` is an int seed or a numpy Generator."""
    rng = _rng(rng_seed)
    kind = space.kind
    n_thd = _dim(rng, 1, space.max_threads)
    hi = space.max_dim
    if kind is KernelKind.MM:
        m, n, k = (_dim(rng, 1, hi) for _ in range(3))
        return InstanceParams.mm(m, n, k, _density(rng, m, n), _density(rng, n, k), n_thd=n_thd)
    if kind is KernelKind.MV:
        m, n = _dim(rng, 1, hi), _dim(rng, 1, hi)
        return InstanceParams.mv(m, n, _density(rng, m, n), n_thd=n_thd)
    if kind is KernelKind.MC:
        r = int(rng.choice(space.filters))
        m, n = _dim(rng, r, hi), _dim(rng, r, hi)
        return InstanceParams.mc(m, n, r, _density(rng, m, n), n_thd=n_thd)
    if kind is KernelKind.MP:
        r = int(rng.choice(space.windows))
        s = int(rng.choice(space.strides))
        m, n = _dim(rng, r, hi), _dim(rng, r, hi)
        return InstanceParams.mp(m, n, r, s, _density(rng, m, n), n_thd=n_thd)
    sizes = space.blur_sizes
    n = int(sizes[int(rng.integers(len(sizes)))])
    return InstanceParams.blur(n, sample_schedule(space.schedules, rng, n), n_thd=space.max_threads)
