"""Hardware-independent synthetic runtimes for checking the learners.

Runtime is ``alpha * c * g(n_thd) * (1 + eta)`` with ``eta ~ U(-noise, noise)``
and ``g`` an Amdahl speedup curve with parallel fraction ``parallel``.
"""

from __future__ import annotations

import numpy as np

from perfsage.datagen.dataset import Dataset, sample_from
from perfsage.datagen.space import ParamSpace, sample_params
from perfsage.kernels.params import KernelKind, complexity
from perfsage.kernels.variants import VariantDescriptor
from perfsage.models.features import feature_names

SYNTHETIC_VARIANT = "synthetic"


def amdahl(n_thd, parallel: float = 0.9):
    return (1.0 - parallel) + parallel / np.asarray(n_thd, dtype=np.float64)


def synthetic_dataset(
    kind,
    count: int,
    seed: int,
    alpha: float = 1e-9,
    noise: float = 0.02,
    parallel: float = 0.9,
    max_threads: int = 4,
    space: ParamSpace = None,
) -> Dataset:
    kind = KernelKind.parse(kind)
    space = space or ParamSpace(kind, max_threads=max_threads)
    variant = VariantDescriptor(SYNTHETIC_VARIANT, kind, "dense", "threaded", "naive", hardware_label="synthetic")
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(count):
        params = sample_params(space, rng)
        eta = rng.uniform(-noise, noise)
        t = alpha * complexity(params) * float(amdahl(params.n_thd, parallel)) * (1.0 + eta)
        samples.append(sample_from(params, variant, t))
    schema = feature_names(kind, threads=variant.uses_threads)
    prov = {
        "variant": SYNTHETIC_VARIANT,
        "host": "synthetic",
        "seed": seed,
        "alpha": alpha,
        "noise": noise,
        "parallel": parallel,
        "max_threads": max_threads,
    }
    return Dataset(kind, schema, samples, prov)
