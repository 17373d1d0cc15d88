"""Benchmark samples, dataset assembly, splitting and CSV persistence."""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from perfsage.datagen.space import ParamSpace, sample_params
from perfsage.datagen.timing import TimingPolicy, measure
from perfsage.errors import DatasetLoadError, MeasurementError, ParameterError, SchemaMismatchError
from perfsage.kernels.instance import KernelInstance, make_instance
from perfsage.kernels.params import InstanceParams, KernelKind, complexity
from perfsage.kernels.schedules import ScheduleSpace
from perfsage.kernels.variants import VariantDescriptor
from perfsage.models.features import COMPLEXITY, feature_names, featurize, params_from_features

logger = logging.getLogger(__name__)

MeasureFn = Callable[[KernelInstance, VariantDescriptor, int], float]


def host_label() -> str:
    return platform.processor() or platform.machine() or "unknown-host"


@dataclass(frozen=True)
class Sample:
    variant_id: str
    features: tuple[float, ...]
    c: int
    runtime_s: float
    # echo only; rebuilt from features on load, so excluded from equality
    params: InstanceParams = field(compare=False)

    def __post_init__(self):
        if not (self.runtime_s > 0 and math.isfinite(self.runtime_s)):
            raise ParameterError(f"runtime_s must be positive and finite, got {self.runtime_s!r}")


@dataclass
class Dataset:
    kind: KernelKind
    schema: tuple[str, ...]
    samples: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = KernelKind.parse(self.kind)
        self.schema = tuple(self.schema)
        for s in self.samples:
            if len(s.features) != len(self.schema):
                raise SchemaMismatchError(f"sample has {len(s.features)} features, schema has {len(self.schema)}")

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.kind is other.kind and self.schema == other.schema and self.samples == other.samples

    @property
    def augmented_schema(self) -> tuple[str, ...]:
        return self.schema + (COMPLEXITY,)

    def matrix(self, names: Optional[Sequence[str]] = None) -> np.ndarray:
        """Rows of the requested columns, drawn from the features plus ``c``."""
        names = tuple(names) if names is not None else self.augmented_schema
        table = self.augmented_schema
        missing = [n for n in names if n not in table]
        if missing:
            raise SchemaMismatchError(f"dataset has no columns {missing}; available {table}")
        cols = [table.index(n) for n in names]
        full = np.array([s.features + (float(s.c),) for s in self.samples], dtype=np.float64)
        full = full.reshape(len(self.samples), len(table))
        return full[:, cols]

    def targets(self) -> np.ndarray:
        return np.array([s.runtime_s for s in self.samples], dtype=np.float64)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(self.kind, self.schema, [self.samples[i] for i in indices], dict(self.provenance))


def sample_from(params: InstanceParams, variant: VariantDescriptor, runtime_s: float) -> Sample:
    fv = featurize(params, augmented=False, threads=variant.uses_threads)
    return Sample(variant.variant_id, fv.values, complexity(params), float(runtime_s), params)


def build_from_params(
    params_list: Sequence[InstanceParams],
    variant: VariantDescriptor,
    policy: TimingPolicy = TimingPolicy(),
    seed: int = 0,
    measure_fn: Optional[MeasureFn] = None,
    provenance: Optional[dict] = None,
) -> Dataset:
    """Measure ``variant`` on each parameter record.

    Operands for record ``i`` are generated from ``seed + i``. Measurement
    failures abort with a :class:`MeasurementError` carrying the partial dataset.
    """
    kind = variant.kind
    schema = feature_names(kind, threads=variant.uses_threads)
    ds = Dataset(kind, schema, [], dict(provenance or {}))
    ds.provenance.setdefault("variant", variant.variant_id)
    ds.provenance.setdefault("host", variant.hardware_label or host_label())
    ds.provenance.setdefault("seed", seed)
    ds.provenance.setdefault("created", time.strftime("%Y-%m-%dT%H:%M:%S"))
    if not variant.is_external:
        ds.provenance.setdefault("policy", {"warmups": policy.warmups, "reps": policy.reps})

    for i, params in enumerate(params_list):
        if params.kind is not kind:
            raise ParameterError(f"params #{i} is {params.kind.name}, variant runs {kind.name}")
        n_thd = variant.effective_threads(params.n_thd)
        if n_thd != params.n_thd:
            params = params.replace(n_thd=n_thd)
        if variant.is_external:
            instance = KernelInstance(params, {}, seed + i)
        else:
            instance = make_instance(params, seed + i)
        try:
            if measure_fn is not None:
                runtime = measure_fn(instance, variant, n_thd)
            else:
                runtime = measure(instance, variant, n_thd, policy)
            ds.samples.append(sample_from(params, variant, runtime))
        except Exception as exc:
            raise MeasurementError(
                f"measurement {i + 1}/{len(params_list)} failed ({params}): {exc}", partial=ds
            ) from exc
        if (i + 1) % 50 == 0:
            logger.info("measured %d/%d samples of %s", i + 1, len(params_list), variant.variant_id)
    return ds


def draw_params(space: ParamSpace, count: int, seed: int) -> list[InstanceParams]:
    rng = np.random.default_rng(seed)
    return [sample_params(space, rng) for _ in range(count)]


def build_dataset(
    kind,
    variant: VariantDescriptor,
    space: Optional[ParamSpace],
    count: int,
    seed: int,
    policy: TimingPolicy = TimingPolicy(),
    measure_fn: Optional[MeasureFn] = None,
) -> Dataset:
    kind = KernelKind.parse(kind)
    if count < 2:
        raise ParameterError(f"count must be >= 2, got {count}")
    space = space or ParamSpace(kind)
    if space.kind is not kind or variant.kind is not kind:
        raise ParameterError(f"kind mismatch: {kind.name}, space {space.kind.name}, variant {variant.kind.name}")
    params = draw_params(space, count, seed)
    prov = {"space": {"kind": kind.value, "max_dim": space.max_dim, "max_threads": space.max_threads}}
    return build_from_params(params, variant, policy, seed, measure_fn, prov)


def exhaustive_blur_params(space: ScheduleSpace, sizes: Optional[Sequence[int]] = None, n_thd: int = 1):
    """Every (image side, schedule) pair of a schedule space."""
    out = []
    for n in sizes if sizes is not None else space.sizes:
        for cand in space.lattice():
            out.append(InstanceParams.blur(n, cand, n_thd=n_thd))
    return out


def split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle into disjoint train/test parts; both non-empty when len >= 2."""
    if not (0.0 < train_fraction < 1.0):
        raise ParameterError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_fraction * n))
    if n >= 2:
        n_train = min(max(n_train, 1), n - 1)
    return dataset.subset(order[:n_train].tolist()), dataset.subset(order[n_train:].tolist())


# -- CSV persistence ------------------------------------------------------


def _fmt(v: float) -> str:
    if float(v).is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def infer_kind(schema: Sequence[str]) -> KernelKind:
    for kind in KernelKind:
        for threads in (True, False):
            if tuple(schema) == feature_names(kind, threads=threads):
                return kind
    raise SchemaMismatchError(f"feature names {list(schema)} match no kernel layout")


def save_csv(dataset: Dataset, path) -> Path:
    """Write ``kernel,variant,<features>,c,runtime_s`` rows plus a provenance sidecar."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kernel", "variant", *dataset.schema, "c", "runtime_s"])
        for s in dataset.samples:
            writer.writerow([dataset.kind.value, s.variant_id, *(_fmt(v) for v in s.features), s.c, repr(s.runtime_s)])
    _meta_path(path).write_text(json.dumps(dataset.provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_csv(path) -> Dataset:
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DatasetLoadError(f"cannot open dataset {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["kernel", "variant"] or header[-2:] != ["c", "runtime_s"]:
            raise DatasetLoadError(f"{path}: line 1: expected header kernel,variant,<features...>,c,runtime_s")
        schema = tuple(header[2:-2])
        try:
            kind = infer_kind(schema)
        except SchemaMismatchError as exc:
            raise DatasetLoadError(f"{path}: line 1: {exc}") from None
        samples = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != len(header):
                    raise ValueError(f"expected {len(header)} fields, got {len(row)}")
                if KernelKind.parse(row[0]) is not kind:
                    raise ValueError(f"kernel {row[0]!r} does not match schema kind {kind.value}")
                feats = tuple(float(v) for v in row[2:-2])
                params = params_from_features(kind, schema, feats)
                c = int(row[-2])
                if c != complexity(params):
                    raise ValueError(f"c={c} disagrees with features (expected {complexity(params)})")
                samples.append(Sample(row[1], feats, c, float(row[-1]), params))
            except (ValueError, ParameterError, SchemaMismatchError) as exc:
                raise DatasetLoadError(f"{path}: line {lineno}: {exc}") from None
    meta = _meta_path(path)
    provenance = json.loads(meta.read_text(encoding="utf-8")) if meta.exists() else {}
    return Dataset(kind, schema, samples, provenance)
