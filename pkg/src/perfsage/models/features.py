"""Feature layouts per kernel kind.

The operation count ``c`` is always the last feature of an augmented vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from perfsage.errors import SchemaMismatchError
from perfsage.kernels.params import InstanceParams, KernelKind, ScheduleCandidate, complexity

COMPLEXITY = "c"

_BASE = {
    KernelKind.MM: ("m", "n", "k", "d1", "d2"),
    KernelKind.MV: ("m", "n", "d"),
    KernelKind.MC: ("m", "n", "r", "d"),
    KernelKind.MP: ("m", "n", "r", "s", "d"),
    KernelKind.BLUR: ("n", "s1", "s2", "s3", "s4"),
}


def feature_names(kind, threads: bool = True, augmented: bool = False) -> tuple[str, ...]:
    kind = KernelKind.parse(kind)
    names = _BASE[kind]
    if threads and kind is not KernelKind.BLUR:
        names = names + ("n_thd",)
    if augmented:
        names = names + (COMPLEXITY,)
    return names


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise SchemaMismatchError(f"{len(self.names)} names but {len(self.values)} values")

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, item):
        if isinstance(item, str):
            try:
                return self.values[self.names.index(item)]
            except ValueError:
                raise SchemaMismatchError(f"feature {item!r} not in {self.names}") from None
        return self.values[item]

    def select(self, names) -> np.ndarray:
        """Values of ``names`` in that order."""
        missing = [n for n in names if n not in self.names]
        if missing:
            raise SchemaMismatchError(f"features {missing} missing from vector with {self.names}")
        return np.array([self.values[self.names.index(n)] for n in names], dtype=np.float64)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def featurize(params: InstanceParams, augmented: bool = True, threads: bool = True) -> FeatureVector:
    names = feature_names(params.kind, threads=threads, augmented=False)
    values = []
    for name in names:
        if name in ("s1", "s2", "s3", "s4"):
            values.append(float(getattr(params.schedule, name)))
        else:
            values.append(float(getattr(params, name)))
    if augmented:
        names = names + (COMPLEXITY,)
        values.append(float(complexity(params)))
    return FeatureVector(names, tuple(values))


def params_from_features(kind, names, values) -> InstanceParams:
    """Rebuild the parameter record from a (possibly augmented) feature vector."""
    kind = KernelKind.parse(kind)
    lookup = dict(zip(names, values))
    base = _BASE[kind]
    missing = [n for n in base if n not in lookup]
    if missing:
        raise SchemaMismatchError(f"{kind.name} features need {missing}")
    n_thd = int(lookup.get("n_thd", 1))
    if kind is KernelKind.BLUR:
        schedule = ScheduleCandidate(*(int(lookup[s]) for s in ("s1", "s2", "s3", "s4")))
        return InstanceParams.blur(int(lookup["n"]), schedule, n_thd=n_thd)
    kwargs = {}
    for name in base:
        v = lookup[name]
        kwargs[name] = float(v) if name.startswith("d") else int(v)
    return InstanceParams(kind, n_thd=n_thd, **kwargs)
