"""Kernel kinds, instance parameters, blur schedules and operation counts."""

from __future__ import annotations

import enum
import numbers
from dataclasses import dataclass, fields
from typing import Optional

from perfsage.errors import ParameterError


class KernelKind(str, enum.Enum):
    MM = "mm"
    MV = "mv"
    MC = "mc"
    MP = "mp"
    BLUR = "blur"

    @classmethod
    def parse(cls, value) -> "KernelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ParameterError(f"unknown kernel kind {value!r}") from None


def is_power_of_two(x: int) -> bool:
    return x >= 1 and (x & (x - 1)) == 0


@dataclass(frozen=True, order=True)
class ScheduleCandidate:
    """Split factors of the tiled blur: blur_x vector split, x tile, y tile, blur_y vector split.

    Ordering is lexicographic on (s1, s2, s3, s4), which is the tie-break used
    during selection.
    """

    s1: int
    s2: int
    s3: int
    s4: int

    def __post_init__(self):
        for name in ("s1", "s2", "s3", "s4"):
            v = getattr(self, name)
            if isinstance(v, numbers.Integral) and not isinstance(v, bool):
                v = int(v)
                object.__setattr__(self, name, v)
            if isinstance(v, bool) or not isinstance(v, int) or not is_power_of_two(v):
                raise ParameterError(f"schedule factor {name}={v!r} is not a positive power of two")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.s1, self.s2, self.s3, self.s4)

    @classmethod
    def parse(cls, text: str) -> "ScheduleCandidate":
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if len(parts) != 4:
            raise ParameterError(f"schedule needs four comma-separated factors, got {text!r}")
        try:
            return cls(*(int(p) for p in parts))
        except ValueError:
            raise ParameterError(f"schedule factors must be integers, got {text!r}") from None

    def __str__(self):
        return ",".join(str(v) for v in self.as_tuple())


# Fields each kind is allowed to carry (besides kind and n_thd).
_LEGAL_FIELDS = {
    KernelKind.MM: {"m", "n", "k", "d1", "d2"},
    KernelKind.MV: {"m", "n", "d"},
    KernelKind.MC: {"m", "n", "r", "d"},
    KernelKind.MP: {"m", "n", "r", "s", "d"},
    KernelKind.BLUR: {"n", "schedule"},
}


@dataclass(frozen=True)
class InstanceParams:
    """Parameter record of one kernel instance.

    For max-pooling ``r`` is the pooling window side and ``s`` the stride; the
    output has ``ceil(m/s) x ceil(n/s)`` cells.
    """

    kind: KernelKind
    m: Optional[int] = None
    n: Optional[int] = None
    k: Optional[int] = None
    r: Optional[int] = None
    s: Optional[int] = None
    d1: Optional[float] = None
    d2: Optional[float] = None
    d: Optional[float] = None
    n_thd: int = 1
    schedule: Optional[ScheduleCandidate] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind.parse(self.kind))
        # numpy scalars from samplers are normalized to builtins
        for name in ("m", "n", "k", "r", "s", "n_thd"):
            v = getattr(self, name)
            if isinstance(v, numbers.Integral) and not isinstance(v, bool):
                object.__setattr__(self, name, int(v))
        for name in ("d", "d1", "d2"):
            v = getattr(self, name)
            if isinstance(v, numbers.Real) and not isinstance(v, bool):
                object.__setattr__(self, name, float(v))
        validate(self)

    @classmethod
    def mm(cls, m, n, k, d1=1.0, d2=1.0, n_thd=1):
        return cls(KernelKind.MM, m=m, n=n, k=k, d1=d1, d2=d2, n_thd=n_thd)

    @classmethod
    def mv(cls, m, n, d=1.0, n_thd=1):
        return cls(KernelKind.MV, m=m, n=n, d=d, n_thd=n_thd)

    @classmethod
    def mc(cls, m, n, r, d=1.0, n_thd=1):
        return cls(KernelKind.MC, m=m, n=n, r=r, d=d, n_thd=n_thd)

    @classmethod
    def mp(cls, m, n, r, s, d=1.0, n_thd=1):
        return cls(KernelKind.MP, m=m, n=n, r=r, s=s, d=d, n_thd=n_thd)

    @classmethod
    def blur(cls, n, schedule, n_thd=1):
        if not isinstance(schedule, ScheduleCandidate):
            schedule = ScheduleCandidate(*schedule)
        return cls(KernelKind.BLUR, n=n, schedule=schedule, n_thd=n_thd)

    def set_fields(self) -> dict:
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name not in ("kind", "n_thd") and getattr(self, f.name) is not None
        }

    def replace(self, **changes) -> "InstanceParams":
        values = {"kind": self.kind, "n_thd": self.n_thd, **self.set_fields()}
        values.update(changes)
        return InstanceParams(**values)


def _check_dim(name, value):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ParameterError(f"{name} must be a positive integer, got {value!r}")


def _check_density(name, value):
    if not isinstance(value, (int, float)) or not (0.0 < value <= 1.0):
        raise ParameterError(f"{name} must lie in (0, 1], got {value!r}")


def validate(params: InstanceParams) -> None:
    kind = params.kind
    present = set(params.set_fields())
    legal = _LEGAL_FIELDS[kind]
    if present - legal:
        raise ParameterError(f"{kind.name} does not take {sorted(present - legal)}")
    if legal - present:
        raise ParameterError(f"{kind.name} requires {sorted(legal - present)}")
    _check_dim("n_thd", params.n_thd)

    for name in ("m", "n", "k", "r", "s"):
        if name in present:
            _check_dim(name, getattr(params, name))
    for name in ("d", "d1", "d2"):
        if name in present:
            _check_density(name, getattr(params, name))

    if kind in (KernelKind.MC, KernelKind.MP):
        if params.m < params.r or params.n < params.r:
            raise ParameterError(f"{kind.name} needs m, n >= r (m={params.m}, n={params.n}, r={params.r})")
    if kind is KernelKind.MP:
        if params.m < params.s or params.n < params.s:
            raise ParameterError(f"MP needs m, n >= s (m={params.m}, n={params.n}, s={params.s})")
    if kind is KernelKind.BLUR:
        if not isinstance(params.schedule, ScheduleCandidate):
            raise ParameterError("BLUR requires a ScheduleCandidate")
        if params.n < 4:
            raise ParameterError(f"blur image side must be >= 4, got {params.n}")
        too_big = [v for v in params.schedule.as_tuple() if v > params.n]
        if too_big:
            raise ParameterError(f"schedule {params.schedule} has factors larger than image side {params.n}")


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def complexity(params: InstanceParams) -> int:
    """Closed-form operation count of an instance."""
    validate(params)
    kind = params.kind
    if kind is KernelKind.MM:
        return params.m * params.n * params.k
    if kind is KernelKind.MV:
        return params.m * params.n
    if kind is KernelKind.MC:
        r = params.r
        return (params.m - r + 1) * (params.n - r + 1) * r * r
    if kind is KernelKind.MP:
        s = params.s
        return _ceil_div(params.n, s) * _ceil_div(params.m, s) * s * s
    return params.n * params.n
