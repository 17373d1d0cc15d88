"""Runnable kernel variants.

Each native variant is split into a ``prepare`` step (convert the instance's
operands into the variant's storage format, untimed) and an ``execute`` step
(the kernel itself, timed). External variants are opaque processes that speak
the line protocol in :mod:`perfsage.datagen.external` and only report runtimes.
"""

from __future__ import annotations

import functools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from perfsage.errors import ExternalVariantError, ParameterError
from perfsage.kernels.blur import blur_tiled, check_schedule
from perfsage.kernels.instance import KernelInstance, pooled_shape
from perfsage.kernels.params import KernelKind

STORAGES = ("dense", "sparse")
THREADINGS = ("fixed-single", "threaded")
IMPLS = ("naive", "tiled", "external")


@dataclass(frozen=True)
class VariantDescriptor:
    variant_id: str
    kind: KernelKind
    storage: str = "dense"
    threading: str = "fixed-single"
    kind_of_impl: str = "naive"
    hardware_label: str = ""
    command: Optional[tuple[str, ...]] = None
    # "gpu" variants take no thread-count feature
    device: str = "cpu"

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind.parse(self.kind))
        if self.storage not in STORAGES:
            raise ParameterError(f"storage must be one of {STORAGES}, got {self.storage!r}")
        if self.threading not in THREADINGS:
            raise ParameterError(f"threading must be one of {THREADINGS}, got {self.threading!r}")
        if self.kind_of_impl not in IMPLS:
            raise ParameterError(f"kind_of_impl must be one of {IMPLS}, got {self.kind_of_impl!r}")
        if self.device not in ("cpu", "gpu"):
            raise ParameterError(f"device must be 'cpu' or 'gpu', got {self.device!r}")
        if self.kind_of_impl == "external" and not self.command:
            raise ParameterError(f"external variant {self.variant_id!r} needs a launch command")
        if self.command is not None:
            object.__setattr__(self, "command", tuple(self.command))

    @property
    def is_external(self) -> bool:
        return self.kind_of_impl == "external"

    @property
    def uses_threads(self) -> bool:
        """Whether n_thd is part of this variant's feature vector."""
        return self.device == "cpu" and self.kind is not KernelKind.BLUR

    def effective_threads(self, n_thd: int) -> int:
        if n_thd < 1:
            raise ParameterError(f"n_thd must be >= 1, got {n_thd}")
        return 1 if self.threading == "fixed-single" else int(n_thd)


@functools.lru_cache(maxsize=None)
def _pool(n_thd: int) -> ThreadPoolExecutor:
    return ThreadPoolExecutor(max_workers=n_thd, thread_name_prefix=f"perfsage-{n_thd}")


def _bands(rows: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, rows))
    edges = np.linspace(0, rows, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _run_bands(fn, bands, n_thd):
    """Apply ``fn(lo, hi)`` to each band, in parallel when n_thd > 1."""
    if n_thd == 1 or len(bands) == 1:
        for lo, hi in bands:
            fn(lo, hi)
        return
    for fut in [_pool(n_thd).submit(fn, lo, hi) for lo, hi in bands]:
        fut.result()


# -- matrix-matrix ---------------------------------------------------------


def _mm_dense_prepare(inst):
    return inst.inputs["A"].toarray(), inst.inputs["B"].toarray()


def _mm_dense_execute(ops, n_thd):
    A, B = ops
    out = np.empty((A.shape[0], B.shape[1]))

    def work(lo, hi):
        np.matmul(A[lo:hi], B, out=out[lo:hi])

    _run_bands(work, _bands(A.shape[0], n_thd), n_thd)
    return out


def _mm_sparse_prepare(inst):
    return inst.inputs["A"].tocsr(), inst.inputs["B"].tocsr()


def _mm_sparse_execute(ops, n_thd):
    A, B = ops
    out = np.empty((A.shape[0], B.shape[1]))

    def work(lo, hi):
        out[lo:hi] = (A[lo:hi] @ B).toarray()

    _run_bands(work, _bands(A.shape[0], n_thd), n_thd)
    return out


# -- matrix-vector ---------------------------------------------------------


def _mv_dense_prepare(inst):
    return inst.inputs["A"].toarray(), inst.inputs["x"]


def _mv_sparse_prepare(inst):
    return inst.inputs["A"].tocsr(), inst.inputs["x"]


def _mv_execute(ops, n_thd):
    A, x = ops
    out = np.empty(A.shape[0])

    def work(lo, hi):
        out[lo:hi] = A[lo:hi] @ x

    _run_bands(work, _bands(A.shape[0], n_thd), n_thd)
    return out


# -- convolution (valid mode, no kernel flip) -------------------------------


def _mc_dense_prepare(inst):
    return inst.inputs["A"].toarray(), inst.inputs["B"]


def _mc_dense_execute(ops, n_thd):
    A, B = ops
    r = B.shape[0]
    rows, cols = A.shape[0] - r + 1, A.shape[1] - r + 1
    out = np.zeros((rows, cols))

    def work(lo, hi):
        band = out[lo:hi]
        for a in range(r):
            for b in range(r):
                band += B[a, b] * A[lo + a : hi + a, b : b + cols]

    _run_bands(work, _bands(rows, n_thd), n_thd)
    return out


def _mc_sparse_prepare(inst):
    A = inst.inputs["A"]
    return A.row.astype(np.int64), A.col.astype(np.int64), A.data, A.shape, inst.inputs["B"]


def _mc_sparse_execute(ops, n_thd):
    row, col, val, (m, n), B = ops
    r = B.shape[0]
    rows, cols = m - r + 1, n - r + 1

    def partial(lo, hi):
        acc = np.zeros(rows * cols)
        p, q, v = row[lo:hi], col[lo:hi], val[lo:hi]
        for a in range(r):
            i = p - a
            ok_i = (i >= 0) & (i < rows)
            for b in range(r):
                j = q - b
                ok = ok_i & (j >= 0) & (j < cols)
                acc += np.bincount(i[ok] * cols + j[ok], weights=v[ok] * B[a, b], minlength=rows * cols)
        return acc

    bands = _bands(len(val), n_thd) or [(0, 0)]
    if n_thd == 1 or len(bands) == 1:
        parts = [partial(lo, hi) for lo, hi in bands]
    else:
        parts = [f.result() for f in [_pool(n_thd).submit(partial, lo, hi) for lo, hi in bands]]
    return np.sum(parts, axis=0).reshape(rows, cols)


# -- max pooling (window r, stride s, zero padding past the edge) ----------


def _mp_dense_prepare(inst):
    p = inst.params
    rows, cols = pooled_shape(p.m, p.n, p.s)
    padded = np.zeros(((rows - 1) * p.s + p.r, (cols - 1) * p.s + p.r))
    padded[: p.m, : p.n] = inst.inputs["A"].toarray()
    return padded, p.r, p.s, rows, cols


def _mp_dense_execute(ops, n_thd):
    P, r, s, rows, cols = ops
    out = np.empty((rows, cols))

    def work(lo, hi):
        band = out[lo:hi]
        band[...] = P[lo * s : (hi - 1) * s + 1 : s, 0 : (cols - 1) * s + 1 : s]
        for a in range(r):
            for b in range(r):
                np.maximum(band, P[lo * s + a : (hi - 1) * s + a + 1 : s, b : (cols - 1) * s + b + 1 : s], out=band)

    _run_bands(work, _bands(rows, n_thd), n_thd)
    return out


def _mp_sparse_prepare(inst):
    p = inst.params
    A = inst.inputs["A"]
    rows, cols = pooled_shape(p.m, p.n, p.s)
    return A.row.astype(np.int64), A.col.astype(np.int64), A.data, p.r, p.s, rows, cols


def _mp_sparse_execute(ops, n_thd):
    row, col, val, r, s, rows, cols = ops

    def partial(lo, hi):
        best = np.full(rows * cols, -np.inf)
        count = np.zeros(rows * cols, dtype=np.int64)
        p, q, v = row[lo:hi], col[lo:hi], val[lo:hi]
        for a in range(r):
            pa = p - a
            ok_i = (pa >= 0) & (pa % s == 0) & (pa // s < rows)
            for b in range(r):
                qb = q - b
                ok = ok_i & (qb >= 0) & (qb % s == 0) & (qb // s < cols)
                idx = (pa[ok] // s) * cols + qb[ok] // s
                np.maximum.at(best, idx, v[ok])
                count += np.bincount(idx, minlength=rows * cols)
        return best, count

    bands = _bands(len(val), n_thd) or [(0, 0)]
    if n_thd == 1 or len(bands) == 1:
        parts = [partial(lo, hi) for lo, hi in bands]
    else:
        parts = [f.result() for f in [_pool(n_thd).submit(partial, lo, hi) for lo, hi in bands]]
    best = np.max([b for b, _ in parts], axis=0)
    count = np.sum([c for _, c in parts], axis=0)
    # any window with fewer stored entries than cells also sees a zero
    best = np.where(count < r * r, np.maximum(best, 0.0), best)
    return best.reshape(rows, cols)


# -- blur -----------------------------------------------------------------


def _blur_prepare(inst):
    image = np.ascontiguousarray(inst.inputs["image"])
    check_schedule(image.shape, inst.params.schedule)
    return image, inst.params.schedule


def _blur_execute(ops, n_thd):
    image, schedule = ops
    return blur_tiled(image, schedule, n_thd)


# -- registry -------------------------------------------------------------

_Impl = tuple[Callable[[KernelInstance], object], Callable[[object, int], np.ndarray]]

REGISTRY: dict[str, VariantDescriptor] = {}
_IMPLS: dict[str, _Impl] = {}


def register(descriptor: VariantDescriptor, prepare=None, execute=None) -> VariantDescriptor:
    if descriptor.variant_id in REGISTRY:
        raise ParameterError(f"variant {descriptor.variant_id!r} is already registered")
    if not descriptor.is_external and (prepare is None or execute is None):
        raise ParameterError("native variants need prepare and execute callables")
    REGISTRY[descriptor.variant_id] = descriptor
    if not descriptor.is_external:
        _IMPLS[descriptor.variant_id] = (prepare, execute)
    return descriptor


def unregister(variant_id: str) -> None:
    REGISTRY.pop(variant_id, None)
    _IMPLS.pop(variant_id, None)


def register_external(variant_id, kind, command, device="cpu", threading="threaded", hardware_label=""):
    """Register a black-box variant launched as ``command`` (argv list)."""
    return register(
        VariantDescriptor(
            variant_id=variant_id,
            kind=kind,
            storage="dense",
            threading=threading,
            kind_of_impl="external",
            hardware_label=hardware_label,
            command=tuple(command),
            device=device,
        )
    )


def _native(kind, storage, threading, prepare, execute, impl="naive"):
    suffix = "single" if threading == "fixed-single" else "threaded"
    vid = f"{kind.value}.{storage}.{suffix}"
    register(VariantDescriptor(vid, kind, storage, threading, impl), prepare, execute)


for _threading in THREADINGS:
    _native(KernelKind.MM, "dense", _threading, _mm_dense_prepare, _mm_dense_execute)
    _native(KernelKind.MM, "sparse", _threading, _mm_sparse_prepare, _mm_sparse_execute)
    _native(KernelKind.MV, "dense", _threading, _mv_dense_prepare, _mv_execute)
    _native(KernelKind.MV, "sparse", _threading, _mv_sparse_prepare, _mv_execute)
    _native(KernelKind.MC, "dense", _threading, _mc_dense_prepare, _mc_dense_execute)
    _native(KernelKind.MC, "sparse", _threading, _mc_sparse_prepare, _mc_sparse_execute)
    _native(KernelKind.MP, "dense", _threading, _mp_dense_prepare, _mp_dense_execute)
    _native(KernelKind.MP, "sparse", _threading, _mp_sparse_prepare, _mp_sparse_execute)
register(VariantDescriptor("blur.tiled", KernelKind.BLUR, "dense", "threaded", "tiled"), _blur_prepare, _blur_execute)


def get_variant(variant_id: str) -> VariantDescriptor:
    try:
        return REGISTRY[variant_id]
    except KeyError:
        raise ParameterError(f"unknown variant {variant_id!r}; known: {sorted(REGISTRY)}") from None


def variants_for(kind, include_external=False) -> list[VariantDescriptor]:
    kind = KernelKind.parse(kind)
    return [v for v in REGISTRY.values() if v.kind is kind and (include_external or not v.is_external)]


def _check_pair(instance: KernelInstance, variant: VariantDescriptor):
    if variant.kind is not instance.params.kind:
        raise ParameterError(
            f"variant {variant.variant_id!r} runs {variant.kind.name}, instance is {instance.params.kind.name}"
        )


def bind(instance: KernelInstance, variant: VariantDescriptor) -> Callable[[int], np.ndarray]:
    """Prepare operands now; return ``run(n_thd)`` that executes only the kernel."""
    _check_pair(instance, variant)
    if variant.is_external:
        raise ExternalVariantError(
            f"variant {variant.variant_id!r} is external; it reports runtimes only and produces no output"
        )
    prepare, execute = _IMPLS[variant.variant_id]
    ops = prepare(instance)

    def run(n_thd: int) -> np.ndarray:
        return execute(ops, variant.effective_threads(n_thd))

    return run


def run_variant(instance: KernelInstance, variant: VariantDescriptor, n_thd: int = 1) -> np.ndarray:
    return bind(instance, variant)(n_thd)
