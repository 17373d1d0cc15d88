"""Materialized kernel inputs and the naive reference implementations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from perfsage.kernels.params import InstanceParams, KernelKind, validate


@dataclass
class KernelInstance:
    params: InstanceParams
    inputs: dict = field(repr=False)
    seed: int = 0

    @property
    def kind(self) -> KernelKind:
        return self.params.kind


def nnz_for(density: float, rows: int, cols: int) -> int:
    """Exact non-zero count for a density: round half up of d*rows*cols."""
    return int(math.floor(density * rows * cols + 0.5))


def _sparse_operand(rng, rows, cols, density) -> sp.coo_matrix:
    total = rows * cols
    nnz = nnz_for(density, rows, cols)
    flat = np.sort(rng.choice(total, size=nnz, replace=False))
    values = rng.random(nnz)
    return sp.coo_matrix((values, (flat // cols, flat % cols)), shape=(rows, cols))


def make_instance(params: InstanceParams, seed: int) -> KernelInstance:
    """Draw operands for ``params``; bit-identical for equal (params, seed)."""
    validate(params)
    rng = np.random.default_rng(seed)
    kind = params.kind
    if kind is KernelKind.MM:
        inputs = {
            "A": _sparse_operand(rng, params.m, params.n, params.d1),
            "B": _sparse_operand(rng, params.n, params.k, params.d2),
        }
    elif kind is KernelKind.MV:
        inputs = {"A": _sparse_operand(rng, params.m, params.n, params.d), "x": rng.random(params.n)}
    elif kind is KernelKind.MC:
        inputs = {
            "A": _sparse_operand(rng, params.m, params.n, params.d),
            "B": rng.random((params.r, params.r)),
        }
    elif kind is KernelKind.MP:
        inputs = {"A": _sparse_operand(rng, params.m, params.n, params.d)}
    else:
        inputs = {"image": rng.random((params.n, params.n))}
    return KernelInstance(params=params, inputs=inputs, seed=seed)


def pooled_shape(m: int, n: int, s: int) -> tuple[int, int]:
    return -(-m // s), -(-n // s)


def reference_result(instance: KernelInstance) -> np.ndarray:
    """Straightforward loop implementations used as ground truth.

    Deliberately naive: cost is proportional to the operation count, so only
    call this on small instances.
    """
    p = instance.params
    kind = p.kind
    if kind is KernelKind.BLUR:
        return _reference_blur(instance.inputs["image"])

    A = instance.inputs["A"].toarray().tolist()
    if kind is KernelKind.MM:
        B = instance.inputs["B"].toarray().tolist()
        out = [[0.0] * p.k for _ in range(p.m)]
        for i in range(p.m):
            row = A[i]
            for j in range(p.k):
                acc = 0.0
                for t in range(p.n):
                    acc += row[t] * B[t][j]
                out[i][j] = acc
        return np.array(out, dtype=np.float64).reshape(p.m, p.k)

    if kind is KernelKind.MV:
        x = instance.inputs["x"].tolist()
        return np.array([sum(A[i][t] * x[t] for t in range(p.n)) for i in range(p.m)], dtype=np.float64)

    if kind is KernelKind.MC:
        B = instance.inputs["B"].tolist()
        r = p.r
        rows, cols = p.m - r + 1, p.n - r + 1
        out = np.zeros((rows, cols))
        for i in range(rows):
            for j in range(cols):
                acc = 0.0
                for a in range(r):
                    for b in range(r):
                        acc += A[i + a][j + b] * B[a][b]
                out[i, j] = acc
        return out

    # max pooling: window r x r, stride s, cells past the edge read as zero
    r, s = p.r, p.s
    rows, cols = pooled_shape(p.m, p.n, s)
    out = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            best = -math.inf
            for a in range(r):
                for b in range(r):
                    y, x = i * s + a, j * s + b
                    v = A[y][x] if (y < p.m and x < p.n) else 0.0
                    if v > best:
                        best = v
            out[i, j] = best
    return out


def _reference_blur(image: np.ndarray) -> np.ndarray:
    """3-point horizontal mean then 3-point vertical mean, edges clamped."""
    h, w = image.shape
    img = image.tolist()
    bx = [[0.0] * w for _ in range(h)]
    for y in range(h):
        row = img[y]
        for x in range(w):
            bx[y][x] = (row[max(x - 1, 0)] + row[x] + row[min(x + 1, w - 1)]) / 3.0
    out = np.empty((h, w))
    for y in range(h):
        up, mid, down = bx[max(y - 1, 0)], bx[y], bx[min(y + 1, h - 1)]
        for x in range(w):
            out[y, x] = (up[x] + mid[x] + down[x]) / 3.0
    return out
