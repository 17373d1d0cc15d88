"""Tiled separable blur whose loop structure is driven by a schedule.

The schedule changes how the loops are split and tiled, never the values
produced. ``s1`` splits the blur_x row pass, ``s2`` x ``s3`` is the tile of
blur_y (with blur_x recomputed per tile including a one-row halo), ``s4``
splits the blur_y inner row pass. Tiles run in parallel.
"""

from __future__ import annotations

import os
import threading

import numba
import numpy as np

from perfsage.errors import ParameterError
from perfsage.kernels.params import ScheduleCandidate

if "NUMBA_THREADING_LAYER" not in os.environ:
    try:
        from numba.np.ufunc import omppool  # noqa: F401

        numba.config.THREADING_LAYER = "omp"
    except ImportError:
        numba.config.THREADING_LAYER = "workqueue"

# workqueue is not reentrant; serialize launches when it is the active layer
_launch_lock = threading.Lock()


@numba.njit(parallel=True, cache=True)
def _blur_tiles(img, s1, s2, s3, s4):
    h, w = img.shape
    out = np.empty_like(img)
    tiles_x = (w + s2 - 1) // s2
    tiles_y = (h + s3 - 1) // s3
    for t in numba.prange(tiles_x * tiles_y):
        y0 = (t // tiles_x) * s3
        x0 = (t % tiles_x) * s2
        th = min(s3, h - y0)
        tw = min(s2, w - x0)
        bx = np.empty((th + 2, tw))
        for yy in range(th + 2):
            y = min(max(y0 - 1 + yy, 0), h - 1)
            for xo in range(0, tw, s1):
                for xi in range(xo, min(xo + s1, tw)):
                    x = x0 + xi
                    bx[yy, xi] = (img[y, max(x - 1, 0)] + img[y, x] + img[y, min(x + 1, w - 1)]) / 3.0
        for yy in range(th):
            # clamp the halo rows at the image border
            up = yy if y0 + yy > 0 else yy + 1
            down = yy + 2 if y0 + yy < h - 1 else yy + 1
            for xo in range(0, tw, s4):
                for xi in range(xo, min(xo + s4, tw)):
                    out[y0 + yy, x0 + xi] = (bx[up, xi] + bx[yy + 1, xi] + bx[down, xi]) / 3.0
    return out


def max_threads() -> int:
    return int(numba.config.NUMBA_NUM_THREADS)


def check_schedule(shape, schedule: ScheduleCandidate) -> None:
    h, w = shape
    if h < 4 or w < 4:
        raise ParameterError(f"blur needs an image of at least 4x4, got {h}x{w}")
    if schedule.s1 > w or schedule.s2 > w or schedule.s4 > w or schedule.s3 > h:
        raise ParameterError(f"schedule {schedule} does not fit a {h}x{w} image")


def blur_tiled(image: np.ndarray, schedule: ScheduleCandidate, n_thd: int = 1) -> np.ndarray:
    image = np.ascontiguousarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ParameterError(f"blur expects a 2-D image, got shape {image.shape}")
    check_schedule(image.shape, schedule)
    if n_thd < 1:
        raise ParameterError(f"n_thd must be >= 1, got {n_thd}")
    threads = min(int(n_thd), max_threads())
    s1, s2, s3, s4 = schedule.as_tuple()
    if numba.config.THREADING_LAYER == "workqueue":
        with _launch_lock:
            numba.set_num_threads(threads)
            return _blur_tiles(image, s1, s2, s3, s4)
    numba.set_num_threads(threads)
    return _blur_tiles(image, s1, s2, s3, s4)
