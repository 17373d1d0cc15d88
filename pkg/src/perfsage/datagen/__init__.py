"""Parameter sampling, timing and dataset assembly."""

from perfsage.datagen.dataset import (
    Dataset,
    Sample,
    build_dataset,
    build_from_params,
    draw_params,
    exhaustive_blur_params,
    host_label,
    load_csv,
    save_csv,
    split,
)
from perfsage.datagen.space import ParamSpace, density_ladder, host_max_threads, sample_params, sample_schedule
from perfsage.datagen.synthetic import synthetic_dataset
from perfsage.datagen.timing import TimingPolicy, measure

__all__ = [
    "Dataset",
    "ParamSpace",
    "Sample",
    "TimingPolicy",
    "build_dataset",
    "build_from_params",
    "density_ladder",
    "draw_params",
    "exhaustive_blur_params",
    "host_label",
    "host_max_threads",
    "load_csv",
    "measure",
    "sample_params",
    "sample_schedule",
    "save_csv",
    "split",
    "synthetic_dataset",
]
