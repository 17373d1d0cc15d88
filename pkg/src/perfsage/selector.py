"""Schedule candidates and argmin-of-predicted-runtime selection."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from perfsage.datagen.space import host_max_threads
from perfsage.datagen.timing import TimingPolicy, measure
from perfsage.errors import ParameterError, SchemaMismatchError
from perfsage.eval import spearman, speedup
from perfsage.kernels.instance import KernelInstance
from perfsage.kernels.params import InstanceParams, ScheduleCandidate
from perfsage.kernels.schedules import CPU_BLUR_SPACE, DEFAULT_SCHEDULE, GPU_BLUR_SPACE, ScheduleSpace
from perfsage.kernels.variants import get_variant
from perfsage.models.features import featurize

__all__ = [
    "CPU_BLUR_SPACE",
    "DEFAULT_SCHEDULE",
    "GPU_BLUR_SPACE",
    "LookupPredictor",
    "ScheduleCandidate",
    "ScheduleSpace",
    "SelectionReport",
    "enumerate_candidates",
    "evaluate_selection",
    "measure_schedules",
    "predict_candidates",
    "select",
]


def enumerate_candidates(space: ScheduleSpace, limit: int, seed: int) -> list[ScheduleCandidate]:
    """Uniform sample of ``limit`` distinct lattice points (sorted), or the whole lattice."""
    if limit < 1:
        raise ParameterError(f"limit must be >= 1, got {limit}")
    lattice = space.lattice()
    if not lattice:
        raise ParameterError("schedule space is empty")
    if limit >= len(lattice):
        return lattice
    picks = np.random.default_rng(seed).choice(len(lattice), size=limit, replace=False)
    return [lattice[i] for i in sorted(picks.tolist())]


class LookupPredictor:
    """Predicts the recorded runtime of a schedule; used as a perfect-knowledge oracle."""

    def __init__(self, runtimes: Mapping[ScheduleCandidate, float]):
        self.runtimes = dict(runtimes)

    def predict(self, features) -> float:
        key = ScheduleCandidate(*(int(features[name]) for name in ("s1", "s2", "s3", "s4")))
        return self.runtimes[key]


def predict_candidates(model, n: int, candidates: Sequence[ScheduleCandidate]) -> np.ndarray:
    fvs = [featurize(InstanceParams.blur(n, c), augmented=True) for c in candidates]
    if hasattr(model, "predict_matrix"):
        try:
            X = np.array([fv.select(model.schema) for fv in fvs])
        except SchemaMismatchError as exc:
            raise SchemaMismatchError(f"model is not a blur-schedule model: {exc}") from None
        return model.predict_matrix(X)
    return np.array([model.predict(fv) for fv in fvs], dtype=np.float64)


@dataclass
class SelectionReport:
    chosen: ScheduleCandidate
    predicted_s: float
    n: int
    n_candidates: int
    measured_s: Optional[float] = None
    true_best: Optional[ScheduleCandidate] = None
    true_best_s: Optional[float] = None
    default: Optional[ScheduleCandidate] = None
    default_s: Optional[float] = None
    candidate_mean_s: Optional[float] = None
    regret: Optional[float] = None
    speedup_vs_default: Optional[float] = None
    speedup_vs_random_mean: Optional[float] = None
    rho: Optional[float] = None

    def to_dict(self) -> dict:
        out = {}
        for key, value in self.__dict__.items():
            out[key] = str(value) if isinstance(value, ScheduleCandidate) else value
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self) -> str:
        lines = [f"n={self.n}: chose {{{self.chosen}}} of {self.n_candidates} candidates"]
        lines.append(f"  predicted runtime  {self.predicted_s:.6g} s")
        if self.measured_s is not None:
            lines.append(f"  measured runtime   {self.measured_s:.6g} s")
        if self.true_best is not None:
            lines.append(f"  true best          {{{self.true_best}}} at {self.true_best_s:.6g} s (regret {self.regret:.3f}x)")
        if self.default is not None:
            lines.append(
                f"  default            {{{self.default}}} at {self.default_s:.6g} s "
                f"(speedup {self.speedup_vs_default:.3f}x)"
            )
        if self.speedup_vs_random_mean is not None:
            lines.append(f"  vs candidate mean  {self.speedup_vs_random_mean:.3f}x")
        if self.rho is not None:
            lines.append(f"  spearman rho       {self.rho:.3f}")
        return "\n".join(lines)


def select(model, n: int, candidates: Sequence[ScheduleCandidate]) -> SelectionReport:
    """Candidate with the lowest predicted runtime; ties go to the lexicographically smallest."""
    if not candidates:
        raise ParameterError("no candidates to select from")
    pred = predict_candidates(model, n, candidates)
    best = min(range(len(candidates)), key=lambda i: (pred[i], candidates[i].as_tuple()))
    return SelectionReport(chosen=candidates[best], predicted_s=float(pred[best]), n=n, n_candidates=len(candidates))


def evaluate_selection(
    chosen,
    measured: Mapping[ScheduleCandidate, float],
    default_schedule: Optional[ScheduleCandidate] = DEFAULT_SCHEDULE,
    candidates: Optional[Sequence[ScheduleCandidate]] = None,
    predicted: Optional[Sequence[float]] = None,
) -> SelectionReport:
    """Fill regret and speedups from measured runtimes.

    ``chosen`` is a :class:`SelectionReport` from :func:`select` or a bare
    candidate. The candidate set defaults to every measured schedule except a
    default that is not itself a candidate.
    """
    report = chosen if isinstance(chosen, SelectionReport) else SelectionReport(chosen, math.nan, 0, 0)
    if candidates is None:
        candidates = [c for c in measured if c != default_schedule] or list(measured)
    missing = [c for c in [report.chosen, *candidates] if c not in measured]
    if default_schedule is not None and default_schedule not in measured:
        missing.append(default_schedule)
    if missing:
        raise ParameterError(f"no measured runtime for {', '.join('{' + str(c) + '}' for c in missing[:5])}")
    times = np.array([measured[c] for c in candidates])
    best = min(range(len(candidates)), key=lambda i: (times[i], candidates[i].as_tuple()))
    report.n_candidates = report.n_candidates or len(candidates)
    report.measured_s = float(measured[report.chosen])
    report.true_best = candidates[best]
    report.true_best_s = float(times[best])
    report.regret = report.measured_s / report.true_best_s
    report.candidate_mean_s = float(times.mean())
    report.speedup_vs_random_mean = speedup(report.candidate_mean_s, report.measured_s)
    if default_schedule is not None:
        report.default = default_schedule
        report.default_s = float(measured[default_schedule])
        report.speedup_vs_default = speedup(report.default_s, report.measured_s)
    if predicted is not None and len(candidates) >= 2:
        report.rho = spearman(times, predicted)
    return report


def measure_schedules(
    n: int,
    schedules: Sequence[ScheduleCandidate],
    policy: Optional[TimingPolicy] = None,
    seed: int = 0,
    n_thd: Optional[int] = None,
    variant_id: str = "blur.tiled",
) -> dict[ScheduleCandidate, float]:
    """Host runtime of each schedule, all on the same random image of side ``n``."""
    variant = get_variant(variant_id)
    policy = policy or TimingPolicy()
    n_thd = n_thd or host_max_threads()
    image = np.random.default_rng(seed).random((n, n))
    out = {}
    for cand in dict.fromkeys(schedules):
        inst = KernelInstance(InstanceParams.blur(n, cand, n_thd=n_thd), {"image": image}, seed)
        out[cand] = measure(inst, variant, n_thd, policy)
    return out
