"""Error and rank metrics, the low-runtime drop rule, aggregation and speedups."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from perfsage.errors import MetricDomainError

DROP_FRACTION = 0.3


def _pair(truth, pred):
    t = np.asarray(truth, dtype=np.float64).ravel()
    p = np.asarray(pred, dtype=np.float64).ravel()
    if t.shape != p.shape:
        raise MetricDomainError(f"length mismatch: {t.size} truths vs {p.size} predictions")
    return t, p


def mape(truth, pred) -> float:
    """Mean absolute percentage error, in percent."""
    t, p = _pair(truth, pred)
    if t.size == 0:
        raise MetricDomainError("mape needs at least one sample")
    if np.any(~(t > 0)):
        raise MetricDomainError("mape needs strictly positive true runtimes")
    return float(100.0 / t.size * np.sum(np.abs(t - p) / t))


def n_dropped(n: int, drop_fraction: float = DROP_FRACTION) -> int:
    return int(math.floor(drop_fraction * n + 1e-9))


def kept_indices(truth, drop_fraction: float = DROP_FRACTION) -> np.ndarray:
    """Indices left after dropping the smallest true runtimes (ties: lower index first)."""
    t = np.asarray(truth, dtype=np.float64).ravel()
    order = np.argsort(t, kind="stable")
    return np.sort(order[n_dropped(t.size, drop_fraction) :])


def mape_thresholded(truth, pred, drop_fraction: float = DROP_FRACTION) -> tuple[float, int]:
    """MAPE over the samples kept by the drop rule; returns (percent, n_kept)."""
    t, p = _pair(truth, pred)
    if not (0.0 <= drop_fraction < 1.0):
        raise MetricDomainError(f"drop_fraction must lie in [0, 1), got {drop_fraction}")
    keep = kept_indices(t, drop_fraction)
    if keep.size == 0:
        raise MetricDomainError(f"dropping {drop_fraction:.0%} of {t.size} samples leaves none")
    return mape(t[keep], p[keep]), int(keep.size)


def average_ranks(values) -> np.ndarray:
    """1-based ascending ranks; tied values share the mean of their ranks."""
    v = np.asarray(values, dtype=np.float64).ravel()
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size)
    sorted_v = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(truth, pred) -> float:
    """Rank correlation ``1 - 6 sum(d^2) / (N (N^2 - 1))`` on average ranks."""
    t, p = _pair(truth, pred)
    n = t.size
    if n < 2:
        raise MetricDomainError(f"spearman needs at least 2 samples, got {n}")
    d = average_ranks(t) - average_ranks(p)
    return float(1.0 - 6.0 * np.sum(d * d) / (n * (n * n - 1.0)))


def speedup(baseline_s: float, chosen_s: float) -> float:
    if not (baseline_s > 0 and chosen_s > 0):
        raise MetricDomainError(f"speedup needs positive runtimes, got {baseline_s}, {chosen_s}")
    return baseline_s / chosen_s


@dataclass
class EvalReport:
    mape_full: float
    mape_thresholded: float
    rho: float
    n_total: int
    n_kept: int
    kernel: str = ""
    variant: str = ""
    model_family: str = ""
    host: str = ""
    extra: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        row = asdict(self)
        row.pop("extra")
        row.update(self.extra)
        return row


def evaluate(truth, pred, drop_fraction: float = DROP_FRACTION, **keys) -> EvalReport:
    t, p = _pair(truth, pred)
    thr, kept = mape_thresholded(t, p, drop_fraction)
    rho = spearman(t, p) if t.size >= 2 else float("nan")
    return EvalReport(mape(t, p), thr, rho, int(t.size), kept, **keys)


def evaluate_model(model, dataset, drop_fraction: float = DROP_FRACTION, **keys) -> EvalReport:
    """Score a trained model on a held-out dataset (one kernel-variant-host combination)."""
    pred = model.predict_matrix(dataset.matrix(model.schema))
    keys.setdefault("kernel", dataset.kind.value)
    keys.setdefault("variant", dataset.provenance.get("variant", ""))
    keys.setdefault("host", dataset.provenance.get("host", ""))
    keys.setdefault("model_family", model.family)
    return evaluate(dataset.targets(), pred, drop_fraction, **keys)


def aggregate(reports: Sequence[EvalReport], group_by: Iterable[str] = ("kernel",)) -> list[dict]:
    """Mean MAPE (full and thresholded) and rho per group, followed by an ``overall`` row."""
    if not reports:
        raise MetricDomainError("aggregate needs at least one report")
    group_by = tuple(group_by)

    def summarize(items, label):
        rhos = [r.rho for r in items if not math.isnan(r.rho)]
        row = dict(label)
        row.update(
            mape_full=float(np.mean([r.mape_full for r in items])),
            mape_thresholded=float(np.mean([r.mape_thresholded for r in items])),
            rho=float(np.mean(rhos)) if rhos else float("nan"),
            n_reports=len(items),
        )
        return row

    groups: dict = {}
    for r in reports:
        key = tuple(getattr(r, g) if hasattr(r, g) else r.extra.get(g, "") for g in group_by)
        groups.setdefault(key, []).append(r)
    rows = [summarize(items, dict(zip(group_by, key))) for key, items in groups.items()]
    rows.append(summarize(list(reports), {g: "overall" for g in group_by}))
    return rows


def pivot(reports: Sequence[EvalReport], rows: str = "model_family", cols: str = "kernel", value="mape_thresholded"):
    """Mean of ``value`` laid out as {row_key: {col_key: mean}}."""
    cells: dict = {}
    for r in reports:
        rk = getattr(r, rows) if hasattr(r, rows) else r.extra.get(rows, "")
        ck = getattr(r, cols) if hasattr(r, cols) else r.extra.get(cols, "")
        cells.setdefault(rk, {}).setdefault(ck, []).append(getattr(r, value))
    return {rk: {ck: float(np.mean(v)) for ck, v in row.items()} for rk, row in cells.items()}


def to_csv(rows: Sequence[dict], path=None) -> str:
    if not rows:
        return ""
    fields = list(rows[0])
    for row in rows[1:]:
        fields += [k for k in row if k not in fields]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def _cell(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.2f}"
    return str(v)


def format_table(rows: Sequence[dict], columns: Optional[Sequence[str]] = None, mark: Optional[dict] = None) -> str:
    """Plain-text table; ``mark`` maps a column name to the row index to flag with ``*``."""
    if not rows:
        return "(no rows)"
    columns = list(columns or rows[0])
    body = []
    for i, row in enumerate(rows):
        cells = []
        for c in columns:
            text = _cell(row.get(c, ""))
            if mark and mark.get(c) == i:
                text += "*"
            cells.append(text)
        body.append(cells)
    widths = [max(len(c), *(len(r[j]) for r in body)) for j, c in enumerate(columns)]
    line = lambda cells: "  ".join(s.rjust(w) for s, w in zip(cells, widths))  # noqa: E731
    return "\n".join([line(columns), line(["-" * w for w in widths])] + [line(r) for r in body])
