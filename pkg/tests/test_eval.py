import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from perfsage import eval as ev
from perfsage.datagen import split, synthetic_dataset
from perfsage.errors import MetricDomainError
from perfsage.models import default_config, train

positive = st.floats(1e-6, 1e3, allow_nan=False)
runtimes = st.lists(positive, min_size=2, max_size=50)


def pairs(draw_len=st.integers(2, 50)):
    return draw_len.flatmap(lambda n: st.tuples(st.lists(positive, min_size=n, max_size=n), st.lists(positive, min_size=n, max_size=n)))


def test_examples():
    assert ev.mape([1, 2], [1.1, 1.8]) == pytest.approx(10.0)
    assert ev.spearman([1, 2, 3], [10, 20, 30]) == 1.0
    assert ev.spearman([1, 2, 3], [3, 2, 1]) == -1.0
    assert ev.speedup(1.7, 1.0) == 1.7
    # 10 samples: the three fastest are dropped
    t = list(range(1, 11))
    p = [x * 2 if x <= 3 else x for x in t]
    assert ev.mape_thresholded(t, p) == (0.0, 7)


@given(pairs())
def test_mape_matches_oracle(tp):
    t, p = tp
    assert abs(ev.mape(t, p) - oracles.mape(t, p)) <= 1e-9 * max(1.0, oracles.mape(t, p))


@given(pairs())
def test_thresholded_matches_oracle(tp):
    t, p = tp
    got, kept = ev.mape_thresholded(t, p)
    assert kept == len(t) - math.floor(0.3 * len(t))
    assert abs(got - oracles.mape_thresholded(t, p)) <= 1e-9 * max(1.0, got)


@given(pairs())
def test_spearman_matches_oracle(tp):
    t, p = tp
    assert ev.spearman(t, p) == pytest.approx(oracles.spearman(t, p), abs=1e-12)


@given(st.lists(st.integers(0, 4), min_size=2, max_size=30))
def test_spearman_with_ties_matches_oracle(values):
    t = [float(v) for v in values]
    p = [float(v) for v in reversed(values)]
    assert ev.spearman(t, p) == pytest.approx(oracles.spearman(t, p), abs=1e-12)


@given(runtimes)
def test_perfect_prediction(t):
    assert ev.mape(t, t) == 0.0
    assert ev.mape_thresholded(t, t)[0] == 0.0
    if len(set(t)) == len(t):
        assert ev.spearman(t, t) == pytest.approx(1.0)


@given(pairs(), st.floats(0.1, 100))
def test_mape_scale_invariant(tp, k):
    t, p = tp
    assert ev.mape(np.array(t) * k, np.array(p) * k) == pytest.approx(ev.mape(t, p), rel=1e-9)


@given(pairs())
def test_spearman_bounded_and_monotone_invariant(tp):
    t, p = tp
    rho = ev.spearman(t, p)
    assert -1.0 - 1e-12 <= rho <= 1.0 + 1e-12
    assert ev.spearman(t, np.log(p)) == pytest.approx(rho, abs=1e-12)


def test_drop_rule_ties_keep_later_indices():
    keep = ev.kept_indices([1.0, 1.0, 1.0, 2.0], 0.5)
    assert list(keep) == [2, 3]


def test_domain_errors():
    with pytest.raises(MetricDomainError):
        ev.mape([], [])
    with pytest.raises(MetricDomainError):
        ev.mape([0.0, 1.0], [1.0, 1.0])
    with pytest.raises(MetricDomainError):
        ev.mape([1.0], [1.0, 2.0])
    with pytest.raises(MetricDomainError):
        ev.spearman([1.0], [1.0])
    with pytest.raises(MetricDomainError):
        ev.speedup(0.0, 1.0)
    with pytest.raises(MetricDomainError):
        ev.mape_thresholded([1.0], [1.0], drop_fraction=1.0)


def test_aggregate_and_tables(tmp_path):
    reports = [
        ev.evaluate([1, 2, 3, 4], [1, 2, 3, 5], kernel="mm", model_family="NN+C"),
        ev.evaluate([1, 2, 3, 4], [2, 2, 3, 4], kernel="mv", model_family="NN+C"),
    ]
    rows = ev.aggregate(reports, group_by=("kernel",))
    assert [r["kernel"] for r in rows] == ["mm", "mv", "overall"]
    assert rows[-1]["mape_full"] == pytest.approx((reports[0].mape_full + reports[1].mape_full) / 2)
    table = ev.pivot(reports)
    assert set(table["NN+C"]) == {"mm", "mv"}
    text = ev.to_csv([r.to_row() for r in reports], tmp_path / "r.csv")
    assert text.splitlines()[0].startswith("mape_full,mape_thresholded,rho")
    out = ev.format_table(rows, ["kernel", "mape_full"], mark={"mape_full": 0})
    assert out.splitlines()[2].rstrip().endswith("*")


def test_evaluate_model_uses_dataset_keys():
    ds = synthetic_dataset("mv", 60, 0)
    tr, te = split(ds, 0.5, 0)
    m = train(tr, default_config("mv", "lrc"))
    rep = ev.evaluate_model(m, te)
    assert rep.kernel == "mv" and rep.variant == "synthetic" and rep.model_family == "lrc"
    assert rep.n_total == 30 and rep.n_kept == 21
