import json

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from perfsage.datagen import ParamSpace, split, synthetic_dataset
from perfsage.datagen.dataset import Dataset, sample_from
from perfsage.errors import (
    ModelLoadError,
    ParameterError,
    SchemaMismatchError,
    TrainingDivergenceError,
    UnsupportedModelError,
)
from perfsage.eval import mape, mape_thresholded
from perfsage.kernels import InstanceParams, KernelKind, ScheduleCandidate, get_variant
from perfsage.models import (
    MAX_LIGHTWEIGHT_PARAMS,
    MIN_PREDICTION,
    FeatureVector,
    ModelConfig,
    default_config,
    feature_names,
    featurize,
    linear_coefficients,
    load_model,
    param_count,
    params_from_features,
    save_model,
    train,
    train_const,
    train_lrc,
    train_nlrc,
    train_nn,
)
from perfsage.models import core
from perfsage.models import nn as tiny
from perfsage.models.core import Normalizer

FAST = dict(epochs=400, restarts=1)


# -- features --------------------------------------------------------------


def test_featurize_examples():
    p = InstanceParams.mm(2, 3, 4, 1.0, 1.0, n_thd=2)
    assert featurize(p).values == (2, 3, 4, 1, 1, 2, 24)
    assert featurize(p, augmented=False).values == (2, 3, 4, 1, 1, 2)
    b = InstanceParams.blur(1024, ScheduleCandidate(8, 256, 128, 8))
    assert featurize(b).values == (1024, 8, 256, 128, 8, 1048576)


@pytest.mark.parametrize("kind", list(KernelKind))
def test_feature_layouts(kind):
    plain = feature_names(kind)
    aug = feature_names(kind, augmented=True)
    assert aug == plain + ("c",)
    assert ("n_thd" in plain) == (kind is not KernelKind.BLUR)


def test_feature_vector_access():
    fv = featurize(InstanceParams.mv(3, 5, 0.5, n_thd=2))
    assert fv["c"] == 15 and fv[0] == 3 and len(fv) == 5
    assert list(fv.select(["c", "m"])) == [15.0, 3.0]
    with pytest.raises(SchemaMismatchError):
        fv.select(["k"])
    with pytest.raises(SchemaMismatchError):
        FeatureVector(("a",), (1.0, 2.0))


@given(st.integers(1, 50), st.integers(1, 50), st.integers(1, 50), st.integers(1, 8))
def test_params_round_trip_through_features(m, n, k, t):
    p = InstanceParams.mm(m, n, k, 0.5, 0.25, n_thd=t)
    fv = featurize(p)
    assert params_from_features("mm", fv.names, fv.values) == p


# -- configuration and size ------------------------------------------------


def test_param_count_arithmetic():
    assert tiny.count_params(7, (8,)) == 73
    assert tiny.count_params(6, (5, 5)) == 71


@pytest.mark.parametrize("kind", list(KernelKind))
@pytest.mark.parametrize("threads", [True, False])
@pytest.mark.parametrize("family", ["nnc", "nn"])
def test_default_configs_are_lightweight(kind, threads, family):
    cfg = default_config(kind, family, threads=threads)
    n_in = len(feature_names(kind, threads=threads)) + (family == "nnc")
    assert tiny.count_params(n_in, cfg.hidden_widths) <= MAX_LIGHTWEIGHT_PARAMS
    assert len(cfg.hidden_widths) == (2 if kind is KernelKind.BLUR else 1)


def test_config_validation():
    with pytest.raises(ParameterError):
        ModelConfig(hidden_widths=(0,))
    with pytest.raises(ParameterError):
        ModelConfig(hidden_widths=())
    with pytest.raises(ParameterError):
        ModelConfig(hidden_widths=(4, 4))
    with pytest.raises(ParameterError):
        ModelConfig(purpose="selection", hidden_widths=(4,))
    with pytest.raises(ParameterError):
        ModelConfig(learning_rate=0.5)
    with pytest.raises(ParameterError):
        ModelConfig(family="svm")
    assert ModelConfig(hidden_widths=(4, 4, 4), unconstrained=True).hidden_widths == (4, 4, 4)


def test_unconstrained_widths_scale():
    light = default_config("mm")
    big = default_config("mm", unconstrained=True)
    assert big.hidden_widths == tuple(8 * w for w in light.hidden_widths)


def test_budget_enforced_at_training():
    ds = synthetic_dataset("mm", 20, 0)
    with pytest.raises(ParameterError):
        train_nn(ds, ModelConfig(hidden_widths=(40,), **FAST))
    big = train_nn(ds, ModelConfig(hidden_widths=(40,), unconstrained=True, epochs=5, restarts=1))
    assert big.param_count > MAX_LIGHTWEIGHT_PARAMS


# -- network internals -----------------------------------------------------


@given(st.integers(0, 10_000))
def test_gradient_check(seed):
    rng = np.random.default_rng(seed)
    n_in = int(rng.integers(1, 5))
    hidden = tuple(int(w) for w in rng.integers(1, 5, size=int(rng.integers(1, 3))))
    layers = tiny.init_layers(n_in, hidden, rng)
    layers = [(W, rng.normal(0, 0.3, b.shape)) for W, b in layers]
    X = rng.random((7, n_in))
    y = rng.random(7)
    # central differences are meaningless across a ReLU kink
    h_in = X
    for W, b in layers[:-1]:
        z = h_in @ W + b
        assume(np.abs(z).min() > 1e-3)
        h_in = np.maximum(z, 0.0)
    _, grads = tiny.loss_and_grads(layers, X, y)
    h = 1e-5
    for li, (W, b) in enumerate(layers):
        for arr, g in ((W, grads[li][0]), (b, grads[li][1])):
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + h
                up, _ = tiny.loss_and_grads(layers, X, y)
                arr[idx] = old - h
                down, _ = tiny.loss_and_grads(layers, X, y)
                arr[idx] = old
                fd = (up - down) / (2 * h)
                assert abs(fd - g[idx]) <= 1e-4 * max(abs(fd), abs(g[idx])) + 1e-8


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_names_epoch():
    rng = np.random.default_rng(0)
    layers = tiny.init_layers(2, (3,), rng)
    X = np.full((4, 2), 1e200)
    with pytest.raises(TrainingDivergenceError) as err:
        tiny.train_adam(layers, X, np.zeros(4), 10, 1e-2)
    assert err.value.epoch == 0


def test_normalizer_inverts_on_extremes():
    rng = np.random.default_rng(1)
    X = rng.random((20, 3)) * 100
    y = rng.random(20) * 1e-3
    norm = Normalizer.fit(X, y)
    Xn = norm.fx(X)
    assert Xn.min() == 0.0 and Xn.max() == 1.0
    for v in (y.min(), y.max()):
        assert norm.inv_y(norm.fy(v)) == pytest.approx(v, rel=1e-15)


# -- training and prediction -----------------------------------------------


def _constant_dataset(n=30, value=2.5e-3):
    ds = synthetic_dataset("mv", n, 0)
    v = get_variant("mv.dense.threaded")
    return Dataset(ds.kind, ds.schema, [sample_from(s.params, v, value) for s in ds.samples], {})


def test_constant_target_is_learned():
    ds = _constant_dataset()
    m = train_nn(ds, default_config("mv"))
    assert m.loss_trace[-1] < 1e-6
    s = ds.samples[0]
    assert m.predict(featurize(s.params)) == pytest.approx(2.5e-3, rel=1e-3)


def test_linear_target_held_out_mape():
    ds = synthetic_dataset("mm", 500, 0, alpha=3e-9, noise=0.01, parallel=0.0)
    tr, te = split(ds, 0.5, 0)
    m = train_nn(tr, default_config("mm", "nnc"))
    # reported error drops the fastest 30% of test runs, as for real data
    err, _ = mape_thresholded(te.targets(), m.predict_matrix(te.matrix(m.schema)))
    assert err <= 10.0


def test_training_is_deterministic():
    ds = synthetic_dataset("mp", 40, 2)
    a = train_nn(ds, default_config("mp", seed=3, **FAST))
    b = train_nn(ds, default_config("mp", seed=3, **FAST))
    for (Wa, ba), (Wb, bb) in zip(a.layers, b.layers):
        assert np.array_equal(Wa, Wb) and np.array_equal(ba, bb)
    assert a.loss_trace == b.loss_trace


def test_restarts_keep_lowest_loss():
    ds = synthetic_dataset("mm", 60, 0)
    one = train_nn(ds, default_config("mm", epochs=300, restarts=1))
    three = train_nn(ds, default_config("mm", epochs=300, restarts=3))
    # the first restart is the single-run model, so more restarts never fit worse
    assert three.loss_trace[-1] <= one.loss_trace[-1]


def test_predictions_are_clamped():
    ds = synthetic_dataset("mv", 40, 0)
    m = train_nn(ds, default_config("mv", **FAST))
    m.layers[-1] = (m.layers[-1][0], m.layers[-1][1] - 1e6)
    assert np.all(m.predict_matrix(ds.matrix(m.schema)) >= MIN_PREDICTION)


def test_monotone_in_complexity():
    ds = synthetic_dataset("mm", 300, 0, parallel=0.0)
    m = train_nn(ds, default_config("mm"))
    small = m.predict(featurize(InstanceParams.mm(100, 100, 100, n_thd=2)))
    large = m.predict(featurize(InstanceParams.mm(1000, 1000, 1000, n_thd=2)))
    assert large > small


def test_schema_mismatch_on_predict():
    m = train_nn(synthetic_dataset("mv", 20, 0), default_config("mv", **FAST))
    with pytest.raises(SchemaMismatchError):
        m.predict([1.0, 2.0])
    with pytest.raises(SchemaMismatchError):
        m.predict(featurize(InstanceParams.mm(2, 2, 2)))


def test_plain_nn_ignores_complexity_feature():
    ds = synthetic_dataset("mv", 20, 0)
    m = train_nn(ds, default_config("mv", "nn", **FAST))
    assert "c" not in m.schema
    assert m.predict(featurize(ds.samples[0].params)) > 0


# -- baselines -------------------------------------------------------------


def test_lrc_recovers_exact_line():
    # small c keeps the ridge shrinkage (relative to the target span) below 1e-6
    ds = synthetic_dataset("mv", 50, 0, space=ParamSpace("mv", max_dim=16, max_threads=4))
    v = get_variant("mv.dense.threaded")
    exact = Dataset(ds.kind, ds.schema, [sample_from(s.params, v, 2 * s.c + 1) for s in ds.samples], {})
    m = train_const(exact)
    w, b = linear_coefficients(m)
    assert w[0] == pytest.approx(2.0, abs=1e-6)
    assert b == pytest.approx(1.0, abs=1e-6)
    lrc = train_lrc(exact)
    w, b = linear_coefficients(lrc)
    assert w[-1] == pytest.approx(2.0, abs=1e-6) and b == pytest.approx(1.0, abs=1e-4)


def test_const_ignores_other_features():
    ds = synthetic_dataset("mm", 40, 0)
    m = train_const(ds)
    assert m.schema == ("c",)
    a = featurize(InstanceParams.mm(4, 5, 6, 1.0, 1.0, n_thd=1))
    b = featurize(InstanceParams.mm(6, 5, 4, 0.5, 0.25, n_thd=8))
    assert m.predict(a) == m.predict(b)


def test_forest_constant_target():
    ds = _constant_dataset(20)
    m = train_nlrc(ds)
    assert np.allclose(m.predict_matrix(ds.matrix(m.schema)), 2.5e-3)
    assert len(m.trees) == 100


def test_forest_needs_ten_samples():
    with pytest.raises(ParameterError):
        train_nlrc(synthetic_dataset("mm", 9, 0))


def test_forest_fits_synthetic_data():
    ds = synthetic_dataset("mv", 200, 0)
    tr, te = split(ds, 0.5, 0)
    a = train_nlrc(tr)
    assert mape(te.targets(), a.predict_matrix(te.matrix(a.schema))) < 100
    b = train_nlrc(tr)
    assert np.array_equal(a.predict_matrix(te.matrix(a.schema)), b.predict_matrix(te.matrix(b.schema)))


def test_param_count_unsupported_for_baselines():
    m = train_lrc(synthetic_dataset("mm", 20, 0))
    with pytest.raises(UnsupportedModelError):
        param_count(m)


# -- persistence -----------------------------------------------------------


@pytest.mark.parametrize("family", ["nnc", "nn", "const", "lrc", "nlrc"])
def test_save_load_round_trip(tmp_path, family):
    ds = synthetic_dataset("mc", 40, 0)
    m = train(ds, default_config("mc", family, **FAST))
    path = save_model(m, tmp_path / "m.json")
    back = load_model(path)
    X = ds.matrix(m.schema)
    assert np.array_equal(back.predict_matrix(X), m.predict_matrix(X))
    doc = json.loads(path.read_text())
    assert doc["schema"] == list(m.schema)
    assert set(doc["norm_stats"]) >= {"x_min", "x_max", "y_min", "y_max"}
    assert {"family", "layers", "config", "metrics"} <= set(doc)


def test_load_errors(tmp_path):
    ds = synthetic_dataset("mm", 20, 0)
    path = save_model(train_nn(ds, default_config("mm", **FAST)), tmp_path / "m.json")
    text = path.read_text()
    (tmp_path / "cut.json").write_text(text[: len(text) // 2])
    with pytest.raises(ModelLoadError):
        load_model(tmp_path / "cut.json")
    doc = json.loads(text)
    doc["version"] = 99
    (tmp_path / "v.json").write_text(json.dumps(doc))
    with pytest.raises(ModelLoadError, match="version"):
        load_model(tmp_path / "v.json")
    doc["version"] = 1
    doc["schema"] = doc["schema"][:-1]
    (tmp_path / "s.json").write_text(json.dumps(doc))
    with pytest.raises(ModelLoadError):
        load_model(tmp_path / "s.json")
    with pytest.raises(ModelLoadError):
        load_model(tmp_path / "absent.json")


def test_saved_bytes_identical_with_fixed_clock(tmp_path, monkeypatch):
    ticks = iter(range(100))
    monkeypatch.setattr(core, "clock", lambda: float(next(ticks)))
    ds = synthetic_dataset("mv", 30, 0)
    a = save_model(train_nn(ds, default_config("mv", **FAST)), tmp_path / "a.json")
    ticks = iter(range(100))
    b = save_model(train_nn(ds, default_config("mv", **FAST)), tmp_path / "b.json")
    assert a.read_bytes() == b.read_bytes()


def test_blur_models_scale_inputs_logarithmically():
    cfg = default_config("blur")
    assert cfg.log_inputs and cfg.purpose == "selection"
    assert not default_config("mm").log_inputs
