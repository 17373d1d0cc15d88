import math
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from perfsage.datagen import (
    Dataset,
    ParamSpace,
    TimingPolicy,
    build_dataset,
    build_from_params,
    density_ladder,
    exhaustive_blur_params,
    host_max_threads,
    load_csv,
    measure,
    sample_params,
    save_csv,
    split,
    synthetic_dataset,
)
from perfsage.datagen import external
from perfsage.datagen.space import sample_schedule
from perfsage.datagen.synthetic import amdahl
from perfsage.errors import DatasetLoadError, ExternalVariantError, MeasurementError, ParameterError
from perfsage.kernels import (
    CPU_BLUR_SPACE,
    GPU_BLUR_SPACE,
    InstanceParams,
    KernelKind,
    complexity,
    get_variant,
    make_instance,
    register_external,
    unregister,
)
from perfsage.models import feature_names


def test_density_ladder():
    assert density_ladder(2, 2) == (1.0, 0.5, 0.25)
    assert density_ladder(1, 1) == (1.0,)
    ladder = density_ladder(1024, 1024)
    assert ladder[-1] == 2.0**-20 and len(ladder) == 21


@given(st.sampled_from(list(KernelKind)), st.integers(0, 10_000))
def test_sampled_params_stay_in_range(kind, seed):
    space = ParamSpace(kind, max_dim=64, max_threads=8, sizes=(64,))
    p = sample_params(space, seed)
    assert 1 <= p.n_thd <= 8
    if kind is KernelKind.BLUR:
        assert p.n == 64 and CPU_BLUR_SPACE.contains(p.schedule)
        assert max(p.schedule.as_tuple()) <= 64
    else:
        assert 1 <= p.m <= 64 and 1 <= p.n <= 64
    if kind is KernelKind.MC:
        assert p.r in (3, 5, 7) and p.m >= p.r
    if kind is KernelKind.MP:
        assert p.r in (2, 3, 4, 5) and p.s in (1, 2)


def test_sampling_is_seed_deterministic():
    space = ParamSpace("mm", max_threads=4)
    assert sample_params(space, 5) == sample_params(space, 5)


def test_gpu_schedules_not_chained():
    rng = np.random.default_rng(0)
    picks = [sample_schedule(GPU_BLUR_SPACE, rng) for _ in range(300)]
    assert any(c.s3 > c.s2 for c in picks)
    assert all(c.s4 == 1 for c in picks)


def test_thread_cap_env(monkeypatch):
    monkeypatch.setenv("PERFSAGE_THREADS", "1")
    assert host_max_threads() == 1
    monkeypatch.setenv("PERFSAGE_THREADS", "lots")
    with pytest.raises(ParameterError):
        host_max_threads()


def test_exhaustive_blur_params():
    params = exhaustive_blur_params(GPU_BLUR_SPACE)
    assert len(params) == 1176
    assert len(set(params)) == 1176


# -- timing ----------------------------------------------------------------


def test_measure_takes_median_after_warmup():
    # each rep reads the clock twice; durations are 5, 1, 3, 2, 10
    durations = iter([0.0, 5.0, 10.0, 11.0, 20.0, 23.0, 30.0, 32.0, 40.0, 50.0])
    inst = make_instance(InstanceParams.mv(4, 4), 0)
    raw = []
    t = measure(inst, get_variant("mv.dense.single"), 1, TimingPolicy(1, 5), clock=lambda: next(durations), raw=raw)
    assert raw == [5.0, 1.0, 3.0, 2.0, 10.0]
    assert t == 3.0


def test_measure_real_clock_positive():
    inst = make_instance(InstanceParams.mm(16, 16, 16), 0)
    assert measure(inst, get_variant("mm.dense.threaded"), 1) > 0


def test_policy_validation():
    with pytest.raises(ParameterError):
        TimingPolicy(reps=0)


# -- external protocol -----------------------------------------------------


def _script(tmp_path, body):
    path = tmp_path / "variant.py"
    path.write_text(body)
    return [sys.executable, str(path)]


def test_external_request_and_reply(tmp_path):
    cmd = _script(tmp_path, "import sys\nf = [float(x) for x in sys.stdin.readline().split()]\nprint(sum(f) * 1e-6)\n")
    assert math.isclose(external.query(cmd, [1, 2, 3]), 6e-6)
    assert external.format_request([1, 2.5]) == "1.0 2.5\n"


@pytest.mark.parametrize(
    "body",
    ["print('fast')\n", "import sys\nsys.exit(3)\n", "print(1)\nprint(2)\n", "print(-1)\n"],
)
def test_external_failures(tmp_path, body):
    with pytest.raises(ExternalVariantError):
        external.query(_script(tmp_path, body), [1.0])


def test_external_variant_dataset(tmp_path):
    cmd = _script(tmp_path, "import sys\nf = [float(x) for x in sys.stdin.readline().split()]\nprint(f[0] * f[1] * 1e-9)\n")
    v = register_external("mv.ext.dataset", KernelKind.MV, cmd)
    try:
        ds = build_dataset("mv", v, ParamSpace("mv", max_dim=32, max_threads=2), 4, 0, TimingPolicy(0, 1))
        assert len(ds) == 4
        for s in ds.samples:
            assert math.isclose(s.runtime_s, s.features[0] * s.features[1] * 1e-9)
    finally:
        unregister("mv.ext.dataset")


# -- dataset assembly ------------------------------------------------------


def fake_measure(instance, variant, n_thd):
    return 1e-9 * complexity(instance.params) / n_thd


def test_build_dataset_with_stub_measure():
    space = ParamSpace("mm", max_dim=32, max_threads=4)
    v = get_variant("mm.sparse.threaded")
    ds = build_dataset("mm", v, space, 20, 3, measure_fn=fake_measure)
    assert len(ds) == 20
    assert ds.schema == feature_names("mm")
    assert ds.provenance["variant"] == "mm.sparse.threaded"
    for s in ds.samples:
        assert s.c == complexity(s.params)
        assert s.runtime_s == pytest.approx(fake_measure(make_instance(s.params, 0), v, s.params.n_thd))


def test_single_threaded_variant_pins_thread_feature():
    space = ParamSpace("mv", max_dim=16, max_threads=8)
    ds = build_dataset("mv", get_variant("mv.dense.single"), space, 10, 0, measure_fn=fake_measure)
    assert set(ds.matrix(["n_thd"])[:, 0]) == {1.0}


def test_measurement_failure_keeps_partial():
    calls = []

    def flaky(instance, variant, n_thd):
        calls.append(1)
        if len(calls) == 3:
            raise RuntimeError("boom")
        return 1e-3

    with pytest.raises(MeasurementError) as err:
        build_dataset("mv", get_variant("mv.dense.single"), ParamSpace("mv", max_dim=8), 5, 0, measure_fn=flaky)
    assert len(err.value.partial) == 2


def test_build_rejects_wrong_kind():
    with pytest.raises(ParameterError):
        build_from_params([InstanceParams.mm(2, 2, 2)], get_variant("mv.dense.single"), measure_fn=fake_measure)


def test_build_dataset_count_validation():
    with pytest.raises(ParameterError):
        build_dataset("mm", get_variant("mm.dense.single"), None, 1, 0, measure_fn=fake_measure)


@given(st.integers(2, 60), st.floats(0.05, 0.95), st.integers(0, 1000))
def test_split_is_a_partition(n, fraction, seed):
    ds = synthetic_dataset("mv", n, 0)
    tr, te = split(ds, fraction, seed)
    assert len(tr) + len(te) == n and len(tr) >= 1 and len(te) >= 1
    key = lambda s: (s.features, s.runtime_s)  # noqa: E731
    assert sorted(map(key, tr.samples + te.samples)) == sorted(map(key, ds.samples))
    assert split(ds, fraction, seed)[0] == tr


def test_split_fraction_validation():
    with pytest.raises(ParameterError):
        split(synthetic_dataset("mv", 4, 0), 1.0, 0)


# -- CSV -------------------------------------------------------------------


@pytest.mark.parametrize("kind", list(KernelKind))
def test_csv_round_trip(tmp_path, kind):
    space = ParamSpace(kind, max_dim=32, max_threads=4, sizes=(32,))
    vid = "blur.tiled" if kind is KernelKind.BLUR else f"{kind.value}.sparse.threaded"
    ds = build_dataset(kind, get_variant(vid), space, 15, 7, measure_fn=fake_measure)
    path = save_csv(ds, tmp_path / "d.csv")
    back = load_csv(path)
    assert back == ds
    assert back.provenance["variant"] == vid
    assert (tmp_path / "d.csv.meta.json").exists()
    text = path.read_bytes()
    assert b"\r\n" not in text
    assert text.splitlines()[0].decode() == ",".join(["kernel", "variant", *ds.schema, "c", "runtime_s"])


def test_csv_bad_line_is_named(tmp_path):
    ds = synthetic_dataset("mm", 5, 0)
    path = save_csv(ds, tmp_path / "d.csv")
    lines = path.read_text().splitlines()
    fields = lines[3].split(",")
    fields[-2] = str(int(fields[-2]) + 1)
    lines[3] = ",".join(fields)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetLoadError, match="line 4"):
        load_csv(path)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(DatasetLoadError, match="line 1"):
        load_csv(path)
    with pytest.raises(DatasetLoadError):
        load_csv(tmp_path / "missing.csv")


# -- synthetic world -------------------------------------------------------


def test_amdahl():
    assert amdahl(1) == 1.0
    assert amdahl(4, 0.9) == pytest.approx(0.1 + 0.225)


def test_synthetic_runtime_formula():
    ds = synthetic_dataset("mc", 200, 0, alpha=2e-9, noise=0.02, parallel=0.5)
    for s in ds.samples:
        base = 2e-9 * s.c * amdahl(s.params.n_thd, 0.5)
        assert abs(s.runtime_s / base - 1) <= 0.02 + 1e-12
    assert synthetic_dataset("mc", 10, 1) == synthetic_dataset("mc", 10, 1)
    assert isinstance(ds, Dataset)
