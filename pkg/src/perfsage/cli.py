"""perfsage command line: gen | train | eval | select | compare | bench.

Every command writes under ``--out DIR`` and appends an entry (inputs,
outputs, seed, host label) to ``DIR/manifest.json``. Defaults for any flag can
come from a TOML file passed with ``--config``; top-level keys apply to every
command and a ``[<command>]`` table to that command only. Flags given on the
command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from perfsage import __version__
from perfsage import eval as ev
from perfsage import selector
from perfsage.datagen import (
    ParamSpace,
    TimingPolicy,
    build_dataset,
    host_label,
    host_max_threads,
    load_csv,
    sample_params,
    save_csv,
    split,
    synthetic_dataset,
)
from perfsage.datagen.timing import measure
from perfsage.errors import (
    DatasetLoadError,
    MeasurementError,
    ModelLoadError,
    ParameterError,
    PerfsageError,
    SchemaMismatchError,
)
from perfsage.kernels import (
    CPU_BLUR_SPACE,
    DEFAULT_SCHEDULE,
    GPU_BLUR_SPACE,
    KernelKind,
    ScheduleCandidate,
    get_variant,
    make_instance,
    register_external,
    variants_for,
)
from perfsage.models import FAMILIES, default_config, load_model, save_model, train

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("perfsage")

EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_SCHEMA = 4
EXIT_LOAD = 5
EXIT_MEASUREMENT = 6

FAMILY_LABELS = {"nnc": "NN+C", "nn": "NN", "const": "C", "lrc": "LR+C", "nlrc": "NLR+C"}
SPACES = {"cpu": CPU_BLUR_SPACE, "gpu": GPU_BLUR_SPACE}


class UsageError(PerfsageError):
    """Flags that are individually valid but do not go together."""


# -- helpers ---------------------------------------------------------------


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _existing(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(str(p))
    return p


def _record(args, inputs, outputs, **extra):
    """Append this run to the manifest of the output directory."""
    out = _out_dir(args)
    path = out / "manifest.json"
    runs = []
    if path.is_file():
        try:
            runs = json.loads(path.read_text(encoding="utf-8")).get("runs", [])
        except (json.JSONDecodeError, AttributeError):
            log.warning("manifest %s is unreadable; starting a new one", path)
    entry = {
        "command": args.command,
        "argv": list(getattr(args, "argv", [])),
        "seed": getattr(args, "seed", None),
        "host": host_label(),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    entry.update(extra)
    runs.append(entry)
    path.write_text(json.dumps({"perfsage": __version__, "runs": runs}, indent=2) + "\n", encoding="utf-8")


def _policy(args) -> TimingPolicy:
    return TimingPolicy(warmups=args.warmups, reps=args.reps)


def _resolve_variant(kind: KernelKind, args):
    if args.external:
        if not args.variant:
            raise UsageError("--external needs --variant to name the black-box variant")
        return register_external(args.variant, kind, args.external, hardware_label=args.host_label or "")
    vid = args.variant or ("blur.tiled" if kind is KernelKind.BLUR else f"{kind.value}.dense.threaded")
    variant = get_variant(vid)
    if variant.kind is not kind:
        raise UsageError(f"variant {vid} runs {variant.kind.value}, not {kind.value}")
    return variant


def _model_config(kind, family, args, threads):
    overrides = {"seed": args.seed, "epochs": args.epochs, "learning_rate": args.lr}
    if args.restarts:
        overrides["restarts"] = args.restarts
    if args.hidden:
        overrides["hidden_widths"] = tuple(args.hidden)
    return default_config(kind, family, threads=threads, unconstrained=args.unconstrained, **overrides)


def _split_for(dataset, fraction, seed):
    if len(dataset) < 2:
        raise ParameterError(f"dataset has {len(dataset)} samples; need at least 2 to split")
    return split(dataset, fraction, seed)


# -- commands --------------------------------------------------------------


def cmd_gen(args) -> Path:
    kind = KernelKind.parse(args.kernel)
    out = _out_dir(args)
    if args.synthetic:
        if args.external or args.variant:
            raise UsageError("--synthetic cannot be combined with --variant or --external")
        threads = args.max_threads or 4
        space = ParamSpace(kind, max_dim=args.max_dim, max_threads=threads)
        ds = synthetic_dataset(kind, args.count, args.seed, parallel=args.parallel, max_threads=threads, space=space)
    else:
        variant = _resolve_variant(kind, args)
        space = ParamSpace(
            kind,
            max_dim=args.max_dim,
            max_threads=args.max_threads or host_max_threads(),
            schedules=SPACES[args.space],
            sizes=tuple(args.sizes) if args.sizes else None,
        )
        try:
            ds = build_dataset(kind, variant, space, args.count, args.seed, _policy(args))
        except MeasurementError as exc:
            if exc.partial is not None and len(exc.partial):
                partial = save_csv(exc.partial, out / f"{kind.value}_partial_s{args.seed}.csv")
                log.error("saved %d measured samples to %s", len(exc.partial), partial)
            raise
    path = Path(args.output) if args.output else out / f"{kind.value}_{ds.provenance['variant']}_s{args.seed}.csv"
    save_csv(ds, path)
    print(f"wrote {len(ds)} samples to {path}")
    _record(args, [], [path], kernel=kind.value, variant=ds.provenance["variant"], count=len(ds))
    return path


def cmd_train(args) -> Path:
    data_path = _existing(args.data)
    ds = load_csv(data_path)
    family = args.family
    if args.hidden and family not in ("nnc", "nn"):
        raise UsageError(f"--hidden only applies to neural families, not {family}")
    tr, _ = _split_for(ds, args.train_fraction, args.seed)
    config = _model_config(ds.kind, family, args, threads="n_thd" in ds.schema)
    model = train(tr, config)
    model.metrics["split"] = {"data": data_path.name, "train_fraction": args.train_fraction, "seed": args.seed}
    out = _out_dir(args)
    path = Path(args.output) if args.output else out / f"{data_path.stem}.{family}.model.json"
    save_model(model, path)
    summary = f"trained {FAMILY_LABELS[family]} on {len(tr)} samples"
    if family in ("nnc", "nn"):
        summary += f" ({model.param_count} parameters, final loss {model.metrics['final_loss']:.3g})"
    print(f"{summary}; wrote {path}")
    _record(args, [data_path], [path], family=family)
    return path


def _eval_rows(models, ds, args, label_of=None):
    reports = []
    for model in models:
        if model.kind is not None and model.kind is not ds.kind:
            raise SchemaMismatchError(f"model predicts {model.kind.value} but the data is {ds.kind.value}")
        missing = [n for n in model.schema if n not in ds.augmented_schema]
        if missing:
            raise SchemaMismatchError(f"data lacks model features {missing}")
        label = label_of(model) if label_of else FAMILY_LABELS[model.family]
        reports.append(ev.evaluate_model(model, ds, args.drop, model_family=label))
    return reports


_TABLE_COLUMNS = ["model_family", "kernel", "variant", "mape_full", "mape_thresholded", "rho", "n_total", "n_kept"]


def cmd_eval(args) -> Path:
    data_path = _existing(args.data)
    ds = load_csv(data_path)
    models = [load_model(_existing(p)) for p in args.model]
    if args.split == "test":
        parts = {}
        for m in models:
            info = m.metrics.get("split")
            if not info:
                raise UsageError("--split test needs models trained by `perfsage train`; use --split all")
            parts[(info["train_fraction"], info["seed"])] = info
        if len(parts) != 1:
            raise UsageError("models were trained on different splits; evaluate them separately or use --split all")
        (fraction, seed), = parts
        _, ds = _split_for(ds, fraction, seed)
    reports = _eval_rows(models, ds, args)
    rows = [r.to_row() for r in reports]
    out = _out_dir(args)
    path = Path(args.output) if args.output else out / f"{data_path.stem}.eval.csv"
    ev.to_csv(rows, path)
    agg = ev.aggregate(reports, group_by=("model_family",))
    ev.to_csv(agg, path.with_suffix(".summary.csv"))
    print(ev.format_table(rows, _TABLE_COLUMNS))
    _record(args, [data_path, *args.model], [path, path.with_suffix(".summary.csv")])
    return path


def cmd_compare(args) -> Path:
    data_path = _existing(args.data)
    ds = load_csv(data_path)
    tr, te = _split_for(ds, args.train_fraction, args.seed)
    threads = "n_thd" in ds.schema
    models = []
    for family in args.families:
        hidden = args.hidden if family in ("nnc", "nn") else None
        config = _model_config(ds.kind, family, argparse.Namespace(**{**vars(args), "hidden": hidden}), threads)
        log.info("training %s on %d samples", family, len(tr))
        models.append(train(tr, config))
    reports = _eval_rows(models, te, args)
    rows = [r.to_row() for r in reports]
    for row, m in zip(rows, models):
        row["params"] = m.param_count if m.family in ("nnc", "nn") else ""
    mark = {
        "mape_thresholded": int(np.argmin([r["mape_thresholded"] for r in rows])),
        "mape_full": int(np.argmin([r["mape_full"] for r in rows])),
    }
    out = _out_dir(args)
    path = Path(args.output) if args.output else out / f"{data_path.stem}.compare.csv"
    ev.to_csv(rows, path)
    cols = ["model_family", "mape_full", "mape_thresholded", "rho", "params", "n_total", "n_kept"]
    print(f"{ds.kind.value} / {ds.provenance.get('variant', '?')}: {len(tr)} train, {len(te)} test")
    print(ev.format_table(rows, cols, mark=mark))
    _record(args, [data_path], [path])
    return path


def cmd_select(args) -> Path:
    kind = KernelKind.parse(args.kernel)
    if kind is not KernelKind.BLUR:
        raise UsageError("schedule selection is defined for --kernel blur only")
    model = load_model(_existing(args.model))
    if model.kind is not None and model.kind is not KernelKind.BLUR:
        raise SchemaMismatchError(f"model predicts {model.kind.value}, not blur schedules")
    default = ScheduleCandidate.parse(args.default) if args.default else None
    space = SPACES[args.space].restricted_to(args.n)
    cands = selector.enumerate_candidates(space, args.candidates, args.seed)
    report = selector.select(model, args.n, cands)
    if args.measure:
        wanted = cands if args.measure_all else [report.chosen]
        measured = selector.measure_schedules(
            args.n, [*wanted, *([default] if default else [])], _policy(args), seed=args.seed,
            n_thd=args.max_threads or host_max_threads(),
        )
        pred = selector.predict_candidates(model, args.n, cands) if args.measure_all else None
        report = selector.evaluate_selection(
            report, measured, default, candidates=cands if args.measure_all else [report.chosen], predicted=pred
        )
        if not args.measure_all:
            # true best is only meaningful over a fully measured candidate set
            report.true_best = report.true_best_s = report.regret = None
            report.candidate_mean_s = report.speedup_vs_random_mean = None
    out = _out_dir(args)
    path = Path(args.output) if args.output else out / f"selection_n{args.n}_s{args.seed}.json"
    path.write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.summary())
    _record(args, [args.model], [path])
    return path


def cmd_bench(args) -> Path:
    """Time every registered variant of a kernel on a few random instances."""
    kind = KernelKind.parse(args.kernel)
    space = ParamSpace(kind, max_dim=args.max_dim, max_threads=args.max_threads or host_max_threads())
    rng = np.random.default_rng(args.seed)
    rows = []
    for i in range(args.count):
        params = sample_params(space, rng)
        inst = make_instance(params, args.seed + i)
        for variant in variants_for(kind):
            n_thd = variant.effective_threads(params.n_thd)
            t = measure(inst, variant, n_thd, _policy(args))
            rows.append({"instance": i, "params": str(params), "variant": variant.variant_id, "n_thd": n_thd, "runtime_s": t})
    out = _out_dir(args)
    path = Path(args.output) if args.output else out / f"bench_{kind.value}_s{args.seed}.csv"
    ev.to_csv(rows, path)
    print(ev.format_table([{**r, "runtime_ms": r["runtime_s"] * 1e3} for r in rows],
                          ["instance", "variant", "n_thd", "runtime_ms"]))
    _record(args, [], [path])
    return path


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "select": cmd_select,
    "compare": cmd_compare,
    "bench": cmd_bench,
}


# -- parser ----------------------------------------------------------------


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _fraction(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"expected a fraction in (0, 1), got {text}")
    return value


def _add_common(p):
    p.add_argument("--out", default="perfsage-out", help="directory for artifacts and manifest.json")
    p.add_argument("--seed", type=int, default=0, help="seed for sampling, splitting and initialization")
    p.add_argument("--output", help="explicit output file (default: derived name under --out)")
    p.add_argument("--config", help="TOML file with flag defaults")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")


def _add_timing(p):
    p.add_argument("--warmups", type=int, default=1, help="untimed runs before measuring")
    p.add_argument("--reps", type=_positive_int, default=5, help="timed runs; the median is kept")
    p.add_argument("--max-threads", type=_positive_int, help="thread cap (default: host threads or PERFSAGE_THREADS)")


def _add_training(p):
    p.add_argument("--train-fraction", type=_fraction, default=0.5, help="share of samples used for training")
    p.add_argument("--epochs", type=_positive_int, default=5000, help="full-batch epochs for neural families")
    p.add_argument("--lr", type=float, default=1e-2, choices=(1e-2, 1e-3, 1e-4), help="Adam learning rate")
    p.add_argument("--restarts", type=_positive_int, help="initializations per neural model (default: 4, 1 if unconstrained)")
    p.add_argument("--hidden", type=_positive_int, nargs="+", help="hidden layer widths (neural families)")
    p.add_argument("--unconstrained", action="store_true", help="lift the 75-parameter budget (8x widths)")
    p.add_argument("--drop", type=float, default=ev.DROP_FRACTION, help="share of fastest test samples dropped")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perfsage",
        description="Generate kernel runtime data, train tiny runtime predictors and select schedules.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"perfsage {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("gen", help="measure a kernel variant on random instances", formatter_class=fmt)
    _add_common(p)
    _add_timing(p)
    p.add_argument("--kernel", required=True, choices=[k.value for k in KernelKind])
    p.add_argument("--variant", help="registered variant id (default: <kernel>.dense.threaded or blur.tiled)")
    p.add_argument("--external", nargs="+", metavar="CMD", help="black-box benchmark command for --variant")
    p.add_argument("--host-label", help="hardware label recorded for an external variant")
    p.add_argument("--count", type=_positive_int, default=500, help="number of samples")
    p.add_argument("--max-dim", type=_positive_int, default=1024, help="largest matrix/image dimension")
    p.add_argument("--space", choices=sorted(SPACES), default="cpu", help="blur schedule lattice")
    p.add_argument("--sizes", type=_positive_int, nargs="+", help="blur image sides (default: the lattice's)")
    p.add_argument("--synthetic", action="store_true", help="use the analytic runtime world instead of timing")
    p.add_argument("--parallel", type=float, default=0.9, help="Amdahl parallel fraction of the synthetic world")

    p = sub.add_parser("train", help="train one model family on a dataset", formatter_class=fmt)
    _add_common(p)
    _add_training(p)
    p.add_argument("--data", required=True, help="dataset CSV from `gen`")
    p.add_argument("--family", choices=FAMILIES, default="nnc")

    p = sub.add_parser("eval", help="score models on a dataset", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--model", required=True, nargs="+", help="model JSON files")
    p.add_argument("--split", choices=("test", "all"), default="test", help="score the held-out part or everything")
    p.add_argument("--drop", type=float, default=ev.DROP_FRACTION, help="share of fastest samples dropped")

    p = sub.add_parser("compare", help="train and score all five families on one dataset", formatter_class=fmt)
    _add_common(p)
    _add_training(p)
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--families", nargs="+", choices=FAMILIES, default=list(FAMILIES))

    p = sub.add_parser("select", help="pick a blur schedule by predicted runtime", formatter_class=fmt)
    _add_common(p)
    _add_timing(p)
    p.add_argument("--kernel", default="blur", choices=[k.value for k in KernelKind])
    p.add_argument("--model", required=True, help="blur model JSON")
    p.add_argument("--n", type=_positive_int, default=1024, help="image side")
    p.add_argument("--candidates", type=_positive_int, default=1000, help="candidate schedules scored")
    p.add_argument("--space", choices=sorted(SPACES), default="cpu", help="schedule lattice")
    p.add_argument("--default", default=str(DEFAULT_SCHEDULE), help="baseline schedule s1,s2,s3,s4 ('' for none)")
    p.add_argument("--measure", action=argparse.BooleanOptionalAction, default=True,
                   help="time the chosen and default schedules on this host")
    p.add_argument("--measure-all", action="store_true", help="also time every candidate for regret")

    p = sub.add_parser("bench", help="time every variant of a kernel", formatter_class=fmt)
    _add_common(p)
    _add_timing(p)
    p.add_argument("--kernel", required=True, choices=[k.value for k in KernelKind])
    p.add_argument("--count", type=_positive_int, default=3, help="random instances")
    p.add_argument("--max-dim", type=_positive_int, default=256, help="largest dimension")
    return parser


def _apply_config(parser, argv):
    """Reparse with defaults from --config (if any); returns the namespace."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    path = _existing(args.config)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"config {path} is not valid TOML: {exc}") from exc
    values = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    values.update(doc.get(args.command, {}))
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    values = {k.replace("-", "_"): v for k, v in values.items()}
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    sub.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        args.argv = argv
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
        )
        COMMANDS[args.command](args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"perfsage: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except SchemaMismatchError as exc:
        print(f"perfsage: schema mismatch: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except UsageError as exc:
        print(f"perfsage: invalid flag combination: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelLoadError, DatasetLoadError) as exc:
        print(f"perfsage: cannot load input: {exc}", file=sys.stderr)
        return EXIT_LOAD
    except MeasurementError as exc:
        print(f"perfsage: measurement failed: {exc}", file=sys.stderr)
        return EXIT_MEASUREMENT
    except PerfsageError as exc:
        print(f"perfsage: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as exc:
        # ParameterError and friends subclass ValueError
        print(f"perfsage: invalid value: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
