"""Command-line pipeline driver.

Eight subcommands cover the batch chain (preprocess, train, score,
fitpdf, detect, evaluate, sweep) plus on-line detection (stream). Every
flag has a config-file equivalent: pass ``--config file.json`` holding an
object keyed by the flag names with underscores; explicit flags win over
config values, which win over built-in defaults. Each batch stage writes
its artifact plus a ``*.run.json`` reproducibility manifest (config hash,
input hashes, seed, library versions). Exit codes: 0 ok, 1 usage error,
2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from . import __version__, fileio, pipeline
from .errors import DataError, NumericError, UsageError
from .ingest import iter_flows
from .metrics import report_table
from .streaming import run_stream
from .train import TrainConfig


class _CliParser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1
        raise UsageError(message)


# ------------------------------------------------------------- opt merging

@dataclass(frozen=True)
class Opt:
    default: object = None
    cast: Callable | None = None
    required: bool = False


def _as_str_list(v) -> list[str]:
    if isinstance(v, str):
        return [s.strip() for s in v.split(",") if s.strip()]
    return [str(s) for s in v]


def _as_float_list(v) -> list[float]:
    raw = v.split(",") if isinstance(v, str) else v
    return [float(s) for s in raw]


def _as_int_tuple(v) -> tuple[int, ...]:
    raw = v.split(",") if isinstance(v, str) else v
    return tuple(int(s) for s in raw)


def _load_config_file(path: str) -> dict:
    try:
        payload = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"config file {path}: invalid JSON ({exc})") from exc
    if not isinstance(payload, dict):
        raise UsageError(f"config file {path}: expected a JSON object")
    return payload


def _finalize(args: argparse.Namespace) -> argparse.Namespace:
    """Resolve each option as flag > config file > default."""
    spec: dict[str, Opt] = args._spec
    cfg = _load_config_file(args.config) if args.config else {}
    unknown = sorted(set(cfg) - set(spec))
    if unknown:
        raise UsageError(f"config file has unknown keys {unknown}; "
                         f"valid keys: {sorted(spec)}")
    for name, opt in spec.items():
        v = getattr(args, name, None)
        if v is None:
            v = cfg.get(name, opt.default)
        if v is None:
            if opt.required:
                raise UsageError(f"missing required option --{name.replace('_', '-')}")
        elif opt.cast is not None:
            v = opt.cast(v)
        setattr(args, name, v)
    return args


_TRAIN_HYPER: dict[str, Opt] = {
    "arch": Opt("rvae", str),
    "epochs": Opt(500, int),
    "batch_size": Opt(128, int),
    "lr": Opt(0.01, float),
    "anneal_steps": Opt(500, int),
    "beta_max": Opt(1.0, float),
    "seed": Opt(0, int),
    "grad_clip": Opt(5.0, float),
    "hidden": Opt(64, int),
    "latent": Opt(16, int),
    "mlp_hidden": Opt((512, 512, 1024), _as_int_tuple),
}

_PDF_OPTS: dict[str, Opt] = {
    "bins": Opt(200, int),
    "min_samples": Opt(100, int),
    "tie_rule": Opt("malicious", str),
}

_WINDOW_OPTS: dict[str, Opt] = {
    "window_seconds": Opt(60.0, float),
    "n_windows": Opt(3, int),
    "l_max": Opt(128, int),
    "log1p": Opt(False, bool),
    "strict": Opt(False, bool),
}


def _train_config(args, l_max: int) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                       lr=args.lr, anneal_steps=args.anneal_steps,
                       beta_max=args.beta_max, seed=args.seed,
                       grad_clip=args.grad_clip, hidden=args.hidden,
                       latent=args.latent, l_max=l_max,
                       mlp_hidden=args.mlp_hidden)


def _echo(args, names: Sequence[str]) -> dict:
    return {n: getattr(args, n) for n in names}


def _run_manifest_path(artifact: Path) -> Path:
    return artifact.with_name(artifact.stem + ".run.json")


def _apply_scenario_filter(args) -> tuple[list[str], list[str]]:
    train, test = args.train_scenarios, args.test_scenarios
    if args.scenario_filter:
        keep = set(args.scenario_filter)
        train = [s for s in train if s in keep]
        test = [s for s in test if s in keep]
    return train, test


# ------------------------------------------------------------- subcommands

def cmd_preprocess(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_ids, test_ids = _apply_scenario_filter(args)
    res = pipeline.preprocess(args.manifest, train_ids, test_ids,
                              window_seconds=args.window_seconds,
                              n_windows=args.n_windows, l_max=args.l_max,
                              log1p=args.log1p, strict=args.strict)
    ext = "bin" if args.format == "bin" else "csv"
    train_path = out / f"features-train.{ext}"
    test_path = out / f"features-test.{ext}"
    fileio.write_features(train_path, res.meta, res.train.rows)
    fileio.write_features(test_path, res.meta, res.test.rows)
    manifest = pipeline.load_manifest(args.manifest)
    fileio.write_run_manifest(
        out / "preprocess.run.json", "preprocess",
        _echo(args, ("manifest", "train_scenarios", "test_scenarios",
                     "scenario_filter", "window_seconds", "n_windows",
                     "l_max", "log1p", "strict", "format")),
        inputs=[manifest[s] for s in (*train_ids, *test_ids)],
        outputs=[train_path, test_path], seed=None)
    for name, split in (("train", res.train), ("test", res.test)):
        print(f"{name}: {len(split.rows)} host-windows from "
              f"{split.stats.parsed} flows ({split.stats.errors} bad rows)")
    return 0


def cmd_train(args) -> int:
    meta, rows = fileio.read_features(args.features)
    cfg = _train_config(args, meta.l_max)
    if args.kfold and args.kfold > 1:
        model, reports = pipeline.train_model_kfold(meta, rows, cfg,
                                                    arch=args.arch, k=args.kfold)
        for r in reports:
            print(json.dumps(r, sort_keys=True))
    else:
        model = pipeline.train_model(meta, rows, cfg, arch=args.arch)
    model_out = Path(args.model_out)
    fileio.save_model(model_out, model)
    fileio.write_run_manifest(
        _run_manifest_path(model_out), "train",
        {"features": args.features, "kfold": args.kfold,
         **cfg.to_dict(), "arch": args.arch},
        inputs=[args.features], outputs=[model_out], seed=cfg.seed)
    print(f"trained {model.arch}: {model.train_summary}")
    return 0


def cmd_score(args) -> int:
    meta, rows = fileio.read_features(args.features)
    model = fileio.load_model(args.model)
    scored = pipeline.score_split(model, meta, rows)
    scores_out = Path(args.scores_out)
    fileio.write_scores_csv(scores_out, scored)
    fileio.write_run_manifest(
        _run_manifest_path(scores_out), "score",
        {"model": args.model, "features": args.features},
        inputs=[args.model, args.features], outputs=[scores_out],
        seed=model.seed)
    print(f"scored {len(scored)} host-windows")
    return 0


def cmd_fitpdf(args) -> int:
    scored = fileio.read_scores_csv(args.scores)
    det = pipeline.fit_detector_from_training(
        scored, min_samples=args.min_samples, bins=args.bins,
        tie_rule=args.tie_rule)
    det_out = Path(args.detector_out)
    fileio.save_detector(det_out, det)
    fileio.write_run_manifest(
        _run_manifest_path(det_out), "fitpdf",
        {"scores": args.scores, **_echo(args, tuple(_PDF_OPTS))},
        inputs=[args.scores], outputs=[det_out], seed=None)
    print(f"pdf_normal: {det.pdf_normal.family} sse={det.pdf_normal.sse:.3g}  "
          f"pdf_botnet: {det.pdf_botnet.family} sse={det.pdf_botnet.sse:.3g}")
    return 0


def cmd_detect(args) -> int:
    scored = fileio.read_scores_csv(args.scores)
    det = fileio.load_detector(args.detector)
    decisions = pipeline.classify_scores(scored, det)
    dec_out = Path(args.decisions_out)
    fileio.write_decisions_jsonl(dec_out, decisions)
    fileio.write_run_manifest(
        _run_manifest_path(dec_out), "detect",
        {"scores": args.scores, "detector": args.detector},
        inputs=[args.scores, args.detector], outputs=[dec_out], seed=None)
    n_mal = sum(1 for d in decisions if d["verdict"] == "Malicious")
    print(f"{n_mal}/{len(decisions)} host-windows flagged Malicious")
    return 0


def cmd_evaluate(args) -> int:
    scored = fileio.read_scores_csv(args.scores)
    decisions = fileio.read_decisions_jsonl(args.decisions)
    config = None
    if args.model:
        m = fileio.load_model(args.model)
        config = {"T": m.window_seconds, "N": m.n_windows, "arch": m.arch}
    report = pipeline.evaluate_decisions(scored, decisions, config=config,
                                         exclude_background=args.exclude_background)
    report_out = Path(args.report_out)
    fileio.dump_json({"format_version": fileio.FORMAT_VERSION,
                      "kind": "metrics-report", **report.to_dict()}, report_out)
    inputs = [args.scores, args.decisions] + ([args.model] if args.model else [])
    fileio.write_run_manifest(
        _run_manifest_path(report_out), "evaluate",
        _echo(args, ("scores", "decisions", "model", "exclude_background",
                     "run_name")),
        inputs=inputs, outputs=[report_out], seed=None)
    print(report_table([(args.run_name, report)]))
    return 0


def cmd_sweep(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_ids, test_ids = _apply_scenario_filter(args)
    cfg = _train_config(args, args.l_max)
    results = pipeline.window_sweep(
        args.manifest, train_ids, test_ids, args.durations, cfg,
        arch=args.arch, n_windows=args.n_windows, l_max=args.l_max,
        log1p=args.log1p, strict=args.strict, min_samples=args.min_samples,
        bins=args.bins, tie_rule=args.tie_rule,
        exclude_background=args.exclude_background)
    outputs = []
    for r in results:
        tag = f"{r.duration:g}s"
        report_path = out / f"report-T{tag}.json"
        hist_path = out / f"hist-T{tag}.csv"
        fileio.dump_json({"format_version": fileio.FORMAT_VERSION,
                          "kind": "metrics-report", **r.report.to_dict()},
                         report_path)
        pipeline.write_histogram_csv(hist_path, r.histogram)
        outputs += [report_path, hist_path]
    table = report_table([(f"T={r.duration:g}s", r.report) for r in results])
    table_path = out / "sweep-table.txt"
    table_path.write_text(table + "\n")
    outputs.append(table_path)
    manifest = pipeline.load_manifest(args.manifest)
    fileio.write_run_manifest(
        out / "sweep.run.json", "sweep",
        {**_echo(args, ("manifest", "train_scenarios", "test_scenarios",
                        "scenario_filter", "durations", "n_windows", "l_max",
                        "log1p", "strict", "exclude_background")),
         **_echo(args, tuple(_PDF_OPTS)), **cfg.to_dict(), "arch": args.arch},
        inputs=[manifest[s] for s in (*train_ids, *test_ids)],
        outputs=outputs, seed=cfg.seed)
    print(table)
    return 0


def cmd_stream(args) -> int:
    model = fileio.load_model(args.model)
    det = fileio.load_detector(args.detector)
    if args.input:
        paths = [Path(p) for p in args.input]
    elif args.manifest:
        manifest = pipeline.load_manifest(args.manifest)
        ids = args.scenario_filter or sorted(manifest)
        paths = pipeline.resolve_scenarios(manifest, ids)
    else:
        raise UsageError("stream needs --input or --manifest")

    def flow_source():
        for p in paths:
            yield from iter_flows(p, strict=args.strict)

    decisions, stats = run_stream(model, det, flow_source())
    for record in decisions:
        sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")
        sys.stdout.flush()
    print(f"flows={stats.flows_in} windows={stats.windows_closed} "
          f"decisions={stats.decisions} late_dropped={stats.late_dropped}",
          file=sys.stderr)
    return 0


# ----------------------------------------------------------------- parser

def _add_opts(sub: argparse.ArgumentParser, spec: dict[str, Opt],
              flagdefs: dict[str, dict]) -> None:
    sub.add_argument("--config", help="JSON file with flag equivalents")
    for name in spec:
        flag = "--" + name.replace("_", "-")
        kwargs = dict(flagdefs.get(name, {}))
        if isinstance(spec[name].default, bool):
            kwargs.setdefault("action", argparse.BooleanOptionalAction)
        kwargs.setdefault("default", None)
        sub.add_argument(flag, **kwargs)


_FLAGDEFS: dict[str, dict] = {
    "window_seconds": {"type": float, "help": "window duration T in seconds"},
    "n_windows": {"type": int, "help": "sequence length N in windows"},
    "l_max": {"type": int, "help": "max elements per sequence"},
    "epochs": {"type": int}, "batch_size": {"type": int}, "lr": {"type": float},
    "anneal_steps": {"type": int}, "beta_max": {"type": float},
    "seed": {"type": int}, "grad_clip": {"type": float},
    "hidden": {"type": int}, "latent": {"type": int},
    "bins": {"type": int}, "min_samples": {"type": int},
    "tie_rule": {"choices": ("malicious", "benign")},
    "arch": {"choices": ("rvae", "mlp")},
    "kfold": {"type": int, "help": "folds for time-blocked model selection"},
    "format": {"choices": ("csv", "bin"), "help": "features encoding"},
    "train_scenarios": {"help": "comma-separated scenario ids"},
    "test_scenarios": {"help": "comma-separated scenario ids"},
    "scenario_filter": {"help": "keep only these scenario ids"},
    "durations": {"help": "comma-separated window durations in seconds"},
    "input": {"help": "comma-separated flow capture paths"},
    "run_name": {"help": "row label in the metrics table"},
}


def build_parser() -> argparse.ArgumentParser:
    parser = _CliParser(prog="botdet",
                        description="Botnet detection over NetFlow captures")
    parser.add_argument("--version", action="version",
                        version=f"botdet {__version__}")
    subs = parser.add_subparsers(dest="command", metavar="subcommand")

    def sub(name, func, spec, help_):
        p = subs.add_parser(name, help=help_)
        _add_opts(p, spec, _FLAGDEFS)
        p.set_defaults(func=func, _spec=spec)
        return p

    sub("preprocess", cmd_preprocess, {
        "manifest": Opt(required=True),
        "train_scenarios": Opt(required=True, cast=_as_str_list),
        "test_scenarios": Opt(required=True, cast=_as_str_list),
        "scenario_filter": Opt(cast=_as_str_list),
        "out_dir": Opt(required=True),
        "format": Opt("csv", str),
        **_WINDOW_OPTS,
    }, "aggregate scenarios into normalized host-window features")

    sub("train", cmd_train, {
        "features": Opt(required=True),
        "model_out": Opt(required=True),
        "kfold": Opt(0, int),
        **_TRAIN_HYPER,
    }, "fit the VAE on non-malicious training rows")

    sub("score", cmd_score, {
        "model": Opt(required=True),
        "features": Opt(required=True),
        "scores_out": Opt(required=True),
    }, "anomaly-score host-windows with a trained model")

    sub("fitpdf", cmd_fitpdf, {
        "scores": Opt(required=True),
        "detector_out": Opt(required=True),
        **_PDF_OPTS,
    }, "fit best-PDF pair on training scores split by ground truth")

    sub("detect", cmd_detect, {
        "scores": Opt(required=True),
        "detector": Opt(required=True),
        "decisions_out": Opt(required=True),
    }, "classify scored host-windows by likelihood comparison")

    sub("evaluate", cmd_evaluate, {
        "scores": Opt(required=True),
        "decisions": Opt(required=True),
        "report_out": Opt(required=True),
        "model": Opt(),
        "run_name": Opt("run", str),
        "exclude_background": Opt(False, bool),
    }, "metrics report from scores plus decisions")

    sub("sweep", cmd_sweep, {
        "manifest": Opt(required=True),
        "train_scenarios": Opt(required=True, cast=_as_str_list),
        "test_scenarios": Opt(required=True, cast=_as_str_list),
        "scenario_filter": Opt(cast=_as_str_list),
        "durations": Opt(required=True, cast=_as_float_list),
        "out_dir": Opt(required=True),
        "exclude_background": Opt(False, bool),
        **_WINDOW_OPTS, **_TRAIN_HYPER, **_PDF_OPTS,
    }, "re-run the whole pipeline per window duration")

    sub("stream", cmd_stream, {
        "model": Opt(required=True),
        "detector": Opt(required=True),
        "input": Opt(cast=_as_str_list),
        "manifest": Opt(),
        "scenario_filter": Opt(cast=_as_str_list),
        "strict": Opt(False, bool),
    }, "emit JSON-lines decisions from a time-ordered flow stream")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            raise UsageError("missing subcommand (see --help)")
        _finalize(args)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
