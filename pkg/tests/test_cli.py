import json
from pathlib import Path

import pytest

from botdet.cli import main
from botdet.fileio import read_run_manifest
from botdet.synth import SynthConfig, make_fixture

FAST_TRAIN = ["--epochs", "6", "--batch-size", "16", "--hidden", "10",
              "--latent", "4", "--anneal-steps", "30", "--seed", "0"]


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("clifix")
    return make_fixture(out, train_cfg=SynthConfig(
        seed=3, n_normal_hosts=6, n_botnet_hosts=2, n_background_hosts=1,
        n_windows=24))


def run_chain(fixture, workdir: Path, extra_train=()) -> dict[str, Path]:
    """Drive preprocess..evaluate, returning artifact paths."""
    art = {
        "features_train": workdir / "features-train.csv",
        "features_test": workdir / "features-test.csv",
        "model": workdir / "model.json",
        "scores_train": workdir / "scores-train.csv",
        "scores_test": workdir / "scores-test.csv",
        "detector": workdir / "detector.json",
        "decisions": workdir / "decisions.jsonl",
        "report": workdir / "report.json",
    }
    steps = [
        ["preprocess", "--manifest", str(fixture["manifest"]),
         "--train-scenarios", "synth-train", "--test-scenarios", "synth-test",
         "--out-dir", str(workdir)],
        ["train", "--features", str(art["features_train"]),
         "--model-out", str(art["model"]), *FAST_TRAIN, *extra_train],
        ["score", "--model", str(art["model"]),
         "--features", str(art["features_train"]),
         "--scores-out", str(art["scores_train"])],
        ["score", "--model", str(art["model"]),
         "--features", str(art["features_test"]),
         "--scores-out", str(art["scores_test"])],
        ["fitpdf", "--scores", str(art["scores_train"]),
         "--detector-out", str(art["detector"]),
         "--min-samples", "30", "--bins", "60"],
        ["detect", "--scores", str(art["scores_test"]),
         "--detector", str(art["detector"]),
         "--decisions-out", str(art["decisions"])],
        ["evaluate", "--scores", str(art["scores_test"]),
         "--decisions", str(art["decisions"]),
         "--report-out", str(art["report"]), "--model", str(art["model"])],
    ]
    for argv in steps:
        assert main(argv) == 0, f"step failed: {argv[0]}"
    return art


@pytest.fixture(scope="module")
def chain(fixture_dir, tmp_path_factory):
    workdir = tmp_path_factory.mktemp("chain")
    return run_chain(fixture_dir, workdir)


def test_chain_writes_every_artifact(chain):
    for path in chain.values():
        assert path.exists(), path


def test_chain_writes_run_manifests(chain):
    for runfile, stage in [("preprocess.run.json", "preprocess"),
                           ("model.run.json", "train"),
                           ("scores-test.run.json", "score"),
                           ("detector.run.json", "fitpdf"),
                           ("decisions.run.json", "detect"),
                           ("report.run.json", "evaluate")]:
        payload = read_run_manifest(chain["model"].parent / runfile)
        assert payload["stage"] == stage
        assert payload["config_sha256"]
        assert all(len(h) == 64 for h in payload["inputs"].values())
        assert payload["versions"]["botdet"]


def test_report_carries_metrics_and_config_echo(chain):
    payload = json.loads(chain["report"].read_text())
    assert payload["kind"] == "metrics-report"
    for key in ("recall", "precision", "f1", "auprc", "auroc"):
        assert 0.0 <= payload[key] <= 1.0
    assert payload["config"] == {"T": 60.0, "N": 3, "arch": "rvae"}


def test_stream_emits_decisions_matching_detect(chain, fixture_dir, capsys):
    rc = main(["stream", "--model", str(chain["model"]),
               "--detector", str(chain["detector"]),
               "--input", str(fixture_dir["test"])])
    assert rc == 0
    out = capsys.readouterr()
    streamed = [json.loads(line) for line in out.out.strip().split("\n")]
    assert "late_dropped=0" in out.err
    batch = [json.loads(line) for line in
             chain["decisions"].read_text().strip().split("\n")]

    def project(rows):
        return {(d["src_addr"], d["window_index"]): d["verdict"] for d in rows}

    assert project(streamed) == project(batch)
    assert all(d["emit_latency"] >= 0.0 for d in streamed)


def test_stream_scenario_filter_via_manifest(chain, fixture_dir, capsys):
    rc = main(["stream", "--model", str(chain["model"]),
               "--detector", str(chain["detector"]),
               "--manifest", str(fixture_dir["manifest"]),
               "--scenario-filter", "synth-test"])
    assert rc == 0
    direct = main(["stream", "--model", str(chain["model"]),
                   "--detector", str(chain["detector"]),
                   "--input", str(fixture_dir["test"])])
    assert direct == 0


def test_rerun_is_byte_identical(fixture_dir, tmp_path_factory):
    a = run_chain(fixture_dir, tmp_path_factory.mktemp("rerun-a"))
    b = run_chain(fixture_dir, tmp_path_factory.mktemp("rerun-b"))
    for key in ("model", "scores_test", "detector", "decisions", "report"):
        assert a[key].read_bytes() == b[key].read_bytes(), key


def test_train_arch_mlp_is_recorded(chain, tmp_path):
    model_out = tmp_path / "mlp.json"
    rc = main(["train", "--features", str(chain["features_train"]),
               "--model-out", str(model_out), *FAST_TRAIN,
               "--arch", "mlp", "--epochs", "2",
               "--mlp-hidden", "16,16", "--latent", "4"])
    assert rc == 0
    assert json.loads(model_out.read_text())["arch"] == "mlp"


def test_config_file_supplies_flags_and_flags_win(chain, tmp_path):
    cfg = {"features": str(chain["features_train"]),
           "model_out": str(tmp_path / "from-config.json"),
           "epochs": 2, "batch_size": 16, "hidden": 6, "latent": 3,
           "anneal_steps": 10, "seed": 1}
    cfg_path = tmp_path / "train.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main(["train", "--config", str(cfg_path)]) == 0
    assert (tmp_path / "from-config.json").exists()

    override = tmp_path / "override.json"
    assert main(["train", "--config", str(cfg_path),
                 "--model-out", str(override), "--hidden", "4"]) == 0
    assert override.exists()
    assert json.loads(override.read_text())["config"]["hidden"] == 4


def test_config_file_rejects_unknown_keys(chain, tmp_path):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"epohcs": 3}))
    assert main(["train", "--config", str(cfg_path),
                 "--features", str(chain["features_train"]),
                 "--model-out", str(tmp_path / "x.json")]) == 1


def test_usage_errors_exit_1(fixture_dir, tmp_path):
    assert main([]) == 1
    assert main(["preprocess", "--bogus-flag"]) == 1
    assert main(["train", "--features", "f.csv"]) == 1  # missing --model-out
    assert main(["preprocess", "--manifest", str(fixture_dir["manifest"]),
                 "--train-scenarios", "synth-train",
                 "--test-scenarios", "synth-train",
                 "--out-dir", str(tmp_path)]) == 1


def test_data_errors_exit_2(chain, tmp_path):
    assert main(["preprocess", "--manifest", str(tmp_path / "missing.json"),
                 "--train-scenarios", "a", "--test-scenarios", "b",
                 "--out-dir", str(tmp_path)]) == 2
    assert main(["score", "--model", str(chain["model"]),
                 "--features", str(tmp_path / "nope.csv"),
                 "--scores-out", str(tmp_path / "s.csv")]) == 2


def test_stage_mismatch_is_fatal_with_message(chain, tmp_path, capsys):
    doctored = tmp_path / "doctored.csv"
    text = chain["features_test"].read_text().split("\n")
    meta = json.loads(text[0].removeprefix("#META "))
    meta["feature_names"] = list(reversed(meta["feature_names"]))
    names = meta["feature_names"]
    meta["normalizer"]["min"] = list(reversed(meta["normalizer"]["min"]))
    meta["normalizer"]["max"] = list(reversed(meta["normalizer"]["max"]))
    header = text[1].split(",")
    text[1] = ",".join(header[:4] + names)
    doctored.write_text("\n".join(["#META " + json.dumps(meta)] + text[1:]))
    rc = main(["score", "--model", str(chain["model"]),
               "--features", str(doctored),
               "--scores-out", str(tmp_path / "s.csv")])
    assert rc == 2
    assert "layout" in capsys.readouterr().err


def test_sweep_single_duration(fixture_dir, tmp_path, capsys):
    out = tmp_path / "sweep"
    rc = main(["sweep", "--manifest", str(fixture_dir["manifest"]),
               "--train-scenarios", "synth-train",
               "--test-scenarios", "synth-test",
               "--durations", "60", "--out-dir", str(out),
               *FAST_TRAIN, "--min-samples", "30", "--bins", "40"])
    assert rc == 0
    assert (out / "report-T60s.json").exists()
    assert (out / "hist-T60s.csv").exists()
    table = (out / "sweep-table.txt").read_text()
    assert table.splitlines()[0].split() == ["Run", "Recall", "Precision",
                                             "F1", "AUPRC", "AUROC"]
    assert "T=60s" in table
    assert "T=60s" in capsys.readouterr().out
