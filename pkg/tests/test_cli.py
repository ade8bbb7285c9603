import json

import numpy as np
import pytest

from intonarank.cli import main
from intonarank.corpus import read_manifest, write_manifest
from intonarank.ranker import load_model


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    reports = [json.loads(line) for line in out.out.splitlines() if line.strip()]
    return code, reports, out.err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-corpus", "--statements", "20", "--questions", "20",
                 "--seed", "7", "--out", str(root / "d")]) == 0
    assert main(["train", "--manifest", str(root / "d" / "manifest.jsonl"),
                 "--seed", "7", "--model-out", str(root / "m.json")]) == 0
    return root


def test_gen_corpus_report(tmp_path, capsys):
    code, (rep,), _ = run(capsys, "gen-corpus", "--statements", 3, "--questions", 2,
                          "--seed", 1, "--out", tmp_path)
    assert code == 0
    assert (rep["n_statement"], rep["n_question"], rep["n_entries"]) == (3, 2, 5)
    assert len(list(tmp_path.glob("*.wav"))) == 5


def test_missing_seed_is_usage_error(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("INTONARANK_SEED", raising=False)
    code, _, err = run(capsys, "gen-corpus", "--statements", 1, "--questions", 1,
                       "--out", tmp_path)
    assert code == 2 and "usage" in err


def test_env_seed_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("INTONARANK_SEED", "5")
    code, (rep,), _ = run(capsys, "gen-corpus", "--statements", 1, "--questions", 1,
                          "--out", tmp_path)
    assert code == 0 and rep["seed"] == 5


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"seed": 3, "paths": {"corpus_dir": str(tmp_path / "c")}}))
    code, (rep,), _ = run(capsys, "gen-corpus", "--config", cfg, "--statements", 1,
                          "--questions", 1)
    assert code == 0 and rep["seed"] == 3
    # flags override the config file
    code, (rep,), _ = run(capsys, "gen-corpus", "--config", cfg, "--seed", 9,
                          "--statements", 1, "--questions", 1)
    assert rep["seed"] == 9


def test_bad_argument_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen-corpus", "--statements", "x"])
    assert exc.value.code == 2


def test_train_report_and_model(trained, capsys):
    code, (rep,), _ = run(capsys, "train", "--manifest", trained / "d" / "manifest.jsonl",
                          "--seed", 7, "--model-out", trained / "m2.json",
                          "--features-out", trained / "f.jsonl")
    assert code == 0
    assert rep["pair_order_accuracy"] == 1.0
    assert rep["sigma"] == 1.0
    assert (trained / "m2.json").read_bytes() == (trained / "m.json").read_bytes()
    model = load_model(trained / "m.json")
    assert model.to_json() == (trained / "m.json").read_text()
    rows = [json.loads(l) for l in (trained / "f.jsonl").read_text().splitlines()]
    assert len(rows) == 40 and len(rows[0]["features"]) == 8
    assert rows[0]["window"][1] - rows[0]["window"][0] == pytest.approx(0.52)


def test_train_empty_class_exit_4(trained, tmp_path, capsys):
    entries = [e for e in read_manifest(trained / "d" / "manifest.jsonl")
               if e.intonation == "statement"]
    for e in entries:
        e.path = str(trained / "d" / e.path)
    write_manifest(entries, tmp_path / "s.jsonl")
    code, _, _ = run(capsys, "train", "--manifest", tmp_path / "s.jsonl", "--seed", 1,
                     "--model-out", tmp_path / "m.json")
    assert code == 4


def test_train_non_convergence_exit_5(trained, tmp_path, capsys):
    code, _, _ = run(capsys, "train", "--manifest", trained / "d" / "manifest.jsonl",
                     "--seed", 7, "--max-iters", 2, "--model-out", tmp_path / "m.json")
    assert code == 5
    assert not (tmp_path / "m.json").exists()


def test_train_sigma_auto(tmp_path, capsys):
    run(capsys, "gen-corpus", "--statements", 6, "--questions", 2, "--seed", 2, "--out", tmp_path)
    code, (rep,), _ = run(capsys, "train", "--manifest", tmp_path / "manifest.jsonl",
                          "--seed", 2, "--model-out", tmp_path / "m.json")
    assert code == 0 and rep["sigma"] == 3.0


def test_score_manual(trained, capsys):
    code, (rep,), _ = run(capsys, "score", "--model", trained / "m.json", "--intensity", 0.9)
    assert code == 0
    assert rep["intensity"] == 0.9 and len(rep["h_i"]) == 16


@pytest.mark.parametrize("value", ["1.5", "-0.1"])
def test_score_manual_out_of_range(trained, capsys, value):
    code, _, _ = run(capsys, "score", "--model", trained / "m.json", "--intensity", value)
    assert code == 6


def test_score_source_exclusive(trained, capsys):
    wav = trained / "d" / "clip_00000.wav"
    assert run(capsys, "score", "--model", trained / "m.json")[0] == 2
    assert run(capsys, "score", "--model", trained / "m.json", "--input", wav,
               "--intensity", 0.5)[0] == 2


def test_score_audio_orders_rise_above_fall(trained, tmp_path, capsys):
    from intonarank.audio import wav_write
    from intonarank.corpus import SynthSpec, generate_clip

    scores = {}
    for contour in ("rise", "fall"):
        path = tmp_path / f"{contour}.wav"
        wav_write(generate_clip(SynthSpec(1.5, 200.0, contour, 9.0, 30.0, 4)), path)
        code, (rep,), _ = run(capsys, "score", "--model", trained / "m.json", "--input", path)
        assert code == 0 and set(rep) == {"command", "path", "raw_score", "intensity"}
        scores[contour] = rep["intensity"]
    assert scores["rise"] > scores["fall"]


def test_score_bad_model_exit_3(tmp_path, capsys):
    bad = tmp_path / "m.json"
    bad.write_text(json.dumps({"schema_version": 99}))
    assert run(capsys, "score", "--model", bad, "--intensity", 0.5)[0] == 3
    assert run(capsys, "score", "--model", tmp_path / "none.json", "--intensity", 0.5)[0] == 3


def test_label_rewrites_only_intonation(trained, tmp_path, capsys):
    src = read_manifest(trained / "d" / "manifest.jsonl")
    for e in src:
        e.path = str(trained / "d" / e.path)
    truth = [e.intonation for e in src]
    for e in src:
        e.intonation = "unlabeled"
    write_manifest(src, tmp_path / "m.jsonl")
    code, (rep,), _ = run(capsys, "label", "--manifest", tmp_path / "m.jsonl", "--seed", 7)
    assert code == 0 and rep["agreement"] is None
    after = read_manifest(tmp_path / "m.jsonl")
    assert [(e.path, e.speaker, e.emotion, e.terminal_shift) for e in after] == \
        [(e.path, e.speaker, e.emotion, e.terminal_shift) for e in src]
    agree = np.mean([e.intonation == t for e, t in zip(after, truth)])
    assert agree >= 0.95


def test_label_missing_manifest_exit_3(tmp_path, capsys):
    assert run(capsys, "label", "--manifest", tmp_path / "x.jsonl", "--seed", 1)[0] == 3


def test_eval_metrics_self(trained, capsys):
    wav = trained / "d" / "clip_00001.wav"
    code, (rep,), _ = run(capsys, "eval-metrics", "--ref", wav, "--syn", wav)
    assert code == 0
    assert rep["mcd_db"] == 0 and rep["ffe"] == 0 and rep["duration_mse"] == 0
    assert rep["frames_compared"] > 0


def test_eval_metrics_durations(trained, capsys):
    a, b = trained / "d" / "clip_00001.wav", trained / "d" / "clip_00002.wav"
    code, (rep,), _ = run(capsys, "eval-metrics", "--ref", a, "--syn", b,
                          "--ref-durations", "1,2", "--syn-durations", "2,4")
    assert code == 0 and rep["duration_mse"] == 2.5 and rep["mcd_db"] > 0


def test_grad_check(capsys, tmp_path):
    code, reports, _ = run(capsys, "grad-check", "--seed", 3, "--points", 10,
                           "--report-file", tmp_path / "r.jsonl")
    assert code == 0 and all(r["passed"] for r in reports)
    assert len((tmp_path / "r.jsonl").read_text().splitlines()) == len(reports)


def test_grad_check_failure_exit_7(capsys):
    assert run(capsys, "grad-check", "--seed", 3, "--points", 2, "--tol", 0)[0] == 7
