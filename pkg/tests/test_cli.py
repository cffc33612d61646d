"""Command-line interface: exit codes, file outputs, config reruns."""

import pytest

from flowinfill import NumericalError, __version__, load_model, read_features, read_kv
from flowinfill.cli import main


@pytest.fixture(scope="module")
def cli_env(tmp_path_factory):
    """A tiny end-to-end workspace: corpus, field model, duration model."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    run = root / "run"
    dur = root / "dur"
    assert main([
        "gen-data", "--out", str(corpus), "--n-samples", "8",
        "--n-speakers", "2", "--n-words", "8", "--seed", "7", "--split", "cli",
    ]) == 0
    assert main([
        "train", "--corpus", str(corpus), "--out", str(run),
        "--total-updates", "3", "--warmup-updates", "1",
        "--checkpoint-every", "3", "--layers", "2", "--heads", "2",
        "--embed-dim", "16", "--ff-dim", "32", "--char-embed-dim", "8",
    ]) == 0
    assert main([
        "train-duration", "--corpus", str(corpus), "--out", str(dur),
        "--total-updates", "8", "--warmup-updates", "2", "--batch-size", "4",
        "--embed-dim", "16", "--ff-dim", "32",
    ]) == 0
    return {
        "root": root,
        "corpus": corpus,
        "model": run / "model.ckpt",
        "run": run,
        "duration": dur / "duration.ckpt",
    }


def _first_sample_id(corpus):
    line = (corpus / "manifest.tsv").read_text().splitlines()[0]
    return line.split("\t")[0]


def test_version_exits_zero(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_usage_errors_exit_one(capsys):
    assert main(["gen-data"]) == 1  # --out is required
    assert main(["no-such-command"]) == 1
    assert main([]) == 1


def test_gen_data_outputs(cli_env, capsys):
    corpus = cli_env["corpus"]
    for name in ("manifest.tsv", "corpus.meta", "run.meta", "templates.bin",
                 "speakers.tsv", "lexicon.tsv"):
        assert (corpus / name).exists(), name
    meta = read_kv(corpus / "run.meta")
    assert meta["command"] == "gen-data"
    assert meta["version"] == __version__
    assert meta["n_samples"] == 8
    assert meta["split"] == "cli"


def test_gen_data_config_rerun_is_identical(cli_env, tmp_path):
    corpus = cli_env["corpus"]
    again = tmp_path / "again"
    assert main([
        "gen-data", "--config", str(corpus / "run.meta"), "--out", str(again),
    ]) == 0
    assert (again / "manifest.tsv").read_bytes() == (corpus / "manifest.tsv").read_bytes()
    assert (again / "corpus.meta").read_bytes() == (corpus / "corpus.meta").read_bytes()
    sid = _first_sample_id(corpus)
    assert (again / "feats" / f"{sid}.bin").read_bytes() == \
        (corpus / "feats" / f"{sid}.bin").read_bytes()


def test_explicit_flag_beats_config(cli_env, tmp_path):
    corpus = cli_env["corpus"]
    other = tmp_path / "other"
    assert main([
        "gen-data", "--config", str(corpus / "run.meta"), "--out", str(other),
        "--n-samples", "3",
    ]) == 0
    assert len((other / "manifest.tsv").read_text().splitlines()) == 3


def test_train_outputs(cli_env):
    run = cli_env["run"]
    metrics = (run / "metrics.tsv").read_text().splitlines()
    assert metrics[0] == "step\tloss\tlr\twall_ms"
    assert len(metrics) == 1 + 3
    assert (run / "checkpoints" / "ckpt-000003.ckpt").exists()
    model = load_model(cli_env["model"])
    assert type(model).__name__ == "FieldModel"
    meta = read_kv(run / "run.meta")
    assert meta["command"] == "train"
    assert meta["total_updates"] == 3


def test_synth_writes_features(cli_env, tmp_path, capsys):
    out = tmp_path / "synth.bin"
    sid = _first_sample_id(cli_env["corpus"])
    assert main([
        "synth", "--model", str(cli_env["model"]), "--corpus", str(cli_env["corpus"]),
        "--prompt", sid, "--text", "ab", "--duration", "12",
        "--nfe", "4", "--out", str(out),
    ]) == 0
    feats = read_features(out)
    assert feats.n_frames == 12
    assert (tmp_path / "synth.bin.meta").exists()
    stdout = capsys.readouterr().out
    assert "wrote 12 frames" in stdout
    assert "decoded:" in stdout


def test_synth_duration_model_path(cli_env, tmp_path):
    out = tmp_path / "d.bin"
    sid = _first_sample_id(cli_env["corpus"])
    base = [
        "synth", "--model", str(cli_env["model"]), "--corpus", str(cli_env["corpus"]),
        "--prompt", sid, "--text", "ab", "--nfe", "4", "--out", str(out),
        "--duration-model", str(cli_env["duration"]),
    ]
    assert main(base) == 0
    assert read_features(out).n_frames >= 1
    assert main(base + ["--speech-rate", "1.3"]) == 0


def test_synth_usage_errors(cli_env, tmp_path, capsys):
    sid = _first_sample_id(cli_env["corpus"])
    common = [
        "synth", "--model", str(cli_env["model"]), "--corpus", str(cli_env["corpus"]),
        "--prompt", sid, "--text", "ab", "--out", str(tmp_path / "x.bin"),
    ]
    # no duration source at all
    assert main(common) == 1
    # speech rate without a duration model to scale
    assert main(common + ["--speech-rate", "1.2"]) == 1
    assert "--duration-model" in capsys.readouterr().err
    # the two duration flags are mutually exclusive
    assert main(common + ["--duration", "10", "--speech-rate", "1.2"]) == 1
    # unknown prompt id
    assert main([
        "synth", "--model", str(cli_env["model"]), "--corpus", str(cli_env["corpus"]),
        "--prompt", "nope", "--text", "ab", "--duration", "10",
    ]) == 1
    assert "not found" in capsys.readouterr().err


def test_model_kind_checked(cli_env, capsys):
    assert main([
        "eval", "--model", str(cli_env["duration"]), "--corpus", str(cli_env["corpus"]),
        "--n", "2", "--nfe", "4",
    ]) == 1
    assert "not a field model" in capsys.readouterr().err


def test_corrupt_checkpoint_is_usage_error(cli_env, tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage bytes, not a checkpoint")
    assert main([
        "eval", "--model", str(bad), "--corpus", str(cli_env["corpus"]), "--n", "2",
    ]) == 1
    assert "bad magic" in capsys.readouterr().err


def test_eval_outputs(cli_env, tmp_path, capsys):
    out = tmp_path / "eval.tsv"
    assert main([
        "eval", "--model", str(cli_env["model"]), "--corpus", str(cli_env["corpus"]),
        "--n", "3", "--nfe", "4", "--out", str(out),
    ]) == 0
    stdout = capsys.readouterr().out
    assert "n=3 CER=" in stdout and "SIM=" in stdout
    lines = out.read_text().splitlines()
    assert lines[0] == "case\tcer\tsim\tgen_frames\tdecoded"
    assert len(lines) == 1 + 3
    record = lines[1].split("\t")
    assert int(record[0]) == 0
    float(record[1]), float(record[2]), int(record[3])
    assert (tmp_path / "eval.meta").exists()


def test_eval_with_duration_model(cli_env, capsys):
    assert main([
        "eval", "--model", str(cli_env["model"]), "--corpus", str(cli_env["corpus"]),
        "--n", "2", "--nfe", "4", "--duration-model", str(cli_env["duration"]),
    ]) == 0
    assert "n=2" in capsys.readouterr().out


def test_sweep_speech_rate_stdout(cli_env, capsys):
    assert main([
        "sweep", "speech-rate", "--model", str(cli_env["model"]),
        "--corpus", str(cli_env["corpus"]), "--n", "2", "--nfe", "4",
    ]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "speech_rate\tlengths_exact\tn\tmean_cer\tmean_sim"
    assert len(lines) == 1 + 5
    assert all(row.split("\t")[1] == "True" for row in lines[1:])


def test_sweep_prompt_length_file(cli_env, tmp_path):
    out = tmp_path / "sweep.tsv"
    assert main([
        "sweep", "prompt-length", "--model", str(cli_env["model"]),
        "--corpus", str(cli_env["corpus"]), "--n", "2", "--nfe", "4",
        "--out", str(out),
    ]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "fraction\tmean_prompt_frames\tn\tmean_cer\tmean_sim"
    assert len(lines) == 1 + 4
    assert (tmp_path / "sweep.meta").exists()


def test_workdir_resolves_relative_paths(tmp_path):
    assert main([
        "gen-data", "--workdir", str(tmp_path), "--out", "rel",
        "--n-samples", "3", "--n-speakers", "2", "--n-words", "6",
    ]) == 0
    assert (tmp_path / "rel" / "manifest.tsv").exists()


def test_threads_env(monkeypatch, capsys):
    monkeypatch.setenv("FLOWINFILL_THREADS", "abc")
    assert main(["--version"]) == 1
    assert "FLOWINFILL_THREADS" in capsys.readouterr().err
    monkeypatch.setenv("FLOWINFILL_THREADS", "1")
    assert main(["--version"]) == 0


def test_runtime_errors_exit_two(cli_env, monkeypatch, capsys):
    def explode(path):
        raise NumericalError("synthetic failure")

    monkeypatch.setattr("flowinfill.cli.load_corpus", explode)
    assert main([
        "eval", "--model", str(cli_env["model"]), "--corpus", str(cli_env["corpus"]),
        "--n", "2",
    ]) == 2
    assert "runtime error" in capsys.readouterr().err
