"""Command-line behavior: artifacts, exit codes, output contracts."""

import subprocess
import sys

import numpy as np
import pytest

from igloo.checkpoint import load_checkpoint
from igloo.cli import main

TINY = ["--copy-T", "2", "--copy-train-n", "64", "--copy-test-n", "32",
        "--model-J", "8", "--model-p", "2", "--model-K", "4",
        "--batch-size", "16", "--train-eval-every", "2", "--lr", "0.01"]


def run_train(tmp_path, capsys, extra=(), steps="4"):
    out = tmp_path / "run"
    rc = main(["train", "--max-steps", steps, "--out-dir", str(out), *TINY,
               *extra])
    captured = capsys.readouterr()
    return rc, out, captured


def read_csv(path):
    lines = path.read_text().strip().splitlines()
    rows = [line.split(",") for line in lines[1:]]
    return lines[0], rows


def test_train_writes_artifacts(tmp_path, capsys):
    rc, out, captured = run_train(tmp_path, capsys)
    assert rc == 0
    for name in ("config.txt", "metrics.csv", "best.ckpt", "final.ckpt"):
        assert (out / name).exists()
    assert "task=copy" in captured.out
    assert "params=" in captured.out and "core_params=" in captured.out
    assert "done: step 4" in captured.out
    header, rows = read_csv(out / "metrics.csv")
    assert header == "step,epoch,wall_time_s,train_loss,eval_loss,eval_metric"
    assert [r[0] for r in rows] == ["0", "2", "4"]
    cfg_echo = (out / "config.txt").read_text()
    assert "copy.T=2" in cfg_echo
    assert "train.max_steps=4" in cfg_echo


def test_train_prints_core_param_count(tmp_path, capsys):
    rc, _, captured = run_train(
        tmp_path, capsys, steps="0",
        extra=["--model-J", "100", "--model-p", "4", "--model-K", "5"])
    assert rc == 0
    assert "core_params=2100" in captured.out


def test_train_zero_steps_two_line_csv(tmp_path, capsys):
    rc, out, _ = run_train(tmp_path, capsys, steps="0")
    assert rc == 0
    text = (out / "metrics.csv").read_text()
    assert len(text.strip().splitlines()) == 2


def test_train_config_file_plus_flag_override(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("task = copy\ncopy.T = 2\ncopy.train_n = 32\n"
                   "copy.test_n = 16\nmodel.J = 4\nmodel.p = 2\nmodel.K = 3\n"
                   "train.max_steps = 2\ntrain.eval_every = 0\n"
                   "train.batch_size = 16\n")
    out = tmp_path / "out"
    rc = main(["train", "--config", str(cfg), "--out-dir", str(out),
               "--train-max-steps", "3"])
    assert rc == 0
    assert "train.max_steps=3" in (out / "config.txt").read_text()
    capsys.readouterr()


def test_eval_reproduces_training_metric(tmp_path, capsys):
    rc, out, _ = run_train(tmp_path, capsys)
    assert rc == 0
    _, rows = read_csv(out / "metrics.csv")
    final_loss, final_metric = float(rows[-1][4]), float(rows[-1][5])
    rc = main(["eval", "--checkpoint", str(out / "final.ckpt")])
    assert rc == 0
    captured = capsys.readouterr()
    parts = captured.out.split()
    assert parts[0] == "eval_loss"
    assert np.isclose(float(parts[1]), final_loss, rtol=1e-9, atol=0.0)
    assert parts[2] == "accuracy"
    assert np.isclose(float(parts[3]), final_metric, rtol=1e-9, atol=0.0)


def test_eval_rejects_architecture_overrides(tmp_path, capsys):
    rc, out, _ = run_train(tmp_path, capsys, steps="0")
    assert rc == 0
    rc = main(["eval", "--checkpoint", str(out / "final.ckpt"),
               "--model-J", "16"])
    assert rc == 1
    assert "fixed by the checkpoint" in capsys.readouterr().err
    rc = main(["eval", "--checkpoint", str(out / "final.ckpt"),
               "--task", "addition"])
    assert rc == 1
    capsys.readouterr()


def test_eval_allows_harmless_overrides(tmp_path, capsys):
    rc, out, _ = run_train(tmp_path, capsys, steps="0")
    rc = main(["eval", "--checkpoint", str(out / "final.ckpt"),
               "--batch-size", "8"])
    assert rc == 0
    capsys.readouterr()


def test_eval_corrupted_magic(tmp_path, capsys):
    rc, out, _ = run_train(tmp_path, capsys, steps="0")
    ckpt = out / "final.ckpt"
    raw = bytearray(ckpt.read_bytes())
    raw[:4] = b"JUNK"
    ckpt.write_bytes(bytes(raw))
    rc = main(["eval", "--checkpoint", str(ckpt)])
    assert rc == 1
    assert "bad magic" in capsys.readouterr().err


def test_missing_config_file_named(tmp_path, capsys):
    rc = main(["train", "--config", str(tmp_path / "nope.cfg")])
    assert rc == 1
    err = capsys.readouterr().err
    assert "nope.cfg" in err and err.startswith("error:")


def test_unknown_key_in_config_file(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("model.Q = 3\n")
    rc = main(["train", "--config", str(cfg)])
    assert rc == 1
    assert "unknown key 'model.Q'" in capsys.readouterr().err


def test_bad_integer_flag(tmp_path, capsys):
    rc = main(["train", "--model-J", "banana", "--out-dir", str(tmp_path)])
    assert rc == 1
    assert "model.J: expected integer" in capsys.readouterr().err


def test_missing_data_directory(tmp_path, capsys):
    rc = main(["train", "--task", "mnist",
               "--paths-mnist-dir", str(tmp_path / "absent"),
               "--out-dir", str(tmp_path / "o")])
    assert rc == 1
    capsys.readouterr()


def test_divergence_exit_code_and_partial_csv(tmp_path, capsys):
    with np.errstate(over="ignore", invalid="ignore"):
        rc, out, captured = run_train(
            tmp_path, capsys, steps="50",
            extra=["--train-lr", "1e150", "--train-clip-norm", "0"])
    assert rc == 2
    assert "numeric failure" in captured.err
    header, rows = read_csv(out / "metrics.csv")
    assert header.startswith("step,")
    assert len(rows) >= 1 and rows[0][0] == "0"


def test_gradcheck_passes(capsys):
    rc = main(["gradcheck", "--task", "copy", *TINY, "--probes", "10"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "gradcheck PASS" in out
    assert out.count("PASS") > 3   # one line per tensor plus the verdict


def test_gradcheck_detects_corruption(capsys):
    rc = main(["gradcheck", "--task", "copy", *TINY, "--probes", "10",
               "--debug-corrupt-grad"])
    assert rc == 2
    captured = capsys.readouterr()
    assert "gradcheck FAIL" in captured.err
    assert "FAIL" in captured.out


def test_gradcheck_flags_degenerate_literal_bank(capsys):
    rc = main(["gradcheck", "--task", "charlm", "--model-b-mode", "literal",
               "--model-J", "4", "--model-K", "3", "--model-Z", "4",
               "--probes", "8"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "degenerate: no gradient signal" in out
    assert "gradcheck PASS" in out


def test_bench_rows_and_csv(tmp_path, capsys):
    out = tmp_path / "bench"
    rc = main(["bench", "--runs", "2", "--out-dir", str(out), *TINY,
               "--max-steps", "2",
               "--train-threshold-metric", "accuracy",
               "--train-threshold-value", "-1"])
    assert rc == 0
    captured = capsys.readouterr()
    assert "runs=2" in captured.out
    lines = (out / "bench.csv").read_text().strip().splitlines()
    assert lines[0].startswith("run,seed,reached")
    assert len(lines) == 3


def test_gen_data_digits_then_train(tmp_path, capsys):
    data_dir = tmp_path / "digits"
    rc = main(["gen-data", "--task", "mnist", "--paths-mnist-dir", str(data_dir),
               "--mnist-n-train", "12", "--mnist-n-test", "6"])
    assert rc == 0
    assert (data_dir / "train-images-idx3-ubyte").exists()
    assert (data_dir / "t10k-labels-idx1-ubyte").exists()
    rc = main(["train", "--task", "pmnist", "--paths-mnist-dir", str(data_dir),
               "--mnist-n-train", "12", "--mnist-n-test", "6",
               "--model-J", "8", "--model-p", "2", "--model-K", "3",
               "--max-steps", "0", "--out-dir", str(tmp_path / "o")])
    assert rc == 0
    capsys.readouterr()


def test_gen_data_charlm_corpus(tmp_path, capsys):
    corpus = tmp_path / "text" / "corpus.txt"
    rc = main(["gen-data", "--task", "charlm", "--paths-corpus", str(corpus),
               "--chars", "2000"])
    assert rc == 0
    assert corpus.exists()
    assert len(corpus.read_text()) == 2000
    capsys.readouterr()


def test_gen_data_copy_npz(tmp_path, capsys):
    out = tmp_path / "npz"
    rc = main(["gen-data", "--task", "copy", "--copy-T", "2",
               "--copy-train-n", "10", "--copy-test-n", "4",
               "--out-dir", str(out)])
    assert rc == 0
    with np.load(out / "copy.npz") as z:
        assert z["train_inputs"].shape == (10, 22)
        assert z["test_targets"].shape == (4, 10)
    capsys.readouterr()


def test_checkpoint_embeds_resolved_config(tmp_path, capsys):
    rc, out, _ = run_train(tmp_path, capsys, steps="0")
    cfg_text, _, _, _, _ = load_checkpoint(out / "final.ckpt")
    assert cfg_text == (out / "config.txt").read_text()


def test_console_script_help():
    proc = subprocess.run(["igloo", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("train", "eval", "bench", "gradcheck", "gen-data"):
        assert name in proc.stdout


def test_console_script_flags_mirror_keys():
    proc = subprocess.run(["igloo", "train", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for flag in ("--model-J", "--copy-T", "--train-max-steps", "--max-steps",
                 "--lr", "--out-dir"):
        assert flag in proc.stdout


def test_module_invocation_matches_script(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "igloo.cli", "train", "--max-steps", "0",
         "--out-dir", str(tmp_path / "m"), *TINY],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "task=copy" in proc.stdout
