"""Command-line entry point: train | eval | bench | gradcheck | gen-data.

Every config key is also a flag: model.J becomes --model-J, train.max_steps
becomes --train-max-steps (with a few short aliases such as --max-steps).
Exit codes: 0 success, 1 configuration or I/O error, 2 numeric failure
(training divergence, failed gradient check).
"""

import argparse
import os
import sys

import numpy as np

from . import tensor as T
from .autodiff import grad_check
from .checkpoint import checkpoint_model, restore_model
from .config import DEFAULTS, FLAG_ALIASES, echo, flag_for_key, resolve
from .errors import ConfigError, DataError, FormatError, NumericsError
from .layers import param_count
from .models import build_model
from .rng import stream_rng
from .tasks import gen_addition, gen_char_corpus, gen_copy_memory, gen_digits_idx
from .train import bench, load_task_data, train


def _dest_for_key(key):
    return key.replace(".", "__")


def _add_config_flags(parser):
    alias_by_key = {}
    for flag, key in FLAG_ALIASES.items():
        alias_by_key.setdefault(key, []).append(flag)
    for key, (default, help_text) in DEFAULTS.items():
        flags = [flag_for_key(key)] + alias_by_key.get(key, [])
        parser.add_argument(*flags, dest=_dest_for_key(key), metavar="V",
                            help=f"{help_text} (default {default!r})")


def _collect_overrides(args):
    out = {}
    for key in DEFAULTS:
        value = getattr(args, _dest_for_key(key), None)
        if value is not None:
            out[key] = value
    return out


def _load_config(args):
    file_text = None
    source = "<flags>"
    if args.config is not None:
        if not os.path.exists(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        with open(args.config, "r", encoding="utf-8") as fh:
            file_text = fh.read()
        source = args.config
    return resolve(file_text=file_text, overrides=_collect_overrides(args),
                   source=source)


def _better(metric, best, mode):
    if best is None:
        return True
    return metric > best if mode == "max" else metric < best


def cmd_train(args):
    cfg = _load_config(args)
    out_dir = cfg["paths.out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    cfg_text = echo(cfg)
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(cfg_text)
    data = load_task_data(cfg)
    model = build_model(cfg, vocab_size=data.vocab_size)
    _, total = param_count(model.params())
    cores = ",".join(str(c) for c in model.core_param_counts())
    print(f"task={cfg['task']}  params={total}  core_params={cores}  "
          f"train={data.n_train}  test={data.test_inputs.shape[0]}")
    vocab = data.vocab_size or 0
    metrics_path = os.path.join(out_dir, "metrics.csv")
    best = {"value": None}

    def on_eval(rec, mdl):
        print(f"step {rec.step}  epoch {rec.epoch}  wall {rec.wall_time_s:.1f}s  "
              f"train_loss {rec.train_loss:.5g}  eval_loss {rec.eval_loss:.5g}  "
              f"{mdl.metric_name} {rec.eval_metric:.5g}")
        if _better(rec.eval_metric, best["value"], mdl.metric_mode):
            best["value"] = rec.eval_metric
            checkpoint_model(os.path.join(out_dir, "best.ckpt"), cfg_text, mdl,
                             vocab_size=vocab)

    run = None
    try:
        run = train(model, data, cfg, on_eval=on_eval)
    except NumericsError as err:
        partial = getattr(err, "metrics", None)
        if partial is not None:
            with open(metrics_path, "w", encoding="utf-8") as fh:
                fh.write(partial.csv_text())
        print(f"numeric failure: {err}", file=sys.stderr)
        return 2
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write(run.csv_text())
    checkpoint_model(os.path.join(out_dir, "final.ckpt"), cfg_text, model,
                     vocab_size=vocab)
    final = run.final
    if run.threshold_step is not None:
        print(f"threshold crossed at step {run.threshold_step} "
              f"({run.threshold_time:.1f}s)")
    print(f"done: step {final.step}  eval_loss {final.eval_loss:.5g}  "
          f"{model.metric_name} {final.eval_metric:.5g}")
    print(f"wrote {metrics_path}")
    return 0


def cmd_eval(args):
    model, cfg, _, _ = restore_model(args.checkpoint)
    for key, value in _collect_overrides(args).items():
        if key.startswith("model.") or key == "task":
            raise ConfigError(f"{key} is fixed by the checkpoint")
        cfg[key] = value
    cfg = resolve(file_text=echo(cfg))   # re-validate after overrides
    data = load_task_data(cfg)
    from .train import evaluate

    loss, metric = evaluate(model, data.test_inputs, data.test_targets,
                            cfg["train.batch_size"])
    print(f"eval_loss {loss:.10g}  {model.metric_name} {metric:.10g}")
    return 0


def cmd_bench(args):
    cfg = _load_config(args)
    summary = bench(cfg, args.runs)
    print(summary.table_text(), end="")
    print(summary.summary_text())
    out_dir = cfg["paths.out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "bench.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(summary.table_text())
    print(f"wrote {path}")
    return 0


def _gradcheck_shrink(cfg):
    """Small copy of the configured model so finite differences stay fast."""
    cfg = dict(cfg)
    cfg["copy.T"] = min(cfg["copy.T"], 12)
    cfg["addition.T"] = min(cfg["addition.T"], 16)
    cfg["charlm.L"] = min(cfg["charlm.L"], 16)
    cfg["model.J"] = min(cfg["model.J"], 24)
    cfg["model.Z"] = min(cfg["model.Z"], 8)
    cfg["model.dropout"] = 0.0   # dropout off: the loss must be deterministic
    return cfg


def cmd_gradcheck(args):
    cfg = _gradcheck_shrink(_load_config(args))
    rng = stream_rng(cfg["seed"], "gradcheck")
    task = cfg["task"]
    if task == "charlm":
        vocab = 16
        model = build_model(cfg, vocab_size=vocab)
        inputs = rng.integers(0, vocab, size=(2, cfg["charlm.L"]))
        targets = rng.integers(0, vocab, size=(2, cfg["charlm.L"]))
    elif task == "copy":
        model = build_model(cfg)
        inputs, targets = gen_copy_memory(cfg["copy.T"], 2, rng)
    elif task == "addition":
        model = build_model(cfg)
        inputs, targets = gen_addition(cfg["addition.T"], 2, rng)
    else:
        model = build_model(cfg)
        inputs = rng.random((2, 784, 1))
        targets = rng.integers(0, 10, size=2)

    if args.debug_corrupt_grad:
        T.set_relu_grad_corruption(1.01)

    def loss_fn():
        return model.loss(model.forward(inputs, training=False), targets)

    try:
        report = grad_check(loss_fn, model.params(), h=1e-5, tol=args.tol,
                            max_probes=args.probes,
                            seed=cfg["seed"])
    finally:
        T.set_relu_grad_corruption(1.0)
    for line in report.lines():
        print(line)
    if report.ok:
        print(f"gradcheck PASS  max_rel_err {report.max_rel_err:.3e}")
        return 0
    print(f"gradcheck FAIL  max_rel_err {report.max_rel_err:.3e}", file=sys.stderr)
    return 2


def cmd_gen_data(args):
    cfg = _load_config(args)
    task = cfg["task"]
    root = cfg["seed"]
    if task in ("mnist", "pmnist"):
        paths = gen_digits_idx(cfg["paths.mnist_dir"], cfg["mnist.n_train"],
                               cfg["mnist.n_test"], stream_rng(root, "data_train"))
        for split, (img, lbl) in paths.items():
            print(f"wrote {img}")
            print(f"wrote {lbl}")
        return 0
    if task == "charlm":
        path = cfg["paths.corpus"]
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        gen_char_corpus(path, args.chars, stream_rng(root, "data_train"))
        print(f"wrote {path} ({args.chars} chars)")
        return 0
    out_dir = cfg["paths.out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    if task == "copy":
        tr = gen_copy_memory(cfg["copy.T"], cfg["copy.train_n"],
                             stream_rng(root, "data_train"))
        te = gen_copy_memory(cfg["copy.T"], cfg["copy.test_n"],
                             stream_rng(root, "data_test"))
    else:
        tr = gen_addition(cfg["addition.T"], cfg["addition.train_n"],
                          stream_rng(root, "data_train"))
        te = gen_addition(cfg["addition.T"], cfg["addition.test_n"],
                          stream_rng(root, "data_test"))
    path = os.path.join(out_dir, f"{task}.npz")
    np.savez(path, train_inputs=tr[0], train_targets=tr[1],
             test_inputs=te[0], test_targets=te[1])
    print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="igloo",
        description="Sequence models built from patch gathering and reduction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="key=value config file")
        _add_config_flags(p)
        p.set_defaults(func=fn)
        return p

    add("train", cmd_train, "train a model; writes metrics.csv and checkpoints")

    p_eval = add("eval", cmd_eval, "evaluate a saved checkpoint on its test set")
    p_eval.add_argument("--checkpoint", required=True, metavar="PATH")

    p_bench = add("bench", cmd_bench, "repeat training runs, time-to-threshold")
    p_bench.add_argument("--runs", type=int, default=5, metavar="N")

    p_gc = add("gradcheck", cmd_gradcheck,
               "finite-difference check of every parameter tensor")
    p_gc.add_argument("--probes", type=int, default=40, metavar="N",
                      help="entries probed per tensor (default 40)")
    p_gc.add_argument("--tol", type=float, default=1e-4, metavar="X",
                      help="max relative error allowed (default 1e-4)")
    p_gc.add_argument("--debug-corrupt-grad", action="store_true",
                      help="inject a deliberate backward bug; the check must fail")

    p_gen = add("gen-data", cmd_gen_data, "write data files for the configured task")
    p_gen.add_argument("--chars", type=int, default=200000, metavar="N",
                       help="corpus length for charlm (default 200000)")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericsError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 2
    except (ConfigError, DataError, FormatError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
