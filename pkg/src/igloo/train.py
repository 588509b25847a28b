"""Training loop, Adam optimizer, evaluation, and the repeat-run benchmark.

The loop owns the reproducibility contract: data, shuffling, and dropout
draw from named substreams of the one root seed, evaluations happen on a
fixed cadence plus once at the end, and the wall clock starts immediately
before the first optimizer step so setup cost never pollutes timings.
"""

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .autodiff import Tape
from .errors import ConfigError, DataError, NumericsError
from .models import build_model
from .rng import stream_rng, stream_seed
from .tasks import (
    apply_permutation,
    gen_addition,
    gen_copy_memory,
    load_char_corpus,
    load_mnist_idx,
)


@dataclass
class TaskData:
    """In-memory train/test arrays for one task."""

    train_inputs: np.ndarray
    train_targets: np.ndarray
    test_inputs: np.ndarray
    test_targets: np.ndarray
    vocab_size: int | None = None

    @property
    def n_train(self):
        return self.train_inputs.shape[0]


def load_task_data(cfg):
    """Materialize the configured task's train and test splits."""
    task = cfg["task"]
    root = cfg["seed"]
    if task == "copy":
        tr = gen_copy_memory(cfg["copy.T"], cfg["copy.train_n"],
                             stream_rng(root, "data_train"))
        te = gen_copy_memory(cfg["copy.T"], cfg["copy.test_n"],
                             stream_rng(root, "data_test"))
        return TaskData(*tr, *te)
    if task == "addition":
        tr = gen_addition(cfg["addition.T"], cfg["addition.train_n"],
                          stream_rng(root, "data_train"))
        te = gen_addition(cfg["addition.T"], cfg["addition.test_n"],
                          stream_rng(root, "data_test"))
        return TaskData(*tr, *te)
    if task in ("mnist", "pmnist"):
        d = cfg["paths.mnist_dir"]
        train = load_mnist_idx(os.path.join(d, "train-images-idx3-ubyte"),
                               os.path.join(d, "train-labels-idx1-ubyte"))
        test = load_mnist_idx(os.path.join(d, "t10k-images-idx3-ubyte"),
                              os.path.join(d, "t10k-labels-idx1-ubyte"))
        if task == "pmnist":
            perm_seed = stream_seed(root, "permute")
            train = apply_permutation(train, perm_seed)
            test = apply_permutation(test, perm_seed)
        n_tr = min(cfg["mnist.n_train"], train.inputs.shape[0])
        n_te = min(cfg["mnist.n_test"], test.inputs.shape[0])
        return TaskData(train.inputs[:n_tr], train.labels[:n_tr],
                        test.inputs[:n_te], test.labels[:n_te])
    if task == "charlm":
        corpus = load_char_corpus(cfg["paths.corpus"], cfg["charlm.L"],
                                  cfg["charlm.train_frac"])
        return TaskData(corpus.train_inputs, corpus.train_targets,
                        corpus.test_inputs, corpus.test_targets,
                        vocab_size=corpus.vocab_size)
    raise ConfigError(f"no data loader for task {task!r}")


def clip_by_global_norm(grads, clip_norm):
    """Scale a gradient list so the joint L2 norm is at most clip_norm.

    Returns (clipped list, pre-clip norm). Direction is preserved: every
    gradient is scaled by the same factor. clip_norm <= 0 disables clipping.
    """
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if clip_norm > 0.0 and norm > clip_norm:
        scale = clip_norm / norm
        grads = [g * scale for g in grads]
    return grads, norm


class Adam:
    """Adam with global-norm clipping applied to the gradients first."""

    def __init__(self, params, lr=0.005, beta1=0.9, beta2=0.999, eps=1e-8,
                 clip_norm=1.0):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads):
        """One update from a {param Tensor -> gradient array} mapping.

        Parameters absent from the mapping (or mapped to None) are treated
        as zero-gradient: their moments decay but see no new signal.
        """
        gs = []
        for p in self.params:
            g = grads.get(p)
            gs.append(np.zeros_like(p.data) if g is None else g)
        if T.checked():
            for p, g in zip(self.params, gs):
                if not np.all(np.isfinite(g)):
                    raise NumericsError(f"non-finite gradient for {p.name or 'param'}")
        gs, _ = clip_by_global_norm(gs, self.clip_norm)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, gs, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_arrays(self):
        """Named moment arrays plus the step counter, for checkpointing."""
        out = {"t": np.array([self.t], dtype=np.float64)}
        for p, m, v in zip(self.params, self.m, self.v):
            out[f"{p.name}.m"] = m
            out[f"{p.name}.v"] = v
        return out

    def load_state_arrays(self, arrays):
        self.t = int(arrays["t"][0])
        for i, p in enumerate(self.params):
            self.m[i] = arrays[f"{p.name}.m"].copy()
            self.v[i] = arrays[f"{p.name}.v"].copy()


@dataclass
class EvalRecord:
    step: int
    epoch: int
    wall_time_s: float
    train_loss: float
    eval_loss: float
    eval_metric: float


@dataclass
class RunMetrics:
    """Everything a training run produced, in eval-cadence records."""

    records: list = field(default_factory=list)
    threshold_step: int | None = None
    threshold_time: float | None = None
    diverged: bool = False

    @property
    def final(self):
        return self.records[-1] if self.records else None

    def csv_text(self):
        lines = ["step,epoch,wall_time_s,train_loss,eval_loss,eval_metric"]
        for r in self.records:
            lines.append(f"{r.step},{r.epoch},{r.wall_time_s:.6f},"
                         f"{r.train_loss:.10g},{r.eval_loss:.10g},{r.eval_metric:.10g}")
        return "\n".join(lines) + "\n"


def evaluate(model, inputs, targets, batch_size):
    """Full-set loss and metric, eager and deterministic (no tape, no dropout)."""
    loss_sum = 0.0
    metric_sum = 0.0
    count = 0
    if inputs.shape[0] == 0:
        raise DataError("evaluation set is empty")
    for start in range(0, inputs.shape[0], batch_size):
        bx = inputs[start:start + batch_size]
        by = targets[start:start + batch_size]
        pred = model.forward(bx, training=False)
        num, den = model.metric_stats(pred.data, by)
        loss_sum += float(model.loss(pred, by).data) * den
        metric_sum += num
        count += den
    return loss_sum / count, metric_sum / count


def _crossed(metric, mode, value):
    return metric > value if mode == "max" else metric < value


def train(model, data, cfg, on_eval=None):
    """Run the configured optimization; returns RunMetrics.

    Evaluates before the first step, every train.eval_every steps, and after
    the last step. Early-stops once the eval metric crosses
    train.threshold_value (strictly above for accuracy-like metrics,
    strictly below for error-like ones). Non-finite training loss raises
    NumericsError with the partial RunMetrics attached.
    """
    params = model.params()
    opt = Adam(params, lr=cfg["train.lr"], beta1=cfg["train.beta1"],
               beta2=cfg["train.beta2"], eps=cfg["train.eps"],
               clip_norm=cfg["train.clip_norm"])
    batch = cfg["train.batch_size"]
    max_steps = cfg["train.max_steps"]
    max_epochs = cfg["train.max_epochs"]
    eval_every = cfg["train.eval_every"]
    threshold_on = bool(cfg["train.threshold_metric"])
    if threshold_on and cfg["train.threshold_metric"] != model.metric_name:
        raise ConfigError(
            f"train.threshold_metric: task reports {model.metric_name!r}, "
            f"got {cfg['train.threshold_metric']!r}"
        )
    metrics = RunMetrics()

    def run_eval(step, epoch, train_loss, wall):
        eval_loss, eval_metric = evaluate(
            model, data.test_inputs, data.test_targets, batch)
        rec = EvalRecord(step, epoch, wall, train_loss, eval_loss, eval_metric)
        metrics.records.append(rec)
        if on_eval is not None:
            on_eval(rec, model)
        return eval_metric

    first_metric = run_eval(0, 0, float("nan"), 0.0)
    if threshold_on and _crossed(first_metric, model.metric_mode,
                                 cfg["train.threshold_value"]):
        metrics.threshold_step = 0
        metrics.threshold_time = 0.0
        return metrics
    if max_steps == 0:
        return metrics

    step = 0
    epoch = 0
    loss_acc = 0.0
    loss_n = 0
    start_time = None
    done = False
    while not done:
        if max_epochs and epoch >= max_epochs:
            break
        epoch += 1
        order = stream_rng(cfg["seed"], "shuffle", index=epoch).permutation(data.n_train)
        for lo in range(0, data.n_train, batch):
            take = order[lo:lo + batch]
            bx = data.train_inputs[take]
            by = data.train_targets[take]
            try:
                with Tape() as tape:
                    pred = model.forward(bx, training=True)
                    loss = model.loss(pred, by)
                batch_loss = float(loss.data)
                if not np.isfinite(batch_loss):
                    raise NumericsError(
                        f"training diverged at step {step + 1}: loss={batch_loss}")
                grads = tape.backward(loss)
                if start_time is None:
                    start_time = time.perf_counter()
                opt.step(grads)
            except NumericsError as err:
                metrics.diverged = True
                err.metrics = metrics
                raise
            step += 1
            loss_acc += batch_loss
            loss_n += 1
            at_cadence = eval_every > 0 and step % eval_every == 0
            at_end = step >= max_steps
            if at_cadence or at_end:
                wall = time.perf_counter() - start_time
                metric = run_eval(step, epoch, loss_acc / loss_n, wall)
                loss_acc = 0.0
                loss_n = 0
                if threshold_on and metrics.threshold_step is None and _crossed(
                        metric, model.metric_mode, cfg["train.threshold_value"]):
                    metrics.threshold_step = step
                    metrics.threshold_time = wall
                    done = True
                    break
            if at_end:
                done = True
                break
    if metrics.final.step != step:
        wall = time.perf_counter() - start_time if start_time else 0.0
        run_eval(step, epoch, loss_acc / loss_n if loss_n else float("nan"), wall)
    return metrics


@dataclass
class BenchRun:
    seed: int
    reached: bool
    steps: int | None
    seconds: float | None
    final_metric: float


@dataclass
class BenchSummary:
    runs: list
    param_total: int

    @property
    def times(self):
        return [r.seconds for r in self.runs if r.reached]

    def table_text(self):
        lines = ["run,seed,reached,steps_to_threshold,seconds_to_threshold,final_metric"]
        for i, r in enumerate(self.runs):
            steps = "" if r.steps is None else str(r.steps)
            secs = "" if r.seconds is None else f"{r.seconds:.3f}"
            lines.append(f"{i},{r.seed},{int(r.reached)},{steps},{secs},"
                         f"{r.final_metric:.10g}")
        return "\n".join(lines) + "\n"

    def summary_text(self):
        times = self.times
        n_fail = len(self.runs) - len(times)
        parts = [f"runs={len(self.runs)}", f"failed={n_fail}",
                 f"params={self.param_total}"]
        if times:
            parts.append(f"mean_s={np.mean(times):.3f}")
            parts.append(f"std_s={np.std(times):.3f}")
        return "  ".join(parts)


def bench(cfg, n_runs):
    """Repeat training n_runs times with derived seeds; time-to-threshold."""
    from .layers import param_count

    if not cfg["train.threshold_metric"]:
        raise ConfigError("bench needs train.threshold_metric set")
    runs = []
    param_total = None
    for i in range(n_runs):
        run_cfg = dict(cfg)
        run_cfg["seed"] = stream_seed(cfg["seed"], "bench", index=i)
        data = load_task_data(run_cfg)
        model = build_model(run_cfg, vocab_size=data.vocab_size)
        if param_total is None:
            param_total = param_count(model.params())[1]
        try:
            metrics = train(model, data, run_cfg)
        except NumericsError as err:
            # a diverged run counts as a failure, not a crash of the sweep
            metrics = getattr(err, "metrics", None) or RunMetrics(diverged=True)
        reached = metrics.threshold_step is not None
        final = metrics.final
        runs.append(BenchRun(
            seed=run_cfg["seed"], reached=reached,
            steps=metrics.threshold_step,
            seconds=metrics.threshold_time,
            final_metric=final.eval_metric if final else float("nan"),
        ))
    return BenchSummary(runs=runs, param_total=param_total)
