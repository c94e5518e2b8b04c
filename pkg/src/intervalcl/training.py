"""Task-sequential training of the hypernetwork.

One optimizer step: generate the current task's target weights on the tape,
mix a minibatch, propagate the point and the interval forward passes, blend
the losses under the warmup schedule, add the output regularizer against
weight vectors snapshotted before this task started, and update only the
generator weights and the current task's embedding. Earlier embeddings are
frozen and must come out of a task bitwise unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from intervalcl import autodiff as ad
from intervalcl import evaluation
from intervalcl import losses as L
from intervalcl import nets
from intervalcl.intervals import IntervalTensor
from intervalcl.nets import Hypernetwork, NetworkSpec, ParamSet


class NumericalDivergenceError(RuntimeError):
    """Loss or parameters stopped being finite."""


class Adam:
    """Adam with bias-corrected first and second moment estimates.

    Moment state is kept per parameter name; updates happen in place so
    aliased views (task embedding rows) stay live.
    """

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0.0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state: dict[str, tuple[np.ndarray, np.ndarray, int]] = {}

    def update(self, name: str, param: np.ndarray, grad: np.ndarray):
        m, v, t = self.state.get(name, (np.zeros_like(param),
                                        np.zeros_like(param), 0))
        t += 1
        m = self.beta1 * m + (1.0 - self.beta1) * grad
        v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
        self.state[name] = (m, v, t)
        m_hat = m / (1.0 - self.beta1 ** t)
        v_hat = v / (1.0 - self.beta2 ** t)
        param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGD:
    """Plain gradient descent, for comparisons."""

    def __init__(self, lr=0.01):
        if lr <= 0.0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr

    def update(self, name: str, param: np.ndarray, grad: np.ndarray):
        param -= self.lr * grad


def make_optimizer(kind: str, lr: float):
    if kind == "adam":
        return Adam(lr=lr)
    if kind == "sgd":
        return SGD(lr=lr)
    raise ValueError(f"unknown optimizer {kind!r}")


@dataclass
class TrainerConfig:
    steps: int = 1000
    batch_size: int = 32
    lr: float = 0.001
    optimizer: str = "adam"
    loss: L.LossConfig = field(default_factory=L.LossConfig)
    use_interval_mixup: bool = True
    seed: int = 0
    val_every: int = 50
    model_selection: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be positive, got {self.steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be positive, got {self.batch_size}")
        if self.use_interval_mixup and self.batch_size < 2:
            raise ValueError("mixup pairing needs a batch of at least 2")
        if self.val_every < 1:
            raise ValueError(f"val_every must be positive, got {self.val_every}")


@dataclass
class LogRow:
    step: int
    task: int
    loss_total: float
    loss_task: float
    loss_reg: float
    kappa: float
    eps: float
    eps_virtual: float
    lam: float | None
    val_loss: float | None = None


def _task_rng(seed: int, task: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(task,)))


def _validation_criterion(h, spec, task, val_data, cfg, snapshots) -> float:
    """Selection score: half-blend loss at the target radius, plus the
    regularizer, all in plain numpy."""
    params = nets.generate_params(h, spec, task)
    bn_capture: list = []
    bounds = nets.forward_interval(spec, params, val_data.inputs,
                                   eps=cfg.loss.eps, bn_capture=bn_capture)
    stats = [(np.asarray(m), np.asarray(v)) for m, v in bn_capture] or None
    logits = nets.forward_point(spec, params, val_data.inputs, bn_stats=stats)
    score = float(L.ibp_loss(bounds, logits, val_data.labels, 0.5))
    if snapshots and cfg.loss.beta > 0.0:
        current = [h.generate_flat(j) for j in range(task)]
        score += cfg.loss.beta * float(L.output_reg_loss(snapshots, current))
    return score


def _freeze_batch_stats(h, spec, task, train_data, cfg):
    """One deterministic full pass at the target radius fixes the batchnorm
    moments this task will use at evaluation time."""
    if not any(layer.kind == "batchnorm" for layer in spec.layers):
        return
    params = nets.generate_params(h, spec, task)
    capture: list = []
    nets.forward_interval(spec, params, train_data.inputs, eps=cfg.loss.eps,
                          bn_capture=capture)
    h.bn_stats[task] = [(np.array(m), np.array(v)) for m, v in capture]


def train_task(h: Hypernetwork, spec: NetworkSpec, task: int, train_data,
               cfg: TrainerConfig, val_data=None) -> list[LogRow]:
    """Train one task; returns the per-step log.

    Tasks must arrive in order. For a later task, the weight vectors the
    generator produced for all earlier tasks are snapshotted first and the
    regularizer pulls the live generator back toward them; earlier
    embeddings take no gradient at all.
    """
    if task != h.trained_tasks:
        raise ValueError(
            f"tasks must be trained in order: expected task {h.trained_tasks}, "
            f"got {task}")
    inputs = np.asarray(train_data.inputs, dtype=np.float64)
    labels = np.asarray(train_data.labels)
    if inputs.shape[0] == 0:
        raise ValueError("empty training set")
    if inputs.shape[0] != labels.shape[0]:
        raise ValueError(
            f"{inputs.shape[0]} inputs vs {labels.shape[0]} labels")

    rng = _task_rng(cfg.seed, task)
    count = inputs.shape[0]
    replace = count < cfg.batch_size

    snapshots = [h.generate_flat(j) for j in range(task)]
    frozen_before = h.embeddings[:task].copy()

    leaves: dict = {}
    optimizer = make_optimizer(cfg.optimizer, cfg.lr)
    log: list[LogRow] = []
    best: tuple[float, np.ndarray, list] | None = None

    for step in range(1, cfg.steps + 1):
        kappa, eps_step = L.schedule_step(step, cfg.steps, cfg.loss.eps)
        idx = rng.choice(count, size=cfg.batch_size, replace=replace)
        xb = inputs[idx]
        yb = labels[idx]

        flat, _ = h.tape_generate(task, leaves=leaves)
        params = ParamSet(spec, flat)

        if cfg.use_interval_mixup:
            lam = float(rng.beta(cfg.loss.alpha, cfg.loss.alpha))
            shift = rng.integers(1, cfg.batch_size, size=cfg.batch_size)
            partner = (np.arange(cfg.batch_size) + shift) % cfg.batch_size
            x_mix = L.mixup_interpolate(xb, xb[partner], lam)
            eps_virtual = float(L.scaled_radius(lam, eps_step, cfg.loss.decay))
            logits = nets.forward_point(spec, params, x_mix)
            bounds = nets.forward_interval(spec, params, x_mix, eps=eps_virtual)
            task_loss = L.interval_mixup_loss(bounds, logits, yb, yb[partner],
                                              lam, kappa)
        else:
            lam = None
            eps_virtual = eps_step
            logits = nets.forward_point(spec, params, xb)
            bounds = nets.forward_interval(spec, params, xb, eps=eps_step)
            task_loss = L.ibp_loss(bounds, logits, yb, kappa)

        if task > 0 and cfg.loss.beta > 0.0:
            current = [h.tape_generate(j, train_embedding=False, leaves=leaves)[0]
                       for j in range(task)]
            reg = L.output_reg_loss(snapshots, current)
            total = task_loss + cfg.loss.beta * reg
            reg_value = float(reg.value)
        else:
            total = task_loss
            reg_value = 0.0

        if not np.isfinite(total.value):
            raise NumericalDivergenceError(
                f"non-finite loss at task {task} step {step}")

        ad.zero_grads(leaves.values())
        total.backward()
        for name, leaf in leaves.items():
            if leaf.grad is not None:
                optimizer.update(name, leaf.value, leaf.grad)

        row = LogRow(step=step, task=task, loss_total=float(total.value),
                     loss_task=float(task_loss.value), loss_reg=reg_value,
                     kappa=kappa, eps=eps_step, eps_virtual=eps_virtual, lam=lam)

        if (cfg.model_selection and val_data is not None
                and (step % cfg.val_every == 0 or step == cfg.steps)):
            score = _validation_criterion(h, spec, task, val_data, cfg, snapshots)
            row.val_loss = score
            if best is None or score < best[0]:
                best = (score, h.embeddings[task].copy(),
                        [(w.copy(), b.copy()) for w, b in h.weights])
        log.append(row)

    if best is not None:
        h.embeddings[task][:] = best[1]
        for (w, b), (bw, bb) in zip(h.weights, best[2]):
            w[:] = bw
            b[:] = bb

    if task > 0 and not np.array_equal(h.embeddings[:task], frozen_before):
        raise AssertionError("frozen embeddings changed during training")

    _freeze_batch_stats(h, spec, task, train_data, cfg)
    h.trained_tasks = task + 1
    return log


def train_virtual(h: Hypernetwork, spec: NetworkSpec, task: int, inputs,
                  labels_a, labels_b, lam, cfg: TrainerConfig) -> list[LogRow]:
    """Train one task on a fixed set of interpolated samples only.

    Every step uses the whole virtual set. Each sample carries its own
    mixing coefficient, so its box radius follows the decay law at the
    scheduled radius: midpoints (lam = 0.5) train with radius zero.
    """
    if task != h.trained_tasks:
        raise ValueError(
            f"tasks must be trained in order: expected task {h.trained_tasks}, "
            f"got {task}")
    inputs = np.asarray(inputs, dtype=np.float64)
    labels_a = np.asarray(labels_a)
    labels_b = np.asarray(labels_b)
    lam = np.asarray(lam, dtype=np.float64)
    if inputs.shape[0] == 0:
        raise ValueError("empty virtual set")
    if not (inputs.shape[0] == labels_a.shape[0] == labels_b.shape[0]
            == lam.shape[0]):
        raise ValueError("virtual inputs, labels, and coefficients must "
                         "share one length")

    leaves: dict = {}
    optimizer = make_optimizer(cfg.optimizer, cfg.lr)
    log: list[LogRow] = []
    for step in range(1, cfg.steps + 1):
        kappa, eps_step = L.schedule_step(step, cfg.steps, cfg.loss.eps)
        radius = np.asarray(L.scaled_radius(lam, eps_step, cfg.loss.decay))

        flat, _ = h.tape_generate(task, leaves=leaves)
        params = ParamSet(spec, flat)
        logits = nets.forward_point(spec, params, inputs)
        box = IntervalTensor.from_ball(inputs, radius[:, None])
        bounds = nets.forward_interval(spec, params, box)
        total = L.interval_mixup_loss(bounds, logits, labels_a, labels_b,
                                      lam, kappa)
        if not np.isfinite(total.value):
            raise NumericalDivergenceError(
                f"non-finite loss at task {task} step {step}")

        ad.zero_grads(leaves.values())
        total.backward()
        for name, leaf in leaves.items():
            if leaf.grad is not None:
                optimizer.update(name, leaf.value, leaf.grad)

        log.append(LogRow(step=step, task=task, loss_total=float(total.value),
                          loss_task=float(total.value), loss_reg=0.0,
                          kappa=kappa, eps=eps_step,
                          eps_virtual=float(radius.mean()),
                          lam=float(lam.mean())))

    _freeze_batch_stats(h, spec, task, _VirtualData(inputs), cfg)
    h.trained_tasks = task + 1
    return log


@dataclass
class _VirtualData:
    inputs: np.ndarray


def train_sequence(h: Hypernetwork, spec: NetworkSpec, tasks,
                   cfg: TrainerConfig, after_task=None):
    """Train all tasks in order, evaluating the clean accuracy matrix.

    After each task, every already-seen task's test split is scored with
    its own generated weights. ``after_task``, if given, is called as
    ``after_task(t, result, log)`` once task ``t`` is trained and scored.

    Returns:
        (ResultMatrix, list of per-task logs)
    """
    if len(tasks) != h.layout.task_count:
        raise ValueError(f"{len(tasks)} tasks for a hypernetwork sized for "
                         f"{h.layout.task_count}")
    result = evaluation.ResultMatrix(len(tasks))
    logs = []
    for t, task_data in enumerate(tasks):
        val = getattr(task_data, "val", None)
        logs.append(train_task(h, spec, t, task_data.train, cfg, val_data=val))
        for s in range(t + 1):
            params = nets.generate_params(h, spec, s)
            acc = evaluation.clean_accuracy(spec, params,
                                            tasks[s].test.inputs,
                                            tasks[s].test.labels,
                                            bn_stats=h.bn_stats.get(s))
            result.record(t, s, acc)
        if after_task is not None:
            after_task(t, result, logs[-1])
    return result, logs
