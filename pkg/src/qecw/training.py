"""Training orchestration: streaming pool with replacement, fixed datasets.

Streaming mode keeps an in-memory pool of graphs; after each epoch the
oldest quarter (FIFO by insertion) is replaced with freshly generated
samples, which emulates an unbounded dataset and keeps the network from
overfitting. Fixed mode does a seeded 99:1 train/test split and runs a set
number of epochs with no early stopping.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .graphs import DetectorGraph
from .sampler import make_rng


@dataclass
class TrainConfig:
    mode: str = "streaming"            # or "fixed"
    batch_size: int = 1000
    lr: float = 1e-4
    lr_low: float = 1e-5
    plateau_window: int = 20           # epochs
    plateau_min_improve: float = 0.05  # percentage points
    error_mix: tuple[float, ...] = (1e-3, 2e-3, 3e-3, 4e-3, 5e-3)
    replace_frac: float = 0.25
    epochs: int = 50
    seed: int = 0
    pool_size: int = 100_000
    split_seed: int = 0
    dedupe: bool = True                # collapse duplicate graphs per batch

    def __post_init__(self):
        if not 0.0 <= self.replace_frac <= 1.0:
            raise ValueError("replace_frac must be in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")


@dataclass
class EpochRecord:
    epoch: int
    train_accuracy: float
    test_accuracy: float
    loss: float
    lr: float
    wall_time: float


@dataclass
class TrainReport:
    config: TrainConfig
    records: list[EpochRecord] = field(default_factory=list)
    checkpoint_path: str | None = None
    fresh_samples: int = 0

    def to_lines(self) -> list[str]:
        lines = []
        for r in self.records:
            for split, metric, value in (
                ("train", "accuracy", r.train_accuracy),
                ("test", "accuracy", r.test_accuracy),
                ("train", "loss", r.loss),
                ("train", "lr", r.lr),
                ("train", "wall_time", r.wall_time),
            ):
                lines.append(f"epoch={r.epoch} split={split} metric={metric} "
                             f"value={value:.8g}")
        return lines

    def test_accuracies(self) -> list[float]:
        return [r.test_accuracy for r in self.records]


def lr_schedule(test_accuracies: list[float], lr: float = 1e-4, lr_low: float = 1e-5,
                window: int = 20, min_improve_pp: float = 0.05) -> float:
    """One-time decrement when the monitored accuracy plateaus.

    The accuracy has plateaued when the best value of the last `window`
    epochs improves on the best of the preceding epochs by less than
    `min_improve_pp` percentage points. Never re-increments.
    """
    if not test_accuracies:
        raise ValueError("schedule needs at least one recorded epoch")
    n = len(test_accuracies)
    for e in range(window + 1, n + 1):
        recent = max(test_accuracies[e - window:e])
        before = max(test_accuracies[:e - window])
        if recent - before < min_improve_pp / 100.0:
            return lr_low
    return lr


def _accuracy(probs: np.ndarray, graphs: list[DetectorGraph],
              heads: tuple[str, ...]) -> tuple[int, int]:
    """Correct (prediction, label) pairs over the available heads."""
    correct = 0
    total = 0
    for g, pr in zip(graphs, probs):
        for h, head in enumerate(heads):
            y = g.lam_z if head == "Z" else g.lam_x
            if y is None:
                continue
            total += 1
            correct += int((pr[h] > 0.5) == bool(y))
    return correct, total


def evaluate_accuracy(model: nn.Model, graphs: list[DetectorGraph],
                      batch_size: int = 8192) -> float:
    probs = nn.predict_proba(model, graphs, batch_size=batch_size)
    correct, total = _accuracy(probs, graphs, model.config.heads)
    return correct / total if total else 0.0


def _graph_key(g: DetectorGraph) -> bytes:
    avail = (g.lam_z is not None) | ((g.lam_x is not None) << 1)
    return bytes([avail]) + g.features.tobytes() + g.edges.tobytes()


def _batch_items(graphs: list[DetectorGraph], dedupe: bool) -> list[nn.BatchItem]:
    """Lossless collapse of duplicate graphs into weighted soft-label items."""
    nonempty = [g for g in graphs if g.n_nodes > 0]
    if not dedupe:
        return nn.items_from_graphs(nonempty)
    groups: dict[bytes, list[DetectorGraph]] = {}
    for g in nonempty:
        groups.setdefault(_graph_key(g), []).append(g)
    items = []
    for members in groups.values():
        rep = members[0]
        w = float(len(members))
        yz = yx = None
        if rep.lam_z is not None:
            yz = sum(m.lam_z for m in members) / w
        if rep.lam_x is not None:
            yx = sum(m.lam_x for m in members) / w
        items.append(nn.BatchItem(rep, yz, yx, w))
    return items


def _items_accuracy(probs: np.ndarray, items: list[nn.BatchItem],
                    heads: tuple[str, ...]) -> tuple[float, float]:
    """Expected correct count under (possibly soft) weighted targets."""
    correct = 0.0
    total = 0.0
    for it, pr in zip(items, probs):
        for h, head in enumerate(heads):
            y = it.y_z if head == "Z" else it.y_x
            if y is None:
                continue
            total += it.weight
            correct += it.weight * (y if pr[h] > 0.5 else 1.0 - y)
    return correct, total


def _run_epoch(model: nn.Model, adam: nn.AdamState, config: TrainConfig,
               pool_graphs: list[DetectorGraph], test_graphs: list[DetectorGraph],
               epoch: int, rng: np.random.Generator,
               report: TrainReport) -> None:
    """One epoch of shuffled minibatch training plus bookkeeping."""
    t0 = time.perf_counter()
    lr_used = lr_schedule(report.test_accuracies(), config.lr, config.lr_low,
                          config.plateau_window, config.plateau_min_improve) \
        if report.records else config.lr
    adam.lr = lr_used
    order = rng.permutation(len(pool_graphs))
    heads = model.config.heads
    losses = []
    correct = total = 0.0
    for lo in range(0, len(order), config.batch_size):
        idx = order[lo:lo + config.batch_size]
        batch = [pool_graphs[i] for i in idx]
        items = _batch_items(batch, config.dedupe)
        if items:
            loss, grads, probs = nn.loss_and_grads(model, items)
            nn.adam_step(adam, model, grads)
            losses.append(loss)
            c, t = _items_accuracy(probs, items, heads)
            correct += c
            total += t
        # empty graphs decode to 0 with no gradient but still count
        for g in batch:
            if g.n_nodes == 0:
                for head in heads:
                    y = g.lam_z if head == "Z" else g.lam_x
                    if y is not None:
                        total += 1.0
                        correct += float(y == 0)
    test_acc = evaluate_accuracy(model, test_graphs)
    report.records.append(EpochRecord(
        epoch=epoch,
        train_accuracy=correct / total if total else 0.0,
        test_accuracy=test_acc,
        loss=float(np.mean(losses)) if losses else math.nan,
        lr=lr_used,
        wall_time=time.perf_counter() - t0,
    ))


def train_streaming(config: TrainConfig, generator, test_graphs,
                    model: nn.Model | None = None,
                    adam: nn.AdamState | None = None,
                    log=None) -> tuple[nn.Model, TrainReport]:
    """Pool training with FIFO replacement of the oldest fraction per epoch.

    `generator(n, stream)` must return n fresh labeled DetectorGraphs;
    distinct stream values must give independent samples.
    """
    if model is None:
        raise ValueError("train_streaming needs an initialized model")
    adam = adam or nn.init_adam(model, config.lr)
    report = TrainReport(config=config)
    rng = make_rng(config.seed, stream=0xEBAC)

    pool: list[tuple[int, int, DetectorGraph]] = []  # (insert epoch, seq, graph)
    try:
        fresh = generator(config.pool_size, 0)
        report.fresh_samples += len(fresh)
        pool.extend((0, i, g) for i, g in enumerate(fresh))
        n_replace = math.ceil(config.replace_frac * config.pool_size)
        for epoch in range(1, config.epochs + 1):
            _run_epoch(model, adam, config, [g for _, _, g in pool],
                       test_graphs, epoch, rng, report)
            if log:
                log(report.records[-1])
            if n_replace:
                pool.sort(key=lambda item: (item[0], item[1]))
                fresh = generator(n_replace, epoch)
                report.fresh_samples += len(fresh)
                pool[:n_replace] = [(epoch, i, g) for i, g in enumerate(fresh)]
    except Exception:
        if report.records:
            raise TrainingInterrupted(report) from None
        raise
    return model, report


class TrainingInterrupted(RuntimeError):
    """Generator or step failure after at least one completed epoch."""

    def __init__(self, report: TrainReport):
        super().__init__("training interrupted; partial report preserved")
        self.report = report


def split_fixed(graphs: list[DetectorGraph], split_seed: int
                ) -> tuple[list[int], list[int]]:
    """Seeded 99:1 shuffle split, returned as disjoint index lists."""
    n = len(graphs)
    n_test = n // 100
    if n_test < 1:
        raise ValueError(f"dataset of {n} graphs is too small for a 99:1 split")
    order = make_rng(split_seed, stream=0x5B117).permutation(n)
    test_idx = sorted(int(i) for i in order[:n_test])
    train_idx = sorted(int(i) for i in order[n_test:])
    assert not set(test_idx) & set(train_idx)
    return train_idx, test_idx


def train_fixed(config: TrainConfig, graphs: list[DetectorGraph],
                model: nn.Model | None = None,
                adam: nn.AdamState | None = None,
                log=None) -> tuple[nn.Model, TrainReport]:
    """Fixed-dataset training: 99:1 split, fixed epochs, no early stopping."""
    if model is None:
        raise ValueError("train_fixed needs an initialized model")
    train_idx, test_idx = split_fixed(graphs, config.split_seed)
    train_graphs = [graphs[i] for i in train_idx]
    test_graphs = [graphs[i] for i in test_idx]
    adam = adam or nn.init_adam(model, config.lr)
    report = TrainReport(config=config)
    rng = make_rng(config.seed, stream=0xF1CED)
    for epoch in range(1, config.epochs + 1):
        _run_epoch(model, adam, config, train_graphs, test_graphs, epoch,
                   rng, report)
        if log:
            log(report.records[-1])
    return model, report
