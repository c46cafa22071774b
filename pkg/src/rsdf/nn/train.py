"""Minibatch SGD with momentum and weight decay for the saliency CNN."""

from __future__ import annotations

import csv
import hashlib
import logging
import os
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..errors import ConfigError
from .augment import augment
from .network import backward, forward_batch, init_weights, loss as ce_loss, zeros_like

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lr_start: float = 1.0
    lr_end: float = 0.001
    epochs: int = 100
    batch_size: int = 64
    dropout_keep: float = 0.5
    seed: int = 0
    init_gain: float = 1.0
    flip: bool = True
    translate: bool = True
    jitter: bool = True
    # None packs every region of every image; an int draws a class-balanced sample per image
    patches_per_image: int | None = None

    def __post_init__(self):
        if self.lr_end > self.lr_start:
            raise ConfigError("lr_end must not exceed lr_start")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ConfigError("dropout_keep must lie in (0, 1]")
        if not self.init_gain > 0:
            raise ConfigError("init_gain must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown training options: {sorted(extra)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


def learning_rate(config, epoch):
    """Geometric interpolation from ``lr_start`` (epoch 0) to ``lr_end`` (last epoch)."""
    if config.epochs == 1:
        return config.lr_start
    frac = min(max(epoch, 0), config.epochs - 1) / (config.epochs - 1)
    return config.lr_start * (config.lr_end / config.lr_start) ** frac


def sgd_step(net, grads, velocity, config, epoch, lr=None):
    """In place: ``v = m v - lr (g + wd p)``, ``p = p + v``. Returns ``net``."""
    lr = learning_rate(config, epoch) if lr is None else lr
    for name, p in net.params.items():
        v = velocity[name]
        v *= config.momentum
        v -= lr * (grads[name] + config.weight_decay * p)
        p += v.astype(p.dtype, copy=False)
    return net


def _canonical_order(x, y):
    """Order patches by content so training does not depend on input order."""
    keys = [hashlib.blake2b(np.ascontiguousarray(xi).tobytes() + bytes([int(yi)]), digest_size=16).digest()
            for xi, yi in zip(x, y)]
    return np.array(sorted(range(len(keys)), key=keys.__getitem__), dtype=np.int64)


def _sgd_epoch(net, velocity, x, y, config, epoch, rng):
    order = _canonical_order(x, y)
    order = order[rng.permutation(len(order))]
    lr = learning_rate(config, epoch)
    total, correct = 0.0, 0
    for start in range(0, len(order), config.batch_size):
        idx = order[start : start + config.batch_size]
        xb, yb = x[idx], y[idx]
        probs, cache = forward_batch(net, xb, "train", rng, keep=config.dropout_keep)
        total += ce_loss(probs, yb) * len(idx)
        correct += int((np.argmax(probs, axis=1) == yb).sum())
        sgd_step(net, backward(net, cache, yb), velocity, config, epoch, lr=lr)
    return {"lr": lr, "mean_loss": total / len(order), "train_accuracy": correct / len(order)}


def train_patches(x, y, config, net=None, epoch_offset=0, on_epoch=None):
    """Train on a fixed patch set. Returns ``(network, loss log)``.

    ``on_epoch(row, net)`` is called after every epoch; a true return value
    stops training early.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise ConfigError("empty training set")
    work = (net if net is not None else init_weights(config.seed, sigmoid_gain=config.init_gain)).astype(np.float64)
    velocity = zeros_like(work)
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(config.epochs):
        row = {"epoch": epoch_offset + epoch, **_sgd_epoch(work, velocity, x, y, config, epoch, rng)}
        history.append(row)
        if on_epoch and on_epoch(row, work):
            break
    return work.astype(np.float32), history


def sample_regions(labels, k, rng):
    """Up to ``k`` region indices, half salient and half not where possible."""
    if k is None or k >= len(labels):
        return np.arange(len(labels))
    pos, neg = np.flatnonzero(labels == 1), np.flatnonzero(labels == 0)
    n_pos = min(len(pos), k // 2)
    n_neg = min(len(neg), k - n_pos)
    n_pos = min(len(pos), k - n_neg)
    pick = np.concatenate([rng.choice(pos, n_pos, replace=False), rng.choice(neg, n_neg, replace=False)])
    return np.sort(pick)


def image_rng(seed, epoch, index):
    """Generator for one image in one epoch, independent of processing order."""
    return np.random.default_rng([seed, epoch, index])


def _one_image(args):
    img, config, epoch, index, make_patches = args
    rng = image_rng(config.seed, epoch, index)
    if config.flip or config.translate or config.jitter:
        img = augment(img, rng, flip=config.flip, translate=config.translate, jitter=config.jitter)
    x, y = make_patches(img, rng, config.patches_per_image)
    return x.astype(np.float32), y


def epoch_patches(dataset, config, epoch, make_patches, jobs=1):
    """Augment every image, segment it and collect (patches, labels) for one epoch.

    ``make_patches(img, rng, k)`` returns the packed patches and labels of
    one image; ``k`` is the per-image sample size. Each image draws from its
    own generator, so ``jobs > 1`` (a process pool) gives identical output.
    """
    work = [(img, config, epoch, i, make_patches) for i, img in enumerate(dataset)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_one_image, work))
    else:
        parts = [_one_image(w) for w in work]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def train(dataset, config, make_patches, net=None, epoch_offset=0, on_epoch=None, jobs=1):
    """Train from images: every epoch re-augments and re-extracts all patches.

    Returns ``(network, loss log)``; the log has one row per epoch with
    ``epoch, lr, mean_loss, train_accuracy``.
    """
    dataset = list(dataset)
    if not dataset:
        raise ConfigError("empty dataset")
    if any(img.gt is None for img in dataset):
        raise ConfigError("every training image needs ground truth")
    work = (net if net is not None else init_weights(config.seed, sigmoid_gain=config.init_gain)).astype(np.float64)
    velocity = zeros_like(work)
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        x, y = epoch_patches(dataset, config, epoch_offset + epoch, make_patches, jobs)
        t1 = time.perf_counter()
        stats = _sgd_epoch(work, velocity, x, y, config, epoch, rng)
        row = {"epoch": epoch_offset + epoch, **stats}
        history.append(row)
        log.info(
            "epoch %d lr %.4g loss %.4f acc %.3f (%d patches, extract %.1fs, sgd %.1fs)",
            row["epoch"], row["lr"], row["mean_loss"], row["train_accuracy"], len(y), t1 - t0,
            time.perf_counter() - t1,
        )
        if on_epoch and on_epoch(row, work):
            break
    return work.astype(np.float32), history


LOG_FIELDS = ("epoch", "lr", "mean_loss", "train_accuracy")


def write_loss_log(history, path, append=False):
    exists = append and os.path.exists(path)
    with open(path, "a" if append else "w", newline="") as fh:
        wr = csv.writer(fh)
        if not exists:
            wr.writerow(LOG_FIELDS)
        for row in history:
            wr.writerow([row["epoch"], repr(float(row["lr"])), repr(float(row["mean_loss"])), repr(float(row["train_accuracy"]))])


def read_loss_log(path):
    with open(path, newline="") as fh:
        return [
            {"epoch": int(r["epoch"]), "lr": float(r["lr"]), "mean_loss": float(r["mean_loss"]),
             "train_accuracy": float(r["train_accuracy"])}
            for r in csv.DictReader(fh)
        ]
