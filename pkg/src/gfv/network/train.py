"""Deterministic mini-batch training of the shared encoder."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceDetectedError, EmptyTrainingSetError
from . import kernels
from .config import ArchitectureConfig, TrainConfig
from .loss import contrastive_batch
from .model import SiameseParams, backward_batch, forward_batch, init_params


@dataclass
class LossTrace:
    """Per-step (epoch, batch index, loss) records."""

    steps: list[tuple[int, int, float]] = field(default_factory=list)

    def append(self, epoch: int, batch: int, loss: float) -> None:
        self.steps.append((epoch, batch, loss))

    def epoch_means(self) -> list[float]:
        sums: dict[int, list[float]] = {}
        for epoch, _, loss in self.steps:
            sums.setdefault(epoch, []).append(loss)
        return [float(np.mean(sums[e])) for e in sorted(sums)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "batch", "loss"])
            for epoch, batch, loss in self.steps:
                writer.writerow([epoch, batch, repr(loss)])


@dataclass
class DeferredDenseGrad:
    """Dense-layer gradient left unmaterialized: dW = dout.T @ x_in."""

    dout: np.ndarray
    x_in: np.ndarray

    def materialize(self) -> np.ndarray:
        return self.dout.T @ self.x_in


class Adam:
    """Adaptive-moment gradient descent with bias correction.

    Bias correction is folded into the effective step size:
    lr*(m/c1)/(sqrt(v/c2)+eps) == (lr*sqrt(c2)/c1)*m/(sqrt(v)+eps*sqrt(c2)).
    DeferredDenseGrad entries are consumed by a fused kernel that never
    materializes the layer gradient.
    """

    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, tensors: dict[str, np.ndarray], grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        step_size = self.lr * np.sqrt(c2) / c1
        eps_eff = self.eps * np.sqrt(c2)
        for key in sorted(grads):
            if not tensors[key].flags.c_contiguous:
                tensors[key] = np.ascontiguousarray(tensors[key])
            param = tensors[key]
            if key not in self.m:
                self.m[key] = np.zeros_like(param)
                self.v[key] = np.zeros_like(param)
            g = grads[key]
            if isinstance(g, DeferredDenseGrad):
                kernels.adam_dense_update(
                    param, self.m[key], self.v[key],
                    np.ascontiguousarray(g.dout), np.ascontiguousarray(g.x_in),
                    self.beta1, self.beta2, self.weight_decay, step_size, eps_eff,
                )
            else:
                kernels.adam_elementwise(
                    param.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                    self.m[key].reshape(-1), self.v[key].reshape(-1),
                    self.beta1, self.beta2, self.weight_decay, step_size, eps_eff,
                )


def train(
    config: TrainConfig,
    arch: ArchitectureConfig,
    pairs,
    preprocessor,
    dtype=np.float32,
    progress=None,
) -> tuple[SiameseParams, LossTrace]:
    """Train the shared encoder on labeled pairs.

    `preprocessor` maps a document record to an input tensor (1, H, W).
    Pairs are canonically sorted before the first shuffle, so the result
    depends only on the seed and the pair *content*, not their order.
    Raises DivergenceDetectedError (with the trace so far) if the loss
    stops being finite.
    """
    pairs = sorted(pairs, key=lambda p: (p.a.id, p.b.id, p.c))
    if not pairs:
        raise EmptyTrainingSetError("no training pairs supplied")
    tensors: dict[str, np.ndarray] = {}
    for pair in pairs:
        for rec in (pair.a, pair.b):
            if rec.id not in tensors:
                tensors[rec.id] = np.ascontiguousarray(preprocessor(rec), dtype=dtype)
    params = init_params(arch, seed=config.seed, dtype=dtype)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    labels = np.array([p.c for p in pairs], dtype=dtype)
    opt = Adam(config.learning_rate, config.betas, config.adam_eps, config.weight_decay)
    trace = LossTrace()
    n = len(pairs)
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for batch_idx, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            xa = np.stack([tensors[pairs[i].a.id] for i in idx])
            xb = np.stack([tensors[pairs[i].b.id] for i in idx])
            c = labels[idx]
            emb, caches = forward_batch(
                params, np.concatenate([xa, xb]), mode="train", with_cache=True
            )
            b = len(idx)
            loss, dv1, dv2 = contrastive_batch(emb[:b], emb[b:], c, config.margin)
            if not np.isfinite(loss):
                raise DivergenceDetectedError(
                    f"loss became {loss} at epoch {epoch} batch {batch_idx}", trace
                )
            trace.append(epoch, batch_idx, loss)
            grads = backward_batch(
                params, caches, np.concatenate([dv1, dv2]), defer_dense={"fc1.w"}
            )
            opt.step(params.tensors, grads)
        if progress is not None:
            progress(epoch, trace)
    return params, trace
