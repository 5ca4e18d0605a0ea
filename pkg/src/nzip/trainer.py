"""Pre-coding training of the stored predictor.

The whole input is scanned for a fixed number of epochs; every position
with a full K-symbol history is one training example per epoch, visited in
a seeded pseudorandom order.  The result is the parameter set serialized
into the archive, so the loop must be bit-reproducible: shuffles come from
the counter-based generator, reductions are the engine's fixed-order ones,
and there is no early stopping or validation split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import nn
from .core import SymbolStream, sliding_windows
from .errors import TooShortForTraining
from .models import BootstrapConfig, BootstrapModel
from .rng import derive_seed, random_uint64

LOG2E_INV = math.log(2.0)


@dataclass(frozen=True)
class TrainPlan:
    epochs: int = 8
    batch_size: int = 2048
    lr0: float = 0.005
    # 0: multiply lr by 0.6 at each epoch end from epoch 5
    # 1: hold lr0 flat (slow sources that keep improving late)
    # 2: hold lr0, then cool by 0.3 per epoch over the final three epochs
    #    (travel at full temperature, settle once the basin is found)
    schedule: int = 0
    clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if self.schedule not in (0, 1, 2):
            raise ValueError(f"unknown lr schedule id {self.schedule}")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch index under the plan schedule."""
        if self.schedule == 1:
            return self.lr0
        if self.schedule == 2:
            return self.lr0 * (0.3 ** max(0, epoch - (self.epochs - 4)))
        return self.lr0 * (0.6 ** max(0, epoch - 4))


def make_training_batches(
    symbols: np.ndarray, K: int, batch_size: int, epoch_seed: int
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (contexts, targets) covering every position with K history
    exactly once, in an epoch-seeded pseudorandom order.

    Tail batches may be short; nothing is padded or dropped.
    """
    n = symbols.shape[0]
    if n <= K:
        raise TooShortForTraining(f"{n} symbols cannot fill a {K}-symbol context")
    windows = sliding_windows(symbols, K)  # row i = symbols[i : i+K]
    count = n - K
    order = np.argsort(random_uint64(epoch_seed, count), kind="stable")
    targets = symbols[K:]
    for start in range(0, count, batch_size):
        sel = order[start : start + batch_size]
        yield np.ascontiguousarray(windows[sel]), targets[sel]


def train_bootstrap(
    stream: SymbolStream,
    config: BootstrapConfig,
    plan: TrainPlan,
    log_fn: Callable[[int, float, float], None] | None = None,
) -> tuple[BootstrapModel, list[tuple[int, float, float]]]:
    """Train the stored predictor on the stream itself.

    Returns the model and a log of (epoch, mean CE in bits, lr).  The log
    hook, when given, is called once per epoch with the same numbers.
    """
    if stream.length <= config.K:
        raise TooShortForTraining("stream not longer than the context window")
    model = BootstrapModel(config, seed=plan.seed)
    opt = nn.AdamConfig(lr=plan.lr0, beta1=0.9, beta2=0.999, clip_norm=plan.clip_norm)
    log: list[tuple[int, float, float]] = []
    for epoch in range(plan.epochs):
        lr = plan.lr_at(epoch)
        epoch_cfg = nn.AdamConfig(lr=lr, beta1=opt.beta1, beta2=opt.beta2, clip_norm=opt.clip_norm)
        seed = derive_seed(plan.seed, f"epoch-shuffle/{epoch}")
        nats_sum = 0.0
        seen = 0
        for contexts, targets in make_training_batches(
            stream.symbols, config.K, plan.batch_size, seed
        ):
            model.store.zero_grads()
            logits, _ = model.logits(contexts)
            loss = nn.softmax_cross_entropy(logits, targets)
            nn.backward(loss)
            nn.clip_gradients(model.store, plan.clip_norm)
            nn.adam_step(model.store, epoch_cfg)
            nats_sum += float(loss.data) * targets.shape[0]
            seen += targets.shape[0]
        mean_bits = nats_sum / seen / LOG2E_INV
        log.append((epoch + 1, mean_bits, lr))
        if log_fn is not None:
            log_fn(epoch + 1, mean_bits, lr)
    return model, log
