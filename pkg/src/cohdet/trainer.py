"""Supervised contrastive training with a momentum key encoder.

Two encoders share an architecture: the query encoder learns by gradient
descent while the key encoder trails it as an exponential moving average
and fills a FIFO memory bank with labeled key vectors.  The loss mixes a
reweighted contrastive term (hard negatives, judged by their similarity
to the query, weigh more) with binary cross-entropy from a linear head.
"""
from __future__ import annotations

import logging
import math
import random
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Value
from .corpus import Document, Label
from .encoder import (EncoderConfig, EmbeddingSource, Params, PreparedDoc,
                      classify, encode_prepared, prepare_document)
from .graph import GraphLimits

log = logging.getLogger(__name__)


class SingleClassDataset(ValueError):
    pass


class NonFiniteLoss(RuntimeError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"loss became non-finite at step {step}")


@dataclass
class TrainConfig:
    alpha: float = 0.6
    tau: float = 0.2
    momentum: float = 0.99
    reweight_beta: float = 1.0
    bank_size: int | None = None  # None: size of the training set
    batch_size: int = 8
    lr: float = 1e-5
    weight_decay: float = 0.01
    max_epochs: int = 20
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.reweight_beta <= 0.0:
            raise ValueError("reweight_beta must be positive")


class MemoryBank:
    """Fixed-capacity FIFO queue of (key vector, label) pairs."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: deque[tuple[np.ndarray, int]] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._entries)

    def push(self, keys: np.ndarray, labels) -> None:
        """Append keys in order; the deque evicts the oldest beyond capacity."""
        for row, label in zip(np.atleast_2d(keys), labels):
            self._entries.append((np.asarray(row, dtype=np.float64).reshape(1, -1),
                                  int(label)))

    def matrix(self) -> np.ndarray:
        return np.vstack([k for k, _ in self._entries])

    def labels(self) -> np.ndarray:
        return np.array([lab for _, lab in self._entries], dtype=np.int64)


def bank_push(bank: MemoryBank, keys: np.ndarray, labels) -> MemoryBank:
    bank.push(keys, labels)
    return bank


def contrastive_loss(queries: list[tuple[Value, int]], bank: MemoryBank,
             tau: float, reweight_beta: float = 1.0,
             reweight: bool = True) -> Value:
    """Contrastive loss over the memory bank, reweighting hard negatives.

    Per query q with label y, with S_j = exp(q . k_j / tau) over bank
    entries:

        L = -sum_{j in P} log( S_j / (sum_{p in P} S_p
                                       + sum_{n in N} rf_n S_n) )

    where P/N are the same/different-label bank entries and
    rf_n = reweight_beta * (q . k_n) / mean_n(q . k_n).  A zero mean sets
    rf_n = reweight_beta for every negative; reweight=False forces
    rf_n = 1, which reduces the loss to the standard supervised
    contrastive form.  Queries lacking positives or negatives in the bank
    are skipped with a warning.  Returns the mean over scored queries.
    """
    if not queries:
        raise ValueError("no queries")
    tape = queries[0][0].tape
    bank_matrix = bank.matrix()
    bank_labels = bank.labels()

    per_query: list[Value] = []
    for i, (q, label) in enumerate(queries):
        pos = (bank_labels == label).astype(np.float64).reshape(1, -1)
        neg = 1.0 - pos
        n_pos = int(pos.sum())
        n_neg = int(neg.sum())
        if n_pos == 0:
            log.warning("query %d skipped: no positives in the bank", i)
            continue
        if n_neg == 0:
            log.warning("query %d skipped: no negatives in the bank", i)
            continue

        keys = ad.constant(tape, bank_matrix)
        pos_mask = ad.constant(tape, pos)
        neg_mask = ad.constant(tape, neg)
        dots = ad.matmul(q, ad.transpose(keys))       # 1 x M
        logits = ad.scale(dots, 1.0 / tau)
        sims = ad.exp(logits)

        pos_sum = ad.dot(sims, pos_mask)
        if reweight:
            neg_dot_mean = ad.scale(ad.dot(dots, neg_mask), 1.0 / n_neg)
            if neg_dot_mean.data[0, 0] == 0.0:
                # degenerate average: fall back to a flat reweight_beta
                weighted_neg = ad.scale(ad.dot(sims, neg_mask), reweight_beta)
            else:
                weighted_neg = ad.scale(
                    ad.div(ad.dot(ad.mul(dots, sims), neg_mask), neg_dot_mean),
                    reweight_beta)
        else:
            weighted_neg = ad.dot(sims, neg_mask)

        # mixed-sign dots can push the reweighted denominator to zero or
        # below, where the loss is undefined; floor it so training survives
        # the corner instead of producing NaN
        denom = ad.clip(ad.add(pos_sum, weighted_neg), 1e-12, float("inf"))
        log_sim_pos = ad.dot(logits, pos_mask)        # sum over P of log S_j
        per_query.append(ad.sub(ad.scale(ad.log(denom), float(n_pos)), log_sim_pos))

    if not per_query:
        return ad.constant(tape, np.zeros((1, 1)))
    return ad.mean_all(ad.concat_rows(per_query))


def ce_loss(probs: list[Value], labels) -> Value:
    """Mean binary cross-entropy; probabilities are clamped away from 0/1."""
    p = ad.clip(ad.concat_rows(probs), 1e-7, 1.0 - 1e-7)
    tape = p.tape
    y = ad.constant(tape, np.array([[float(v)] for v in labels]))
    ones = ad.constant(tape, np.ones_like(y.data))
    ll = ad.add(ad.mul(y, ad.log(p)),
                ad.mul(ad.sub(ones, y), ad.log(ad.sub(ones, p))))
    return ad.scale(ad.mean_all(ll), -1.0)


def total_loss(l_contrastive: Value, l_ce: Value, alpha: float) -> Value:
    return ad.add(ad.scale(l_contrastive, alpha), ad.scale(l_ce, 1.0 - alpha))


def momentum_update(theta_k: Params, theta_q: Params, beta_m: float,
                    keys: list[str] | None = None) -> Params:
    """theta_k <- beta_m * theta_k + (1 - beta_m) * theta_q, elementwise."""
    if keys is None:
        keys = list(theta_k.tensors)
    for name in keys:
        a = theta_k.tensors[name]
        b = theta_q.tensors[name]
        if a.shape != b.shape:
            raise ad.ShapeMismatch("momentum_update", b.shape, a.shape)
        theta_k.tensors[name] = beta_m * a + (1.0 - beta_m) * b
    return theta_k


def sgdw_update(params: Params, grads: dict[str, np.ndarray],
                lr: float, weight_decay: float) -> None:
    """Gradient descent with decoupled weight decay."""
    for name, tensor in params.tensors.items():
        g = grads.get(name)
        if g is None:
            continue
        params.tensors[name] = tensor - lr * g - lr * weight_decay * tensor


def _encode_batch(preps: list[PreparedDoc], params: Params,
                  config: EncoderConfig) -> np.ndarray:
    rows = []
    for prep in preps:
        tape = Tape()
        rows.append(encode_prepared(tape, prep, params.as_leaves(tape), config).data)
    return np.vstack(rows)


def _l2_rows(m: np.ndarray) -> np.ndarray:
    norms = np.maximum(np.sqrt((m * m).sum(axis=1, keepdims=True)), 1e-12)
    return m / norms


def _predict_probs(preps: list[PreparedDoc], params: Params,
                   config: EncoderConfig) -> np.ndarray:
    d = _encode_batch(preps, params, config)
    z = d @ params.tensors["clf_w"] + params.tensors["clf_b"]
    return 1.0 / (1.0 + np.exp(-z.ravel()))


def _binary_metrics(probs: np.ndarray, labels: np.ndarray) -> tuple[float, float, float]:
    """(ce loss, accuracy, f1) with the machine class as positive."""
    p = np.clip(probs, 1e-7, 1.0 - 1e-7)
    loss = float(-(labels * np.log(p) + (1 - labels) * np.log(1 - p)).mean())
    preds = (probs >= 0.5).astype(np.int64)
    acc = float((preds == labels).mean())
    tp = int(((preds == 1) & (labels == 1)).sum())
    fp = int(((preds == 1) & (labels == 0)).sum())
    fn = int(((preds == 0) & (labels == 1)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return loss, acc, f1


@dataclass
class TrainResult:
    params: Params
    metrics: list[dict]
    best_epoch: int
    best_val_accuracy: float


def train(docs: list[Document], config: TrainConfig,
          encoder_config: EncoderConfig | None = None,
          limits: GraphLimits = GraphLimits(),
          val_docs: list[Document] | None = None) -> TrainResult:
    """Train the detector; fully deterministic for a given seed.

    The key encoder starts as a copy of the query encoder, never receives
    gradients, and is advanced only by the momentum rule.  The memory bank
    is pre-filled with encoded random training samples.  When val_docs is
    None a seeded stratified 80/20 split is taken from docs.  Early
    stopping watches validation accuracy; the returned parameters are the
    best-validation snapshot.  Validation loss is the cross-entropy term
    alone (the contrastive term depends on training-time bank state).
    """
    if encoder_config is None:
        encoder_config = EncoderConfig(seed=config.seed)

    labels_present = {d.label for d in docs}
    if len(labels_present) < 2:
        raise SingleClassDataset("training needs both classes")

    rng = random.Random(config.seed)

    if val_docs is None:
        by_class: dict[Label, list[Document]] = {Label.HWT: [], Label.MGT: []}
        for d in docs:
            by_class[d.label].append(d)
        train_docs, val_docs = [], []
        for label in (Label.HWT, Label.MGT):
            pool = list(by_class[label])
            rng.shuffle(pool)
            n_val = max(1, round(0.2 * len(pool)))
            val_docs.extend(pool[:n_val])
            train_docs.extend(pool[n_val:])
    else:
        train_docs = list(docs)
        val_docs = list(val_docs)

    if len({d.label for d in train_docs}) < 2:
        raise SingleClassDataset("training split lost a class")

    source = EmbeddingSource(encoder_config.embed_dim)
    train_preps = [prepare_document(d, source, limits) for d in train_docs]
    val_preps = [prepare_document(d, source, limits) for d in val_docs]
    val_labels = np.array([p.label for p in val_preps], dtype=np.int64)

    theta_q = Params.initialize(encoder_config)
    theta_k = theta_q.copy()  # frozen: advanced only by momentum updates
    encoder_keys = theta_q.encoder_keys()

    n_train = len(train_preps)
    bank = MemoryBank(config.bank_size or n_train)
    prefill = [train_preps[rng.randrange(n_train)] for _ in range(bank.capacity)]
    prefill_keys = _l2_rows(_encode_batch(prefill, theta_k, encoder_config))
    bank.push(prefill_keys, [p.label for p in prefill])

    batch_size = min(config.batch_size, n_train)
    steps_per_epoch = max(1, n_train // batch_size)

    metrics: list[dict] = []
    best_val_acc = -1.0
    best_epoch = -1
    best_params = theta_q.copy()
    epochs_without_gain = 0
    global_step = 0

    for epoch in range(config.max_epochs):
        epoch_losses: list[float] = []
        train_probs: list[float] = []
        train_labels: list[int] = []

        for _ in range(steps_per_epoch):
            batch_q = [train_preps[i] for i in rng.sample(range(n_train), batch_size)]
            batch_k = [train_preps[i] for i in rng.sample(range(n_train), batch_size)]

            key_vecs = _l2_rows(_encode_batch(batch_k, theta_k, encoder_config))
            key_labels = [p.label for p in batch_k]

            tape = Tape()
            pv = theta_q.as_leaves(tape)
            d_q = [encode_prepared(tape, prep, pv, encoder_config)
                   for prep in batch_q]
            probs = [classify(d, pv) for d in d_q]
            labels_q = [prep.label for prep in batch_q]

            l_ce = ce_loss(probs, labels_q)
            if config.alpha > 0.0:
                normalized = [ad.l2_normalize_rows(d) for d in d_q]
                l_contrastive = contrastive_loss(list(zip(normalized, labels_q)), bank,
                                 config.tau, config.reweight_beta)
            else:
                l_contrastive = ad.constant(tape, np.zeros((1, 1)))
            loss = total_loss(l_contrastive, l_ce, config.alpha)

            loss_val = float(loss.data[0, 0])
            if not math.isfinite(loss_val):
                raise NonFiniteLoss(global_step)

            ad.backward(loss)
            grads = {k: v.grad for k, v in pv.items() if v.grad is not None}
            sgdw_update(theta_q, grads, config.lr, config.weight_decay)
            momentum_update(theta_k, theta_q, config.momentum, keys=encoder_keys)
            bank.push(key_vecs, key_labels)

            epoch_losses.append(loss_val)
            train_probs.extend(float(p.data[0, 0]) for p in probs)
            train_labels.extend(labels_q)
            global_step += 1

        _, train_acc, train_f1 = _binary_metrics(
            np.array(train_probs), np.array(train_labels, dtype=np.int64))
        val_probs = _predict_probs(val_preps, theta_q, encoder_config)
        val_loss, val_acc, val_f1 = _binary_metrics(val_probs, val_labels)

        metrics.append({
            "epoch": epoch,
            "train_loss": sum(epoch_losses) / len(epoch_losses),
            "train_accuracy": train_acc,
            "train_f1": train_f1,
            "val_loss": val_loss,
            "val_accuracy": val_acc,
            "val_f1": val_f1,
        })

        if val_acc > best_val_acc:
            best_val_acc = val_acc
            best_epoch = epoch
            best_params = theta_q.copy()
            epochs_without_gain = 0
        else:
            epochs_without_gain += 1
            if epochs_without_gain > config.patience:
                break

    return TrainResult(params=best_params, metrics=metrics,
                       best_epoch=best_epoch, best_val_accuracy=best_val_acc)


def predict(docs: list[Document], params: Params, encoder_config: EncoderConfig,
            limits: GraphLimits = GraphLimits()) -> tuple[list[Label], np.ndarray]:
    """Label each document; probability >= 0.5 means machine-generated."""
    source = EmbeddingSource(encoder_config.embed_dim)
    preps = [prepare_document(d, source, limits) for d in docs]
    probs = _predict_probs(preps, params, encoder_config)
    labels = [Label.MGT if p >= 0.5 else Label.HWT for p in probs]
    return labels, probs
