"""Linear-chain CRF over the columns of a table.

Unary potentials are log-probabilities from a column classifier; a single
``T x T`` matrix ``P`` scores each pair of adjacent column types, with edge
``(i, i+1)`` contributing ``P[t_i, t_{i+1}]``. Everything is in log space.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.special

log = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 10 ** 6


@dataclass(frozen=True)
class CrfTrainConfig:
    epochs: int = 15
    learning_rate: float = 1e-2
    batch_tables: int = 10
    seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_tables < 1:
            raise ValueError("epochs and batch_tables must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")


@dataclass
class CrfModel:
    pairwise: np.ndarray
    train_meta: dict = field(default_factory=dict)

    @property
    def type_count(self) -> int:
        return self.pairwise.shape[0]


def _check(u: np.ndarray, P: np.ndarray) -> None:
    if u.ndim != 2 or u.shape[0] < 1:
        raise ValueError(f"unaries must be m x T with m >= 1, got {u.shape}")
    if P.shape != (u.shape[1], u.shape[1]):
        raise ValueError(f"pairwise shape {P.shape} does not match {u.shape[1]} types")


def logsumexp(x: np.ndarray, axis=None) -> np.ndarray:
    """Stable log-sum-exp (thin, allocation-light variant for small arrays)."""
    mx = np.max(x, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - mx), axis=axis, keepdims=True)) + mx
    return out.reshape(()) if axis is None else np.squeeze(out, axis=axis)


def _forward(u: np.ndarray, P: np.ndarray) -> np.ndarray:
    alpha = np.empty_like(u, dtype=float)
    alpha[0] = u[0]
    for i in range(1, len(u)):
        alpha[i] = u[i] + logsumexp(alpha[i - 1][:, None] + P, axis=0)
    return alpha


def _backward(u: np.ndarray, P: np.ndarray) -> np.ndarray:
    beta = np.zeros_like(u, dtype=float)
    for i in range(len(u) - 2, -1, -1):
        beta[i] = logsumexp(P + (u[i + 1] + beta[i + 1])[None, :], axis=1)
    return beta


def sequence_score(u: np.ndarray, P: np.ndarray, t: Sequence[int]) -> float:
    t = np.asarray(t)
    score = u[np.arange(len(t)), t].sum()
    if len(t) > 1:
        score += P[t[:-1], t[1:]].sum()
    return float(score)


def log_partition(u: np.ndarray, P: np.ndarray) -> float:
    u, P = np.asarray(u, float), np.asarray(P, float)
    _check(u, P)
    return float(logsumexp(_forward(u, P)[-1]))


def map_decode(u: np.ndarray, P: np.ndarray) -> list[int]:
    """Viterbi decoding; ties go to the lowest type index while backtracking."""
    u, P = np.asarray(u, float), np.asarray(P, float)
    _check(u, P)
    m = len(u)
    delta = u[0].copy()
    back = np.zeros((m, u.shape[1]), dtype=np.int64)
    for i in range(1, m):
        cand = delta[:, None] + P
        back[i] = np.argmax(cand, axis=0)
        delta = u[i] + cand[back[i], np.arange(u.shape[1])]
    path = [int(np.argmax(delta))]
    for i in range(m - 1, 0, -1):
        path.append(int(back[i, path[-1]]))
    return path[::-1]


def marginals(u: np.ndarray, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Node marginals (m x T) and adjacent-edge marginals ((m-1) x T x T)."""
    u, P = np.asarray(u, float), np.asarray(P, float)
    _check(u, P)
    node, edge, _ = _posteriors(u, P)
    return node, edge


def _posteriors(u: np.ndarray, P: np.ndarray):
    alpha, beta = _forward(u, P), _backward(u, P)
    logz = float(logsumexp(alpha[-1]))
    node = np.exp(alpha + beta - logz)
    edge = np.exp(alpha[:-1, :, None] + P[None] + (u[1:] + beta[1:])[:, None, :] - logz)
    return node, edge, logz


def _batched_posteriors(U: np.ndarray, P: np.ndarray):
    """Forward-backward over a stack of equal-length chains (B x m x T)."""
    B, m, T = U.shape
    alpha = np.empty_like(U)
    beta = np.zeros_like(U)
    alpha[:, 0] = U[:, 0]
    for i in range(1, m):
        alpha[:, i] = U[:, i] + logsumexp(alpha[:, i - 1, :, None] + P, axis=1)
    for i in range(m - 2, -1, -1):
        beta[:, i] = logsumexp(P + (U[:, i + 1] + beta[:, i + 1])[:, None, :], axis=2)
    logz = logsumexp(alpha[:, -1], axis=1)
    edge = np.exp(alpha[:, :-1, :, None] + P + (U[:, 1:] + beta[:, 1:])[:, :, None, :]
                  - logz[:, None, None, None])
    return edge, logz


def nll_and_gradient(batch: Sequence[tuple[np.ndarray, Sequence[int]]], P: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of gold sequences and its gradient in ``P``.

    ``batch`` holds ``(unaries, gold)`` pairs; every gold entry must be a type id.
    """
    if not batch:
        raise ValueError("empty batch")
    P = np.asarray(P, float)
    by_length: dict[int, list] = {}
    for u, gold in batch:
        if any(g is None or g < 0 for g in gold):
            raise ValueError("unlabeled column in CRF training batch")
        u = np.asarray(u, float)
        _check(u, P)
        if len(gold) != len(u):
            raise ValueError("gold length does not match unaries")
        by_length.setdefault(len(u), []).append((u, np.asarray(gold, dtype=np.int64)))
    total, grad = 0.0, np.zeros_like(P)
    # equal-length chains run together; summation order is fixed by length then input order
    for m in sorted(by_length):
        group = by_length[m]
        U = np.stack([u for u, _ in group])
        G = np.stack([g for _, g in group])
        rows = np.arange(len(group))[:, None]
        gold_score = U[rows, np.arange(m), G].sum(axis=1)
        if m > 1:
            edge, logz = _batched_posteriors(U, P)
            gold_score = gold_score + P[G[:, :-1], G[:, 1:]].sum(axis=1)
            grad += edge.sum(axis=(0, 1))
            np.add.at(grad, (G[:, :-1].ravel(), G[:, 1:].ravel()), -1.0)
        else:
            logz = logsumexp(U[:, 0], axis=1)
        total += float((logz - gold_score).sum())
    n = len(batch)
    return total / n, grad / n


def init_pairwise_from_cooccurrence(counts: np.ndarray, scale: float = 0.1,
                                    type_count: int | None = None) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise ValueError("co-occurrence matrix must be square")
    if type_count is not None and counts.shape[0] != type_count:
        raise ValueError(f"co-occurrence has {counts.shape[0]} types, expected {type_count}")
    if np.any(counts < 0):
        raise ValueError("negative co-occurrence count")
    return scale * np.log1p(counts)


def train_crf(model: CrfModel, corpus: Sequence[tuple[np.ndarray, Sequence[int]]],
              cfg: CrfTrainConfig) -> tuple[CrfModel, list[float]]:
    """Fit ``P`` by Adam on the mean NLL with the unaries held fixed.

    Returns the new model and the loss trace (initial value, then one value
    per epoch, each over the whole corpus).
    """
    if not corpus:
        raise ValueError("empty CRF training corpus")
    P = model.pairwise.astype(float).copy()
    rng = np.random.default_rng(cfg.seed)
    m, v = np.zeros_like(P), np.zeros_like(P)
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    trace = [nll_and_gradient(corpus, P)[0]]
    n_batches = max(1, -(-len(corpus) // cfg.batch_tables))
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(corpus))
        for idx in np.array_split(perm, n_batches):
            loss, g = nll_and_gradient([corpus[i] for i in idx], P)
            if not np.isfinite(loss) or not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite CRF loss at epoch {epoch + 1}")
            step += 1
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            P -= cfg.learning_rate * (m / (1 - b1 ** step)) / (np.sqrt(v / (1 - b2 ** step)) + eps)
        trace.append(nll_and_gradient(corpus, P)[0])
        log.debug("crf epoch %d nll %.6f", epoch + 1, trace[-1])
    meta = dict(model.train_meta, epochs=cfg.epochs, learning_rate=cfg.learning_rate,
                batch_tables=cfg.batch_tables, seed=cfg.seed)
    return CrfModel(P, meta), trace


def _enumerate(u: np.ndarray, P: np.ndarray):
    m, T = u.shape
    if T ** m > BRUTE_FORCE_LIMIT:
        raise ValueError(f"{T}^{m} sequences exceed the brute-force limit")
    seqs = np.array(list(itertools.product(range(T), repeat=m)), dtype=np.int64)
    scores = u[np.arange(m), seqs].sum(axis=1)
    if m > 1:
        scores = scores + P[seqs[:, :-1], seqs[:, 1:]].sum(axis=1)
    return seqs, scores


def brute_force_partition(u: np.ndarray, P: np.ndarray) -> float:
    u, P = np.asarray(u, float), np.asarray(P, float)
    _check(u, P)
    return float(scipy.special.logsumexp(_enumerate(u, P)[1]))


def brute_force_decode(u: np.ndarray, P: np.ndarray) -> list[int]:
    """Exhaustive argmax; among exact ties, the sequence whose reversal is
    lexicographically smallest (what lowest-index backtracking yields)."""
    u, P = np.asarray(u, float), np.asarray(P, float)
    _check(u, P)
    seqs, scores = _enumerate(u, P)
    best = seqs[scores == scores.max()]
    return [int(x) for x in min(map(tuple, best), key=lambda s: s[::-1])]


def brute_force_marginals(u: np.ndarray, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u, P = np.asarray(u, float), np.asarray(P, float)
    _check(u, P)
    seqs, scores = _enumerate(u, P)
    w = np.exp(scores - scipy.special.logsumexp(scores))
    m, T = u.shape
    node = np.zeros((m, T))
    edge = np.zeros((max(m - 1, 0), T, T))
    for s, p in zip(seqs, w):
        node[np.arange(m), s] += p
        for i in range(m - 1):
            edge[i, s[i], s[i + 1]] += p
    return node, edge
