"""LDA over tables-as-documents, fitted by collapsed Gibbs sampling."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .corpus import Table


@dataclass(frozen=True)
class LdaConfig:
    topics: int = 20
    alpha: float | None = None  # None -> 50 / topics
    beta: float = 0.01
    iterations: int = 200
    infer_iterations: int = 50
    infer_burn_in: int = 25
    max_vocab: int = 50_000
    seed: int = 0

    def resolved_alpha(self) -> float:
        return 50.0 / self.topics if self.alpha is None else self.alpha


@dataclass(frozen=True)
class LdaModel:
    topic_word: np.ndarray  # K x V, rows sum to 1
    vocab: dict[str, int] = field(repr=False)
    alpha: float
    beta: float
    iterations: int = 0
    seed: int = 0

    @property
    def K(self) -> int:
        return self.topic_word.shape[0]

    @property
    def V(self) -> int:
        return self.topic_word.shape[1]

    def tokens(self) -> list[str]:
        out = [""] * len(self.vocab)
        for tok, i in self.vocab.items():
            out[i] = tok
        return out

    def top_words(self, topic: int, n: int = 10) -> list[str]:
        toks = self.tokens()
        order = np.argsort(-self.topic_word[topic], kind="stable")[:n]
        return [toks[i] for i in order]


def table_to_document(table: Table) -> list[str]:
    """All cell values in column-major order, lowercased and split on whitespace."""
    return [tok for col in table.columns for cell in col.cells for tok in cell.lower().split()]


def build_lda_vocab(docs: Sequence[Sequence[str]], max_vocab: int = 50_000) -> dict[str, int]:
    counts = Counter(tok for doc in docs for tok in doc)
    ranked = sorted(counts, key=lambda t: (-counts[t], t))[:max_vocab]
    return {tok: i for i, tok in enumerate(ranked)}


@numba.njit(cache=True)
def _gibbs_sweep(words, doc_of, z, n_dk, n_kw, n_k, alpha, beta, uniforms):
    K, V = n_kw.shape
    vbeta = V * beta
    p = np.empty(K)
    for i in range(words.shape[0]):
        w, d, k = words[i], doc_of[i], z[i]
        n_dk[d, k] -= 1
        n_kw[k, w] -= 1
        n_k[k] -= 1
        total = 0.0
        for t in range(K):
            total += (n_dk[d, t] + alpha) * (n_kw[t, w] + beta) / (n_k[t] + vbeta)
            p[t] = total
        u = uniforms[i] * total
        k = K - 1
        for t in range(K):
            if u < p[t]:
                k = t
                break
        z[i] = k
        n_dk[d, k] += 1
        n_kw[k, w] += 1
        n_k[k] += 1


@numba.njit(cache=True)
def _infer_sweep(words, z, n_k, phi, alpha, uniforms):
    K = phi.shape[0]
    p = np.empty(K)
    for i in range(words.shape[0]):
        w, k = words[i], z[i]
        n_k[k] -= 1
        total = 0.0
        for t in range(K):
            total += (n_k[t] + alpha) * phi[t, w]
            p[t] = total
        u = uniforms[i] * total
        k = K - 1
        for t in range(K):
            if u < p[t]:
                k = t
                break
        z[i] = k
        n_k[k] += 1


class GibbsSampler:
    """Collapsed Gibbs state for LDA; call :meth:`sweep` once per iteration."""

    def __init__(self, docs: Sequence[Sequence[str]], K: int, alpha: float, beta: float,
                 seed: int = 0, max_vocab: int = 50_000):
        if K < 2:
            raise ValueError("K must be >= 2")
        if not docs:
            raise ValueError("no documents")
        self.vocab = build_lda_vocab(docs, max_vocab)
        if not self.vocab:
            raise ValueError("empty vocabulary")
        self.K, self.alpha, self.beta, self.seed = K, float(alpha), float(beta), seed
        words, doc_of = [], []
        for d, doc in enumerate(docs):
            for tok in doc:
                w = self.vocab.get(tok)
                if w is not None:
                    words.append(w)
                    doc_of.append(d)
        self.words = np.array(words, dtype=np.int64)
        self.doc_of = np.array(doc_of, dtype=np.int64)
        self.rng = np.random.default_rng(seed)
        self.z = self.rng.integers(0, K, size=self.words.size).astype(np.int64)
        V = len(self.vocab)
        self.n_dk = np.zeros((len(docs), K), dtype=np.int64)
        self.n_kw = np.zeros((K, V), dtype=np.int64)
        np.add.at(self.n_dk, (self.doc_of, self.z), 1)
        np.add.at(self.n_kw, (self.z, self.words), 1)
        self.n_k = self.n_kw.sum(axis=1)
        self.iterations = 0

    @property
    def n_tokens(self) -> int:
        return int(self.words.size)

    def sweep(self) -> None:
        uniforms = self.rng.random(self.words.size)
        _gibbs_sweep(self.words, self.doc_of, self.z, self.n_dk, self.n_kw, self.n_k,
                     self.alpha, self.beta, uniforms)
        self.iterations += 1

    def model(self) -> LdaModel:
        V = self.n_kw.shape[1]
        phi = (self.n_kw + self.beta) / (self.n_k[:, None] + V * self.beta)
        return LdaModel(phi, dict(self.vocab), self.alpha, self.beta, self.iterations, self.seed)


def train_lda(docs: Sequence[Sequence[str]], K: int = 20, alpha: float | None = None,
              beta: float = 0.01, iters: int = 200, seed: int = 0,
              max_vocab: int = 50_000) -> LdaModel:
    if iters < 1:
        raise ValueError("iters must be >= 1")
    sampler = GibbsSampler(docs, K, 50.0 / K if alpha is None else alpha, beta, seed, max_vocab)
    for _ in range(iters):
        sampler.sweep()
    return sampler.model()


def infer_topics(model: LdaModel, doc: Sequence[str], iters: int = 50, seed: int = 0,
                 burn_in: int = 25) -> np.ndarray:
    """Topic proportions of one document with the topic-word matrix held fixed.

    Theta is the average of ``(n_k + alpha) / (N + K alpha)`` over the sweeps
    after ``burn_in``. A document with no in-vocabulary token gets the uniform
    vector.
    """
    K = model.K
    words = np.array([model.vocab[t] for t in doc if t in model.vocab], dtype=np.int64)
    if words.size == 0:
        return np.full(K, 1.0 / K)
    rng = np.random.default_rng(seed)
    z = rng.integers(0, K, size=words.size).astype(np.int64)
    n_k = np.bincount(z, minlength=K).astype(np.int64)
    burn_in = min(burn_in, iters - 1)
    acc = np.zeros(K)
    kept = 0
    for it in range(iters):
        _infer_sweep(words, z, n_k, model.topic_word, model.alpha, rng.random(words.size))
        if it >= burn_in:
            acc += n_k
            kept += 1
    theta = (acc / kept + model.alpha) / (words.size + K * model.alpha)
    return theta / theta.sum()


def table_topics(model: LdaModel, tables: Sequence[Table], cfg: LdaConfig) -> np.ndarray:
    """Topic vectors for many tables (one row per table)."""
    return np.stack([infer_topics(model, table_to_document(t), cfg.infer_iterations, cfg.seed,
                                  cfg.infer_burn_in) for t in tables]) if tables else np.zeros((0, model.K))


def heldout_log_likelihood(model: LdaModel, docs: Sequence[Sequence[str]], iters: int = 30,
                           seed: int = 0) -> float:
    """Per-token log-likelihood of documents under inferred topic mixtures."""
    total, count = 0.0, 0
    for doc in docs:
        ids = [model.vocab[t] for t in doc if t in model.vocab]
        if not ids:
            continue
        theta = infer_topics(model, doc, iters, seed, burn_in=iters // 2)
        total += float(np.log(theta @ model.topic_word[:, ids]).sum())
        count += len(ids)
    return total / max(count, 1)


def type_topic_means(topics: np.ndarray, tables: Sequence[Table], n_types: int) -> np.ndarray:
    """Average topic vector of the tables containing each type (rows: types).

    Types that never occur get a zero row.
    """
    sums = np.zeros((n_types, topics.shape[1]))
    counts = np.zeros(n_types)
    for theta, t in zip(topics, tables):
        for lab in {l for l in t.labels if l is not None}:
            sums[lab] += theta
            counts[lab] += 1
    return np.divide(sums, counts[:, None], out=np.zeros_like(sums), where=counts[:, None] > 0)


def topic_saliency(type_topic: np.ndarray, k: int = 5) -> list[tuple[int, float, list[int]]]:
    """Rank topics by the mean probability of their top-k types.

    ``type_topic`` is types x topics. Returns ``(topic, score, top_types)``
    sorted by descending score, ties broken by topic index.
    """
    n_types, K = type_topic.shape
    k = max(1, min(k, n_types))
    out = []
    for topic in range(K):
        col = type_topic[:, topic]
        top = np.argsort(-col, kind="stable")[:k]
        out.append((topic, float(col[top].mean()), [int(i) for i in top]))
    out.sort(key=lambda r: (-r[1], r[0]))
    return out
