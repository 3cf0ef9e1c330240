"""Staged training and prediction: LDA -> classifiers -> CRF."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import crf as crf_mod
from .config import PipelineConfig
from .corpus import Table, TypeVocabulary, cooccurrence
from .featurizer import GROUPS, FeatureConfig, featurize_column, stack_features
from .neural import ClassifierModel, Dataset, NetworkConfig, init_network, predict_log_proba, train_classifier
from .topics import LdaModel, table_to_document, table_topics, train_lda, type_topic_means

log = logging.getLogger(__name__)

MODES = ("base", "notopic", "nostruct", "full")
# stages each prediction mode needs from a bundle
MODE_STAGES = {
    "base": ("classifier_base",),
    "notopic": ("classifier_base", "crf_notopic"),
    "nostruct": ("lda", "classifier_topic"),
    "full": ("lda", "classifier_topic", "crf"),
}


class MissingStageError(ValueError):
    pass


@dataclass
class ModelBundle:
    feature_config: FeatureConfig
    vocabulary: TypeVocabulary
    config: PipelineConfig
    lda: LdaModel | None = None
    classifier_base: ClassifierModel | None = None
    classifier_topic: ClassifierModel | None = None
    crf: crf_mod.CrfModel | None = None
    crf_notopic: crf_mod.CrfModel | None = None
    type_topic_means: np.ndarray | None = None
    training_metadata: dict = field(default_factory=dict)

    def require(self, mode: str) -> None:
        if mode not in MODE_STAGES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
        missing = [s for s in MODE_STAGES[mode] if getattr(self, s) is None]
        if missing:
            raise MissingStageError(f"mode {mode!r} needs missing stage(s): {', '.join(missing)}")

    def available_modes(self) -> list[str]:
        return [m for m in MODES if all(getattr(self, s) is not None for s in MODE_STAGES[m])]

    def validate(self) -> None:
        T = len(self.vocabulary)
        for name in ("classifier_base", "classifier_topic"):
            clf = getattr(self, name)
            if clf is not None and clf.config.type_count != T:
                raise ValueError(f"{name} outputs {clf.config.type_count} types, vocabulary has {T}")
        for name in ("crf", "crf_notopic"):
            c = getattr(self, name)
            if c is not None and c.type_count != T:
                raise ValueError(f"{name} has dimension {c.type_count}, vocabulary has {T}")
        if self.classifier_topic is not None:
            if self.lda is None:
                raise ValueError("topic classifier present without an LDA model")
            if self.classifier_topic.input_dims["topic"] != self.lda.K:
                raise ValueError("topic subnetwork width does not match LDA topic count")


@dataclass
class PreparedTables:
    """Tables with every column featurized and (optionally) topic vectors."""
    tables: list[Table]
    X: dict[str, np.ndarray]
    offsets: np.ndarray  # table i owns rows offsets[i]:offsets[i+1]
    labels: np.ndarray  # -1 for unlabeled columns
    topics: np.ndarray | None = None  # one row per table

    @property
    def n_columns(self) -> int:
        return len(self.labels)

    def column_topics(self) -> np.ndarray | None:
        if self.topics is None:
            return None
        return np.repeat(self.topics, np.diff(self.offsets), axis=0)

    def rows(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def with_topics(self, topics: np.ndarray | None) -> "PreparedTables":
        return replace(self, topics=topics)

    def with_group(self, group: str, matrix: np.ndarray) -> "PreparedTables":
        if group == "topic":
            return replace(self, topics=matrix)
        return replace(self, X={**self.X, group: matrix})

    def subset(self, idx: Sequence[int]) -> "PreparedTables":
        rows = np.concatenate([np.arange(self.offsets[i], self.offsets[i + 1]) for i in idx]) \
            if len(idx) else np.zeros(0, dtype=np.int64)
        lengths = np.diff(self.offsets)[list(idx)]
        return PreparedTables([self.tables[i] for i in idx], {g: m[rows] for g, m in self.X.items()},
                              np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64),
                              self.labels[rows], None if self.topics is None else self.topics[list(idx)])


def featurize_tables(tables: Sequence[Table], config: FeatureConfig) -> PreparedTables:
    feats, labels, offsets = [], [], [0]
    for t in tables:
        for c in t.columns:
            feats.append(featurize_column(c, config))
            labels.append(-1 if c.label is None else c.label)
        offsets.append(len(feats))
    if feats:
        X = stack_features(feats)
    else:
        X = {g: np.zeros((0, d)) for g, d in config.dims().items()}
    return PreparedTables(list(tables), X, np.array(offsets, dtype=np.int64), np.array(labels, dtype=np.int64))


def prepare(tables: Sequence[Table], bundle_or_config, lda: LdaModel | None = None) -> PreparedTables:
    """Featurize tables and attach topic vectors when an LDA model is given."""
    if isinstance(bundle_or_config, ModelBundle):
        fc, cfg, lda = bundle_or_config.feature_config, bundle_or_config.config, bundle_or_config.lda
    else:
        cfg = bundle_or_config
        fc = cfg.features
    prepared = featurize_tables(tables, fc)
    if lda is not None:
        prepared = prepared.with_topics(table_topics(lda, prepared.tables, cfg.lda))
    return prepared


def _dataset(prepared: PreparedTables, use_topic: bool) -> Dataset:
    mask = prepared.labels >= 0
    if not mask.any():
        raise ValueError("no labeled columns to train on")
    topics = prepared.column_topics()[mask] if use_topic else None
    return Dataset({g: m[mask] for g, m in prepared.X.items()}, topics, prepared.labels[mask])


def fit_classifier(prepared: PreparedTables, n_types: int, cfg: PipelineConfig, use_topic: bool) -> ClassifierModel:
    net = NetworkConfig(type_count=n_types, use_topic=use_topic, seed=cfg.train.seed,
                        subnet_hidden=cfg.network.subnet_hidden, subnet_out=cfg.network.subnet_out,
                        primary_hidden=cfg.network.primary_hidden, dropout_rate=cfg.network.dropout_rate)
    dims = {g: prepared.X[g].shape[1] for g in GROUPS}
    if use_topic:
        dims["topic"] = prepared.topics.shape[1]
    model, trace = train_classifier(init_network(net, dims), _dataset(prepared, use_topic), cfg.train)
    log.info("classifier (topic=%s) loss %.4f -> %.4f", use_topic, trace[0], trace[-1])
    return model


def unaries(model: ClassifierModel, prepared: PreparedTables) -> list[np.ndarray]:
    """Per-table log-probability matrices from a classifier."""
    topics = prepared.column_topics() if model.config.use_topic else None
    logp = predict_log_proba(model, prepared.X, topics)
    return [logp[prepared.rows(i)] for i in range(len(prepared.tables))]


def fit_crf(prepared: PreparedTables, unary: list[np.ndarray], counts: np.ndarray,
            cfg: PipelineConfig) -> crf_mod.CrfModel:
    corpus = []
    for i, u in enumerate(unary):
        gold = prepared.labels[prepared.rows(i)]
        if np.all(gold >= 0):
            corpus.append((u, gold))
    init = crf_mod.init_pairwise_from_cooccurrence(counts, cfg.crf.init_scale)
    model = crf_mod.CrfModel(init, {"init_scale": cfg.crf.init_scale})
    if not corpus:
        log.warning("no fully labeled tables; CRF keeps its co-occurrence initialization")
        return model
    model, trace = crf_mod.train_crf(model, corpus, cfg.crf)
    log.info("crf nll %.4f -> %.4f over %d tables", trace[0], trace[-1], len(corpus))
    return model


def fingerprint(tables: Sequence[Table]) -> str:
    h = hashlib.sha256()
    for t in tables:
        h.update(t.id.encode("utf-8", "surrogatepass") + b"\0")
        for c in t.columns:
            h.update(c.header_raw.encode("utf-8", "surrogatepass") + b"\1")
            for cell in c.cells:
                h.update(cell.encode("utf-8", "surrogatepass") + b"\2")
    return h.hexdigest()


def train_pipeline(tables: Sequence[Table], vocab: TypeVocabulary, cfg: PipelineConfig,
                   lda_tables: Sequence[Table] | None = None, use_lda: bool = True,
                   use_crf: bool = True, prepared: PreparedTables | None = None) -> ModelBundle:
    """Train every stage on labeled ``tables``.

    The LDA model is fit on ``lda_tables`` when given (headers are never
    used), otherwise on ``tables``. CRF pairwise weights start from the
    co-occurrence counts of the training tables.
    """
    tables = list(tables)
    bundle = ModelBundle(cfg.features, vocab, cfg)
    prepared = prepared if prepared is not None else featurize_tables(tables, cfg.features)
    meta = {"train_tables": len(tables), "train_fingerprint": fingerprint(tables),
            "seeds": {"lda": cfg.lda.seed, "train": cfg.train.seed, "crf": cfg.crf.seed}}
    T = len(vocab)
    bundle.classifier_base = fit_classifier(prepared, T, cfg, use_topic=False)
    counts = cooccurrence(tables, vocab)
    if use_lda:
        source = list(lda_tables) if lda_tables is not None else tables
        docs = [table_to_document(t) for t in source]
        lc = cfg.lda
        bundle.lda = train_lda(docs, lc.topics, lc.resolved_alpha(), lc.beta, lc.iterations, lc.seed, lc.max_vocab)
        meta["lda_tables"] = len(source)
        meta["lda_fingerprint"] = fingerprint(source)
        prepared = prepared.with_topics(table_topics(bundle.lda, tables, lc))
        bundle.type_topic_means = type_topic_means(prepared.topics, tables, T)
        bundle.classifier_topic = fit_classifier(prepared, T, cfg, use_topic=True)
    if use_crf:
        bundle.crf_notopic = fit_crf(prepared, unaries(bundle.classifier_base, prepared), counts, cfg)
        if bundle.classifier_topic is not None:
            bundle.crf = fit_crf(prepared, unaries(bundle.classifier_topic, prepared), counts, cfg)
    bundle.training_metadata = meta
    return bundle


@dataclass
class TablePrediction:
    table_id: str
    types: list[int]
    confidence: list[float]


def predict(bundle: ModelBundle, prepared: PreparedTables, mode: str = "full") -> list[TablePrediction]:
    """Column types for every prepared table under one of the four modes.

    Per-column modes report the softmax probability of the chosen type; CRF
    modes report the posterior node marginal of the decoded type.
    """
    bundle.require(mode)
    clf = bundle.classifier_base if mode in ("base", "notopic") else bundle.classifier_topic
    if clf.config.use_topic and prepared.topics is None:
        raise ValueError("prepared tables carry no topic vectors")
    crf = {"notopic": bundle.crf_notopic, "full": bundle.crf}.get(mode)
    out = []
    for table, u in zip(prepared.tables, unaries(clf, prepared)):
        if crf is None:
            types = np.argmax(u, axis=1)
            conf = np.exp(u[np.arange(len(types)), types])
        else:
            types = np.array(crf_mod.map_decode(u, crf.pairwise))
            node, _ = crf_mod.marginals(u, crf.pairwise)
            conf = node[np.arange(len(types)), types]
        out.append(TablePrediction(table.id, [int(t) for t in types], [float(c) for c in conf]))
    return out
