"""F1 reports, the four-way ablation and permutation feature importance."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import PipelineConfig
from .corpus import Table, TypeVocabulary, fold_assignment
from .pipeline import MODES, ModelBundle, PreparedTables, featurize_tables, predict, train_pipeline
from .topics import table_topics

log = logging.getLogger(__name__)

ABLATION_NAMES = {"base": "Base", "notopic": "Sato_noTopic", "nostruct": "Sato_noStruct", "full": "Sato"}


@dataclass(frozen=True)
class PredictionRecord:
    table_id: str
    column_index: int
    gold: int
    predicted: int


@dataclass(frozen=True)
class TypeScore:
    type: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricReport:
    per_type: tuple[TypeScore, ...]
    macro_f1: float
    weighted_f1: float

    def to_tsv(self) -> str:
        lines = ["type\tprecision\trecall\tf1\tsupport"]
        lines += [f"{s.type}\t{s.precision:.6f}\t{s.recall:.6f}\t{s.f1:.6f}\t{s.support}" for s in self.per_type]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"macro_f1": self.macro_f1, "weighted_f1": self.weighted_f1,
                "types_supported": sum(s.support > 0 for s in self.per_type),
                "columns": sum(s.support for s in self.per_type)}


def f1_report(records: Sequence[PredictionRecord], type_names: Sequence[str]) -> MetricReport:
    """Per-type precision/recall/F1 plus macro and support-weighted F1.

    0/0 is taken as 0. The macro average runs over types with gold support.
    """
    if not records:
        raise ValueError("no records")
    T = len(type_names)
    tp = np.zeros(T, dtype=np.int64)
    pred = np.zeros(T, dtype=np.int64)
    gold = np.zeros(T, dtype=np.int64)
    for r in records:
        if not (0 <= r.gold < T and 0 <= r.predicted < T):
            raise ValueError(f"type id out of range in {r}")
        gold[r.gold] += 1
        pred[r.predicted] += 1
        if r.gold == r.predicted:
            tp[r.gold] += 1
    scores = []
    for i, name in enumerate(type_names):
        p = tp[i] / pred[i] if pred[i] else 0.0
        rc = tp[i] / gold[i] if gold[i] else 0.0
        f = 2 * p * rc / (p + rc) if p + rc > 0 else 0.0
        scores.append(TypeScore(name, float(p), float(rc), float(f), int(gold[i])))
    supported = [s for s in scores if s.support > 0]
    macro = sum(s.f1 for s in supported) / len(supported)
    weighted = sum(s.support * s.f1 for s in supported) / sum(s.support for s in supported)
    return MetricReport(tuple(scores), float(macro), float(weighted))


@dataclass(frozen=True)
class TypeDelta:
    type: str
    f1_a: float
    f1_b: float
    delta: float


@dataclass(frozen=True)
class DeltaReport:
    rows: tuple[TypeDelta, ...]
    improved: int
    equal: int
    worsened: int

    def to_tsv(self) -> str:
        lines = ["type\tf1_a\tf1_b\tdelta"]
        lines += [f"{r.type}\t{r.f1_a:.6f}\t{r.f1_b:.6f}\t{r.delta:+.6f}" for r in self.rows]
        return "\n".join(lines) + "\n"


def per_type_delta(report_a: MetricReport, report_b: MetricReport) -> DeltaReport:
    """F1 of ``report_a`` minus ``report_b`` per type, largest gain first."""
    names_a = [s.type for s in report_a.per_type]
    if names_a != [s.type for s in report_b.per_type]:
        raise ValueError("reports cover different type vocabularies")
    rows = [TypeDelta(a.type, a.f1, b.f1, a.f1 - b.f1) for a, b in zip(report_a.per_type, report_b.per_type)]
    rows.sort(key=lambda r: (-r.delta, r.type))
    return DeltaReport(tuple(rows), sum(r.delta > 0 for r in rows), sum(r.delta == 0 for r in rows),
                       sum(r.delta < 0 for r in rows))


def records_for(prepared: PreparedTables, predictions) -> list[PredictionRecord]:
    """Records for every labeled column."""
    out = []
    for i, p in enumerate(predictions):
        gold = prepared.labels[prepared.rows(i)]
        for j, (g, t) in enumerate(zip(gold, p.types)):
            if g >= 0:
                out.append(PredictionRecord(p.table_id, j, int(g), int(t)))
    return out


def evaluate(bundle: ModelBundle, prepared: PreparedTables, mode: str) -> MetricReport:
    return f1_report(records_for(prepared, predict(bundle, prepared, mode)), bundle.vocabulary.names)


def mean_ci(values: Sequence[float]) -> tuple[float, float]:
    """Mean and half-width of a normal-approximation 95% interval."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(1.96 * v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class AblationResult:
    folds: list[dict[str, MetricReport]]

    def aggregate(self) -> dict[str, dict[str, tuple[float, float]]]:
        out = {}
        for mode in MODES:
            reports = [f[mode] for f in self.folds if mode in f]
            if reports:
                out[mode] = {"macro_f1": mean_ci([r.macro_f1 for r in reports]),
                             "weighted_f1": mean_ci([r.weighted_f1 for r in reports])}
        return out

    def to_tsv(self) -> str:
        lines = ["model\tmacro_f1\tmacro_ci95\tweighted_f1\tweighted_ci95"]
        for mode, s in self.aggregate().items():
            (m, mc), (w, wc) = s["macro_f1"], s["weighted_f1"]
            lines.append(f"{ABLATION_NAMES[mode]}\t{m:.4f}\t{mc:.4f}\t{w:.4f}\t{wc:.4f}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"folds": [{ABLATION_NAMES[m]: r.summary() for m, r in f.items()} for f in self.folds],
                           "aggregate": {ABLATION_NAMES[m]: v for m, v in self.aggregate().items()}},
                          indent=2, sort_keys=True)


def run_ablation(tables: Sequence[Table], vocab: TypeVocabulary, cfg: PipelineConfig,
                 k: int | None = None, seed: int = 0, folds: Sequence[int] | None = None,
                 assignment: Sequence[int] | None = None,
                 lda_tables: Sequence[Table] | None = None) -> AblationResult:
    """Base, Sato_noTopic, Sato_noStruct and Sato on shared folds.

    All four variants share featurization, folds and seeds. ``folds`` limits
    which fold indices run; ``assignment`` overrides the seeded split.
    """
    tables = list(tables)
    k = k or cfg.corpus.folds
    if assignment is None:
        assignment = fold_assignment(len(tables), k, seed)
    assignment = np.asarray(assignment)
    prepared = featurize_tables(tables, cfg.features)
    results = []
    for f in (folds if folds is not None else range(k)):
        train_idx = [i for i, a in enumerate(assignment) if a != f]
        test_idx = [i for i, a in enumerate(assignment) if a == f]
        train, test = prepared.subset(train_idx), prepared.subset(test_idx)
        bundle = train_pipeline(train.tables, vocab, cfg, lda_tables=lda_tables, prepared=train)
        test = test.with_topics(table_topics(bundle.lda, test.tables, cfg.lda))
        results.append({mode: evaluate(bundle, test, mode) for mode in MODES})
        log.info("fold %d: %s", f, {m: round(r.macro_f1, 4) for m, r in results[-1].items()})
    return AblationResult(results)


FEATURE_GROUPS = ("char", "word", "para", "stat", "topic")


def permutation_importance(bundle: ModelBundle, prepared: PreparedTables, group: str, mode: str = "full",
                           trials: int = 5, seed: int = 0, permuter=None) -> dict[str, float]:
    """Mean normalized F1 drop after shuffling one feature group.

    Column groups are permuted across the test columns; topic vectors are
    permuted across tables. ``permuter(n, rng)`` overrides the uniform random
    permutation. Returns ``{"macro": ..., "weighted": ...}``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if group not in FEATURE_GROUPS:
        raise ValueError(f"unknown feature group {group!r}")
    bundle.require(mode)
    uses_topic = mode in ("nostruct", "full")
    if group == "topic" and not uses_topic:
        raise ValueError(f"mode {mode!r} has no topic feature group")
    base = evaluate(bundle, prepared, mode)
    rng = np.random.default_rng(seed)
    drops = {"macro": [], "weighted": []}
    for _ in range(trials):
        source = prepared.topics if group == "topic" else prepared.X[group]
        order = permuter(len(source), rng) if permuter else rng.permutation(len(source))
        shuffled = source[order]
        report = evaluate(bundle, prepared.with_group(group, shuffled), mode)
        drops["macro"].append(_drop(base.macro_f1, report.macro_f1))
        drops["weighted"].append(_drop(base.weighted_f1, report.weighted_f1))
    return {k: float(np.mean(v)) for k, v in drops.items()}


def _drop(baseline: float, permuted: float) -> float:
    return (baseline - permuted) / baseline if baseline > 0 else 0.0
