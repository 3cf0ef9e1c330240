"""Context-disambiguation experiment on the synthetic corpus."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .corpus import fold_assignment
from .evaluation import ABLATION_NAMES, f1_report, records_for
from .pipeline import MODES, featurize_tables, predict, train_pipeline
from .synthetic import AMBIGUOUS_PAIRS, context_corpus, context_vocabulary
from .topics import table_topics

log = logging.getLogger(__name__)


@dataclass
class ContextResult:
    seed: int
    macro_f1: dict[str, float]
    weighted_f1: dict[str, float]
    ambiguous_accuracy: dict[str, float]
    ambiguous_columns: int
    seconds: float

    def rows(self) -> list[str]:
        return [f"{self.seed}\t{ABLATION_NAMES[m]}\t{self.macro_f1[m]:.4f}\t{self.weighted_f1[m]:.4f}\t"
                f"{self.ambiguous_accuracy[m]:.4f}" for m in MODES]


def context_experiment(seed: int = 0, n_tables: int = 2000, folds: int = 5, fold: int = 0,
                       cfg: PipelineConfig | None = None) -> ContextResult:
    """Train all four variants on one fold of the context corpus.

    The corpus, the fold split and every model seed derive from ``seed``.
    Ambiguous accuracy counts test columns whose gold type belongs to a
    pair with identical value distributions.
    """
    start = time.perf_counter()
    cfg = (cfg or PipelineConfig()).with_seed(seed)
    vocab = context_vocabulary()
    tables = context_corpus(n_tables, seed)
    assignment = fold_assignment(len(tables), folds, seed)
    prepared = featurize_tables(tables, cfg.features)
    train = prepared.subset([i for i, a in enumerate(assignment) if a != fold])
    test = prepared.subset([i for i, a in enumerate(assignment) if a == fold])
    bundle = train_pipeline(train.tables, vocab, cfg, prepared=train)
    test = test.with_topics(table_topics(bundle.lda, test.tables, cfg.lda))
    ambiguous = {vocab.index[t] for pair in AMBIGUOUS_PAIRS for t in pair}
    macro, weighted, acc = {}, {}, {}
    n_amb = 0
    for mode in MODES:
        records = records_for(test, predict(bundle, test, mode))
        report = f1_report(records, vocab.names)
        macro[mode], weighted[mode] = report.macro_f1, report.weighted_f1
        hits = [r.gold == r.predicted for r in records if r.gold in ambiguous]
        acc[mode] = float(np.mean(hits))
        n_amb = len(hits)
    result = ContextResult(seed, macro, weighted, acc, n_amb, time.perf_counter() - start)
    log.info("seed %d: macro %s ambiguous %s (%.1fs)", seed, macro, acc, result.seconds)
    return result
