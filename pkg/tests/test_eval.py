import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import confusion_f1
from tabsense.config import NetworkShape, PipelineConfig
from tabsense.corpus import Column, Table, TypeVocabulary
from tabsense.crf import CrfTrainConfig
from tabsense.evaluation import (
    AblationResult, PredictionRecord, f1_report, mean_ci, per_type_delta, permutation_importance,
    run_ablation,
)
from tabsense.neural import TrainConfig
from tabsense.pipeline import prepare, train_pipeline
from tabsense.synthetic import context_corpus, context_vocabulary
from tabsense.topics import LdaConfig


def recs(pairs):
    return [PredictionRecord("t", i, g, p) for i, (g, p) in enumerate(pairs)]


def test_all_correct():
    r = f1_report(recs([(0, 0), (1, 1), (1, 1)]), ["a", "b"])
    assert r.macro_f1 == r.weighted_f1 == 1.0


def test_hand_example():
    # A: 1 TP and 1 FN (predicted as a third type C); B: 1 TP
    r = f1_report(recs([(0, 0), (0, 2), (1, 1)]), ["A", "B", "C"])
    a, b, c = r.per_type
    assert (a.precision, a.recall) == (1.0, 0.5)
    assert a.f1 == pytest.approx(2 / 3)
    assert b.f1 == 1.0
    assert c.support == 0 and c.f1 == 0.0
    assert r.macro_f1 == pytest.approx(5 / 6)
    assert r.weighted_f1 == pytest.approx((2 * 2 / 3 + 1) / 3)


def test_degenerate_zero_not_nan():
    r = f1_report(recs([(0, 1), (1, 1)]), ["a", "b", "c"])
    assert r.per_type[0].f1 == 0.0 and r.per_type[2].f1 == 0.0
    assert np.isfinite(r.macro_f1)
    with pytest.raises(ValueError):
        f1_report([], ["a"])
    with pytest.raises(ValueError):
        f1_report(recs([(0, 5)]), ["a"])


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=40))
@settings(max_examples=200)
def test_matches_confusion_oracle(pairs):
    r = f1_report(recs(pairs), list("abcde"))
    rows, macro, weighted = confusion_f1([g for g, _ in pairs], [p for _, p in pairs], 5)
    assert [(s.precision, s.recall, s.f1, s.support) for s in r.per_type] == rows
    assert r.macro_f1 == macro and r.weighted_f1 == weighted
    assert all(0 <= s.f1 <= 1 for s in r.per_type)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=30), st.integers(2, 4))
def test_duplication_invariance(pairs, times):
    r1 = f1_report(recs(pairs), list("abcd"))
    r2 = f1_report(recs(pairs * times), list("abcd"))
    assert r2.weighted_f1 == pytest.approx(r1.weighted_f1, abs=1e-12)
    assert r2.macro_f1 == pytest.approx(r1.macro_f1, abs=1e-12)


def test_macro_invariant_to_one_type_support():
    # type 0 has no confusions with other types, so scaling its records keeps every ratio
    base = [(0, 0), (0, 0), (1, 1), (1, 2), (2, 2), (2, 1)]
    more = base + [(0, 0)] * 10
    r1, r2 = f1_report(recs(base), list("abc")), f1_report(recs(more), list("abc"))
    assert r1.macro_f1 == pytest.approx(r2.macro_f1, abs=1e-15)
    assert r1.weighted_f1 != r2.weighted_f1


def test_tsv():
    r = f1_report(recs([(0, 0)]), ["a", "b"])
    lines = r.to_tsv().splitlines()
    assert lines[0] == "type\tprecision\trecall\tf1\tsupport"
    assert lines[1] == "a\t1.000000\t1.000000\t1.000000\t1"


def test_per_type_delta():
    a = f1_report(recs([(0, 0), (1, 1), (2, 0)]), list("abc"))
    b = f1_report(recs([(0, 1), (1, 1), (2, 2)]), list("abc"))
    d = per_type_delta(a, b)
    assert d.improved + d.equal + d.worsened == 3
    assert [r.type for r in d.rows][0] == "a"
    same = per_type_delta(a, a)
    assert all(r.delta == 0 for r in same.rows) and same.equal == 3
    with pytest.raises(ValueError):
        per_type_delta(a, f1_report(recs([(0, 0)]), list("xyz")))


def test_mean_ci():
    m, h = mean_ci([1.0, 2.0, 3.0])
    assert m == 2.0 and h == pytest.approx(1.96 * 1.0 / np.sqrt(3))
    assert mean_ci([0.5]) == (0.5, 0.0)


def _fast_cfg(epochs=15):
    return PipelineConfig(
        lda=LdaConfig(topics=4, iterations=30, infer_iterations=20, infer_burn_in=10),
        network=NetworkShape(16, 8, 16, 0.1),
        train=TrainConfig(epochs=epochs, learning_rate=1e-2, batch_size=32),
        crf=CrfTrainConfig(epochs=3),
    )


def test_single_type_corpus_all_perfect():
    rng = np.random.default_rng(0)
    tables = [Table(f"t{i}", tuple(Column("v", tuple(str(x) for x in rng.integers(0, 9, 4)), 0) for _ in range(2)))
              for i in range(10)]
    result = run_ablation(tables, TypeVocabulary(("v",)), _fast_cfg(2), k=2, seed=0)
    for fold in result.folds:
        assert {m: r.macro_f1 for m, r in fold.items()} == {m: 1.0 for m in fold}
    agg = result.aggregate()
    assert agg["full"]["macro_f1"] == (1.0, 0.0)
    assert result.to_tsv().splitlines()[0].startswith("model\tmacro_f1")


@pytest.fixture(scope="module")
def trained():
    tables = context_corpus(120, seed=3)
    cfg = _fast_cfg()
    bundle = train_pipeline(tables[:90], context_vocabulary(), cfg)
    return bundle, prepare(tables[90:], bundle)


def test_permutation_identity_is_zero(trained):
    bundle, test = trained
    ident = lambda n, rng: np.arange(n)  # noqa: E731
    for group in ("char", "stat", "topic"):
        drop = permutation_importance(bundle, test, group, "full", trials=2, permuter=ident)
        assert drop == {"macro": 0.0, "weighted": 0.0}


def test_permutation_of_ignored_group_is_zero(trained):
    bundle, test = trained
    clf = bundle.classifier_topic.copy()
    clf.params["word.W1"][:] = 0.0
    silenced = dataclasses.replace(bundle, classifier_topic=clf)
    drop = permutation_importance(silenced, test, "word", "nostruct", trials=3, seed=1)
    assert drop == {"macro": 0.0, "weighted": 0.0}


def test_permutation_importance_errors(trained):
    bundle, test = trained
    with pytest.raises(ValueError):
        permutation_importance(bundle, test, "topic", "base")
    with pytest.raises(ValueError):
        permutation_importance(bundle, test, "char", "full", trials=0)
    with pytest.raises(ValueError):
        permutation_importance(bundle, test, "pixels", "full")
    out = permutation_importance(bundle, test, "topic", "nostruct", trials=2)
    assert set(out) == {"macro", "weighted"}


def test_ablation_json_shape():
    r = f1_report(recs([(0, 0)]), ["a"])
    res = AblationResult([{"base": r, "notopic": r, "nostruct": r, "full": r}])
    assert '"Sato_noTopic"' in res.to_json()
