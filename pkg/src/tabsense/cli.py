"""``tabsense`` command line: ingest, train, predict, evaluate, ablate, inspect-topics."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import bundle as bundle_io
from .config import PipelineConfig
from .corpus import (
    Table, TypeVocabulary, build_vocabulary, load_corpus, load_corpus_report, load_table,
    read_folds, relabel, write_folds, write_manifest,
)
from .evaluation import ABLATION_NAMES, evaluate, per_type_delta, run_ablation
from .pipeline import MODES, MissingStageError, predict, prepare, train_pipeline
from .topics import topic_saliency

log = logging.getLogger("tabsense")


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    return cfg.with_seed(args.seed)


def _vocab_for(args, tables, cfg) -> TypeVocabulary:
    path = args.vocab or Path(args.manifest).with_name("vocab.txt")
    if args.vocab or Path(path).exists():
        return TypeVocabulary.load(path)
    return build_vocabulary(tables, cfg.corpus.min_support)


def _split(tables: list[Table], folds_file, fold) -> tuple[list[Table], list[Table]]:
    if fold is None:
        return tables, []
    if folds_file is None:
        raise CliError("usage", "--fold requires --folds")
    assignment = read_folds(folds_file)
    missing = [t.id for t in tables if t.id not in assignment]
    if missing:
        raise CliError("folds", f"{len(missing)} tables missing from fold file, e.g. {missing[0]}")
    train = [t for t in tables if assignment[t.id] != fold]
    test = [t for t in tables if assignment[t.id] == fold]
    return train, test


def cmd_ingest(args) -> None:
    cfg = _config(args)
    tables, skips = load_corpus_report(args.corpus)
    if not tables:
        raise CliError("empty_corpus", f"no readable tables under {args.corpus}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = [os.path.relpath(Path(t.provenance).resolve(), out.resolve()) for t in tables]
    write_manifest(out / "manifest.txt", entries)
    vocab = TypeVocabulary.load(args.vocab) if args.vocab else build_vocabulary(tables, args.min_support or cfg.corpus.min_support)
    vocab.save(out / "vocab.txt")
    # fold ids are manifest entries, which is what reloading the manifest yields
    renamed = [Table(e, t.columns, t.provenance) for e, t in zip(entries, tables)]
    k = args.folds or cfg.corpus.folds
    write_folds(out / "folds.tsv", renamed, k, args.seed)
    labeled = sum(c.label is not None for t in relabel(tables, vocab) for c in t.columns)
    print(f"tables\t{len(tables)}\nskipped\t{len(skips)}\ntypes\t{len(vocab)}\nlabeled_columns\t{labeled}\nfolds\t{k}")


def cmd_train(args) -> None:
    cfg = _config(args)
    tables = load_corpus(args.manifest)
    vocab = _vocab_for(args, tables, cfg)
    tables = relabel(tables, vocab)
    train, _ = _split(tables, args.folds, args.fold)
    lda_tables = load_corpus(args.lda_corpus) if args.lda_corpus else None
    if lda_tables is not None and args.disjoint_lda:
        ids = {t.id for t in train}
        lda_tables = [t for t in lda_tables if t.id not in ids]
    bundle = train_pipeline(train, vocab, cfg, lda_tables=lda_tables,
                            use_lda=not args.no_lda, use_crf=not args.no_crf)
    bundle_io.save(bundle, args.out)
    print(f"model\t{args.out}\nstages\t{','.join(bundle.available_modes())}")


def _table_inputs(paths) -> list[Table]:
    tables = []
    for p in paths:
        p = Path(p)
        if p.is_file() and p.suffix.lower() == ".csv":
            try:
                tables.append(load_table(p))
            except (UnicodeDecodeError, csv.Error) as exc:
                raise CliError("bad_table", f"{p}: {exc}") from exc
        else:
            tables.extend(load_corpus(p))
    return tables


def cmd_predict(args) -> None:
    model = bundle_io.load(args.model)
    model.require(args.mode)
    tables = _table_inputs(args.tables)
    prepared = prepare(tables, model)
    lines = []
    for pred in predict(model, prepared, args.mode):
        for j, (t, c) in enumerate(zip(pred.types, pred.confidence)):
            lines.append(f"{pred.table_id}\t{j}\t{model.vocabulary.names[t]}\t{c:.6f}\n")
    _emit("".join(lines), args.out)


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_evaluate(args) -> None:
    model = bundle_io.load(args.model)
    tables = relabel(load_corpus(args.manifest), model.vocabulary)
    _, test = _split(tables, args.folds, args.fold)
    test = test if args.fold is not None else tables
    modes = model.available_modes() if args.mode == "all" else [args.mode]
    for m in modes:
        model.require(m)
    prepared = prepare(test, model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = {}
    for m in modes:
        reports[m] = evaluate(model, prepared, m)
        (out / f"report_{m}.tsv").write_text(reports[m].to_tsv(), encoding="utf-8")
    if "base" in reports:
        for m in modes:
            if m != "base":
                (out / f"delta_{m}_vs_base.tsv").write_text(per_type_delta(reports[m], reports["base"]).to_tsv(),
                                                           encoding="utf-8")
    summary = {ABLATION_NAMES[m]: r.summary() for m, r in reports.items()}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for m, r in reports.items():
        print(f"{ABLATION_NAMES[m]}\t{r.macro_f1:.4f}\t{r.weighted_f1:.4f}")


def cmd_ablate(args) -> None:
    cfg = _config(args)
    tables = load_corpus(args.manifest)
    vocab = _vocab_for(args, tables, cfg)
    tables = relabel(tables, vocab)
    k = args.k or cfg.corpus.folds
    assignment = None
    if args.folds:
        fold_of = read_folds(args.folds)
        assignment = [fold_of[t.id] for t in tables]
        k = max(assignment) + 1
    folds = [args.fold] if args.fold is not None else None
    result = run_ablation(tables, vocab, cfg, k=k, seed=args.seed, folds=folds, assignment=assignment)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.tsv").write_text(result.to_tsv(), encoding="utf-8")
    (out / "ablation.json").write_text(result.to_json() + "\n", encoding="utf-8")
    for i, fold in enumerate(result.folds):
        for m, r in fold.items():
            (out / f"fold{i}_{m}.tsv").write_text(r.to_tsv(), encoding="utf-8")
        for m in ("nostruct", "notopic", "full"):
            (out / f"fold{i}_delta_{m}_vs_base.tsv").write_text(per_type_delta(fold[m], fold["base"]).to_tsv(),
                                                                encoding="utf-8")
    sys.stdout.write(result.to_tsv())


def cmd_inspect_topics(args) -> None:
    model = bundle_io.load(args.model)
    if model.lda is None or model.type_topic_means is None:
        raise MissingStageError("inspect-topics needs missing stage(s): lda")
    lines = []
    for topic, score, types in topic_saliency(model.type_topic_means, args.k):
        names = ",".join(model.vocabulary.names[t] for t in types)
        lines.append(f"{topic}\t{score:.6f}\t{names}\n")
    _emit("".join(lines), args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabsense", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("--seed", type=int, default=0)
        if config:
            p.add_argument("--config", help="key=value config file")

    p = sub.add_parser("ingest", help="load a corpus, write manifest, vocabulary and folds")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--min-support", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--vocab")
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train LDA, classifiers and CRFs into one model file")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab")
    p.add_argument("--folds", help="fold file; with --fold, train on the other folds")
    p.add_argument("--fold", type=int)
    p.add_argument("--lda-corpus", help="separate corpus for the topic model")
    p.add_argument("--disjoint-lda", action="store_true", help="drop LDA tables that are also training tables")
    p.add_argument("--no-lda", action="store_true", help="skip the topic stage")
    p.add_argument("--no-crf", action="store_true", help="skip the CRF stage")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict column types of tables")
    p.add_argument("model")
    p.add_argument("tables", nargs="+")
    p.add_argument("--mode", choices=MODES, default="full")
    p.add_argument("--out")
    common(p, config=False)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="F1 reports of a model on labeled tables")
    p.add_argument("model")
    p.add_argument("manifest")
    p.add_argument("--folds")
    p.add_argument("--fold", type=int)
    p.add_argument("--mode", choices=MODES + ("all",), default="all")
    p.add_argument("--out", required=True)
    common(p, config=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="cross-validated Base / noTopic / noStruct / full comparison")
    p.add_argument("manifest")
    p.add_argument("--vocab")
    p.add_argument("--folds", help="fold file (default: seeded split)")
    p.add_argument("--k", type=int, help="fold count for a seeded split")
    p.add_argument("--fold", type=int, help="run a single fold")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect-topics", help="rank topics by saliency over semantic types")
    p.add_argument("model")
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--out")
    common(p, config=False)
    p.set_defaults(func=cmd_inspect_topics)
    return parser


_ERROR_CODES = (
    (MissingStageError, "missing_stage"),
    (bundle_io.BundleFormatError, "bad_model"),
    (FileNotFoundError, "not_found"),
    (ValueError, "invalid"),
    (FloatingPointError, "numeric"),
    (OSError, "io"),
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"error\t{exc.code}\t{exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        for kind, code in _ERROR_CODES:
            if isinstance(exc, kind):
                print(f"error\t{code}\t{' '.join(str(exc).split())}", file=sys.stderr)
                return 1
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
