"""Context-disambiguation experiment: Base / noTopic / noStruct / full on the
synthetic person-vs-company corpus, one fold per seed.

    python3 scripts/context_experiment.py --seeds 0 1 2 --out results/context.tsv
"""
import argparse
import logging
import statistics
from pathlib import Path

from tabsense.config import PipelineConfig
from tabsense.evaluation import ABLATION_NAMES
from tabsense.experiments import context_experiment
from tabsense.pipeline import MODES


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--tables", type=int, default=2000)
    ap.add_argument("--config", help="key=value config (defaults otherwise)")
    ap.add_argument("--out", help="TSV path (stdout if omitted)")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()

    runs = [context_experiment(seed, n_tables=args.tables, cfg=cfg) for seed in args.seeds]
    lines = ["seed\tmodel\tmacro_f1\tweighted_f1\tambiguous_accuracy"]
    for r in runs:
        lines += r.rows()
    for m in MODES:
        med = statistics.median(r.macro_f1[m] for r in runs)
        acc = statistics.median(r.ambiguous_accuracy[m] for r in runs)
        lines.append(f"median\t{ABLATION_NAMES[m]}\t{med:.4f}\t\t{acc:.4f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")


if __name__ == "__main__":
    main()
