"""Write the synthetic context corpus as CSV files (one table per file)."""
import argparse
import csv
from pathlib import Path

from tabsense.synthetic import context_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--tables", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t in context_corpus(args.tables, args.seed):
        with open(out / f"{t.id}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([c.header_raw for c in t.columns])
            w.writerows(zip(*(c.cells for c in t.columns)))
    print(f"wrote {args.tables} tables to {out}")


if __name__ == "__main__":
    main()
