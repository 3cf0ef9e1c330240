"""Top-word purity of a two-topic LDA on disjoint vocabularies, per seed and
iteration budget."""
import argparse

from tabsense.synthetic import separable_documents
from tabsense.topics import heldout_log_likelihood, train_lda


def purity(model, n=10):
    out = []
    for k in range(model.K):
        heads = [w[0] for w in model.top_words(k, n)]
        out.append(max(heads.count("x"), heads.count("y")) / n)
    return min(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--iters", type=int, nargs="+", default=[10, 50, 200, 500])
    args = ap.parse_args()
    docs = separable_documents(200, 50, 50, seed=0)
    held = separable_documents(40, 50, 50, seed=1)
    print("seed\titers\tpurity\theldout_ll")
    for seed in range(args.seeds):
        for it in args.iters:
            m = train_lda(docs, K=2, iters=it, seed=seed)
            print(f"{seed}\t{it}\t{purity(m):.2f}\t{heldout_log_likelihood(m, held):.4f}")


if __name__ == "__main__":
    main()
