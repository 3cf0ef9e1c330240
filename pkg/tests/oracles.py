"""Independent reference implementations used only by the tests."""
import numpy as np


def top_word_purity(model, n=10):
    """Share of each topic's top-n words drawn from its majority vocabulary half."""
    out = []
    for k in range(model.K):
        prefixes = [w[0] for w in model.top_words(k, n)]
        out.append(max(prefixes.count("x"), prefixes.count("y")) / n)
    return out


def confusion_f1(gold, pred, n_types):
    """Per-type (p, r, f1, support) plus macro and weighted F1 from a confusion matrix."""
    cm = np.zeros((n_types, n_types), dtype=int)
    for g, p in zip(gold, pred):
        cm[g, p] += 1
    rows = []
    for t in range(n_types):
        tp = cm[t, t]
        fp = cm[:, t].sum() - tp
        fn = cm[t, :].sum() - tp
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        rows.append((prec, rec, f1, int(cm[t, :].sum())))
    sup = [r for r in rows if r[3] > 0]
    macro = sum(r[2] for r in sup) / len(sup)
    weighted = sum(r[2] * r[3] for r in sup) / sum(r[3] for r in sup)
    return rows, macro, weighted


def batchnorm_train(x, gamma, beta, eps=1e-5):
    mu = x.mean(axis=0)
    var = ((x - mu) ** 2).mean(axis=0)
    return gamma * (x - mu) / np.sqrt(var + eps) + beta


def gradcheck_case(seed, mode="eval", n=None, use_topic=False, min_margin=1e-3, attempts=50):
    """A small random network plus a batch whose ReLU pre-activations stay
    away from the kink, so central differences are well defined."""
    from tabsense.neural import Dataset, NetworkConfig, init_network

    rng = np.random.default_rng(seed)
    n = n or (4 if mode == "eval" else 8)
    cfg = NetworkConfig(type_count=int(rng.integers(2, 6)), subnet_hidden=int(rng.integers(2, 9)),
                        subnet_out=int(rng.integers(2, 9)), primary_hidden=int(rng.integers(2, 9)),
                        dropout_rate=0.5, use_topic=use_topic, seed=seed)
    dims = {"char": 6, "word": 5, "para": 4, "stat": 7, "topic": 3}
    model = init_network(cfg, dims)
    for k, v in model.params.items():
        if k.endswith(("gamma", "beta", "b1", ".b")):
            model.params[k] = v + rng.normal(scale=0.5, size=v.shape)
    for k, v in model.buffers.items():
        if k.endswith("running_mean"):
            model.buffers[k] = rng.normal(scale=0.5, size=v.shape)
        elif k.endswith("running_var"):
            model.buffers[k] = rng.uniform(0.5, 2.0, size=v.shape)
    from tabsense.neural import relu_margin
    for _ in range(attempts):
        X = {g: rng.normal(size=(n, dims[g])) for g in ("char", "word", "para", "stat")}
        topics = rng.dirichlet(np.ones(3), size=n) if use_topic else None
        data = Dataset(X, topics, rng.integers(0, cfg.type_count, size=n))
        if relu_margin(model, data, mode) > min_margin:
            return model, data
    raise RuntimeError("no kink-free batch found")


def crf_instance(rng, m=None, T=None, low=-5.0, high=5.0):
    m = m or int(rng.integers(1, 5))
    T = T or int(rng.integers(1, 7))
    return rng.uniform(low, high, size=(m, T)), rng.uniform(low, high, size=(T, T))


def _enumerate(u, P):
    import itertools
    m, T = u.shape
    seqs = np.array(list(itertools.product(range(T), repeat=m)), dtype=np.int64)
    scores = u[np.arange(m), seqs].sum(axis=1)
    if m > 1:
        scores = scores + P[seqs[:, :-1], seqs[:, 1:]].sum(axis=1)
    return seqs, scores


def _pair_count(seq, idx):
    return sum(1 for a, b in zip(seq[:-1], seq[1:]) if (a, b) == idx)


def brute_nll_difference(batch, P, idx, eps):
    """NLL(P + eps e_idx) - NLL(P - eps e_idx) by enumeration, in extended precision.

    Each log-partition difference is formed as
    log1p(sum_k w_k 2 sinh(eps c_k) / sum_k w_k exp(-eps c_k)), with c_k the
    number of idx-edges in sequence k, so no two nearly equal losses are
    ever subtracted.
    """
    wide = np.longdouble
    P = np.asarray(P, dtype=wide)
    e = wide(eps)
    total = wide(0)
    for u, gold in batch:
        seqs, scores = _enumerate(np.asarray(u, dtype=wide), P)
        w = np.exp(scores - scores.max())
        c = np.array([_pair_count(tuple(s), idx) for s in seqs], dtype=wide)
        minus = (w * np.exp(-e * c)).sum()
        diff = (w * 2 * np.sinh(e * c)).sum()
        total += np.log1p(diff / minus) - 2 * e * _pair_count(tuple(gold), idx)
    return total / len(batch)


def crf_fd_error(batch, P, grad_fn, eps=1e-5):
    """Max relative error of an analytic pairwise gradient against central
    differences of the enumerated NLL."""
    _, analytic = grad_fn(batch, P)
    worst = 0.0
    for idx in np.ndindex(P.shape):
        num = float(brute_nll_difference(batch, P, idx, eps) / (2 * np.longdouble(eps)))
        a = analytic[idx]
        worst = max(worst, abs(a - num) / max(1e-8, abs(a) + abs(num)))
    return worst
