import numpy as np
import pytest

from oracles import batchnorm_train, gradcheck_case
from tabsense.corpus import Column
from tabsense.featurizer import FeatureConfig, featurize_column
from tabsense.neural import (
    BN_EPS, Dataset, NetworkConfig, TrainConfig, backward, cross_entropy, forward, forward_batch,
    gradient_check, init_network, predict_proba, softmax, train_classifier,
)

DIMS = {"char": 6, "word": 5, "para": 4, "stat": 7, "topic": 3}


def small(use_topic=False, **kw):
    cfg = NetworkConfig(type_count=4, subnet_hidden=8, subnet_out=4, primary_hidden=8, use_topic=use_topic, **kw)
    return init_network(cfg, DIMS)


def batch(n, rng, use_topic=False, types=4):
    X = {g: rng.normal(size=(n, DIMS[g])) for g in ("char", "word", "para", "stat")}
    topics = rng.dirichlet(np.ones(3), size=n) if use_topic else None
    return Dataset(X, topics, rng.integers(0, types, size=n))


def test_init_deterministic_and_seeded():
    a, b, c = small(seed=1), small(seed=1), small(seed=2)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert not np.array_equal(a.params["char.W1"], c.params["char.W1"])


def test_parameter_layout():
    m = small(use_topic=True)
    assert m.params["topic.W1"].shape == (3, 8)
    # subnets out 4 wide each (char, word, para, topic) plus the raw stat block
    assert m.params["primary.W1"].shape == (4 * 4 + 7, 8)
    assert m.params["output.W"].shape == (8, 4)
    assert "primary.b1" not in m.params


def test_softmax_output_and_eval_determinism():
    m = small()
    d = batch(5, np.random.default_rng(0))
    p = predict_proba(m, d.X)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert ((p > 0) & (p < 1)).all()
    assert np.array_equal(p, predict_proba(m, d.X))
    # eval rows are independent of the rest of the batch
    assert np.array_equal(predict_proba(m, {g: x[:2] for g, x in d.X.items()}), p[:2])


def test_single_column_forward():
    cfg = FeatureConfig(d_word=5, d_para=4, char_alphabet="abc")
    dims = dict(cfg.dims())
    model = init_network(NetworkConfig(type_count=3, subnet_hidden=4, subnet_out=2, primary_hidden=4), dims)
    f = featurize_column(Column("h", ("abc", "cab")), cfg)
    p = forward(model, f)
    assert p.shape == (3,) and abs(p.sum() - 1.0) < 1e-12


def test_train_mode_batchnorm_matches_oracle():
    m = small(dropout_rate=0.0)
    d = batch(6, np.random.default_rng(1))
    _, cache = forward_batch(m, d.X, None, "train", dropout=False)
    h = cache["concat"]
    z = h @ m.params["primary.W1"]
    expected = batchnorm_train(z, m.params["primary.bn1.gamma"], m.params["primary.bn1.beta"], BN_EPS)
    assert np.allclose(cache["block1"][3], expected, rtol=1e-12, atol=1e-12)
    # train-mode rows depend on their batch mates
    logits_full, _ = forward_batch(m, d.X, None, "train", dropout=False)
    logits_part, _ = forward_batch(m, {g: x[:3] for g, x in d.X.items()}, None, "train", dropout=False)
    assert not np.allclose(logits_full[:3], logits_part)
    # running statistics: momentum 0.1 with the unbiased batch variance
    run = cache["running"]
    assert np.allclose(run["primary.bn1.running_mean"], 0.1 * z.mean(axis=0))
    assert np.allclose(run["primary.bn1.running_var"], 0.9 + 0.1 * z.var(axis=0, ddof=1))
    assert np.array_equal(m.buffers["primary.bn1.running_mean"], np.zeros(8))


def test_dropout_needs_rng_and_scales():
    m = small(dropout_rate=0.5)
    d = batch(4, np.random.default_rng(2))
    with pytest.raises(ValueError):
        forward_batch(m, d.X, None, "train")
    _, cache = forward_batch(m, d.X, None, "train", np.random.default_rng(0))
    mask = cache["block1"][4]
    assert set(np.unique(mask)) <= {0.0, 2.0}


def test_topic_rejection():
    d = batch(2, np.random.default_rng(0), use_topic=True)
    with pytest.raises(ValueError):
        forward_batch(small(), d.X, d.topics)
    with pytest.raises(ValueError):
        forward_batch(small(use_topic=True), d.X, None)


def test_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig(type_count=0)
    with pytest.raises(ValueError):
        NetworkConfig(type_count=2, dropout_rate=1.0)
    with pytest.raises(ValueError):
        init_network(NetworkConfig(type_count=2, use_topic=True), {k: 2 for k in ("char", "word", "para", "stat")})


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("mode", ["eval", "train"])
def test_gradient_check(seed, mode):
    model, data = gradcheck_case(seed, mode, use_topic=seed % 2 == 1)
    assert gradient_check(model, data, 1e-5, mode) < 1e-4


def test_identity_network_output_gradient_closed_form():
    cfg = NetworkConfig(type_count=3, subnet_hidden=4, subnet_out=3, primary_hidden=5, activation="identity")
    m = init_network(cfg, DIMS)
    d = batch(6, np.random.default_rng(3), types=3)
    logits, cache = forward_batch(m, d.X, None, "eval")
    g = backward(m, logits, cache, d.y)
    # softmax regression on the last hidden layer: dL/dW = H^T (P - Y) / n
    H = cache["last"]
    Y = np.eye(3)[d.y]
    P = softmax(H @ m.params["output.W"] + m.params["output.b"])
    assert np.allclose(g["output.W"], H.T @ (P - Y) / 6, rtol=0, atol=1e-10)
    assert np.allclose(g["output.b"], (P - Y).mean(axis=0), rtol=0, atol=1e-10)
    assert gradient_check(m, d) < 1e-6


def test_zero_input_gradients_finite():
    m = small()
    d = Dataset({g: np.zeros((3, DIMS[g])) for g in ("char", "word", "para", "stat")}, None, np.array([0, 1, 2]))
    logits, cache = forward_batch(m, d.X, None, "train", dropout=False)
    grads = backward(m, logits, cache, d.y)
    assert all(np.all(np.isfinite(v)) for v in grads.values())
    trained, trace = train_classifier(m, d, TrainConfig(epochs=2, batch_size=3))
    assert np.all(np.isfinite(trace))


def _separable(n=400, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 4, size=n)
    centers = rng.normal(scale=3.0, size=(4, sum(DIMS[g] for g in ("char", "word", "para", "stat"))))
    full = centers[y] + rng.normal(size=(n, centers.shape[1]))
    X, at = {}, 0
    for g in ("char", "word", "para", "stat"):
        X[g] = full[:, at:at + DIMS[g]]
        at += DIMS[g]
    return Dataset(X, None, y)


def test_learns_separable_toy():
    data = _separable()
    model, trace = train_classifier(small(), data, TrainConfig(epochs=30, learning_rate=1e-2, batch_size=32))
    acc = (predict_proba(model, data.X).argmax(axis=1) == data.y).mean()
    assert acc >= 0.95
    assert trace[-1] < trace[0]


def test_zero_learning_rate_keeps_parameters():
    m = small()
    data = _separable(64)
    out, trace = train_classifier(m, data, TrainConfig(epochs=3, learning_rate=0.0))
    assert all(np.array_equal(out.params[k], m.params[k]) for k in m.params)
    # batch-norm running statistics still track the data
    assert not np.array_equal(out.buffers["primary.bn1.running_mean"], m.buffers["primary.bn1.running_mean"])


def test_training_deterministic():
    data = _separable(100)
    tc = TrainConfig(epochs=3, learning_rate=1e-2, batch_size=16, seed=5)
    a, ta = train_classifier(small(), data, tc)
    b, tb = train_classifier(small(), data, tc)
    assert ta == tb
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_bad_labels():
    data = _separable(10)
    bad = Dataset(data.X, None, np.full(10, 7))
    with pytest.raises(ValueError):
        train_classifier(small(), bad, TrainConfig(epochs=1))


def test_cross_entropy_value():
    logits = np.log(np.array([[0.5, 0.25, 0.25]]))
    assert cross_entropy(logits, np.array([0])) == pytest.approx(np.log(2))
