"""Multi-input column classifier with hand-written backpropagation.

Each embedding-like group (char, word, para and optionally topic) goes
through its own dense-ReLU-dense subnetwork. The subnetwork outputs are
concatenated with the 27 stat features and fed to a primary network of two
dense-batchnorm-ReLU-dropout blocks and a softmax output layer.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .featurizer import ColumnFeatures, GROUPS, stack_features

log = logging.getLogger(__name__)

SUBNET_GROUPS = ("char", "word", "para")
BN_MOMENTUM = 0.1
BN_EPS = 1e-5


@dataclass(frozen=True)
class NetworkConfig:
    type_count: int
    subnet_hidden: int = 64
    subnet_out: int = 32
    primary_hidden: int = 128
    dropout_rate: float = 0.3
    use_topic: bool = False
    seed: int = 0
    activation: str = "relu"

    def __post_init__(self):
        if min(self.type_count, self.subnet_hidden, self.subnet_out, self.primary_hidden) <= 0:
            raise ValueError("network widths must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class ClassifierModel:
    config: NetworkConfig
    input_dims: dict[str, int]
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def groups(self) -> tuple[str, ...]:
        return SUBNET_GROUPS + ("topic",) if self.config.use_topic else SUBNET_GROUPS

    def copy(self) -> "ClassifierModel":
        return ClassifierModel(self.config, dict(self.input_dims),
                               {k: v.copy() for k, v in self.params.items()},
                               {k: v.copy() for k, v in self.buffers.items()})


@dataclass
class Dataset:
    """Column features stacked per group, optional topic rows, labels."""
    X: dict[str, np.ndarray]
    topics: np.ndarray | None
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    def take(self, idx) -> "Dataset":
        return Dataset({g: m[idx] for g, m in self.X.items()},
                       None if self.topics is None else self.topics[idx], self.y[idx])

    @classmethod
    def from_examples(cls, examples: Sequence[tuple[ColumnFeatures, np.ndarray | None, int]]) -> "Dataset":
        if not examples:
            raise ValueError("empty dataset")
        X = stack_features([e[0] for e in examples])
        topics = None if examples[0][1] is None else np.stack([e[1] for e in examples])
        return cls(X, topics, np.array([e[2] for e in examples], dtype=np.int64))


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(x):
    return (x > 0).astype(x.dtype)


_ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "identity": (lambda x: x, np.ones_like),
}


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_network(config: NetworkConfig, input_dims: dict[str, int]) -> ClassifierModel:
    """Seeded Glorot-uniform initialization.

    ``input_dims`` maps each input group to its width; it must contain
    ``topic`` when the config asks for the topic subnetwork.
    """
    groups = SUBNET_GROUPS + (("topic",) if config.use_topic else ())
    missing = [g for g in groups + ("stat",) if g not in input_dims]
    if missing:
        raise ValueError(f"missing input dims for {missing}")
    rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    h, o, H = config.subnet_hidden, config.subnet_out, config.primary_hidden
    for g in groups:
        params[f"{g}.W1"] = _glorot(rng, input_dims[g], h)
        params[f"{g}.b1"] = np.zeros(h)
        # output projection is unbiased: the primary batch-norm removes any shift
        params[f"{g}.W2"] = _glorot(rng, h, o)
    concat = o * len(groups) + input_dims["stat"]
    for i, fan_in in ((1, concat), (2, H)):
        # no dense bias here: batch-norm's shift subsumes it
        params[f"primary.W{i}"] = _glorot(rng, fan_in, H)
        params[f"primary.bn{i}.gamma"] = np.ones(H)
        params[f"primary.bn{i}.beta"] = np.zeros(H)
    params["output.W"] = _glorot(rng, H, config.type_count)
    params["output.b"] = np.zeros(config.type_count)
    buffers = {}
    for i in (1, 2):
        buffers[f"primary.bn{i}.running_mean"] = np.zeros(H)
        buffers[f"primary.bn{i}.running_var"] = np.ones(H)
    for g in groups + ("stat",):
        buffers[f"{g}.shift"] = np.zeros(input_dims[g])
        buffers[f"{g}.scale"] = np.ones(input_dims[g])
    dims = {g: int(input_dims[g]) for g in groups + ("stat",)}
    return ClassifierModel(config, dims, params, buffers)


def _check_inputs(model: ClassifierModel, X: dict[str, np.ndarray], topics) -> int:
    if model.config.use_topic and topics is None:
        raise ValueError("model uses topic vectors but none were supplied")
    if not model.config.use_topic and topics is not None:
        raise ValueError("model has no topic subnetwork; topic vectors rejected")
    n = None
    for g in model.groups + ("stat",):
        m = topics if g == "topic" else X[g]
        if m.ndim != 2 or m.shape[1] != model.input_dims[g]:
            raise ValueError(f"{g} input has shape {m.shape}, expected (n, {model.input_dims[g]})")
        if n is None:
            n = m.shape[0]
        elif m.shape[0] != n:
            raise ValueError("inputs disagree on batch size")
    return n


def forward_batch(model: ClassifierModel, X: dict[str, np.ndarray], topics: np.ndarray | None = None,
                  mode: str = "eval", rng: np.random.Generator | None = None,
                  dropout: bool = True):
    """Run the network on a batch.

    Returns ``(logits, cache)``. The model is not mutated; in train mode the
    updated batch-norm running statistics are returned in ``cache["running"]``.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    _check_inputs(model, X, topics)
    act, _ = _ACTIVATIONS[model.config.activation]
    p, b = model.params, model.buffers
    cache: dict = {"mode": mode, "acts": {}}
    outs = []
    for g in model.groups:
        x = topics if g == "topic" else X[g]
        x = (x - b[f"{g}.shift"]) / b[f"{g}.scale"]
        z1 = x @ p[f"{g}.W1"] + p[f"{g}.b1"]
        a1 = act(z1)
        outs.append(a1 @ p[f"{g}.W2"])
        cache["acts"][g] = (x, z1, a1)
    stat = (X["stat"] - b["stat.shift"]) / b["stat.scale"]
    h = np.concatenate(outs + [stat], axis=1)
    cache["concat"] = h
    running = {}
    rate = model.config.dropout_rate if (mode == "train" and dropout) else 0.0
    for i in (1, 2):
        z = h @ p[f"primary.W{i}"]
        rm, rv = b[f"primary.bn{i}.running_mean"], b[f"primary.bn{i}.running_var"]
        if mode == "train":
            mu, var = z.mean(axis=0), z.var(axis=0)
            n = z.shape[0]
            unbiased = var * n / (n - 1) if n > 1 else var
            running[f"primary.bn{i}.running_mean"] = (1 - BN_MOMENTUM) * rm + BN_MOMENTUM * mu
            running[f"primary.bn{i}.running_var"] = (1 - BN_MOMENTUM) * rv + BN_MOMENTUM * unbiased
        else:
            mu, var = rm, rv
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (z - mu) * inv_std
        y = p[f"primary.bn{i}.gamma"] * xhat + p[f"primary.bn{i}.beta"]
        a = act(y)
        if rate > 0:
            if rng is None:
                raise ValueError("train-mode dropout needs an rng")
            mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
        else:
            mask = None
        cache[f"block{i}"] = (h, xhat, inv_std, y, mask)
        h = a * mask if mask is not None else a
    cache["last"] = h
    cache["running"] = running
    logits = h @ p["output.W"] + p["output.b"]
    return logits, cache


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward(model: ClassifierModel, features: ColumnFeatures, topic: np.ndarray | None = None,
            mode: str = "eval", rng: np.random.Generator | None = None) -> np.ndarray:
    """Type distribution for a single column."""
    X = {g: features.group(g)[None, :] for g in GROUPS}
    logits, _ = forward_batch(model, X, None if topic is None else np.asarray(topic)[None, :], mode, rng)
    return softmax(logits)[0]


def predict_proba(model: ClassifierModel, X: dict[str, np.ndarray], topics: np.ndarray | None = None) -> np.ndarray:
    return softmax(forward_batch(model, X, topics, "eval")[0])


def predict_log_proba(model: ClassifierModel, X: dict[str, np.ndarray], topics: np.ndarray | None = None) -> np.ndarray:
    return log_softmax(forward_batch(model, X, topics, "eval")[0])


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    return float(-log_softmax(logits)[np.arange(len(y)), y].mean())


def backward(model: ClassifierModel, logits: np.ndarray, cache: dict, y: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the mean cross-entropy with respect to every parameter."""
    _, dact = _ACTIVATIONS[model.config.activation]
    p = model.params
    n = logits.shape[0]
    grads: dict[str, np.ndarray] = {}
    d = softmax(logits)
    d[np.arange(n), y] -= 1.0
    d /= n
    grads["output.W"] = cache["last"].T @ d
    grads["output.b"] = d.sum(axis=0)
    dh = d @ p["output.W"].T
    train = cache["mode"] == "train"
    for i in (2, 1):
        h_in, xhat, inv_std, y_bn, mask = cache[f"block{i}"]
        if mask is not None:
            dh = dh * mask
        dy = dh * dact(y_bn)
        grads[f"primary.bn{i}.gamma"] = (dy * xhat).sum(axis=0)
        grads[f"primary.bn{i}.beta"] = dy.sum(axis=0)
        dxhat = dy * p[f"primary.bn{i}.gamma"]
        if train:
            m = dxhat.shape[0]
            dz = inv_std / m * (m * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        else:
            dz = dxhat * inv_std
        grads[f"primary.W{i}"] = h_in.T @ dz
        dh = dz @ p[f"primary.W{i}"].T
    o = model.config.subnet_out
    for j, g in enumerate(model.groups):
        dout = dh[:, j * o:(j + 1) * o]
        x, z1, a1 = cache["acts"][g]
        grads[f"{g}.W2"] = a1.T @ dout
        dz1 = (dout @ p[f"{g}.W2"].T) * dact(z1)
        grads[f"{g}.W1"] = x.T @ dz1
        grads[f"{g}.b1"] = dz1.sum(axis=0)
    return {k: grads[k] for k in p}


def _decayed(name: str) -> bool:
    return name.rsplit(".", 1)[-1].startswith("W")


def fit_input_scaling(model: ClassifierModel, data: Dataset) -> ClassifierModel:
    """Standardize every input group with statistics from ``data``."""
    out = model.copy()
    for g in model.groups + ("stat",):
        m = data.topics if g == "topic" else data.X[g]
        std = m.std(axis=0)
        out.buffers[f"{g}.shift"] = m.mean(axis=0)
        out.buffers[f"{g}.scale"] = np.where(std > 1e-12, std, 1.0)
    return out


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(n)
    return np.array_split(perm, max(1, -(-n // batch_size)))


def dataset_loss(model: ClassifierModel, data: Dataset) -> float:
    logits, _ = forward_batch(model, data.X, data.topics, "eval")
    return cross_entropy(logits, data.y)


def train_classifier(model: ClassifierModel, dataset, tc: TrainConfig,
                     scale_inputs: bool = True) -> tuple[ClassifierModel, list[float]]:
    """Minimize cross-entropy with Adam and decoupled weight decay.

    Returns the trained copy and a loss trace: the eval-mode training loss
    before the first epoch followed by its value after every epoch.
    """
    data = dataset if isinstance(dataset, Dataset) else Dataset.from_examples(dataset)
    if len(data) == 0:
        raise ValueError("empty dataset")
    if data.y.min() < 0 or data.y.max() >= model.config.type_count:
        raise ValueError("label out of range")
    model = fit_input_scaling(model, data) if scale_inputs else model.copy()
    rng = np.random.default_rng(tc.seed)
    b1, b2, eps = 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(v) for k, v in model.params.items()}
    v = {k: np.zeros_like(v) for k, v in model.params.items()}
    step = 0
    trace = [dataset_loss(model, data)]
    for epoch in range(tc.epochs):
        for idx in _batches(len(data), tc.batch_size, rng):
            batch = data.take(idx)
            logits, cache = forward_batch(model, batch.X, batch.topics, "train", rng)
            loss = cross_entropy(logits, batch.y)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss {loss} at epoch {epoch + 1}, step {step + 1}")
            grads = backward(model, logits, cache, batch.y)
            model.buffers.update(cache["running"])
            step += 1
            c1, c2 = 1 - b1 ** step, 1 - b2 ** step
            for k, param in model.params.items():
                g = grads[k]
                m[k] = b1 * m[k] + (1 - b1) * g
                v[k] = b2 * v[k] + (1 - b2) * g * g
                if tc.weight_decay and _decayed(k):
                    param *= 1 - tc.learning_rate * tc.weight_decay
                param -= tc.learning_rate * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps)
        trace.append(dataset_loss(model, data))
        if not np.isfinite(trace[-1]):
            raise FloatingPointError(f"non-finite training loss after epoch {epoch + 1}")
        log.debug("epoch %d loss %.6f", epoch + 1, trace[-1])
    return model, trace


def gradient_check(model: ClassifierModel, example, epsilon: float = 1e-5,
                   mode: str = "eval") -> float:
    """Max relative error between analytic and central-difference gradients.

    ``example`` is a :class:`Dataset` (or a list of ``(features, topic,
    label)``). Dropout is disabled; ``mode`` selects batch-norm behaviour.
    """
    data = example if isinstance(example, Dataset) else Dataset.from_examples(example)
    # finite-difference losses run in extended precision: in float64 the loss
    # moves by under one ulp for gradient entries near 1e-8
    wide = np.longdouble
    wdata = Dataset({g: m.astype(wide) for g, m in data.X.items()},
                    None if data.topics is None else data.topics.astype(wide), data.y)

    def loss_of(m):
        logits = forward_batch(m, wdata.X, wdata.topics, mode, dropout=False)[0]
        return -log_softmax(logits)[np.arange(len(wdata.y)), wdata.y].mean()

    logits, cache = forward_batch(model, data.X, data.topics, mode, dropout=False)
    analytic = backward(model, logits, cache, data.y)
    probe = ClassifierModel(model.config, dict(model.input_dims),
                            {k: v.astype(wide) for k, v in model.params.items()},
                            {k: v.astype(wide) for k, v in model.buffers.items()})
    step = wide(epsilon)
    worst = 0.0
    for name, param in probe.params.items():
        flat = param.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_of(probe)
            flat[i] = orig - step
            down = loss_of(probe)
            flat[i] = orig
            num = float((up - down) / (2 * step))
            a = analytic[name].reshape(-1)[i]
            worst = max(worst, abs(a - num) / max(1e-8, abs(a) + abs(num)))
    return worst


def relu_margin(model: ClassifierModel, data: Dataset, mode: str = "eval") -> float:
    """Smallest absolute ReLU pre-activation on ``data``.

    Central differences are only meaningful when this exceeds the step size;
    otherwise a perturbation can cross the kink at zero.
    """
    _, cache = forward_batch(model, data.X, data.topics, mode, dropout=False)
    pre = [z1 for _, z1, _ in cache["acts"].values()] + [cache[f"block{i}"][3] for i in (1, 2)]
    return float(min(np.abs(z).min() for z in pre))
