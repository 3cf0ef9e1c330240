"""Single-file, versioned model bundle.

Layout (all integers little-endian)::

    magic        8 bytes  b"TABSENSE"
    version      u32
    n_sections   u32
    section*     name_len u32, name utf-8, kind u8, payload_len u64, payload

Section kinds: 0 = UTF-8 text, 1 = tensor. A tensor payload is ``ndim u32``,
``ndim`` x ``u64`` dims, then the values as row-major float64. The ``meta``
section is canonical JSON (sorted keys, no whitespace).
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .corpus import TypeVocabulary
from .crf import CrfModel
from .featurizer import FeatureConfig
from .neural import ClassifierModel, NetworkConfig
from .pipeline import ModelBundle
from .topics import LdaModel

MAGIC = b"TABSENSE"
FORMAT_VERSION = 1
TEXT, TENSOR = 0, 1


class BundleFormatError(ValueError):
    pass


def _tensor_bytes(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype="<f8")
    head = struct.pack("<I", a.ndim) + b"".join(struct.pack("<Q", d) for d in a.shape)
    return head + a.tobytes(order="C")


def _tensor_from(payload: bytes) -> np.ndarray:
    (ndim,) = struct.unpack_from("<I", payload, 0)
    shape = struct.unpack_from(f"<{ndim}Q", payload, 4)
    start = 4 + 8 * ndim
    count = int(np.prod(shape)) if ndim else 1
    if len(payload) != start + 8 * count:
        raise BundleFormatError("tensor payload length mismatch")
    return np.frombuffer(payload, dtype="<f8", offset=start, count=count).reshape(shape).astype(np.float64)


def _classifier_sections(prefix: str, model: ClassifierModel, sections: list, meta: dict) -> None:
    meta[prefix] = {"config": vars(model.config), "input_dims": model.input_dims,
                    "params": list(model.params), "buffers": list(model.buffers)}
    for k, v in model.params.items():
        sections.append((f"{prefix}.param.{k}", TENSOR, _tensor_bytes(v)))
    for k, v in model.buffers.items():
        sections.append((f"{prefix}.buffer.{k}", TENSOR, _tensor_bytes(v)))


def to_bytes(bundle: ModelBundle) -> bytes:
    bundle.validate()
    sections: list[tuple[str, int, bytes]] = []
    meta = {
        "format_version": FORMAT_VERSION,
        "feature_config": vars(bundle.feature_config),
        "config": bundle.config.to_dict(),
        "training_metadata": bundle.training_metadata,
        "stages": [s for s in ("lda", "classifier_base", "classifier_topic", "crf", "crf_notopic",
                               "type_topic_means") if getattr(bundle, s) is not None],
    }
    sections.append(("vocabulary", TEXT, "".join(n + "\n" for n in bundle.vocabulary.names).encode("utf-8")))
    if bundle.lda is not None:
        lda = bundle.lda
        meta["lda"] = {"alpha": lda.alpha, "beta": lda.beta, "iterations": lda.iterations, "seed": lda.seed}
        sections.append(("lda.vocab", TEXT, "".join(t + "\n" for t in lda.tokens()).encode("utf-8", "surrogatepass")))
        sections.append(("lda.topic_word", TENSOR, _tensor_bytes(lda.topic_word)))
    for name in ("classifier_base", "classifier_topic"):
        model = getattr(bundle, name)
        if model is not None:
            _classifier_sections(name, model, sections, meta)
    for name in ("crf", "crf_notopic"):
        model = getattr(bundle, name)
        if model is not None:
            meta[name] = model.train_meta
            sections.append((f"{name}.pairwise", TENSOR, _tensor_bytes(model.pairwise)))
    if bundle.type_topic_means is not None:
        sections.append(("type_topic_means", TENSOR, _tensor_bytes(bundle.type_topic_means)))
    sections.insert(0, ("meta", TEXT, json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")))

    out = io.BytesIO()
    out.write(MAGIC + struct.pack("<II", FORMAT_VERSION, len(sections)))
    for name, kind, payload in sections:
        raw = name.encode("utf-8")
        out.write(struct.pack("<I", len(raw)) + raw + struct.pack("<BQ", kind, len(payload)) + payload)
    return out.getvalue()


def _read_sections(data: bytes) -> tuple[int, dict[str, tuple[int, bytes]]]:
    if data[:8] != MAGIC:
        raise BundleFormatError("not a model bundle (bad magic)")
    try:
        version, n = struct.unpack_from("<II", data, 8)
        pos = 16
        sections = {}
        for _ in range(n):
            (name_len,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos:pos + name_len].decode("utf-8")
            pos += name_len
            kind, size = struct.unpack_from("<BQ", data, pos)
            pos += 9
            payload = data[pos:pos + size]
            if len(payload) != size:
                raise BundleFormatError(f"section {name!r} truncated")
            pos += size
            sections[name] = (kind, payload)
    except struct.error as exc:
        raise BundleFormatError(f"truncated bundle: {exc}") from exc
    if pos != len(data):
        raise BundleFormatError("trailing bytes after last section")
    return version, sections


def from_bytes(data: bytes) -> ModelBundle:
    if data[:8] == MAGIC and len(data) >= 12:
        (version,) = struct.unpack_from("<I", data, 8)
        if version != FORMAT_VERSION:
            raise BundleFormatError(f"unsupported bundle format version {version}")
    version, sections = _read_sections(data)

    def text(name):
        return sections[name][1].decode("utf-8", "surrogatepass")

    def tensor(name):
        kind, payload = sections[name]
        if kind != TENSOR:
            raise BundleFormatError(f"section {name!r} is not a tensor")
        return _tensor_from(payload)

    meta = json.loads(text("meta"))
    if meta.get("format_version") != FORMAT_VERSION:
        raise BundleFormatError(f"unsupported bundle format version {meta.get('format_version')}")
    vocab = TypeVocabulary(tuple(n for n in text("vocabulary").split("\n") if n))
    bundle = ModelBundle(FeatureConfig(**meta["feature_config"]), vocab,
                         PipelineConfig.from_dict(meta["config"]),
                         training_metadata=meta["training_metadata"])
    if "lda" in meta:
        tokens = text("lda.vocab").split("\n")[:-1]
        m = meta["lda"]
        bundle.lda = LdaModel(tensor("lda.topic_word"), {t: i for i, t in enumerate(tokens)},
                              m["alpha"], m["beta"], m["iterations"], m["seed"])
    for name in ("classifier_base", "classifier_topic"):
        if name in meta:
            m = meta[name]
            bundle_model = ClassifierModel(
                NetworkConfig(**m["config"]), {k: int(v) for k, v in m["input_dims"].items()},
                {k: tensor(f"{name}.param.{k}") for k in m["params"]},
                {k: tensor(f"{name}.buffer.{k}") for k in m["buffers"]})
            setattr(bundle, name, bundle_model)
    for name in ("crf", "crf_notopic"):
        if name in meta:
            setattr(bundle, name, CrfModel(tensor(f"{name}.pairwise"), meta[name]))
    if "type_topic_means" in sections:
        bundle.type_topic_means = tensor("type_topic_means")
    bundle.validate()
    return bundle


def save(bundle: ModelBundle, path) -> None:
    Path(path).write_bytes(to_bytes(bundle))


def load(path) -> ModelBundle:
    return from_bytes(Path(path).read_bytes())
