"""Pipeline configuration and its flat ``section.key=value`` text form."""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .crf import CrfTrainConfig
from .featurizer import FeatureConfig
from .neural import TrainConfig
from .topics import LdaConfig


@dataclass(frozen=True)
class CorpusConfig:
    min_support: int = 20
    folds: int = 5


@dataclass(frozen=True)
class NetworkShape:
    """Classifier widths; the type count and topic input are fixed at train time."""
    subnet_hidden: int = 64
    subnet_out: int = 32
    primary_hidden: int = 128
    dropout_rate: float = 0.3


@dataclass(frozen=True)
class PipelineConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    lda: LdaConfig = field(default_factory=LdaConfig)
    network: NetworkShape = field(default_factory=NetworkShape)
    train: TrainConfig = field(default_factory=TrainConfig)
    crf: CrfTrainConfig = field(default_factory=CrfTrainConfig)

    def with_seed(self, seed: int) -> "PipelineConfig":
        return dataclasses.replace(
            self,
            lda=dataclasses.replace(self.lda, seed=seed),
            train=dataclasses.replace(self.train, seed=seed),
            crf=dataclasses.replace(self.crf, seed=seed),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        kwargs = {}
        for f in dataclasses.fields(cls):
            sub = _section_types()[f.name]
            kwargs[f.name] = sub(**d.get(f.name, {}))
        return cls(**kwargs)

    def to_text(self) -> str:
        lines = []
        for section, values in self.to_dict().items():
            for key, value in values.items():
                lines.append(f"{section}.{key}={_fmt(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        types = _section_types()
        values: dict[str, dict] = {name: {} for name in types}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            section, _, name = key.partition(".")
            if section not in types:
                raise ValueError(f"config line {lineno}: unknown section {section!r}")
            hints = typing.get_type_hints(types[section])
            if name not in hints:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            values[section][name] = _parse(value, hints[name], key)
        return cls(**{s: types[s](**v) for s, v in values.items()})

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _section_types() -> dict[str, type]:
    return {f.name: typing.get_type_hints(PipelineConfig)[f.name] for f in dataclasses.fields(PipelineConfig)}


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        # escape so alphabets with spaces or trailing whitespace survive stripping
        return value.encode("unicode_escape").decode("ascii").replace(" ", "\\x20")
    return repr(value)


def _parse(text: str, hint, key: str):
    args = typing.get_args(hint)
    optional = type(None) in args
    if optional and text.lower() == "none":
        return None
    base = next((a for a in args if a is not type(None)), hint) if args else hint
    try:
        if base is bool:
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        if base is int:
            return int(text)
        if base is float:
            return float(text)
        if base is str:
            return text.encode("ascii").decode("unicode_escape")
    except ValueError as exc:
        raise ValueError(f"bad value for {key}: {text!r}") from exc
    raise ValueError(f"unsupported type for {key}")
