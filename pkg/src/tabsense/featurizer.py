"""Per-column features in four groups: char, word, para and stat.

The char/word/para groups are self-contained stand-ins for pre-trained
embeddings (character distributions and seeded feature hashing); stat is a
fixed block of 27 column statistics.
"""
from __future__ import annotations

import hashlib
import math
import re
import string
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .corpus import Column

GROUPS = ("char", "word", "para", "stat")
STAT_DIM = 27

DEFAULT_ALPHABET = string.ascii_lowercase + string.digits + ".,-_/ "

STAT_NAMES = (
    "numeric_fraction",
    "numeric_mean", "numeric_std", "numeric_min", "numeric_max", "numeric_median",
    "length_mean", "length_std", "length_min", "length_max",
    "tokens_mean", "tokens_std",
    "empty_fraction",
    "unique_fraction",
    "value_entropy",
    "has_digit_fraction", "has_alpha_fraction", "has_punct_fraction", "has_space_fraction",
    "digits_mean", "digits_std",
    "upper_fraction",
    "capitalized_fraction",
    "leading_digit_mean",
    "numeric_skew",
    "log_rows",
    "modal_fraction",
)
assert len(STAT_NAMES) == STAT_DIM

# keeps sums of squares finite for any parseable float
_NUMERIC_CLIP = 1e150
_TOKEN = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class FeatureConfig:
    d_word: int = 128
    d_para: int = 128
    hash_seed: int = 42
    char_alphabet: str = DEFAULT_ALPHABET
    embedding_path: str | None = None

    def __post_init__(self):
        if self.d_word <= 0 or self.d_para <= 0:
            raise ValueError("feature dimensions must be positive")
        if not self.char_alphabet or len(set(self.char_alphabet)) != len(self.char_alphabet):
            raise ValueError("char_alphabet must be non-empty and duplicate-free")

    @property
    def d_char(self) -> int:
        return 2 * len(self.char_alphabet)

    def word_dim(self) -> int:
        if self.embedding_path is not None:
            return load_embeddings(self.embedding_path)[1]
        return self.d_word

    def dims(self) -> dict[str, int]:
        return {"char": self.d_char, "word": self.word_dim(), "para": self.d_para, "stat": STAT_DIM}

    @property
    def total_dim(self) -> int:
        return sum(self.dims().values())


@dataclass(frozen=True)
class ColumnFeatures:
    char: np.ndarray
    word: np.ndarray
    para: np.ndarray
    stat: np.ndarray

    def group(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def concat(self) -> np.ndarray:
        return np.concatenate([self.char, self.word, self.para, self.stat])


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens, splitting on whitespace and punctuation."""
    return _TOKEN.findall(text.lower())


def _pstd(x: np.ndarray) -> float:
    return float(x.std()) if x.size else 0.0


def _parse_number(cell: str) -> float | None:
    try:
        v = float(cell.replace(",", ""))
    except ValueError:
        return None
    if not math.isfinite(v):
        return None
    return min(max(v, -_NUMERIC_CLIP), _NUMERIC_CLIP)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def stat_features(column: Column) -> np.ndarray:
    """27 global statistics of a column, ordered as in ``STAT_NAMES``."""
    cells = column.cells
    n = len(cells)
    out = np.zeros(STAT_DIM)

    nums = np.array([v for v in map(_parse_number, cells) if v is not None], dtype=float)
    out[0] = nums.size / n
    if nums.size:
        mean, std, median = nums.mean(), nums.std(), float(np.median(nums))
        out[1:6] = mean, std, nums.min(), nums.max(), median
        lead = [int(d) for v in nums for d in _leading_digit(v)]
        out[23] = np.mean(lead) if lead else 0.0
        out[24] = (mean - median) / (std + 1e-8)

    lengths = np.array([len(c) for c in cells], dtype=float)
    out[6:10] = lengths.mean(), lengths.std(), lengths.min(), lengths.max()

    ntok = np.array([len(tokenize(c)) for c in cells], dtype=float)
    out[10:12] = ntok.mean(), ntok.std()

    out[12] = sum(c == "" for c in cells) / n

    hist = Counter(cells)
    out[13] = len(hist) / n
    p = np.array(list(hist.values()), dtype=float) / n
    out[14] = max(0.0, float(-(p * np.log(p)).sum()))

    out[15] = sum(any(ch.isdigit() for ch in c) for c in cells) / n
    out[16] = sum(any(ch.isalpha() for ch in c) for c in cells) / n
    out[17] = sum(any(_is_punct(ch) for ch in c) for c in cells) / n
    out[18] = sum(any(ch.isspace() for ch in c) for c in cells) / n

    digits = np.array([sum(ch.isdigit() for ch in c) for c in cells], dtype=float)
    out[19:21] = digits.mean(), digits.std()

    out[21] = sum(c.isupper() for c in cells) / n
    out[22] = sum(c[:1].isupper() for c in cells) / n
    out[25] = math.log1p(n)
    out[26] = max(hist.values()) / n
    return out


def _leading_digit(v: float) -> str:
    for ch in f"{abs(v):.6e}":
        if ch in "123456789":
            return ch
    return ""


def char_features(column: Column, config: FeatureConfig) -> np.ndarray:
    """Mean and std over cells of per-cell character frequencies."""
    alphabet = config.char_alphabet
    pos = {ch: i for i, ch in enumerate(alphabet)}
    freqs = np.zeros((len(column.cells), len(alphabet)))
    for r, cell in enumerate(column.cells):
        text = cell.lower()
        if not text:
            continue
        for ch, k in Counter(text).items():
            i = pos.get(ch)
            if i is not None:
                freqs[r, i] = k / len(text)
    return np.concatenate([freqs.mean(axis=0), freqs.std(axis=0)])


@lru_cache(maxsize=1 << 18)
def _hash(key: str, seed: int) -> int:
    digest = hashlib.blake2b(key.encode("utf-8", "surrogatepass"), digest_size=8,
                             key=seed.to_bytes(8, "little", signed=True)).digest()
    return int.from_bytes(digest, "little")


def hashed_vector(keys: Sequence[str], dim: int, seed: int) -> np.ndarray:
    """Signed feature hashing: sum of +-1 one-hot vectors, one per key."""
    v = np.zeros(dim)
    for key in keys:
        h = _hash(key, seed)
        v[(h >> 1) % dim] += 1.0 if h & 1 else -1.0
    return v


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else np.zeros_like(v)


def word_features(column: Column, config: FeatureConfig) -> np.ndarray:
    tokens = [t for cell in column.cells for t in tokenize(cell)]
    if config.embedding_path is not None:
        table, dim = load_embeddings(config.embedding_path)
        vecs = [table[t] for t in tokens if t in table]
        return _unit(np.mean(vecs, axis=0)) if vecs else np.zeros(dim)
    if not tokens:
        return np.zeros(config.d_word)
    return _unit(hashed_vector(["w:" + t for t in tokens], config.d_word, config.hash_seed) / len(tokens))


def para_features(column: Column, config: FeatureConfig) -> np.ndarray:
    """Hashed bag of within-cell token bigrams and token character trigrams."""
    keys = []
    for cell in column.cells:
        toks = tokenize(cell)
        keys.extend(f"b:{a} {b}" for a, b in zip(toks, toks[1:]))
        for t in toks:
            padded = f"<{t}>"
            keys.extend("c:" + padded[i:i + 3] for i in range(len(padded) - 2))
    return _unit(hashed_vector(keys, config.d_para, config.hash_seed))


def featurize_column(column: Column, config: FeatureConfig) -> ColumnFeatures:
    return ColumnFeatures(
        char=char_features(column, config),
        word=word_features(column, config),
        para=para_features(column, config),
        stat=stat_features(column),
    )


def stack_features(features: Sequence[ColumnFeatures]) -> dict[str, np.ndarray]:
    """Stack per-column features into one matrix per group."""
    return {g: np.stack([f.group(g) for f in features]) for g in GROUPS}


@lru_cache(maxsize=4)
def load_embeddings(path: str) -> tuple[dict[str, np.ndarray], int]:
    """Read a ``token v1 v2 ...`` text embedding file."""
    table: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            vec = np.array([float(x) for x in parts[1:]])
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {vec.size}")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"{path}:{lineno}: non-finite embedding value")
            table[parts[0].lower()] = vec
    if dim is None:
        raise ValueError(f"{path}: no embeddings found")
    return table, dim
