"""Table corpora: ingestion, header canonicalization, vocabulary, folds."""
from __future__ import annotations

import csv
import logging
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

_PARENS = re.compile(r"\([^()]*\)")


@dataclass(frozen=True)
class Column:
    header_raw: str
    cells: tuple[str, ...]
    label: int | None = None

    def __post_init__(self):
        if len(self.cells) == 0:
            raise ValueError("column has no cells")


@dataclass(frozen=True)
class Table:
    id: str
    columns: tuple[Column, ...]
    provenance: str | None = None

    def __post_init__(self):
        if len(self.columns) == 0:
            raise ValueError(f"table {self.id!r} has no columns")
        lengths = {len(c.cells) for c in self.columns}
        if len(lengths) != 1:
            raise ValueError(f"table {self.id!r} has ragged columns")

    @property
    def n_rows(self) -> int:
        return len(self.columns[0].cells)

    @property
    def labels(self) -> list[int | None]:
        return [c.label for c in self.columns]

    def fully_labeled(self) -> bool:
        return all(c.label is not None for c in self.columns)


@dataclass(frozen=True)
class TypeVocabulary:
    names: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate type names")
        for name in self.names:
            if canonicalize_header(name) != name or not name:
                raise ValueError(f"type name {name!r} is not in canonical form")
        object.__setattr__(self, "index", {n: i for i, n in enumerate(self.names)})

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name) -> bool:
        return name in self.index

    def save(self, path) -> None:
        Path(path).write_bytes("".join(n + "\n" for n in self.names).encode("utf-8"))

    @classmethod
    def load(cls, path) -> "TypeVocabulary":
        text = Path(path).read_bytes().decode("utf-8")
        return cls(tuple(line for line in text.split("\n") if line))


@dataclass(frozen=True)
class SkipRecord:
    path: str
    reason: str


def canonicalize_header(raw: str) -> str:
    """Map a raw header to its canonical camel-case label.

    Parenthesized content is removed (nested groups included), the words are
    lowercased, every word after the first is capitalized, and the words are
    joined: ``"birth place (country)"`` becomes ``"birthPlace"``. A string that
    is already canonical (such as ``"birthPlace"``) is returned unchanged.
    """
    text = raw
    while True:
        stripped = _PARENS.sub("", text)
        if stripped == text:
            break
        text = stripped
    text = text.strip()
    if not text:
        return ""
    if _resplit(text) == text:
        return text
    out = _camel(text.split())
    # settle to a string that is its own camel re-split; only exotic unicode
    # case mappings need more than one round
    for _ in range(16):
        again = _resplit(out)
        if again == out:
            break
        out = again
    return out


def _resplit(text: str) -> str:
    """Re-camel a string by splitting it before every uppercase character."""
    if any(ch.isspace() for ch in text):
        return ""
    pieces, start = [], 0
    for i, ch in enumerate(text):
        if i > 0 and ch.isupper():
            pieces.append(text[start:i])
            start = i
    pieces.append(text[start:])
    return _camel(pieces)


def _camel(tokens: list[str]) -> str:
    tokens = [t for t in tokens if t]
    if not tokens:
        return ""
    return tokens[0].lower() + "".join(t[:1].upper() + t[1:].lower() for t in tokens[1:])


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh, strict=True))
    if not rows:
        raise ValueError("empty file")
    return rows[0], rows[1:]


def table_from_rows(table_id: str, header: Sequence[str], rows: Sequence[Sequence[str]],
                    vocab: TypeVocabulary | None = None, provenance: str | None = None) -> Table:
    """Build a Table from a header row and data rows.

    Ragged rows are handled by truncating every column to the shortest one.
    Cells are stripped of surrounding whitespace; case is preserved.
    """
    if not header:
        raise ValueError("no header")
    width = len(header)
    cols: list[list[str]] = [[] for _ in range(width)]
    for row in rows:
        for j in range(min(width, len(row))):
            cols[j].append(row[j].strip())
    n = min(len(c) for c in cols)
    if n == 0:
        raise ValueError("table has no data rows")
    columns = []
    for h, cells in zip(header, cols):
        columns.append(Column(h, tuple(cells[:n]), _label_for(h, vocab)))
    return Table(table_id, tuple(columns), provenance)


def _label_for(header: str, vocab: TypeVocabulary | None) -> int | None:
    if vocab is None:
        return None
    return vocab.index.get(canonicalize_header(header))


def _corpus_files(path: Path) -> tuple[list[tuple[str, Path]], list[SkipRecord]]:
    if path.is_dir():
        files = sorted(p for p in path.rglob("*.csv") if p.is_file())
        return [(p.relative_to(path).with_suffix("").as_posix(), p) for p in files], []
    entries, skips = [], []
    base = path.parent
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        p = Path(line)
        if not p.is_absolute():
            p = base / p
        entries.append((line, p))
    return entries, skips


def load_corpus_report(path, vocab: TypeVocabulary | None = None) -> tuple[list[Table], list[SkipRecord]]:
    """Load every parseable table under ``path`` and report skipped files."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus path does not exist: {path}")
    entries, skips = _corpus_files(path)
    tables = []
    for table_id, p in entries:
        try:
            header, rows = _read_csv(p)
            tables.append(table_from_rows(table_id, header, rows, vocab, provenance=str(p)))
        except (OSError, UnicodeDecodeError, csv.Error, ValueError) as exc:
            log.warning("skipping %s: %s", p, exc)
            skips.append(SkipRecord(str(p), str(exc)))
    return tables, skips


def load_table(path, table_id: str | None = None, vocab: TypeVocabulary | None = None) -> Table:
    """Load one CSV file; unlike corpus loading, failures raise."""
    path = Path(path)
    header, rows = _read_csv(path)
    return table_from_rows(table_id or str(path), header, rows, vocab, provenance=str(path))


def load_corpus(path, vocab: TypeVocabulary | None = None) -> list[Table]:
    return load_corpus_report(path, vocab)[0]


def relabel(tables: Iterable[Table], vocab: TypeVocabulary) -> list[Table]:
    """Return copies of ``tables`` labeled against ``vocab``."""
    out = []
    for t in tables:
        cols = tuple(replace(c, label=_label_for(c.header_raw, vocab)) for c in t.columns)
        out.append(replace(t, columns=cols))
    return out


def build_vocabulary(tables: Iterable[Table], min_support: int = 20) -> TypeVocabulary:
    if min_support < 1:
        raise ValueError("min_support must be >= 1")
    counts = Counter()
    for t in tables:
        for c in t.columns:
            name = canonicalize_header(c.header_raw)
            if name:
                counts[name] += 1
    names = sorted((n for n, k in counts.items() if k >= min_support), key=lambda n: (-counts[n], n))
    if not names:
        raise ValueError(f"no header reaches min_support={min_support}")
    return TypeVocabulary(tuple(names))


def filter_multicolumn(tables: Iterable[Table]) -> list[Table]:
    return [t for t in tables if sum(c.label is not None for c in t.columns) >= 2]


def cooccurrence(tables: Iterable[Table], vocab: TypeVocabulary) -> np.ndarray:
    """Per-table co-occurrence counts of column types.

    ``counts[i, j]`` is the number of tables having a column of type i and a
    distinct column of type j. Each table contributes at most 1 to a cell.
    """
    n = len(vocab)
    counts = np.zeros((n, n), dtype=np.int64)
    for t in tables:
        c = Counter(lab for lab in t.labels if lab is not None)
        types = sorted(c)
        for a in types:
            if c[a] >= 2:
                counts[a, a] += 1
            for b in types:
                if b > a:
                    counts[a, b] += 1
                    counts[b, a] += 1
    return counts


def split_folds(tables: Sequence[Table], k: int = 5, seed: int = 0) -> list[tuple[list[Table], list[Table]]]:
    """Partition tables into ``k`` (train, test) splits, by table."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(tables) < k:
        raise ValueError(f"need at least k={k} tables, got {len(tables)}")
    assignment = fold_assignment(len(tables), k, seed)
    folds = []
    for f in range(k):
        test = [t for t, a in zip(tables, assignment) if a == f]
        train = [t for t, a in zip(tables, assignment) if a != f]
        folds.append((train, test))
    return folds


def fold_assignment(n: int, k: int, seed: int) -> np.ndarray:
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    for f, chunk in enumerate(np.array_split(perm, k)):
        assignment[chunk] = f
    return assignment


def write_folds(path, tables: Sequence[Table], k: int, seed: int) -> None:
    assignment = fold_assignment(len(tables), k, seed)
    lines = [f"{a}\t{t.id}\n" for t, a in zip(tables, assignment)]
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_folds(path) -> dict[str, int]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            fold, table_id = line.split("\t", 1)
            out[table_id] = int(fold)
    return out


def write_manifest(path, paths: Iterable[str]) -> None:
    Path(path).write_text("".join(f"{p}\n" for p in paths), encoding="utf-8")
