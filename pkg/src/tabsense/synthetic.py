"""Synthetic corpora for experiments and tests.

``context_corpus`` builds tables where one column's values cannot identify
its type on their own: a city column is ``birthPlace`` next to person names
and ``location`` next to company names, and a small-integer column is
``age`` or ``rank`` by the same rule.
"""
from __future__ import annotations

import numpy as np

from .corpus import Column, Table, TypeVocabulary

CITIES = (
    "London", "Paris", "Berlin", "Madrid", "Rome", "Vienna", "Prague", "Warsaw", "Lisbon", "Dublin",
    "Oslo", "Helsinki", "Athens", "Florence", "Braunschweig", "Munich", "Zurich", "Geneva", "Boston",
    "Chicago", "Seattle", "Denver", "Austin", "Toronto", "Montreal", "Sydney", "Melbourne", "Tokyo",
    "Osaka", "Seoul", "New York", "San Francisco", "Los Angeles", "Buenos Aires", "Mexico City",
    "Cape Town", "Hong Kong", "Rio de Janeiro", "Tel Aviv", "Kuala Lumpur",
)
FIRST_NAMES = (
    "Anna", "Ben", "Clara", "David", "Elena", "Felix", "Grace", "Hugo", "Iris", "Jonas", "Karin",
    "Liam", "Maya", "Noah", "Olga", "Pablo", "Quinn", "Rosa", "Sven", "Tara", "Umar", "Vera",
    "Walter", "Xenia", "Yusuf", "Zoe",
)
LAST_NAMES = (
    "Smith", "Garcia", "Muller", "Rossi", "Novak", "Silva", "Kowalski", "Jensen", "Dubois", "Tanaka",
    "Kim", "Nguyen", "Okafor", "Larsen", "Moreau", "Schmidt", "Brown", "Costa", "Ivanova", "Haddad",
)
COMPANY_WORDS = (
    "Acme", "Globex", "Initech", "Umbrella", "Hooli", "Vandelay", "Stark", "Wayne", "Tyrell", "Cyberdyne",
    "Soylent", "Wonka", "Oscorp", "Gringotts", "Monarch", "Aperture", "Massive", "Dynamic", "Pioneer", "Zenith",
)
COMPANY_SUFFIXES = ("Corp", "Inc", "Ltd", "Group", "Holdings", "Systems", "Labs", "GmbH")

CONTEXT_TYPES = ("name", "birthPlace", "age", "company", "location", "rank")
AMBIGUOUS_PAIRS = (("birthPlace", "location"), ("age", "rank"))


def context_vocabulary() -> TypeVocabulary:
    return TypeVocabulary(CONTEXT_TYPES)


def _person(rng):
    return f"{rng.choice(FIRST_NAMES)} {rng.choice(LAST_NAMES)}"


def _company(rng):
    return f"{rng.choice(COMPANY_WORDS)} {rng.choice(COMPANY_SUFFIXES)}"


def _city(rng):
    return str(rng.choice(CITIES))


def _small_int(rng):
    return str(int(rng.integers(1, 100)))


_GENERATORS = {
    "name": _person, "birthPlace": _city, "age": _small_int,
    "company": _company, "location": _city, "rank": _small_int,
}
_CONTEXTS = (("name", "birthPlace", "age"), ("company", "location", "rank"))


def context_corpus(n_tables: int = 2000, seed: int = 0, rows: tuple[int, int] = (5, 12),
                   person_share: float = 0.5) -> list[Table]:
    """Tables of person or company context with shuffled column order.

    The ambiguous columns draw from the same value generator in both
    contexts, so only table context can tell their types apart.
    """
    rng = np.random.default_rng(seed)
    vocab = context_vocabulary()
    tables = []
    for i in range(n_tables):
        types = list(_CONTEXTS[0] if rng.random() < person_share else _CONTEXTS[1])
        rng.shuffle(types)
        n = int(rng.integers(rows[0], rows[1] + 1))
        cols = tuple(Column(t, tuple(_GENERATORS[t](rng) for _ in range(n)), vocab.index[t]) for t in types)
        tables.append(Table(f"ctx{i:05d}", cols))
    return tables


def separable_documents(n_docs: int = 200, words_per_half: int = 50, doc_length: int = 50,
                        seed: int = 0) -> list[list[str]]:
    """Documents drawn from one of two disjoint vocabularies (``x*`` or ``y*``)."""
    rng = np.random.default_rng(seed)
    docs = []
    for d in range(n_docs):
        prefix = "xy"[d % 2]
        docs.append([f"{prefix}{int(w)}" for w in rng.integers(0, words_per_half, size=doc_length)])
    return docs


def adjacency_corpus(n_tables: int = 300, seed: int = 0, noise: float = 1.0):
    """Labeled type sequences with noisy unaries over types ``a, b, c, d``.

    ``a`` and ``b`` always sit next to each other; ``c`` only appears with
    ``d``, so ``a`` and ``c`` never share a table. Returns
    ``(corpus, type_names)`` where corpus holds ``(unaries, gold)`` pairs.
    """
    rng = np.random.default_rng(seed)
    a, b, c, d = range(4)
    corpus = []
    for _ in range(n_tables):
        if rng.random() < 0.5:
            gold = [a, b] if rng.random() < 0.5 else [b, a]
        else:
            gold = [c, d] if rng.random() < 0.5 else [d, c]
        scores = rng.normal(scale=noise, size=(len(gold), 4))
        scores[np.arange(len(gold)), gold] += 0.5
        logp = scores - np.log(np.exp(scores).sum(axis=1, keepdims=True))
        corpus.append((logp, np.array(gold)))
    return corpus, ("a", "b", "c", "d")
