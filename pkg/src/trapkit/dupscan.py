"""Duplicate-window scan: find fixed-width token windows repeated across a
corpus and summarize their perplexity per repetition-count bin.

Candidates come from a 64-bit polynomial rolling hash and are verified by
exact comparison, so hash collisions can only cost time, never
correctness.  Overlapping occurrences count.
"""

from __future__ import annotations

import random
import statistics
from dataclasses import dataclass

from .errors import InputError
from .provider import TokenSequence

__all__ = ["DuplicateWindow", "find_duplicates", "perplexity_by_repetition",
           "DEFAULT_BINS"]

_BASE = 1000003
_MASK = (1 << 64) - 1

# geometric ranges covering repetition counts 6..1024
DEFAULT_BINS = [(6, 8), (9, 16), (17, 32), (33, 64), (65, 128),
                (129, 256), (257, 512), (513, 1024)]


@dataclass
class DuplicateWindow:
    ids: tuple[int, ...]
    count: int
    example_locations: list  # up to 10 (doc_id, token offset) pairs


def _normalize_corpus(corpus):
    if isinstance(corpus, dict):
        return list(corpus.items())
    return [(str(i), doc) for i, doc in enumerate(corpus)]


def find_duplicates(corpus, window: int, min_count: int = 2) -> list[DuplicateWindow]:
    """Every distinct ``window``-token sequence occurring >= min_count times.

    ``corpus`` is a dict of doc_id -> token ids, or a list of token id
    sequences.  Windows never span document boundaries; documents shorter
    than the window contribute nothing.
    """
    if window < 1:
        raise InputError("window must be >= 1")
    if min_count < 1:
        raise InputError("min_count must be >= 1")

    docs = _normalize_corpus(corpus)
    top_pow = pow(_BASE, window - 1, 1 << 64)
    by_hash: dict[int, list] = {}
    for doc_id, ids in docs:
        ids = list(ids)
        if len(ids) < window:
            continue
        h = 0
        for tok in ids[:window]:
            h = (h * _BASE + tok) & _MASK
        by_hash.setdefault(h, []).append((doc_id, 0))
        for i in range(window, len(ids)):
            h = ((h - ids[i - window] * top_pow) * _BASE + ids[i]) & _MASK
            by_hash.setdefault(h, []).append((doc_id, i - window + 1))

    doc_map = dict(docs)
    out = []
    for locs in by_hash.values():
        if len(locs) < min_count:
            continue
        # verification pass: group colliding candidates by exact content
        exact: dict[tuple, list] = {}
        for doc_id, off in locs:
            key = tuple(doc_map[doc_id][off:off + window])
            exact.setdefault(key, []).append((doc_id, off))
        for key, where in exact.items():
            if len(where) >= min_count:
                out.append(DuplicateWindow(ids=key, count=len(where),
                                           example_locations=where[:10]))
    out.sort(key=lambda w: (-w.count, w.ids))
    return out


def perplexity_by_repetition(duplicates, scorer, bins=None,
                             samples_per_bin: int = 100, seed: int = 0):
    """Median perplexity of sampled duplicate windows per repetition bin.

    Returns [( (lo, hi), median perplexity or None, n sampled )].
    """
    if bins is None:
        bins = DEFAULT_BINS
    for (lo1, hi1) in bins:
        for (lo2, hi2) in bins:
            if (lo1, hi1) != (lo2, hi2) and lo1 <= hi2 and lo2 <= hi1:
                raise InputError(f"bins {(lo1, hi1)} and {(lo2, hi2)} overlap")

    rng = random.Random(seed)
    out = []
    for lo, hi in bins:
        pool = [w for w in duplicates if lo <= w.count <= hi]
        if len(pool) > samples_per_bin:
            pool = rng.sample(pool, samples_per_bin)
        ppls = [scorer.perplexity(TokenSequence(w.ids, scorer.provider_id))
                for w in pool]
        median = statistics.median(ppls) if ppls else None
        out.append(((lo, hi), median, len(pool)))
    return out
