"""Trap sequence generation, stratified by length and perplexity bucket.

Synthetic traps are sampled from an empty prompt with top-k sampling and
a cycling temperature list; real traps are contiguous token windows drawn
from a document.  Candidates are assigned to one of ten perplexity
buckets of width 10 covering [1, 101) and discarded once their bucket is
full or when out of range.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, asdict

from .errors import InputError
from .provider import Provider, TokenSequence, derive_seed

__all__ = ["BucketSpec", "TrapSequence", "TrapGenResult", "bucket_of",
           "generate_synthetic", "sample_real", "matched_quotas",
           "save_traps", "load_traps"]


@dataclass(frozen=True)
class BucketSpec:
    """Bucket i covers [floor + (i-1)*width, floor + i*width), i = 1..count."""

    count: int = 10
    width: float = 10.0
    floor: float = 1.0


@dataclass
class TrapSequence:
    id: str
    text: str
    ids: tuple[int, ...]
    provider_id: str
    length: int
    perplexity: float
    bucket: int | None  # None marks out-of-range
    kind: str  # {"synthetic", "real"}
    seed: int
    temperature: float | None = None  # synthetic only
    source_doc: str | None = None  # real only
    member: bool = False

    def token_sequence(self) -> TokenSequence:
        return TokenSequence(self.ids, self.provider_id)


@dataclass
class TrapGenResult:
    """Generated traps plus the per-bucket shortfall report."""

    traps: list
    shortfall: dict = field(default_factory=dict)  # bucket -> missing count
    attempts: int = 0

    def by_bucket(self) -> dict:
        out: dict[int, int] = {}
        for t in self.traps:
            out[t.bucket] = out.get(t.bucket, 0) + 1
        return out


def bucket_of(perplexity: float, spec: BucketSpec = BucketSpec()) -> int | None:
    """Bucket index for a perplexity, or None when outside [floor, floor + count*width)."""
    if perplexity < spec.floor:
        raise InputError(f"perplexity {perplexity} below {spec.floor} is impossible")
    i = int((perplexity - spec.floor) // spec.width) + 1
    return i if 1 <= i <= spec.count else None


def _quota_map(quota, spec: BucketSpec) -> dict:
    if isinstance(quota, dict):
        return {int(b): int(q) for b, q in quota.items()}
    return {b: int(quota) for b in range(1, spec.count + 1)}


def _admit(candidate_ids, ref, filled, quotas, spec):
    """Measure perplexity on the kept ids and decide bucket admission."""
    toks = TokenSequence(candidate_ids, ref.provider_id)
    ppl = ref.perplexity(toks)
    bucket = bucket_of(ppl, spec)
    if bucket is None or filled.get(bucket, 0) >= quotas.get(bucket, 0):
        return None, ppl, bucket
    return toks, ppl, bucket


def generate_synthetic(ref: Provider, target_len: int, top_k: int = 50,
                       temperatures=(0.5, 1.0, 2.0, 4.0, 8.0),
                       quota_per_bucket=50, spec: BucketSpec = BucketSpec(),
                       seed: int = 0, max_attempts: int | None = None) -> TrapGenResult:
    """Sample traps of exactly ``target_len`` tokens from an empty prompt.

    ``quota_per_bucket`` may be a single int or a per-bucket dict (used to
    generate non-member sets matched to an existing member set).  Stops
    when every quota is met or ``max_attempts`` is exhausted; the result
    reports any shortfall rather than padding.
    """
    if target_len < 1:
        raise InputError("target_len must be >= 1")
    quotas = _quota_map(quota_per_bucket, spec)
    if any(q < 0 for q in quotas.values()):
        raise InputError("quotas must be non-negative")
    if max_attempts is None:
        max_attempts = 200 * sum(quotas.values())
    temperatures = list(temperatures)

    empty = TokenSequence((), getattr(ref, "provider_id", "?"))
    traps: list[TrapSequence] = []
    filled: dict[int, int] = {}
    want = sum(quotas.values())
    attempt = 0
    while len(traps) < want and attempt < max_attempts:
        temp = temperatures[attempt % len(temperatures)]
        attempt_seed = derive_seed(seed, attempt)
        sampled = ref.sample(empty, max_new=target_len, top_k=top_k,
                             temperature=temp, seed=attempt_seed)
        attempt += 1
        ids = sampled.ids[:target_len]
        if len(ids) < target_len:
            continue
        toks, ppl, bucket = _admit(ids, ref, filled, quotas, spec)
        if toks is None:
            continue
        filled[bucket] = filled.get(bucket, 0) + 1
        traps.append(TrapSequence(
            id=f"syn-{seed:x}-{attempt - 1:06d}",
            text=ref.detokenize(ids),
            ids=tuple(ids), provider_id=toks.provider_id,
            length=target_len, perplexity=ppl, bucket=bucket,
            kind="synthetic", seed=attempt_seed, temperature=temp))

    shortfall = {b: quotas[b] - filled.get(b, 0) for b in quotas
                 if filled.get(b, 0) < quotas[b]}
    return TrapGenResult(traps=traps, shortfall=shortfall, attempts=attempt)


def sample_real(doc, ref: Provider, target_len: int, quota_per_bucket=50,
                spec: BucketSpec = BucketSpec(), seed: int = 0,
                max_attempts: int | None = None) -> TrapGenResult:
    """Draw traps as uniform random token windows from one document.

    ``doc`` needs ``doc_id`` and ``text`` attributes.  Windows never cross
    the document boundary; a document shorter than ``target_len`` tokens
    is an error.
    """
    doc_ids = ref.tokenize(doc.text).ids
    if len(doc_ids) < target_len:
        raise InputError(
            f"document {doc.doc_id} has {len(doc_ids)} tokens, "
            f"need at least {target_len}")
    quotas = _quota_map(quota_per_bucket, spec)
    if max_attempts is None:
        max_attempts = 200 * sum(quotas.values())

    rng = random.Random(seed)
    traps: list[TrapSequence] = []
    filled: dict[int, int] = {}
    want = sum(quotas.values())
    attempt = 0
    while len(traps) < want and attempt < max_attempts:
        start = rng.randint(0, len(doc_ids) - target_len)
        attempt += 1
        ids = doc_ids[start:start + target_len]
        toks, ppl, bucket = _admit(ids, ref, filled, quotas, spec)
        if toks is None:
            continue
        filled[bucket] = filled.get(bucket, 0) + 1
        traps.append(TrapSequence(
            id=f"real-{doc.doc_id}-{seed:x}-{attempt - 1:06d}",
            text=ref.detokenize(ids),
            ids=tuple(ids), provider_id=toks.provider_id,
            length=target_len, perplexity=ppl, bucket=bucket,
            kind="real", seed=seed, source_doc=doc.doc_id))

    shortfall = {b: quotas[b] - filled.get(b, 0) for b in quotas
                 if filled.get(b, 0) < quotas[b]}
    return TrapGenResult(traps=traps, shortfall=shortfall, attempts=attempt)


def matched_quotas(members) -> dict:
    """Per-bucket counts of an existing trap set, for matched non-members."""
    quotas: dict[int, int] = {}
    for t in members:
        quotas[t.bucket] = quotas.get(t.bucket, 0) + 1
    return quotas


def save_traps(path, traps, config: dict | None = None, seed: int | None = None):
    """JSONL: one header line with config echo, then one trap per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"header": True, "config": config or {},
                             "seed": seed}) + "\n")
        for t in traps:
            row = asdict(t)
            row["ids"] = list(row["ids"])
            fh.write(json.dumps(row) + "\n")


def load_traps(path):
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if not header.get("header"):
            raise InputError(f"{path}: missing trap-file header line")
        traps = []
        for line in fh:
            row = json.loads(line)
            row["ids"] = tuple(row["ids"])
            traps.append(TrapSequence(**row))
    return header, traps
