"""Membership-inference attack scores.

Sequence-level attacks (Loss, Min-K% Prob, Ratio, context-conditioned
Ratio) plus the document-level Min-K% aggregation over random excerpts.
Each score carries its orientation so evaluation never has to guess which
direction means "member".
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, asdict

from .errors import InputError
from .provider import Provider, TokenSequence

__all__ = ["AttackScore", "MembershipRecord", "ORIENTATIONS",
           "loss_attack", "min_k_prob", "ratio_attack",
           "ratio_with_context", "ratio_with_random_context",
           "context_before_gap", "doc_min_k",
           "save_records", "load_records"]

LOWER = "lower_is_member"
HIGHER = "higher_is_member"

# fixed per method; evaluation honors these
ORIENTATIONS = {
    "loss": LOWER,
    "min_k": HIGHER,
    "ratio": LOWER,
    "ratio_ctx": LOWER,
    "doc_min_k": HIGHER,
}


@dataclass
class AttackScore:
    method: str
    value: float
    orientation: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method in ORIENTATIONS and self.orientation != ORIENTATIONS[self.method]:
            raise InputError(
                f"method {self.method} must use {ORIENTATIONS[self.method]}")


@dataclass
class MembershipRecord:
    """One labeled sequence with its attack scores; the unit of AUC evaluation."""

    ref_id: str
    label: str  # {"member", "nonmember"}
    scores: list = field(default_factory=list)
    bucket: int | None = None
    length: int | None = None
    n_rep: int | None = None

    def add(self, score: AttackScore) -> None:
        if any(s.method == score.method for s in self.scores):
            raise InputError(f"record {self.ref_id} already scored by {score.method}")
        self.scores.append(score)

    def value(self, method: str) -> float:
        for s in self.scores:
            if s.method == method:
                return s.value
        raise InputError(f"record {self.ref_id} has no {method} score")

    def has(self, method: str) -> bool:
        return any(s.method == method for s in self.scores)


def loss_attack(target: Provider, x: TokenSequence) -> AttackScore:
    """Plain loss attack: lower loss suggests membership."""
    return AttackScore("loss", target.sequence_loss(x), LOWER)


def min_k_prob(target: Provider, x: TokenSequence, k: float = 20.0) -> AttackScore:
    """Mean log-likelihood of the k% least likely tokens (higher = member).

    The number of selected tokens is max(1, ceil(k% of |x|)); ties at the
    cut are resolved by lowest token index first.
    """
    if not 0 < k <= 100:
        raise InputError("k must be in (0, 100]")
    if len(x) == 0:
        raise InputError("cannot score an empty sequence")
    lps = target.score(x).logprobs
    e = max(1, math.ceil(k / 100.0 * len(lps)))
    lowest = sorted(range(len(lps)), key=lambda i: (lps[i], i))[:e]
    value = sum(lps[i] for i in lowest) / e
    return AttackScore("min_k", value, HIGHER, params={"k": k, "E": e})


def ratio_attack(target: Provider, reference: Provider,
                 x_target: TokenSequence, x_ref: TokenSequence) -> AttackScore:
    """Target loss divided by reference loss for the same text."""
    loss_t = target.sequence_loss(x_target)
    loss_r = reference.sequence_loss(x_ref)
    if loss_r == 0.0:
        raise InputError("reference loss is zero (perfectly predicted text)")
    return AttackScore("ratio", loss_t / loss_r, LOWER)


def context_before_gap(text: str, gap: int) -> str:
    """Text preceding interior word gap ``gap`` (0-based, space splits)."""
    pieces = text.split(" ")
    if not 0 <= gap < len(pieces) - 1:
        raise InputError(f"gap {gap} out of range for {len(pieces) - 1} gaps")
    return " ".join(pieces[:gap + 1])


def _ctx_loss_ratio(target, reference, trap_text, context_text, ctx_len):
    losses = []
    for provider in (target, reference):
        toks = provider.tokenize(trap_text)
        ctx_ids = provider.tokenize(context_text).ids
        if ctx_len > 0 and len(ctx_ids) > 0:
            ctx = TokenSequence(ctx_ids[-ctx_len:], provider.provider_id)
        else:
            ctx = None
        losses.append(provider.sequence_loss(toks, ctx))
    if losses[1] == 0.0:
        raise InputError("reference loss is zero (perfectly predicted text)")
    return losses[0] / losses[1]


def ratio_with_context(target: Provider, reference: Provider, trap, record,
                       original_doc, ctx_len: int = 100,
                       seed: int = 0) -> AttackScore:
    """Ratio attack conditioned on the document context of one occurrence.

    One of the recorded injection occurrences is picked via ``seed``; the
    context is the ``ctx_len`` tokens of the *original* document
    immediately preceding that gap (shorter near the document start).
    Each provider tokenizes the same context text independently.
    """
    if not record.gap_indices:
        raise InputError("injection record has no occurrences")
    _, text = ("", original_doc) if isinstance(original_doc, str) else \
        (original_doc.doc_id, original_doc.text)
    gap = random.Random(seed).choice(record.gap_indices)
    value = _ctx_loss_ratio(target, reference, record.trap_text,
                            context_before_gap(text, gap), ctx_len)
    return AttackScore("ratio_ctx", value, LOWER,
                       params={"ctx_len": ctx_len, "gap": gap})


def ratio_with_random_context(target: Provider, reference: Provider, trap,
                              doc, ctx_len: int = 100,
                              seed: int = 0) -> AttackScore:
    """Context-conditioned ratio for a never-injected trap.

    Mirrors the member construction by drawing a uniform random word gap
    from ``doc`` as the context location.
    """
    trap_text = trap if isinstance(trap, str) else trap.text
    text = doc if isinstance(doc, str) else doc.text
    n_gaps = len(text.split(" ")) - 1
    if n_gaps < 1:
        raise InputError("document has no interior word gaps")
    gap = random.Random(seed).randrange(n_gaps)
    value = _ctx_loss_ratio(target, reference, trap_text,
                            context_before_gap(text, gap), ctx_len)
    return AttackScore("ratio_ctx", value, LOWER,
                       params={"ctx_len": ctx_len, "gap": gap})


def doc_min_k(target: Provider, doc, excerpt_len: int = 512,
              n_excerpts: int = 100, k: float = 20.0,
              threshold: float = 0.0, seed: int = 0) -> AttackScore:
    """Document-level Min-K%: fraction of random excerpts above threshold."""
    text = doc if isinstance(doc, str) else doc.text
    ids = target.tokenize(text).ids
    if len(ids) < excerpt_len:
        raise InputError(
            f"document has {len(ids)} tokens, need {excerpt_len}")
    rng = random.Random(seed)
    above = 0
    for _ in range(n_excerpts):
        start = rng.randint(0, len(ids) - excerpt_len)
        window = TokenSequence(ids[start:start + excerpt_len],
                               target.provider_id)
        if min_k_prob(target, window, k).value > threshold:
            above += 1
    return AttackScore("doc_min_k", above / n_excerpts, HIGHER,
                       params={"excerpt_len": excerpt_len,
                               "n_excerpts": n_excerpts, "k": k,
                               "threshold": threshold})


def excerpt_min_k_values(target: Provider, doc, excerpt_len: int = 512,
                         n_excerpts: int = 100, k: float = 20.0,
                         seed: int = 0) -> list[float]:
    """Per-excerpt Min-K% values, for calibrating the doc_min_k threshold."""
    text = doc if isinstance(doc, str) else doc.text
    ids = target.tokenize(text).ids
    if len(ids) < excerpt_len:
        raise InputError(f"document has {len(ids)} tokens, need {excerpt_len}")
    rng = random.Random(seed)
    out = []
    for _ in range(n_excerpts):
        start = rng.randint(0, len(ids) - excerpt_len)
        window = TokenSequence(ids[start:start + excerpt_len],
                               target.provider_id)
        out.append(min_k_prob(target, window, k).value)
    return out


def save_records(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r)) + "\n")


def load_records(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            row["scores"] = [AttackScore(**s) for s in row["scores"]]
            records.append(MembershipRecord(**row))
    return records
