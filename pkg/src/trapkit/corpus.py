"""Document ingestion, role assignment and experiment manifests."""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import InputError

logger = logging.getLogger(__name__)

ROLES = ("member_clean", "nonmember_clean", "member_injected", "unassigned")

__all__ = ["DocumentRecord", "IngestResult", "ExperimentManifest",
           "ingest", "split_roles", "make_record", "ROLES"]


@dataclass
class DocumentRecord:
    doc_id: str
    path: str | None
    text: str
    text_sha256: str
    token_count: int
    role: str = "unassigned"
    injection_ref: str | None = None  # trap id, member_injected only

    def assign_role(self, role: str) -> None:
        if role not in ROLES:
            raise InputError(f"unknown role {role!r}")
        if self.role != "unassigned":
            raise InputError(
                f"document {self.doc_id} already assigned role {self.role}")
        self.role = role


def make_record(text: str, doc_id: str, token_count: int | None = None,
                path: str | None = None) -> DocumentRecord:
    """Record for an in-memory document (synthetic corpora, tests)."""
    return DocumentRecord(
        doc_id=doc_id, path=path, text=text,
        text_sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        token_count=token_count if token_count is not None else len(text.encode()))


@dataclass
class IngestResult:
    records: list
    excluded: list  # (path, reason) pairs


def ingest(paths, ref, min_tokens: int = 5000) -> IngestResult:
    """Read text files and keep those with at least ``min_tokens`` tokens
    under the reference provider's tokenizer.

    Unreadable files and too-short documents are excluded with a logged
    reason; the run continues.
    """
    records, excluded = [], []
    for p in paths:
        p = Path(p)
        try:
            text = p.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            excluded.append((str(p), f"unreadable: {exc}"))
            logger.warning("excluding %s: %s", p, exc)
            continue
        n = len(ref.tokenize(text))
        if n < min_tokens:
            excluded.append((str(p), f"too short: {n} < {min_tokens} tokens"))
            logger.info("excluding %s: %d tokens below minimum", p, n)
            continue
        doc_id = f"{p.stem}-{hashlib.sha256(text.encode()).hexdigest()[:8]}"
        records.append(DocumentRecord(
            doc_id=doc_id, path=str(p), text=text,
            text_sha256=hashlib.sha256(text.encode()).hexdigest(),
            token_count=n))
    return IngestResult(records=records, excluded=excluded)


def split_roles(records, n_members: int, n_nonmembers: int, n_injected: int,
                seed: int = 0) -> dict:
    """Disjoint uniform random role subsets; the remainder stays unassigned."""
    total = n_members + n_nonmembers + n_injected
    if total > len(records):
        raise InputError(
            f"need {total} documents, only {len(records)} available")
    pool = list(records)
    random.Random(seed).shuffle(pool)
    assignment = {
        "member_clean": pool[:n_members],
        "nonmember_clean": pool[n_members:n_members + n_nonmembers],
        "member_injected": pool[n_members + n_nonmembers:total],
    }
    for role, docs in assignment.items():
        for d in docs:
            d.assign_role(role)
    return assignment


@dataclass
class ExperimentManifest:
    """Reproducibility ledger: everything needed to reconstruct a run."""

    manifest_id: str
    target_provider: str
    reference_provider: str
    trap_files: list = field(default_factory=list)
    roles: dict = field(default_factory=dict)  # doc_id -> role
    doc_hashes: dict = field(default_factory=dict)  # doc_id -> sha256
    injections: dict = field(default_factory=dict)  # doc_id -> trap id
    seeds: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def add_injection(self, doc_id: str, trap_id: str) -> None:
        if doc_id in self.injections:
            raise InputError(
                f"document {doc_id} already carries trap "
                f"{self.injections[doc_id]}; one unique trap per document")
        self.injections[doc_id] = trap_id

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2)

    @classmethod
    def load(cls, path) -> "ExperimentManifest":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))
