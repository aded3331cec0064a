"""Trap injection at word boundaries, its exact inverse, and the
invisible-HTML emitter.

Documents are opaque UTF-8; the single space byte 0x20 is the only split
point.  Injection is pure insertion: the original text is always
recoverable byte-exactly from the modified text plus its record.
"""

from __future__ import annotations

import html
import json
import logging
import random
from dataclasses import dataclass, asdict

from .errors import InputError, IntegrityError

__all__ = ["InjectionRecord", "inject", "strip", "emit_html_trap",
           "save_record", "load_record"]


@dataclass
class InjectionRecord:
    doc_id: str
    trap_id: str
    trap_text: str
    n_rep: int
    gap_indices: list[int]  # chosen word gaps in the original, sorted
    char_offsets: list[int]  # byte offset of each trap occurrence in modified

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def _doc_fields(doc):
    if isinstance(doc, str):
        return "", doc
    return doc.doc_id, doc.text


def inject(doc, trap, n_rep: int, seed: int = 0):
    """Insert ``trap`` into ``doc`` at ``n_rep`` distinct interior word gaps.

    Gaps are chosen uniformly without replacement via ``seed``; at each
    chosen gap the text ``" " + trap.text`` is inserted after the left
    word, so every occurrence ends up space-delimited on both sides.
    Returns (modified text, InjectionRecord).
    """
    doc_id, text = _doc_fields(doc)
    trap_text = trap if isinstance(trap, str) else trap.text
    trap_id = "" if isinstance(trap, str) else trap.id
    if n_rep < 1:
        raise InputError("n_rep must be positive")

    orig = text.encode("utf-8")
    trap_b = trap_text.encode("utf-8")
    pieces = orig.split(b" ")
    n_gaps = len(pieces) - 1
    if n_rep > n_gaps:
        raise InputError(
            f"n_rep={n_rep} exceeds the {n_gaps} interior word gaps available")

    chosen = set(random.Random(seed).sample(range(n_gaps), n_rep))
    out = bytearray()
    offsets = []
    for g, piece in enumerate(pieces):
        if g > 0:
            out += b" "
        out += piece
        if g in chosen:
            out += b" "
            offsets.append(len(out))
            out += trap_b

    modified = out.decode("utf-8")
    if trap_text in text:
        logging.getLogger(__name__).warning(
            "trap text already occurs in document %s; occurrence counts "
            "will exceed n_rep", doc_id)
    record = InjectionRecord(doc_id=doc_id, trap_id=trap_id,
                             trap_text=trap_text, n_rep=n_rep,
                             gap_indices=sorted(chosen), char_offsets=offsets)
    return modified, record


def strip(modified_text: str, record: InjectionRecord) -> str:
    """Exact inverse of :func:`inject`; raises on any mismatch."""
    if len(record.char_offsets) != record.n_rep:
        raise IntegrityError("record offset count does not match n_rep")
    buf = bytearray(modified_text.encode("utf-8"))
    trap_b = record.trap_text.encode("utf-8")
    for off in sorted(record.char_offsets, reverse=True):
        if off < 1 or bytes(buf[off:off + len(trap_b)]) != trap_b:
            raise IntegrityError(
                f"no trap occurrence at byte offset {off}")
        if buf[off - 1:off] != b" ":
            raise IntegrityError(
                f"occurrence at offset {off} is not space-prefixed")
        del buf[off - 1:off + len(trap_b)]
    return bytes(buf).decode("utf-8")


_INVISIBLE_STYLE = ("display:inline-block;width:0;height:0;overflow:hidden;"
                    "font-size:0;color:transparent")


def emit_html_trap(trap, n_rep: int = 1) -> str:
    """HTML fragment with ``n_rep`` invisible elements carrying the trap text.

    The elements stay in the document text flow (a tag-stripping scraper
    extracts the trap text) but render invisibly to human readers.
    """
    trap_text = trap if isinstance(trap, str) else trap.text
    if n_rep < 1:
        raise InputError("n_rep must be positive")
    span = (f'<span style="{_INVISIBLE_STYLE}" aria-hidden="true">'
            f'{html.escape(trap_text)}</span>')
    return "\n".join([span] * n_rep)


def save_record(record: InjectionRecord, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(record.to_json())


def load_record(path) -> InjectionRecord:
    with open(path, encoding="utf-8") as fh:
        return InjectionRecord(**json.load(fh))
