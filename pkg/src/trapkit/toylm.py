"""Built-in byte-level interpolated add-alpha n-gram language model.

Desk-scale stand-in for a real target model: trainable in seconds,
every probability hand-checkable, and it memorizes repeated strings --
which is all the pipeline needs to demonstrate trap detectability.

Vocabulary is the 256 byte values.  Byte 0 is reserved: counts never
bridge document boundaries (each document is observed as its own stream)
and byte 0 acts as the end-of-text token during sampling.
"""

from __future__ import annotations

import copy
import json
import random
from dataclasses import dataclass

import numpy as np

from .errors import InputError, TrapkitError
from .provider import (Provider, TokenScores, TokenSequence, derive_seed,
                       sample_from_distribution)

VOCAB_SIZE = 256
SEP = 0  # document separator / end-of-text byte

MAGIC = "trapkit-ngram"
FORMAT_VERSION = 1

__all__ = ["NGramModel", "ProviderSnapshot", "BuiltinProvider", "train",
           "save_model", "load_model", "VOCAB_SIZE", "SEP"]


class NGramModel:
    """Interpolated add-alpha n-gram counts over bytes.

    Conditional probability is the recursive interpolation

        P_n(t | c) = (count(c, t) + alpha * P_{n-1}(t | c[1:])) / (total(c) + alpha)

    with base case P_0(t) = 1 / vocab_size.  Unseen contexts have
    count = total = 0, so they fall through to the lower order.
    """

    def __init__(self, order: int = 4, alpha: float = 0.5):
        if order < 1:
            raise InputError("order must be >= 1")
        if alpha <= 0:
            raise InputError("alpha must be positive")
        self.order = order
        self.alpha = alpha
        self.vocab_size = VOCAB_SIZE
        # context tuple (length < order) -> {token: count}
        self.counts: dict[tuple, dict[int, int]] = {}
        self.totals: dict[tuple, int] = {}

    def observe(self, stream) -> None:
        """Accumulate counts for all n-gram orders over a token stream."""
        counts = self.counts
        totals = self.totals
        order = self.order
        toks = tuple(stream)
        for i, tok in enumerate(toks):
            lo = max(0, i - order + 1)
            for j in range(lo, i + 1):
                ctx = toks[j:i]
                d = counts.get(ctx)
                if d is None:
                    counts[ctx] = {tok: 1}
                    totals[ctx] = 1
                else:
                    d[tok] = d.get(tok, 0) + 1
                    totals[ctx] += 1

    def conditional_prob(self, context, token: int) -> float:
        """P(token | context); only the last (order-1) context tokens matter."""
        if not 0 <= token < self.vocab_size:
            raise InputError(f"token {token} outside vocabulary")
        ctx = tuple(context)[max(0, len(context) - self.order + 1):]
        p = 1.0 / self.vocab_size
        alpha = self.alpha
        for k in range(len(ctx) + 1):
            sub = ctx[len(ctx) - k:]
            d = self.counts.get(sub)
            if d is None:
                continue  # (0 + alpha*p) / (0 + alpha) == p
            p = (d.get(token, 0) + alpha * p) / (self.totals[sub] + alpha)
        return p

    def distribution(self, context) -> np.ndarray:
        """Full next-token distribution, vectorized over the vocabulary."""
        ctx = tuple(context)[max(0, len(context) - self.order + 1):]
        p = np.full(self.vocab_size, 1.0 / self.vocab_size)
        alpha = self.alpha
        for k in range(len(ctx) + 1):
            sub = ctx[len(ctx) - k:]
            d = self.counts.get(sub)
            if d is None:
                continue
            vec = np.zeros(self.vocab_size)
            for tok, n in d.items():
                vec[tok] = n
            p = (vec + alpha * p) / (self.totals[sub] + alpha)
        return p

    def copy(self) -> "NGramModel":
        clone = NGramModel(self.order, self.alpha)
        clone.counts = {ctx: dict(d) for ctx, d in self.counts.items()}
        clone.totals = dict(self.totals)
        return clone


@dataclass(frozen=True)
class ProviderSnapshot:
    """Immutable trained state at a checkpoint; step counts consumed tokens."""

    model: NGramModel
    step: int

    def provider(self) -> "BuiltinProvider":
        return BuiltinProvider(self.model, step=self.step)


class BuiltinProvider(Provider):
    """Provider interface over an :class:`NGramModel`.

    Tokenization is byte-level: ids are the UTF-8 bytes of the text.
    """

    def __init__(self, model: NGramModel | None = None, step: int = 0):
        self.model = model if model is not None else NGramModel()
        self.step = step
        self.provider_id = f"builtin-bytes-o{self.model.order}"
        self.eot_id = SEP

    def tokenize(self, text: str) -> TokenSequence:
        return TokenSequence(tuple(text.encode("utf-8")), self.provider_id)

    def detokenize(self, ids) -> str:
        return bytes(int(i) for i in ids).decode("utf-8", errors="replace")

    def score(self, tokens: TokenSequence,
              context: TokenSequence | None = None) -> TokenScores:
        if len(tokens) == 0:
            raise InputError("cannot score an empty sequence")
        ctx = list(context.ids) if context is not None else []
        lps = []
        running = ctx + list(tokens.ids)
        base = len(ctx)
        for i, tok in enumerate(tokens.ids):
            p = self.model.conditional_prob(running[:base + i], tok)
            lps.append(float(np.log(p)))
        return TokenScores(tuple(lps), context_len=base)

    def sample(self, prompt: TokenSequence, max_new: int, top_k: int,
               temperature: float, seed: int, max_restarts: int = 100) -> TokenSequence:
        """Top-k / temperature sampling of exactly ``max_new`` tokens.

        If the end-of-text byte is drawn, the whole sequence is resampled
        with the seed derived from (seed, attempt) so emitted lengths are
        always exact.
        """
        if max_new < 1:
            raise InputError("max_new must be positive")
        for attempt in range(max_restarts):
            rng = random.Random(derive_seed(seed, attempt))
            out = list(prompt.ids)
            ok = True
            for _ in range(max_new):
                probs = self.model.distribution(out)
                tok = sample_from_distribution(probs, top_k, temperature, rng)
                if tok == self.eot_id:
                    ok = False
                    break
                out.append(tok)
            if ok:
                return TokenSequence(tuple(out[len(prompt.ids):]), self.provider_id)
        raise TrapkitError(
            f"sampling hit end-of-text on {max_restarts} consecutive attempts")


def train(corpus, order: int = 4, alpha: float = 0.5,
          checkpoint_every: int | None = None, seed: int = 0,
          epochs: int = 1) -> list[ProviderSnapshot]:
    """Train from scratch on a list of documents (str or bytes).

    Documents are shuffled by ``seed`` and consumed once per epoch.  Count
    contexts reset at every document boundary, so no n-gram ever bridges
    two documents.  A frozen snapshot is appended every
    ``checkpoint_every`` consumed tokens, plus a final one (deduplicated
    if coincident).
    """
    if not corpus:
        raise InputError("corpus is empty")
    if checkpoint_every is not None and checkpoint_every <= 0:
        raise InputError("checkpoint_every must be positive")

    docs = [d.encode("utf-8") if isinstance(d, str) else bytes(d) for d in corpus]
    docs = list(docs)
    random.Random(seed).shuffle(docs)

    model = NGramModel(order=order, alpha=alpha)
    snapshots: list[ProviderSnapshot] = []
    step = 0
    next_ckpt = checkpoint_every if checkpoint_every is not None else None

    for _ in range(epochs):
        for doc in docs:
            model.observe(tuple(doc))
            step += len(doc)
            if next_ckpt is not None and step >= next_ckpt:
                snapshots.append(ProviderSnapshot(model.copy(), step=step))
                while next_ckpt <= step:
                    next_ckpt += checkpoint_every

    if not snapshots or snapshots[-1].step != step:
        snapshots.append(ProviderSnapshot(model.copy(), step=step))
    return snapshots


def save_model(model: NGramModel, path, step: int = 0) -> None:
    """Serialize to a versioned JSON container (bit-exact round trip)."""
    payload = {
        "magic": MAGIC,
        "version": FORMAT_VERSION,
        "order": model.order,
        "alpha": model.alpha,
        "vocab_size": model.vocab_size,
        "step": step,
        "counts": [[list(ctx), sorted(d.items())] for ctx, d in
                   sorted(model.counts.items())],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path) -> ProviderSnapshot:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("magic") != MAGIC:
        raise InputError(f"{path}: not a trapkit n-gram model file")
    if payload.get("version") != FORMAT_VERSION:
        raise InputError(f"{path}: unsupported format version")
    model = NGramModel(order=payload["order"], alpha=payload["alpha"])
    for ctx, items in payload["counts"]:
        d = {int(t): int(n) for t, n in items}
        model.counts[tuple(ctx)] = d
        model.totals[tuple(ctx)] = sum(d.values())
    return ProviderSnapshot(model, step=payload["step"])
