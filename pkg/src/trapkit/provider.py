"""Black-box language model interface.

Every model the toolkit can talk to -- the built-in n-gram model or a
remote server -- is wrapped in a :class:`Provider` exposing tokenize,
per-token log-probabilities (natural log) and top-k sampling.  Loss and
perplexity are derived from ``score`` and never stored independently.
"""

from __future__ import annotations

import math
import random
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import requests

from .errors import InputError, TransportError

__all__ = [
    "TokenSequence",
    "TokenScores",
    "ProviderConfig",
    "Provider",
    "RemoteProvider",
    "derive_seed",
    "sample_from_distribution",
]


@dataclass(frozen=True)
class TokenSequence:
    """An ordered list of token ids plus the tokenizer that produced them."""

    ids: tuple[int, ...]
    provider_id: str

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if any(i < 0 for i in self.ids):
            raise InputError("token ids must be non-negative")

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class TokenScores:
    """Per-token natural-log probabilities for the scored tokens.

    ``context_len`` counts conditioning-only tokens that were not scored.
    """

    logprobs: tuple[float, ...]
    context_len: int = 0

    def __post_init__(self):
        object.__setattr__(self, "logprobs", tuple(float(x) for x in self.logprobs))
        for lp in self.logprobs:
            if not math.isfinite(lp) or lp > 1e-9:
                raise InputError(f"logprob {lp} is not a finite value <= 0")


@dataclass
class ProviderConfig:
    kind: str = "builtin"  # {"remote", "builtin"}
    endpoint: str | None = None
    timeout: float = 30.0
    max_parallel: int = 4
    passthrough: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("remote", "builtin"):
            raise InputError(f"unknown provider kind {self.kind!r}")
        if (self.endpoint is not None) != (self.kind == "remote"):
            raise InputError("endpoint must be present iff kind=remote")
        if self.max_parallel < 1:
            raise InputError("max_parallel must be positive")


def derive_seed(seed: int, attempt: int) -> int:
    """Derive the seed for resampling attempt ``attempt`` from a base seed.

    SplitMix64 finalizer applied to ``seed + attempt`` (both treated as
    64-bit).  Stable across implementations; attempt 0 returns the mix of
    the base seed itself.
    """
    z = (seed + attempt * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def sample_from_distribution(probs: np.ndarray, top_k: int, temperature: float,
                             rng: random.Random) -> int:
    """Draw one token from a full next-token distribution.

    The sampling stream is defined as follows, so that an independent
    reimplementation reproduces it exactly:

    1. Keep the ``top_k`` most probable tokens; ties at the cut are broken
       in favour of lower token ids (stable sort on (-prob, id)).
    2. Raise each kept probability to the power ``1/temperature`` and
       renormalize.
    3. Draw ``u = rng.random()`` (Python's Mersenne Twister, one draw per
       emitted token) and return the first kept token, in the order of
       step 1, whose cumulative weight exceeds ``u``.
    """
    if top_k < 1 or top_k > len(probs):
        raise InputError(f"top_k={top_k} out of range for vocab {len(probs)}")
    if temperature <= 0:
        raise InputError("temperature must be positive")
    order = sorted(range(len(probs)), key=lambda t: (-probs[t], t))[:top_k]
    weights = np.array([probs[t] for t in order], dtype=float) ** (1.0 / temperature)
    weights /= weights.sum()
    u = rng.random()
    acc = 0.0
    for tok, w in zip(order, weights):
        acc += w
        if u < acc:
            return tok
    return order[-1]  # guard against rounding at u ~ 1


class Provider(ABC):
    """Uniform black-box interface to an autoregressive language model."""

    provider_id: str

    @abstractmethod
    def tokenize(self, text: str) -> TokenSequence: ...

    @abstractmethod
    def detokenize(self, ids) -> str: ...

    @abstractmethod
    def score(self, tokens: TokenSequence,
              context: TokenSequence | None = None) -> TokenScores: ...

    @abstractmethod
    def sample(self, prompt: TokenSequence, max_new: int, top_k: int,
               temperature: float, seed: int) -> TokenSequence: ...

    def sequence_loss(self, tokens: TokenSequence,
                      context: TokenSequence | None = None) -> float:
        """Mean negative log-likelihood of ``tokens`` (natural log)."""
        if len(tokens) == 0:
            raise InputError("cannot compute loss of an empty sequence")
        scores = self.score(tokens, context)
        return -sum(scores.logprobs) / len(scores.logprobs)

    def perplexity(self, tokens: TokenSequence,
                   context: TokenSequence | None = None) -> float:
        return math.exp(self.sequence_loss(tokens, context))

    def score_many(self, sequences, contexts=None, max_parallel: int = 1):
        """Score a batch; parallelism only helps for remote providers."""
        if contexts is None:
            contexts = [None] * len(sequences)
        if max_parallel <= 1:
            return [self.score(x, c) for x, c in zip(sequences, contexts)]
        with ThreadPoolExecutor(max_workers=max_parallel) as pool:
            return list(pool.map(self.score, sequences, contexts))


class RemoteProvider(Provider):
    """HTTP client for the toolkit wire protocol.

    POST /v1/tokenize, /v1/logprobs, /v1/sample with JSON bodies.  400
    responses are input errors and never retried; transport failures and
    5xx responses are retried with exponential backoff (3 attempts).
    ``max_parallel`` bounds in-flight requests via a semaphore, the only
    shared mutable state.
    """

    RETRIES = 3
    BACKOFF = 0.2  # seconds, doubled per attempt

    def __init__(self, config: ProviderConfig):
        if config.kind != "remote":
            raise InputError("RemoteProvider requires kind=remote")
        self.config = config
        self._sem = threading.Semaphore(config.max_parallel)
        self._session = requests.Session()
        self.provider_id = self._post("/v1/tokenize", {"text": ""}).get(
            "provider_id", config.endpoint)

    def _post(self, path: str, body: dict) -> dict:
        url = self.config.endpoint.rstrip("/") + path
        payload = dict(body)
        if self.config.passthrough:
            payload.setdefault("passthrough", self.config.passthrough)
        last_exc = None
        for attempt in range(self.RETRIES):
            try:
                with self._sem:
                    resp = self._session.post(url, json=payload,
                                              timeout=self.config.timeout)
            except requests.RequestException as exc:
                last_exc = TransportError(f"POST {path}: {exc}")
            else:
                if resp.status_code == 400:
                    raise InputError(resp.json().get("error", resp.text))
                if resp.status_code == 200:
                    return resp.json()
                last_exc = TransportError(
                    f"POST {path}: HTTP {resp.status_code}")
            if attempt < self.RETRIES - 1:
                time.sleep(self.BACKOFF * (2 ** attempt))
        raise last_exc

    def tokenize(self, text: str) -> TokenSequence:
        out = self._post("/v1/tokenize", {"text": text})
        return TokenSequence(tuple(out["ids"]), out["provider_id"])

    def detokenize(self, ids) -> str:
        out = self._post("/v1/detokenize", {"ids": list(ids)})
        return out["text"]

    def score(self, tokens: TokenSequence,
              context: TokenSequence | None = None) -> TokenScores:
        if len(tokens) == 0:
            raise InputError("cannot score an empty sequence")
        body = {"ids": list(tokens.ids)}
        ctx_len = 0
        if context is not None and len(context) > 0:
            body["context_ids"] = list(context.ids)
            ctx_len = len(context)
        out = self._post("/v1/logprobs", body)
        return TokenScores(tuple(out["logprobs"]), context_len=ctx_len)

    def sample(self, prompt: TokenSequence, max_new: int, top_k: int,
               temperature: float, seed: int) -> TokenSequence:
        out = self._post("/v1/sample", {
            "prompt_ids": list(prompt.ids),
            "max_new": max_new,
            "top_k": top_k,
            "temperature": temperature,
            "seed": seed,
        })
        return TokenSequence(tuple(out["ids"]), self.provider_id)
