"""Model backends behind the wire protocol.

Two implementations: a self-contained reader for the "trapkit-ngram"
JSON model format (byte-level interpolated add-alpha n-gram counts),
and an optional transformers backend for real pretrained checkpoints.
Both produce natural-log per-token probabilities by teacher-forcing the
supplied ids, and both sample with the documented deterministic stream:
SplitMix64 seed derivation per attempt, one Mersenne draw per token over
the top-k, temperature-flattened, renormalized distribution, ties at the
cut going to the lower token id.
"""

from __future__ import annotations

import json
import math
import random
from abc import ABC, abstractmethod

import numpy as np

from .config import Precision, ShimConfig


class BackendError(Exception):
    """Model-side failure (reported as 500)."""


class RequestError(Exception):
    """Caller-side failure (reported as 400)."""


def derive_seed(seed: int, attempt: int) -> int:
    # SplitMix64 finalizer of seed + attempt, 64-bit wrap
    z = (seed + attempt * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def draw_token(probs: np.ndarray, top_k: int, temperature: float,
               rng: random.Random) -> int:
    if top_k < 1 or top_k > len(probs):
        raise RequestError(f"top_k={top_k} out of range for vocab {len(probs)}")
    if temperature <= 0:
        raise RequestError("temperature must be positive")
    order = sorted(range(len(probs)), key=lambda t: (-probs[t], t))[:top_k]
    weights = np.array([probs[t] for t in order], dtype=float) ** (1.0 / temperature)
    weights /= weights.sum()
    u = rng.random()
    acc = 0.0
    for tok, w in zip(order, weights):
        acc += w
        if u < acc:
            return tok
    return order[-1]  # guard against accumulated rounding


class Backend(ABC):
    provider_id: str
    eot_id: int | None

    @abstractmethod
    def tokenize(self, text: str) -> list[int]: ...

    @abstractmethod
    def detokenize(self, ids) -> str: ...

    @abstractmethod
    def distribution(self, context) -> np.ndarray:
        """Next-token probabilities given the context ids."""

    def logprobs(self, ids, context_ids=None) -> list[float]:
        if not ids:
            raise RequestError("cannot score an empty sequence")
        ctx = list(context_ids or [])
        out = []
        running = ctx + list(ids)
        for i, tok in enumerate(ids):
            probs = self.distribution(running[:len(ctx) + i])
            if not 0 <= tok < len(probs):
                raise RequestError(f"token {tok} outside vocabulary")
            out.append(float(math.log(probs[tok])))
        return out

    def sample(self, prompt_ids, max_new: int, top_k: int, temperature: float,
               seed: int, max_restarts: int = 100) -> list[int]:
        """Exactly max_new tokens; drawing end-of-text restarts the attempt."""
        if max_new < 1:
            raise RequestError("max_new must be positive")
        for attempt in range(max_restarts):
            rng = random.Random(derive_seed(seed, attempt))
            out = list(prompt_ids)
            ok = True
            for _ in range(max_new):
                tok = draw_token(self.distribution(out), top_k, temperature, rng)
                if tok == self.eot_id:
                    ok = False
                    break
                out.append(tok)
            if ok:
                return out[len(prompt_ids):]
        raise BackendError(
            f"sampling hit end-of-text on {max_restarts} consecutive attempts")


class NGramBackend(Backend):
    """Reads a "trapkit-ngram" JSON model file.

    The format: {"magic": "trapkit-ngram", "version": 1, "order", "alpha",
    "vocab_size", "step", "counts": [[context_ids, [[token, count], ...]]]}.
    Tokens are UTF-8 bytes; byte 0 is end-of-text.
    """

    def __init__(self, path: str):
        try:
            with open(path, encoding="utf-8") as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise BackendError(f"cannot load model file {path}: {exc}") from exc
        if payload.get("magic") != "trapkit-ngram":
            raise BackendError(f"{path}: not a trapkit-ngram model file")
        if payload.get("version") != 1:
            raise BackendError(f"{path}: unsupported format version")
        self.order = int(payload["order"])
        self.alpha = float(payload["alpha"])
        self.vocab_size = int(payload["vocab_size"])
        self.counts = {}
        self.totals = {}
        for ctx, items in payload["counts"]:
            d = {int(t): int(n) for t, n in items}
            self.counts[tuple(ctx)] = d
            self.totals[tuple(ctx)] = sum(d.values())
        self.provider_id = f"builtin-bytes-o{self.order}"
        self.eot_id = 0

    def tokenize(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def detokenize(self, ids) -> str:
        return bytes(int(i) for i in ids).decode("utf-8", errors="replace")

    def distribution(self, context) -> np.ndarray:
        ctx = tuple(context)[max(0, len(context) - self.order + 1):]
        p = np.full(self.vocab_size, 1.0 / self.vocab_size)
        for k in range(len(ctx) + 1):
            sub = ctx[len(ctx) - k:]
            d = self.counts.get(sub)
            if d is None:
                continue
            vec = np.zeros(self.vocab_size)
            for tok, n in d.items():
                vec[tok] = n
            p = (vec + self.alpha * p) / (self.totals[sub] + self.alpha)
        return p


class TransformersBackend(Backend):
    """Causal LM from a transformers checkpoint at a chosen precision."""

    def __init__(self, model_id: str, device: str = "cpu",
                 precision: Precision = Precision.float32):
        try:
            import torch
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:
            raise BackendError(f"transformers backend unavailable: {exc}") from exc
        dtype = {Precision.float32: torch.float32,
                 Precision.float16: torch.float16,
                 Precision.bfloat16: torch.bfloat16}[precision]
        try:
            self._tok = AutoTokenizer.from_pretrained(model_id)
            self._model = AutoModelForCausalLM.from_pretrained(
                model_id, torch_dtype=dtype).to(device).eval()
        except Exception as exc:
            raise BackendError(f"cannot load {model_id}: {exc}") from exc
        self._torch = torch
        self._device = device
        self.provider_id = f"hf-{model_id}-{precision.value}"
        self.eot_id = self._tok.eos_token_id
        bos = self._tok.bos_token_id
        self._bos = bos if bos is not None else self.eot_id

    def tokenize(self, text: str) -> list[int]:
        return self._tok.encode(text, add_special_tokens=False)

    def detokenize(self, ids) -> str:
        return self._tok.decode(list(ids), skip_special_tokens=False)

    def distribution(self, context) -> np.ndarray:
        torch = self._torch
        # a leading BOS gives the first real token a conditional too
        ids = [self._bos] + list(context)
        with torch.no_grad():
            logits = self._model(
                torch.tensor([ids], device=self._device)).logits[0, -1]
            probs = torch.softmax(logits.float(), dim=-1)
        return probs.cpu().numpy()


def load_backend(config: ShimConfig) -> Backend:
    """Model files with the trapkit-ngram magic get the n-gram backend,
    anything else is treated as a transformers checkpoint id."""
    try:
        with open(config.model_id, encoding="utf-8") as fh:
            magic = json.load(fh).get("magic")
    except (OSError, json.JSONDecodeError, AttributeError):
        magic = None
    if magic == "trapkit-ngram":
        return NGramBackend(config.model_id)
    return TransformersBackend(config.model_id, config.device, config.precision)
