"""Declarative experiment configuration.

A single JSON file drives every pipeline stage; CLI flags override keys
with dotted paths.  Defaults follow the reference experimental setup:
trap lengths {25, 50, 100}, top-k 50, temperatures 0.5..8.0, quota 50
per perplexity bucket, n_rep {1, 10, 100, 1000}, Min-K% k=20, context
length 100.
"""

from __future__ import annotations

import copy
import json

from .errors import InputError

DEFAULTS = {
    "provider": {
        "target": {"kind": "builtin", "endpoint": None, "model_path": None,
                   "timeout": 30.0, "max_parallel": 4, "passthrough": {}},
        "reference": {"kind": "builtin", "endpoint": None, "model_path": None,
                      "timeout": 30.0, "max_parallel": 4, "passthrough": {}},
    },
    "generation": {
        "lengths": [25, 50, 100],
        "top_k": 50,
        "temperatures": [t / 2 for t in range(1, 17)],
        "quota_per_bucket": 50,
        "bucket_count": 10,
        "bucket_width": 10.0,
        "bucket_floor": 1.0,
        "max_attempts": None,
    },
    "injection": {"n_rep": [1, 10, 100, 1000]},
    "corpus": {"min_tokens": 5000},
    "toy": {
        "order": 4, "alpha": 0.5, "epochs": 1, "checkpoint_every": None,
        "n_docs": 200, "words_per_doc": 2000, "vocab_size": 200,
        "n_traps": 100, "n_rep_values": [1, 10, 100],
        "n_checkpoints": 6, "n_injected_docs": 100, "n_nonmember_docs": 50,
        "target_len": 100,
    },
    "mia": {"k": 20.0, "ctx_len": 100, "excerpt_len": 512, "n_excerpts": 100},
    "eval": {"n_perm": 10000, "n_boot": 1000},
    "dupscan": {"window": 100, "min_count": 2, "samples_per_bin": 100},
    "seed": 1234,
    "workers": 1,
    "out": "trapkit-out",
}


def _deep_update(base: dict, extra: dict, path: str = "") -> dict:
    for key, value in extra.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise InputError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _deep_update(base[key], value, here)
        else:
            base[key] = value
    return base


def load_config(path: str | None = None, overrides=()) -> dict:
    """Defaults, then the config file, then dotted-path overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: invalid JSON ({exc})")
        _deep_update(cfg, user)
    for item in overrides:
        if "=" not in item:
            raise InputError(f"override {item!r} is not KEY.PATH=VALUE")
        dotted, raw = item.split("=", 1)
        node = cfg
        keys = dotted.split(".")
        for key in keys[:-1]:
            if not isinstance(node.get(key), dict):
                raise InputError(f"unknown config key: {dotted}")
            node = node[key]
        if keys[-1] not in node:
            raise InputError(f"unknown config key: {dotted}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings allowed
        node[keys[-1]] = value
    return cfg


def override_all_seeds(cfg: dict, seed: int) -> None:
    cfg["seed"] = seed
