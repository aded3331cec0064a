"""Evaluation: rank-based AUC, per-bucket and per-checkpoint breakdowns,
permutation-tested Pearson correlation and accuracy-maximizing thresholds.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import InputError
from .mia import HIGHER, LOWER, ORIENTATIONS, min_k_prob, loss_attack, ratio_attack
from .provider import TokenSequence

__all__ = ["auc", "bucketed_auc", "pearson_perm", "checkpoint_curve",
           "threshold_max_accuracy", "bootstrap_auc_ci", "EvaluationReport",
           "write_csv"]


def _oriented(scores, orientation):
    if orientation == HIGHER:
        return list(map(float, scores))
    if orientation == LOWER:
        return [-float(s) for s in scores]
    raise InputError(f"unknown orientation {orientation!r}")


def auc(member_scores, nonmember_scores, orientation: str = HIGHER) -> float:
    """Mann-Whitney AUC: P(random member outranks random non-member).

    Ties are credited 0.5.  Computed from average ranks of the pooled
    sample, which is exactly the pairwise win/tie average.
    """
    if not member_scores or not nonmember_scores:
        raise InputError("both score lists must be non-empty")
    if orientation == LOWER:
        # exact complement (ties stay at 0.5), so flipping the
        # orientation maps AUC to 1 - AUC with no rounding drift
        return 1.0 - auc(member_scores, nonmember_scores, HIGHER)
    m = _oriented(member_scores, orientation)
    n = _oriented(nonmember_scores, orientation)
    pooled = sorted((s, i < len(m)) for i, s in enumerate(m + n))
    # average ranks over tie groups, 1-based
    rank_sum_members = 0.0
    i = 0
    while i < len(pooled):
        j = i
        while j < len(pooled) and pooled[j][0] == pooled[i][0]:
            j += 1
        avg_rank = (i + 1 + j) / 2.0
        rank_sum_members += avg_rank * sum(1 for k in range(i, j) if pooled[k][1])
        i = j
    u = rank_sum_members - len(m) * (len(m) + 1) / 2.0
    return u / (len(m) * len(n))


def bucketed_auc(records, method: str):
    """AUC per perplexity bucket; buckets missing one side report auc=None."""
    buckets: dict = {}
    for r in records:
        if not r.has(method):
            continue
        side = buckets.setdefault(r.bucket, {"member": [], "nonmember": []})
        side[r.label].append(r.value(method))
    out = []
    orientation = ORIENTATIONS[method]
    for b in sorted(buckets, key=lambda x: (x is None, x)):
        m, n = buckets[b]["member"], buckets[b]["nonmember"]
        value = auc(m, n, orientation) if m and n else None
        out.append((b, value, len(m) + len(n)))
    return out


def pearson_perm(xs, ys, n_perm: int = 10000, seed: int = 0):
    """Sample Pearson r with a two-sided permutation p-value.

    p counts permutations of ys with |r| >= |r_observed|, plus-one
    corrected: p = (count + 1) / (n_perm + 1).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) != len(ys) or len(xs) < 3:
        raise InputError("need equal-length series of at least 3 points")
    if np.ptp(xs) == 0 or np.ptp(ys) == 0:
        raise InputError("correlation undefined for a constant series")

    def _r(a, b):
        a = a - a.mean()
        b = b - b.mean()
        return float(a @ b / np.sqrt((a @ a) * (b @ b)))

    r_obs = _r(xs, ys)
    rng = random.Random(seed)
    perm = list(ys)
    count = 0
    for _ in range(n_perm):
        rng.shuffle(perm)
        if abs(_r(xs, np.asarray(perm))) >= abs(r_obs) - 1e-12:
            count += 1
    return r_obs, (count + 1) / (n_perm + 1)


def _score_value(provider, method, toks, reference=None, ref_toks=None, k=20.0):
    if method == "loss":
        return loss_attack(provider, toks).value
    if method == "min_k":
        return min_k_prob(provider, toks, k).value
    if method == "ratio":
        return ratio_attack(provider, reference, toks, ref_toks).value
    raise InputError(f"checkpoint_curve does not support method {method!r}")


def checkpoint_curve(snapshots, reference, members, nonmembers,
                     method: str = "ratio", k: float = 20.0):
    """AUC at every training checkpoint with identical record sets.

    ``members``/``nonmembers`` are TrapSequence lists; each snapshot is
    scored on the same token ids.  Returns [(step, auc)] ordered by step.
    """
    if len(snapshots) < 2:
        raise InputError("need at least two snapshots")
    orientation = ORIENTATIONS[method]
    out = []
    for snap in sorted(snapshots, key=lambda s: s.step):
        provider = snap.provider()
        vals = []
        for group in (members, nonmembers):
            scores = []
            for trap in group:
                toks = TokenSequence(trap.ids, provider.provider_id)
                ref_toks = None
                if method == "ratio":
                    ref_toks = reference.tokenize(trap.text)
                scores.append(_score_value(provider, method, toks,
                                           reference, ref_toks, k))
            vals.append(scores)
        out.append((snap.step, auc(vals[0], vals[1], orientation)))
    return out


def threshold_max_accuracy(scores, labels, orientation: str = HIGHER) -> float:
    """Threshold maximizing accuracy of "score > t => member" (in the
    member direction).

    Among maximizing intervals between adjacent distinct scores, the
    midpoint of the widest one is returned; thresholds outside the score
    range are used only when no interior interval attains the maximum.
    """
    if len(scores) != len(labels):
        raise InputError("scores and labels must align")
    members = [l in ("member", 1, True) for l in labels]
    if all(members) or not any(members):
        raise InputError("both labels must be present")
    vals = _oriented(scores, orientation)
    distinct = sorted(set(vals))

    def accuracy(t):
        correct = 0
        for v, is_m in zip(vals, members):
            correct += (v > t) == is_m
        return correct / len(vals)

    candidates = [(distinct[0] - 1.0, float("inf"))]
    for lo, hi in zip(distinct, distinct[1:]):
        candidates.append(((lo + hi) / 2.0, hi - lo))
    candidates.append((distinct[-1] + 1.0, float("inf")))

    accs = [accuracy(t) for t, _ in candidates]
    best = max(accs)
    interior = [(w, t) for (t, w), a in zip(candidates, accs)
                if a == best and w != float("inf")]
    if interior:
        t = max(interior)[1]
    else:
        t = next(t for (t, _), a in zip(candidates, accs) if a == best)
    return t if orientation == HIGHER else -t


def bootstrap_auc_ci(member_scores, nonmember_scores, orientation: str = HIGHER,
                     n_boot: int = 1000, seed: int = 0, level: float = 0.95):
    """Percentile bootstrap confidence interval for the AUC."""
    rng = random.Random(seed)
    stats = []
    for _ in range(n_boot):
        m = [rng.choice(member_scores) for _ in member_scores]
        n = [rng.choice(nonmember_scores) for _ in nonmember_scores]
        stats.append(auc(m, n, orientation))
    lo = (1 - level) / 2
    return (float(np.quantile(stats, lo)), float(np.quantile(stats, 1 - lo)))


@dataclass
class EvaluationReport:
    method: str
    auc: float
    n_members: int
    n_nonmembers: int
    per_bucket: list = field(default_factory=list)  # (bucket, auc, n)
    per_checkpoint: list = field(default_factory=list)  # (step, auc)
    pearson: tuple | None = None  # (r, p, n_perm)
    ci: tuple | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.auc <= 1.0:
            raise InputError("auc must lie in [0, 1]")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())


def write_csv(path, rows, header) -> None:
    """Plot-ready CSV for (step,auc) or (bucket,auc,n) style rows."""
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
