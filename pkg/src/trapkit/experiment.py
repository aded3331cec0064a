"""End-to-end toy experiment: synthetic corpus, trap generation, injection,
training of the built-in model, scoring and evaluation.

This is the desk-scale analog of the full pipeline: a reference n-gram
model trained on disjoint text generates traps, traps are injected into a
target corpus with varying repetition counts, and membership inference is
evaluated against matched non-member traps.
"""

from __future__ import annotations

import logging
import random
import string
from dataclasses import dataclass, field

from .corpus import make_record
from .errors import InputError
from .evaluate import auc, checkpoint_curve
from .injector import inject
from .mia import (ORIENTATIONS, loss_attack, min_k_prob, ratio_attack,
                  AttackScore, MembershipRecord)
from .provider import TokenSequence, derive_seed
from .toylm import BuiltinProvider, train
from .trapgen import generate_synthetic, matched_quotas

logger = logging.getLogger(__name__)

__all__ = ["ToyExperimentConfig", "ToyExperimentResult", "CellResult",
           "make_documents", "run_toy_experiment"]


def make_documents(n_docs: int, words_per_doc: int, vocab_size: int = 200,
                   seed: int = 0, doc_prefix: str = "doc") -> list:
    """Synthetic documents: random sentences over a fixed fake-word vocabulary."""
    rng = random.Random(seed)
    vocab = []
    while len(vocab) < vocab_size:
        w = "".join(rng.choice(string.ascii_lowercase)
                    for _ in range(rng.randint(3, 9)))
        if w not in vocab:
            vocab.append(w)
    docs = []
    for i in range(n_docs):
        words = [rng.choice(vocab) for _ in range(words_per_doc)]
        docs.append(make_record(" ".join(words), f"{doc_prefix}-{i:04d}"))
    return docs


@dataclass
class ToyExperimentConfig:
    n_docs: int = 200
    words_per_doc: int = 2000
    vocab_size: int = 200
    target_len: int = 100  # bytes under the builtin tokenizer
    n_traps: int = 100
    n_rep_values: tuple = (1, 10, 100)
    top_k: int = 50
    temperatures: tuple = tuple(t / 2 for t in range(1, 17))  # 0.5 .. 8.0
    order: int = 4
    alpha: float = 0.5
    n_checkpoints: int = 6
    n_injected_docs: int = 100
    n_nonmember_docs: int = 50
    seed: int = 1234


@dataclass
class CellResult:
    n_rep: int
    aucs: dict  # method -> auc
    records: list  # MembershipRecord per trap
    injections: list  # (doc record, InjectionRecord) for members
    snapshots: list  # training checkpoints of this cell's target


@dataclass
class ToyExperimentResult:
    config: ToyExperimentConfig
    members: list
    nonmembers: list
    controls: list
    cells: dict  # n_rep -> CellResult
    control_aucs: dict  # method -> auc on the highest-n_rep target
    curve: list  # (step, auc) for the highest-n_rep cell, ratio attack
    reference: BuiltinProvider
    member_docs: list  # clean documents included in training
    nonmember_docs: list  # documents held out of training

    def auc_table(self) -> dict:
        out = {}
        for n_rep, cell in self.cells.items():
            for method, value in cell.aucs.items():
                out[(self.config.target_len, n_rep, method)] = value
        return out


def _generate_trap_sets(ref, cfg):
    """Members, bucket-matched non-members and bucket-matched controls."""
    gen_kwargs = dict(ref=ref, target_len=cfg.target_len, top_k=cfg.top_k,
                      temperatures=cfg.temperatures)
    members_res = generate_synthetic(
        quota_per_bucket=cfg.n_traps, seed=cfg.seed,
        max_attempts=60 * cfg.n_traps, **gen_kwargs)
    members = members_res.traps[:cfg.n_traps]
    if len(members) < cfg.n_traps:
        raise InputError(
            f"only generated {len(members)} member traps; "
            f"shortfall {members_res.shortfall}")
    quotas = matched_quotas(members)
    sets = []
    for offset in (1, 2):  # non-members, controls
        res = generate_synthetic(
            quota_per_bucket=quotas, seed=cfg.seed + offset,
            max_attempts=400 * cfg.n_traps, **gen_kwargs)
        if res.shortfall:
            raise InputError(f"matched generation shortfall: {res.shortfall}")
        sets.append(res.traps)
    for t in members:
        t.member = True
    return members, sets[0], sets[1]


def _score_cell(target, reference, members, nonmembers, n_rep):
    methods = ("loss", "min_k", "ratio")
    records = []
    per_method = {m: {"member": [], "nonmember": []} for m in methods}
    for label, traps in (("member", members), ("nonmember", nonmembers)):
        for trap in traps:
            toks = TokenSequence(trap.ids, target.provider_id)
            ref_toks = TokenSequence(trap.ids, reference.provider_id)
            rec = MembershipRecord(ref_id=trap.id, label=label,
                                   bucket=trap.bucket, length=trap.length,
                                   n_rep=n_rep)
            rec.add(loss_attack(target, toks))
            rec.add(min_k_prob(target, toks))
            rec.add(ratio_attack(target, reference, toks, ref_toks))
            records.append(rec)
            for m in methods:
                per_method[m][label].append(rec.value(m))
    aucs = {m: auc(per_method[m]["member"], per_method[m]["nonmember"],
                   ORIENTATIONS[m]) for m in methods}
    return records, aucs


def run_toy_experiment(cfg: ToyExperimentConfig | None = None) -> ToyExperimentResult:
    cfg = cfg or ToyExperimentConfig()
    if cfg.n_injected_docs > cfg.n_docs - cfg.n_nonmember_docs:
        raise InputError("not enough documents for the requested split")
    if cfg.n_traps > cfg.n_injected_docs:
        raise InputError("need one document per injected trap")

    docs = make_documents(cfg.n_docs, cfg.words_per_doc, cfg.vocab_size,
                          seed=cfg.seed, doc_prefix="target")
    ref_docs = make_documents(cfg.n_docs, cfg.words_per_doc, cfg.vocab_size,
                              seed=cfg.seed + 7919, doc_prefix="ref")

    logger.info("training reference model on %d disjoint documents", len(ref_docs))
    reference = train([d.text for d in ref_docs], order=cfg.order,
                      alpha=cfg.alpha, seed=cfg.seed)[-1].provider()

    members, nonmembers, controls = _generate_trap_sets(reference, cfg)
    logger.info("generated %d member / %d non-member / %d control traps",
                len(members), len(nonmembers), len(controls))

    injected_docs = docs[:cfg.n_injected_docs]
    clean_member_docs = docs[cfg.n_injected_docs:cfg.n_docs - cfg.n_nonmember_docs]
    nonmember_docs = docs[cfg.n_docs - cfg.n_nonmember_docs:]

    top_n_rep = max(cfg.n_rep_values)
    cells = {}
    control_aucs = {}
    curve = []
    for n_rep in cfg.n_rep_values:
        injections = []
        training_texts = []
        for i, (trap, doc) in enumerate(zip(members, injected_docs)):
            modified, record = inject(doc, trap, n_rep,
                                      seed=derive_seed(cfg.seed + n_rep, i))
            injections.append((doc, record))
            training_texts.append(modified)
        training_texts += [d.text for d in injected_docs[len(members):]]
        training_texts += [d.text for d in clean_member_docs]

        ckpt = None
        if n_rep == top_n_rep and cfg.n_checkpoints > 1:
            total = sum(len(t.encode()) + 1 for t in training_texts)
            ckpt = max(1, total // cfg.n_checkpoints)
        logger.info("training target model, n_rep=%d", n_rep)
        snapshots = train(training_texts, order=cfg.order, alpha=cfg.alpha,
                          checkpoint_every=ckpt, seed=cfg.seed + n_rep)
        target = snapshots[-1].provider()

        records, aucs = _score_cell(target, reference, members, nonmembers, n_rep)
        cells[n_rep] = CellResult(n_rep=n_rep, aucs=aucs, records=records,
                                  injections=injections, snapshots=snapshots)
        logger.info("n_rep=%d AUCs: %s", n_rep,
                    {m: round(v, 3) for m, v in aucs.items()})

        if n_rep == top_n_rep:
            _, control_aucs = _score_cell(target, reference, controls,
                                          nonmembers, n_rep)
            curve = checkpoint_curve(snapshots, reference, members,
                                     nonmembers, method="ratio")

    return ToyExperimentResult(
        config=cfg, members=members, nonmembers=nonmembers, controls=controls,
        cells=cells, control_aucs=control_aucs, curve=curve,
        reference=reference, member_docs=clean_member_docs,
        nonmember_docs=nonmember_docs)
