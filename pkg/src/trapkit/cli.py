"""Command-line orchestration of the trap pipeline.

Exit codes: 0 success, 2 config error, 3 provider error, 4 data error.
Logs are line-delimited JSON events in <out>/events.jsonl.
"""

from __future__ import annotations

import functools
import json
import logging
import os
import sys
import time
from pathlib import Path

import click

from . import evaluate as ev
from . import mia
from .config import load_config, override_all_seeds
from .corpus import ingest
from .dupscan import find_duplicates, perplexity_by_repetition
from .errors import (CapabilityError, InputError, IntegrityError,
                     TransportError, TrapkitError)
from .experiment import ToyExperimentConfig, run_toy_experiment
from .injector import emit_html_trap, inject, save_record
from .provider import ProviderConfig, RemoteProvider
from .toylm import BuiltinProvider, load_model, save_model, train
from .trapgen import (BucketSpec, generate_synthetic, load_traps,
                      matched_quotas, save_traps)

logger = logging.getLogger("trapkit")

EXIT_CONFIG = 2
EXIT_PROVIDER = 3
EXIT_DATA = 4


class _JsonLineHandler(logging.Handler):
    def __init__(self, path):
        super().__init__()
        self._fh = open(path, "a", encoding="utf-8")

    def emit(self, record):
        event = {"ts": time.time(), "level": record.levelname,
                 "logger": record.name, "msg": record.getMessage()}
        self._fh.write(json.dumps(event) + "\n")
        self._fh.flush()


def _setup_logging(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    root = logging.getLogger()
    root.setLevel(logging.INFO)
    root.addHandler(_JsonLineHandler(out_dir / "events.jsonl"))
    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(stream)


def _build_provider(pcfg: dict, endpoint_flag: str | None = None):
    endpoint = endpoint_flag or pcfg.get("endpoint") or os.environ.get("TRAPKIT_ENDPOINT")
    if pcfg["kind"] == "remote" or (endpoint and pcfg["kind"] != "builtin"):
        if not endpoint:
            raise InputError("remote provider requires an endpoint "
                             "(--provider-endpoint or TRAPKIT_ENDPOINT)")
        return RemoteProvider(ProviderConfig(
            kind="remote", endpoint=endpoint, timeout=pcfg["timeout"],
            max_parallel=pcfg["max_parallel"],
            passthrough=pcfg.get("passthrough", {})))
    if pcfg.get("model_path"):
        return load_model(pcfg["model_path"]).provider()
    return BuiltinProvider()


def _bucket_spec(gcfg: dict) -> BucketSpec:
    return BucketSpec(count=gcfg["bucket_count"], width=gcfg["bucket_width"],
                      floor=gcfg["bucket_floor"])


def pipeline_command(fn):
    """Map toolkit errors to the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (TransportError, CapabilityError) as exc:
            logger.error("provider error: %s", exc)
            sys.exit(EXIT_PROVIDER)
        except (InputError, IntegrityError) as exc:
            logger.error("data error: %s", exc)
            sys.exit(EXIT_DATA)
        except TrapkitError as exc:
            logger.error("%s", exc)
            sys.exit(EXIT_DATA)

    return wrapper


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Declarative experiment config (JSON).")
@click.option("--set", "overrides", multiple=True, metavar="KEY.PATH=VALUE",
              help="Override any config key with a dotted path.")
@click.option("--seed", type=int, default=None,
              help="Override all seeds at once.")
@click.option("--workers", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--provider-endpoint", default=None,
              help="Remote provider URL (fallback: TRAPKIT_ENDPOINT).")
@click.pass_context
def main(ctx, config_path, overrides, seed, workers, out, provider_endpoint):
    """Copyright-trap toolkit: generate, inject, train, score, evaluate."""
    try:
        cfg = load_config(config_path, overrides)
    except InputError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if seed is not None:
        override_all_seeds(cfg, seed)
    if workers is not None:
        cfg["workers"] = workers
    if out is not None:
        cfg["out"] = out
    ctx.obj = {"cfg": cfg, "endpoint": provider_endpoint}
    _setup_logging(Path(cfg["out"]))


def _echo_config(cfg):
    return {"seed": cfg["seed"], "generation": cfg["generation"],
            "injection": cfg["injection"], "mia": cfg["mia"]}


@main.command("gen-traps")
@click.pass_obj
@pipeline_command
def gen_traps(obj):
    """Generate member and matched non-member trap sets per target length."""
    cfg, out = obj["cfg"], Path(obj["cfg"]["out"])
    gcfg = cfg["generation"]
    ref = _build_provider(cfg["provider"]["reference"], obj["endpoint"])
    spec = _bucket_spec(gcfg)
    for length in gcfg["lengths"]:
        members = generate_synthetic(
            ref, target_len=length, top_k=gcfg["top_k"],
            temperatures=gcfg["temperatures"],
            quota_per_bucket=gcfg["quota_per_bucket"], spec=spec,
            seed=cfg["seed"], max_attempts=gcfg["max_attempts"])
        if members.shortfall:
            logger.warning("L=%d member shortfall: %s", length, members.shortfall)
        nonmembers = generate_synthetic(
            ref, target_len=length, top_k=gcfg["top_k"],
            temperatures=gcfg["temperatures"],
            quota_per_bucket=matched_quotas(members.traps), spec=spec,
            seed=cfg["seed"] + 1, max_attempts=gcfg["max_attempts"])
        for t in members.traps:
            t.member = True
        save_traps(out / f"traps_L{length}_members.jsonl", members.traps,
                   config=_echo_config(cfg), seed=cfg["seed"])
        save_traps(out / f"traps_L{length}_nonmembers.jsonl", nonmembers.traps,
                   config=_echo_config(cfg), seed=cfg["seed"] + 1)
        logger.info("L=%d: %d members, %d non-members", length,
                    len(members.traps), len(nonmembers.traps))


@main.command("inject")
@click.argument("traps_file", type=click.Path(exists=True))
@click.argument("doc_paths", nargs=-1, type=click.Path(exists=True))
@click.option("--n-rep", type=int, default=100)
@click.pass_obj
@pipeline_command
def inject_cmd(obj, traps_file, doc_paths, n_rep):
    """Inject one unique trap per document; write modified docs + records."""
    cfg, out = obj["cfg"], Path(obj["cfg"]["out"])
    ref = _build_provider(cfg["provider"]["reference"], obj["endpoint"])
    _, traps = load_traps(traps_file)
    result = ingest(doc_paths, ref, min_tokens=cfg["corpus"]["min_tokens"])
    if not result.records:
        raise InputError("no usable documents to inject into")
    mod_dir = out / "modified"
    mod_dir.mkdir(parents=True, exist_ok=True)
    for i, (trap, doc) in enumerate(zip(traps, result.records)):
        modified, record = inject(doc, trap, n_rep, seed=cfg["seed"] + i)
        stem = Path(doc.path).name if doc.path else doc.doc_id
        (mod_dir / stem).write_text(modified, encoding="utf-8")
        save_record(record, mod_dir / (stem + ".injection.json"))
    logger.info("injected %d documents (n_rep=%d)",
                min(len(traps), len(result.records)), n_rep)


@main.command("toy-train")
@click.argument("doc_paths", nargs=-1, type=click.Path(exists=True))
@click.pass_obj
@pipeline_command
def toy_train(obj, doc_paths):
    """Train the builtin n-gram model; write model + checkpoint files."""
    cfg, out = obj["cfg"], Path(obj["cfg"]["out"])
    tcfg = cfg["toy"]
    texts = [Path(p).read_text(encoding="utf-8") for p in doc_paths]
    if not texts:
        raise InputError("no training documents given")
    snapshots = train(texts, order=tcfg["order"], alpha=tcfg["alpha"],
                      checkpoint_every=tcfg["checkpoint_every"],
                      seed=cfg["seed"], epochs=tcfg["epochs"])
    for snap in snapshots:
        save_model(snap.model, out / f"model_step{snap.step}.json",
                   step=snap.step)
    logger.info("trained %d-gram model, %d snapshot(s)", tcfg["order"],
                len(snapshots))


@main.command("score")
@click.argument("members_file", type=click.Path(exists=True))
@click.argument("nonmembers_file", type=click.Path(exists=True))
@click.pass_obj
@pipeline_command
def score_cmd(obj, members_file, nonmembers_file):
    """Score trap sets with the Loss, Min-K% and Ratio attacks."""
    cfg, out = obj["cfg"], Path(obj["cfg"]["out"])
    target = _build_provider(cfg["provider"]["target"], obj["endpoint"])
    ref = _build_provider(cfg["provider"]["reference"], obj["endpoint"])
    k = cfg["mia"]["k"]
    records = []
    for label, path in (("member", members_file), ("nonmember", nonmembers_file)):
        _, traps = load_traps(path)
        for trap in traps:
            toks = target.tokenize(trap.text)
            ref_toks = ref.tokenize(trap.text)
            rec = mia.MembershipRecord(ref_id=trap.id, label=label,
                                       bucket=trap.bucket, length=trap.length)
            rec.add(mia.loss_attack(target, toks))
            rec.add(mia.min_k_prob(target, toks, k))
            rec.add(mia.ratio_attack(target, ref, toks, ref_toks))
            records.append(rec)
    mia.save_records(out / "scores.jsonl", records)
    logger.info("scored %d records -> %s", len(records), out / "scores.jsonl")


@main.command("evaluate")
@click.argument("scores_file", type=click.Path(exists=True))
@click.pass_obj
@pipeline_command
def evaluate_cmd(obj, scores_file):
    """AUCs (global + per bucket) with bootstrap CIs, written as JSON + CSV."""
    cfg, out = obj["cfg"], Path(obj["cfg"]["out"])
    records = mia.load_records(scores_file)
    if not records:
        raise InputError(f"{scores_file} contains no records")
    methods = sorted({s.method for r in records for s in r.scores})
    for method in methods:
        m = [r.value(method) for r in records if r.label == "member" and r.has(method)]
        n = [r.value(method) for r in records if r.label == "nonmember" and r.has(method)]
        if not m or not n:
            logger.warning("method %s missing one side, skipped", method)
            continue
        orientation = mia.ORIENTATIONS[method]
        report = ev.EvaluationReport(
            method=method, auc=ev.auc(m, n, orientation),
            n_members=len(m), n_nonmembers=len(n),
            per_bucket=ev.bucketed_auc(records, method),
            ci=ev.bootstrap_auc_ci(m, n, orientation,
                                   n_boot=cfg["eval"]["n_boot"],
                                   seed=cfg["seed"]),
            config=_echo_config(cfg))
        report.save(out / f"report_{method}.json")
        ev.write_csv(out / f"bucket_auc_{method}.csv", report.per_bucket,
                     ["bucket", "auc", "n"])
        logger.info("%s: AUC %.4f (n=%d+%d)", method, report.auc, len(m), len(n))


@main.command("dup-scan")
@click.argument("doc_paths", nargs=-1, type=click.Path(exists=True))
@click.pass_obj
@pipeline_command
def dup_scan(obj, doc_paths):
    """Find repeated token windows and their perplexity per repetition bin."""
    cfg, out = obj["cfg"], Path(obj["cfg"]["out"])
    scorer = _build_provider(cfg["provider"]["reference"], obj["endpoint"])
    corpus = {}
    for p in doc_paths:
        corpus[Path(p).name] = scorer.tokenize(
            Path(p).read_text(encoding="utf-8")).ids
    dups = find_duplicates(corpus, window=cfg["dupscan"]["window"],
                           min_count=cfg["dupscan"]["min_count"])
    with open(out / "duplicates.jsonl", "w", encoding="utf-8") as fh:
        for w in dups:
            fh.write(json.dumps({"ids": list(w.ids), "count": w.count,
                                 "example_locations": w.example_locations}) + "\n")
    rows = perplexity_by_repetition(
        dups, scorer, samples_per_bin=cfg["dupscan"]["samples_per_bin"],
        seed=cfg["seed"])
    ev.write_csv(out / "ppl_by_repetition.csv",
                 [(lo, hi, med, n) for (lo, hi), med, n in rows],
                 ["bin_low", "bin_high", "median_ppl", "n"])
    logger.info("found %d duplicate windows", len(dups))


@main.command("emit-html")
@click.argument("trap_text")
@click.option("--n-rep", type=int, default=1)
@click.pass_obj
@pipeline_command
def emit_html(obj, trap_text, n_rep):
    """Write an invisible-HTML fragment carrying the trap text."""
    out = Path(obj["cfg"]["out"])
    path = out / "trap.html"
    path.write_text(emit_html_trap(trap_text, n_rep), encoding="utf-8")
    logger.info("wrote %s", path)


@main.command("run-all")
@click.pass_obj
@pipeline_command
def run_all(obj):
    """Full desk-scale experiment on the builtin model; writes the AUC table."""
    cfg, out = obj["cfg"], Path(obj["cfg"]["out"])
    tcfg = cfg["toy"]
    toy = ToyExperimentConfig(
        n_docs=tcfg["n_docs"], words_per_doc=tcfg["words_per_doc"],
        vocab_size=tcfg["vocab_size"], target_len=tcfg["target_len"],
        n_traps=tcfg["n_traps"], n_rep_values=tuple(tcfg["n_rep_values"]),
        top_k=cfg["generation"]["top_k"],
        temperatures=tuple(cfg["generation"]["temperatures"]),
        order=tcfg["order"], alpha=tcfg["alpha"],
        n_checkpoints=tcfg["n_checkpoints"],
        n_injected_docs=tcfg["n_injected_docs"],
        n_nonmember_docs=tcfg["n_nonmember_docs"], seed=cfg["seed"])
    result = run_toy_experiment(toy)
    table = {f"L={L},n_rep={n},method={m}": v
             for (L, n, m), v in result.auc_table().items()}
    report = {
        "auc_table": table,
        "control_aucs": result.control_aucs,
        "checkpoint_curve": result.curve,
        "config": _echo_config(cfg),
        "toy": tcfg,
    }
    with open(out / "run_all_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    ev.write_csv(out / "checkpoint_auc.csv", result.curve, ["step", "auc"])
    logger.info("run-all complete; AUC table written to %s",
                out / "run_all_report.json")


if __name__ == "__main__":
    main()
