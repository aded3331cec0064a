import pytest

from trapkit.corpus import make_record
from trapkit.errors import InputError
from trapkit.trapgen import (BucketSpec, bucket_of, generate_synthetic,
                             load_traps, matched_quotas, sample_real,
                             save_traps)

SPEC = BucketSpec()
# wide spec so every perplexity the toy models produce lands in range
WIDE = BucketSpec(count=10, width=100.0, floor=1.0)


@pytest.mark.parametrize("ppl,bucket", [
    (1.0, 1),
    (10.999, 1),
    (11.0, 2),
    (41.0, 5),
    (100.999, 10),
    (101.0, None),
    (5000.0, None),
])
def test_bucket_boundaries(ppl, bucket):
    assert bucket_of(ppl, SPEC) == bucket


def test_bucket_rejects_impossible_perplexity():
    with pytest.raises(InputError):
        bucket_of(0.5, SPEC)


def test_generate_synthetic_contract(trained_provider):
    res = generate_synthetic(trained_provider, target_len=30, top_k=50,
                             temperatures=(1.0, 2.0, 4.0), quota_per_bucket=3,
                             spec=WIDE, seed=5, max_attempts=400)
    assert res.traps
    for t in res.traps:
        assert len(t.ids) == 30 == t.length
        assert bucket_of(t.perplexity, WIDE) == t.bucket
        assert not t.member  # never set at generation
        assert t.kind == "synthetic"
        assert t.temperature in (1.0, 2.0, 4.0)
    for bucket, n in res.by_bucket().items():
        assert n <= 3
    # ids and detokenized text agree
    t = res.traps[0]
    assert trained_provider.tokenize(trained_provider.detokenize(t.ids)).ids == t.ids


def test_generate_deterministic_and_seed_disjoint(trained_provider):
    kwargs = dict(target_len=20, top_k=50, temperatures=(1.0, 3.0),
                  quota_per_bucket=2, spec=WIDE, max_attempts=200)
    a = generate_synthetic(trained_provider, seed=1, **kwargs)
    b = generate_synthetic(trained_provider, seed=1, **kwargs)
    c = generate_synthetic(trained_provider, seed=2, **kwargs)
    assert [t.ids for t in a.traps] == [t.ids for t in b.traps]
    assert [t.id for t in a.traps] == [t.id for t in b.traps]
    assert not {t.id for t in a.traps} & {t.id for t in c.traps}


def test_shortfall_reported(trained_provider):
    res = generate_synthetic(trained_provider, target_len=10, top_k=2,
                             temperatures=(1.0,), quota_per_bucket=1,
                             spec=SPEC, seed=0, max_attempts=10)
    filled = res.by_bucket()
    assert res.shortfall  # 10 low-temperature attempts cannot fill 10 buckets
    assert sum(filled.values()) + sum(res.shortfall.values()) == 10


def test_matched_quota_generation(trained_provider):
    members = generate_synthetic(trained_provider, target_len=15, top_k=50,
                                 temperatures=(1.0, 2.0), quota_per_bucket=4,
                                 spec=WIDE, seed=3, max_attempts=300).traps
    quotas = matched_quotas(members)
    nonmembers = generate_synthetic(trained_provider, target_len=15, top_k=50,
                                    temperatures=(1.0, 2.0),
                                    quota_per_bucket=quotas, spec=WIDE,
                                    seed=4, max_attempts=3000).traps
    assert matched_quotas(nonmembers) == quotas


def test_sample_real_windows(trained_provider):
    doc = make_record("the cat sat on the mat again and again " * 30, "book-1")
    res = sample_real(doc, trained_provider, target_len=25, quota_per_bucket=5,
                      spec=WIDE, seed=8, max_attempts=200)
    doc_ids = trained_provider.tokenize(doc.text).ids
    for t in res.traps:
        assert len(t.ids) == 25
        assert t.kind == "real" and t.source_doc == "book-1"
        # window really is a contiguous slice of the document
        assert any(doc_ids[i:i + 25] == t.ids
                   for i in range(len(doc_ids) - 24))


def test_sample_real_too_short(trained_provider):
    doc = make_record("tiny", "d")
    with pytest.raises(InputError):
        sample_real(doc, trained_provider, target_len=100)


def test_sample_real_exact_length_single_window(trained_provider):
    text = "exactly this text"
    doc = make_record(text, "d")
    n = len(trained_provider.tokenize(text).ids)
    res = sample_real(doc, trained_provider, target_len=n, quota_per_bucket=1,
                      spec=WIDE, seed=0, max_attempts=5)
    assert len(res.traps) == 1
    assert res.traps[0].text == text


def test_save_load_roundtrip(tmp_path, trained_provider):
    traps = generate_synthetic(trained_provider, target_len=12, top_k=50,
                               temperatures=(2.0,), quota_per_bucket=2,
                               spec=WIDE, seed=6, max_attempts=100).traps
    path = tmp_path / "traps.jsonl"
    save_traps(path, traps, config={"target_len": 12}, seed=6)
    header, loaded = load_traps(path)
    assert header["config"] == {"target_len": 12} and header["seed"] == 6
    assert loaded == traps


def test_load_requires_header(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "x"}\n')
    with pytest.raises(InputError):
        load_traps(path)
