import math
import random

import numpy as np
import pytest

from trapkit.errors import InputError
from trapkit.evaluate import (EvaluationReport, auc, bootstrap_auc_ci,
                              bucketed_auc, checkpoint_curve, pearson_perm,
                              threshold_max_accuracy)
from trapkit.mia import AttackScore, MembershipRecord
from trapkit.toylm import train


def pairwise_auc(members, nonmembers):
    """Brute-force O(n^2) oracle: mean over all pairs of win/tie/loss."""
    total = 0.0
    for m in members:
        for n in nonmembers:
            total += 1.0 if m > n else (0.5 if m == n else 0.0)
    return total / (len(members) * len(nonmembers))


def test_auc_perfect_separation():
    assert auc([3, 2], [1, 0]) == 1.0
    assert auc([1, 0], [3, 2]) == 0.0


def test_auc_pure_tie():
    assert auc([5.0], [5.0]) == 0.5


def test_auc_matches_pairwise_oracle():
    rng = random.Random(17)
    for _ in range(50):
        # coarse grid forces plenty of ties
        m = [rng.randrange(20) / 4 for _ in range(rng.randint(1, 200))]
        n = [rng.randrange(20) / 4 for _ in range(rng.randint(1, 200))]
        assert auc(m, n) == pytest.approx(pairwise_auc(m, n), abs=1e-12)


def test_auc_orientation_flip_exact():
    rng = random.Random(5)
    m = [rng.random() for _ in range(40)]
    n = [rng.random() for _ in range(30)]
    hi = auc(m, n, "higher_is_member")
    lo = auc(m, n, "lower_is_member")
    assert hi + lo == pytest.approx(1.0, abs=1e-15)


def test_auc_monotone_transform_invariant():
    rng = random.Random(6)
    m = [rng.random() for _ in range(25)]
    n = [rng.random() for _ in range(25)]
    assert auc(m, n) == auc([math.exp(3 * x) for x in m],
                            [math.exp(3 * x) for x in n])


def test_auc_symmetry_for_tie_free():
    m, n = [1.0, 3.0, 5.0], [2.0, 4.0]
    assert auc(m, n) + auc(n, m) == pytest.approx(1.0)


def test_auc_rejects_empty_side():
    with pytest.raises(InputError):
        auc([], [1.0])
    with pytest.raises(InputError):
        auc([1.0], [])


def _records(rows):
    out = []
    for i, (label, bucket, value) in enumerate(rows):
        out.append(MembershipRecord(
            ref_id=f"r{i}", label=label, bucket=bucket,
            scores=[AttackScore("min_k", value, "higher_is_member")]))
    return out


def test_bucketed_auc_single_bucket_equals_global():
    recs = _records([("member", 2, 3.0), ("member", 2, 2.0),
                     ("nonmember", 2, 1.0), ("nonmember", 2, 0.0)])
    out = bucketed_auc(recs, "min_k")
    assert out == [(2, 1.0, 4)]


def test_bucketed_auc_undefined_side():
    recs = _records([("member", 1, 3.0), ("member", 2, 2.0),
                     ("nonmember", 2, 1.0)])
    out = dict((b, a) for b, a, _ in bucketed_auc(recs, "min_k"))
    assert out[1] is None
    assert out[2] == 1.0


def test_pearson_exact_linear():
    xs = list(range(1, 11))
    ys = [2 * x + 1 for x in xs]
    r, p = pearson_perm(xs, ys, n_perm=999, seed=0)
    assert r == pytest.approx(1.0, abs=1e-12)
    assert p == pytest.approx(1 / 1000)


def test_pearson_constant_series_rejected():
    with pytest.raises(InputError):
        pearson_perm([1, 2, 3], [5, 5, 5])


def test_pearson_matches_closed_form():
    rng = random.Random(23)
    for _ in range(100):
        n = rng.randint(3, 30)
        xs = [rng.gauss(0, 1) for _ in range(n)]
        ys = [rng.gauss(0, 1) for _ in range(n)]
        r, _ = pearson_perm(xs, ys, n_perm=10, seed=1)
        assert r == pytest.approx(np.corrcoef(xs, ys)[0, 1], abs=1e-12)


def test_pearson_affine_invariance():
    rng = random.Random(2)
    xs = [rng.random() for _ in range(12)]
    ys = [rng.random() for _ in range(12)]
    r1, _ = pearson_perm(xs, ys, n_perm=10, seed=0)
    r2, _ = pearson_perm([5 * x - 3 for x in xs], [0.1 * y + 7 for y in ys],
                         n_perm=10, seed=0)
    assert r1 == pytest.approx(r2, abs=1e-12)


def test_threshold_forced_midpoint():
    t = threshold_max_accuracy([0.9, 0.8, 0.2, 0.1],
                               ["member", "member", "nonmember", "nonmember"])
    assert t == pytest.approx(0.5)


def test_threshold_single_pair():
    t = threshold_max_accuracy([0.7, 0.3], ["member", "nonmember"])
    assert 0.3 < t < 0.7


def test_threshold_lower_is_member():
    t = threshold_max_accuracy([0.1, 0.2, 0.8, 0.9],
                               ["member", "member", "nonmember", "nonmember"],
                               orientation="lower_is_member")
    assert 0.2 < t < 0.8
    # predictions: member iff score < t
    preds = [s < t for s in [0.1, 0.2, 0.8, 0.9]]
    assert preds == [True, True, False, False]


def test_threshold_matches_brute_force_sweep():
    rng = random.Random(31)
    for _ in range(30):
        scores = [rng.randrange(10) / 3 for _ in range(rng.randint(4, 40))]
        labels = [rng.choice(["member", "nonmember"]) for _ in scores]
        if len(set(labels)) < 2:
            continue
        t = threshold_max_accuracy(scores, labels)

        def acc(th):
            return sum((s > th) == (l == "member")
                       for s, l in zip(scores, labels)) / len(scores)

        sweep = max(acc(c) for c in
                    [min(scores) - 1] + [s + 1e-9 for s in scores])
        assert acc(t) == pytest.approx(sweep)


def test_checkpoint_curve_duplicated_snapshot():
    snaps = train(["some text here ok"] * 3, order=2, checkpoint_every=18)
    assert len(snaps) >= 2

    class FakeTrap:
        def __init__(self, text):
            self.text = text
            self.ids = tuple(text.encode())

    members = [FakeTrap("some text"), FakeTrap("text here")]
    nonmembers = [FakeTrap("zzqq vv"), FakeTrap("xjw pqk")]
    ref = train(["unrelated reference corpus text"], order=2)[-1].provider()
    curve = checkpoint_curve([snaps[-1], snaps[-1]], ref, members, nonmembers,
                             method="loss")
    assert curve[0][1] == curve[1][1]


def test_checkpoint_curve_needs_two_snapshots():
    snaps = train(["abc"], order=2)
    with pytest.raises(InputError):
        checkpoint_curve(snaps, None, [], [], method="loss")


def test_bootstrap_ci_brackets_auc():
    rng = random.Random(8)
    m = [rng.gauss(1, 1) for _ in range(60)]
    n = [rng.gauss(0, 1) for _ in range(60)]
    point = auc(m, n)
    lo, hi = bootstrap_auc_ci(m, n, n_boot=300, seed=0)
    assert lo <= point <= hi
    assert 0.0 <= lo <= hi <= 1.0


def test_report_validation_and_json(tmp_path):
    report = EvaluationReport(method="ratio", auc=0.75, n_members=10,
                              n_nonmembers=10, per_bucket=[(1, 0.8, 5)])
    path = tmp_path / "report.json"
    report.save(path)
    assert "0.75" in path.read_text()
    with pytest.raises(InputError):
        EvaluationReport(method="ratio", auc=1.5, n_members=1, n_nonmembers=1)
