import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcplda.dataset import RawDataset, SplitSpec
from mcplda.harness import (
    RepetitionRecord,
    aggregate,
    dumps_json,
    permutation_test,
    read_records,
    records_jsonl,
    report_csv,
    repetition_seed,
    run_benchmark,
    run_repetition,
)
from mcplda.mcpl import SolverConfig


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    y = np.arange(90) % 2
    X = np.array([[0.0, 0.0], [2.0, 1.0]])[y] + rng.normal(size=(90, 2))
    return RawDataset(X, y, 2)


def test_repetition_seed_distinct():
    seeds = {repetition_seed(5, r) for r in range(100)}
    assert len(seeds) == 100
    assert repetition_seed(5, 1) != repetition_seed(6, 1)


def test_run_repetition_record(data):
    rec = run_repetition(data, SplitSpec(seed=(0, 0)), rep=0, master_seed=0)
    assert rec.ok
    assert rec.sizes["N"] == 2 * 2 + 2
    assert set(rec.metrics) == {"sup", "semi", "opt", "hoc", "self"}
    for m in rec.metrics.values():
        assert set(m) == {"train_ll", "test_ll", "train_err", "test_err"}
    assert rec.solver["gain"] >= 0
    assert rec.metrics["semi"]["train_ll"] >= rec.metrics["sup"]["train_ll"]
    back = RepetitionRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
    assert back.to_dict() == rec.to_dict()


def test_run_repetition_train_only_preprocessing(data):
    rec = run_repetition(
        data, SplitSpec(seed=(0, 1), labeled_size=6), estimators=("sup", "semi"),
        preprocess=(0.999, 1e-12),
    )
    assert rec.ok and set(rec.metrics) == {"sup", "semi"}


def test_benchmark_order_and_jobs(data):
    tmpl = SplitSpec(labeled_size=6)
    cfg = SolverConfig(max_iters=200)
    a = run_benchmark(data, tmpl, 4, master_seed=3, cfg=cfg, estimators=("sup", "semi"))
    b = run_benchmark(data, tmpl, 4, master_seed=3, cfg=cfg, estimators=("sup", "semi"), jobs=2)
    assert [r.rep for r in a] == [0, 1, 2, 3]
    assert records_jsonl(a) == records_jsonl(b)


def _rec(rep, metrics):
    return RepetitionRecord(rep=rep, master_seed=0, seed=[0, rep], metrics=metrics)


def _m(train_ll, test_ll, train_err, test_err):
    return {"train_ll": train_ll, "test_ll": test_ll, "train_err": train_err, "test_err": test_err}


def test_aggregate_values():
    recs = [
        _rec(0, {"sup": _m(-2, -3, 0.2, 0.3), "semi": _m(-1, -2, 0.2, 0.2), "opt": _m(0, -1, 0.1, 0.1)}),
        _rec(1, {"sup": _m(-4, -5, 0.4, 0.5), "semi": _m(-3, -5, 0.3, 0.5), "opt": _m(-2, -3, 0.2, 0.3)}),
    ]
    res = aggregate(recs, permutations=100)
    assert res["means"]["sup"]["train_ll"] == -3.0
    assert res["wins"]["semi>sup"]["train_ll"] == 100.0
    # ties are not wins
    assert res["wins"]["semi>sup"]["test_ll"] == 50.0
    assert res["wins"]["semi>sup"]["train_err"] == 50.0
    # ratio of mean differences
    assert res["relative_improvement"]["train_ll"] == pytest.approx((-2 + 3) / (-1 + 3))
    # two pairs, four sign patterns: exact branch
    assert res["pvalues"]["sup~semi:train_ll"] == pytest.approx(0.5)
    rev = aggregate(list(reversed(recs)), permutations=100)
    assert dumps_json(rev) == dumps_json(res)


def test_aggregate_failures_and_nonfinite():
    recs = [
        _rec(0, {"sup": _m(-2, None, 0.2, 0.3), "hoc": _m(-1, -2, 0.2, 0.2)}),
        _rec(1, {"sup": _m(-4, -5, 0.4, 0.5), "hoc": _m(-3, -5, 0.3, 0.5)}),
        RepetitionRecord(rep=2, master_seed=0, seed=[0, 2], status="failed", reason="ill-posed"),
    ]
    recs[1].failures = {"semi": "bad"}
    res = aggregate(recs, permutations=10)
    assert res["successful"] == 2 and res["repetitions"] == 3
    assert res["means"]["sup"]["test_ll"] is None
    assert "sup~hoc:test_ll" not in res["pvalues"]
    assert {"rep": 2, "reason": "ill-posed"} in res["failures"]
    assert {"rep": 1, "estimator": "semi", "reason": "bad"} in res["failures"]
    assert "sup" in report_csv(res)
    with pytest.raises(ValueError):
        aggregate(recs[2:])


def test_permutation_exact_values():
    assert permutation_test([1, 1, 1], [0, 0, 0]) == 0.25
    assert permutation_test([1, 2, 3], [1, 2, 3]) == 1.0
    # a zero observed mean difference is matched by every sign pattern
    assert permutation_test([1, 0], [0, 1]) == 1.0


def test_permutation_monte_carlo():
    rng = np.random.default_rng(0)
    a = rng.normal(size=40) + 1.0
    b = rng.normal(size=40)
    p = permutation_test(a, b, permutations=999, seed=1)
    assert 1 / 1000 <= p < 0.01
    assert p == permutation_test(a, b, permutations=999, seed=1)
    assert permutation_test(a, a, permutations=99, seed=2) == 1.0
    with pytest.raises(ValueError):
        permutation_test([1.0], [2.0])
    with pytest.raises(ValueError):
        permutation_test([1.0, 2.0], [2.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=9))
def test_permutation_exact_symmetry(diffs):
    d = np.array(diffs)
    p = permutation_test(d, np.zeros_like(d))
    assert 0 < p <= 1
    # swapping the samples flips every sign and leaves p unchanged
    assert permutation_test(np.zeros_like(d), d) == p
    # the observed pattern and its negation always count
    assert p >= 2 / 2 ** len(d) or np.all(d == 0)


def test_read_records(tmp_path):
    p = tmp_path / "r.jsonl"
    recs = [_rec(0, {"sup": _m(-2, -3, 0.2, 0.3)})]
    p.write_text(records_jsonl(recs) + "\n")
    back = read_records([p])
    assert back[0].to_dict() == recs[0].to_dict()
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"format": "nope"}\n')
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        read_records([bad])
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    with pytest.raises(ValueError):
        read_records([empty])
