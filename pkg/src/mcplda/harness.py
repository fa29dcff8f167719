"""Repeated-split benchmark: per-repetition records, aggregation, permutation tests."""

import csv
import io
import itertools
import json
import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from . import baselines, lda, mcpl
from .dataset import (
    LabeledDataset,
    SplitSpec,
    UnlabeledSet,
    apply_preprocess,
    fit_preprocess,
    split_indices,
)

ESTIMATORS = ("sup", "semi", "opt", "hoc", "self")
SPLITS = ("train", "test")
METRICS = ("ll", "err")
# (better, worse) pairs reported as win percentages
WIN_PAIRS = (("semi", "sup"), ("opt", "semi"), ("hoc", "sup"), ("semi", "hoc"), ("self", "sup"))
RECORD_FORMAT = "mcplda.record"
REPORT_FORMAT = "mcplda.report"
REPORT_VERSION = 1


def repetition_seed(master_seed, rep):
    """Counter-based per-repetition seed; distinct reps give distinct entropy."""
    return (int(master_seed), int(rep))


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class RepetitionRecord:
    rep: int
    master_seed: int
    seed: list
    status: str = "ok"
    reason: str | None = None
    sizes: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    hoc: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == "ok"

    def to_dict(self):
        return {
            "format": RECORD_FORMAT,
            "rep": self.rep,
            "master_seed": self.master_seed,
            "seed": list(self.seed),
            "status": self.status,
            "reason": self.reason,
            "sizes": self.sizes,
            "metrics": self.metrics,
            "failures": self.failures,
            "solver": self.solver,
            "hoc": self.hoc,
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != RECORD_FORMAT:
            raise ValueError("not a repetition record")
        kwargs = {k: doc[k] for k in (
            "rep", "master_seed", "seed", "status", "reason",
            "sizes", "metrics", "failures", "solver", "hoc",
        )}
        return cls(**kwargs)


def _evaluate(model, train, test):
    return {
        "train_ll": _finite_or_none(lda.log_likelihood(model, train)),
        "test_ll": _finite_or_none(lda.log_likelihood(model, test)),
        "train_err": lda.error_rate(model, train),
        "test_err": lda.error_rate(model, test),
    }


@dataclass
class PreparedSplit:
    labeled: LabeledDataset
    unlabeled: UnlabeledSet
    test: LabeledDataset
    train: LabeledDataset
    preprocess: object = None


def prepare_split(data, spec, preprocess=None):
    """Split ``data``; optionally fit preprocessing on labeled plus unlabeled rows."""
    lab, unl, tst = split_indices(data.labels, data.n_classes, spec, data.features.shape[1])
    X, y, K = data.features, data.labels, data.n_classes
    pre = None
    trn = np.concatenate([lab, unl])
    if preprocess is not None:
        pre = fit_preprocess(X[trn], *preprocess)
        X = apply_preprocess(pre, X)
    return PreparedSplit(
        labeled=LabeledDataset(X[lab], y[lab], K),
        unlabeled=UnlabeledSet(X[unl], y[unl]),
        test=LabeledDataset(X[tst], y[tst], K),
        train=LabeledDataset(X[trn], y[trn], K),
        preprocess=pre,
    )


@dataclass
class FittedEstimators:
    models: dict
    failures: dict
    solve_result: object = None
    hoc_diagnostics: object = None


def fit_estimators(labeled, unlabeled, sup, cfg, wp, estimators=ESTIMATORS, self_rounds=100):
    """Fit the requested estimators next to an existing supervised fit.

    Ill-posed fits are recorded in ``failures`` instead of raising.
    """
    out = FittedEstimators(models={"sup": sup}, failures={})
    for name in estimators:
        if name == "sup":
            continue
        try:
            if name == "semi":
                out.solve_result = mcpl.solve(labeled, unlabeled, sup, cfg, wp)
                model = out.solve_result.model
            elif name == "opt":
                model = baselines.fit_optimal(labeled, unlabeled, wp)
            elif name == "hoc":
                model, out.hoc_diagnostics = baselines.fit_constrained(labeled, unlabeled, wp)
            elif name == "self":
                model = baselines.fit_self_training(labeled, unlabeled, wp, self_rounds).model
            else:
                raise ValueError(f"unknown estimator {name!r}")
        except (lda.IllPosedError, FloatingPointError) as exc:
            out.failures[name] = str(exc)
            continue
        out.models[name] = model
    return out


def run_repetition(
    data,
    spec,
    cfg=mcpl.SolverConfig(),
    wp=lda.WellPosedness(),
    estimators=ESTIMATORS,
    rep=0,
    master_seed=0,
    preprocess=None,
    self_rounds=100,
):
    """Fit every requested estimator on one split and evaluate it.

    ``data`` is already preprocessed unless ``preprocess=(retain, zero_var_tol)``
    is given, in which case preprocessing is fit on the labeled plus unlabeled
    rows of this split only.
    """
    rec = RepetitionRecord(
        rep=rep, master_seed=master_seed, seed=np.atleast_1d(spec.seed).tolist()
    )
    ps = prepare_split(data, spec, preprocess)
    rec.sizes = {
        "N": ps.labeled.n_samples,
        "M": ps.unlabeled.n_samples,
        "test": ps.test.n_samples,
        "d": int(ps.labeled.features.shape[1]),
    }
    try:
        sup = lda.fit_supervised(ps.labeled, wp)
    except lda.IllPosedError as exc:
        rec.status, rec.reason = "failed", f"supervised fit ill-posed: {exc}"
        return rec

    fitted = fit_estimators(ps.labeled, ps.unlabeled, sup, cfg, wp, estimators, self_rounds)
    rec.failures = fitted.failures
    for name in ESTIMATORS:
        if name in fitted.models:
            rec.metrics[name] = _evaluate(fitted.models[name], ps.train, ps.test)
    res = fitted.solve_result
    if res is not None:
        rec.solver = {
            "gain": res.gain,
            "iterations": res.iterations,
            "converged": res.converged,
            "fell_back": res.fell_back,
        }
    if fitted.hoc_diagnostics is not None:
        rec.hoc = fitted.hoc_diagnostics.to_dict()
    return rec


def _run_one(data, template, cfg, wp, estimators, rep, master_seed, preprocess, self_rounds):
    spec = SplitSpec(
        seed=repetition_seed(master_seed, rep),
        labeled_size=template.labeled_size,
        unlabeled_fraction=template.unlabeled_fraction,
    )
    # fixed BLAS threading keeps results identical for any worker count
    with threadpool_limits(limits=1):
        return run_repetition(
            data, spec, cfg, wp, estimators, rep, master_seed, preprocess, self_rounds
        )


def run_benchmark(
    data,
    template,
    reps,
    master_seed=0,
    cfg=mcpl.SolverConfig(),
    wp=lda.WellPosedness(),
    estimators=ESTIMATORS,
    jobs=1,
    first_rep=0,
    preprocess=None,
    self_rounds=100,
):
    indices = range(first_rep, first_rep + reps)
    if jobs == 1:
        records = [
            _run_one(data, template, cfg, wp, estimators, i, master_seed, preprocess, self_rounds)
            for i in indices
        ]
    else:
        records = Parallel(n_jobs=jobs)(
            delayed(_run_one)(data, template, cfg, wp, estimators, i, master_seed, preprocess, self_rounds)
            for i in indices
        )
    return sorted(records, key=lambda r: r.rep)


def permutation_test(a, b, permutations=10_000, seed=0):
    """Two-sided paired sign-flip test of a zero mean difference.

    Enumerates all ``2**n`` sign patterns when that is no more than
    ``permutations``; otherwise draws ``permutations`` random patterns and
    returns ``(1 + hits) / (1 + permutations)``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and of equal length")
    d = a - b
    n = d.shape[0]
    if n < 2:
        raise ValueError("need at least two pairs")
    if permutations < 1:
        raise ValueError("permutations must be at least 1")
    observed = abs(d.sum()) / n
    slack = 1e-12 * max(np.abs(d).sum() / n, 1e-300)

    if n < 63 and 2**n <= permutations:
        codes = np.arange(2**n, dtype=np.int64)[:, None]
        signs = 1.0 - 2.0 * ((codes >> np.arange(n)) & 1)
        stats = np.abs(signs @ d) / n
        return float(np.count_nonzero(stats >= observed - slack)) / 2**n

    rng = np.random.default_rng(seed)
    hits = 0
    chunk = max(1, min(permutations, 2_000_000 // n))
    remaining = permutations
    while remaining:
        m = min(chunk, remaining)
        signs = 1.0 - 2.0 * rng.integers(0, 2, size=(m, n))
        hits += int(np.count_nonzero(np.abs(signs @ d) / n >= observed - slack))
        remaining -= m
    return (1 + hits) / (1 + permutations)


def _test_seed(master_seed, name):
    return np.random.SeedSequence([int(master_seed), zlib.crc32(name.encode())])


def _present(records, names):
    present = set()
    for r in records:
        present.update(r.metrics)
    return [e for e in names if e in present]


def aggregate(records, permutations=10_000):
    """Summarize repetition records into the report ``results`` section.

    Records are sorted by repetition index first, so the result does not
    depend on the order they arrive in.
    """
    records = sorted(records, key=lambda r: r.rep)
    good = [r for r in records if r.ok]
    if not good:
        raise ValueError("no successful repetitions to aggregate")
    master = good[0].master_seed
    names = _present(good, ESTIMATORS)

    def values(est, key, subset):
        return np.array([r.metrics[est][key] for r in subset], dtype=np.float64)

    means = {}
    for est in names:
        subset = [r for r in good if est in r.metrics]
        means[est] = {"n": len(subset)}
        for split_name, metric in itertools.product(SPLITS, METRICS):
            key = f"{split_name}_{metric}"
            v = [r.metrics[est][key] for r in subset]
            means[est][key] = None if any(x is None for x in v) else float(np.mean(v))

    wins = {}
    for better, worse in WIN_PAIRS:
        if better not in names or worse not in names:
            continue
        subset = [r for r in good if better in r.metrics and worse in r.metrics]
        entry = {"n": len(subset)}
        for split_name in SPLITS:
            a = values(better, f"{split_name}_ll", subset)
            b = values(worse, f"{split_name}_ll", subset)
            entry[f"{split_name}_ll"] = float(100.0 * np.mean(a > b)) if subset else None
            a = values(better, f"{split_name}_err", subset)
            b = values(worse, f"{split_name}_err", subset)
            entry[f"{split_name}_err"] = float(100.0 * np.mean(a < b)) if subset else None
        wins[f"{better}>{worse}"] = entry

    relative = {}
    if {"sup", "semi", "opt"} <= set(names):
        for split_name, metric in itertools.product(SPLITS, METRICS):
            key = f"{split_name}_{metric}"
            s, m, o = means["sup"][key], means["semi"][key], means["opt"][key]
            if None in (s, m, o) or o == s:
                relative[key] = None
            else:
                relative[key] = (m - s) / (o - s)

    pvalues = {}
    for e1, e2 in itertools.combinations(names, 2):
        subset = [r for r in good if e1 in r.metrics and e2 in r.metrics]
        if len(subset) < 2:
            continue
        for split_name, metric in itertools.product(SPLITS, METRICS):
            key = f"{split_name}_{metric}"
            a, b = values(e1, key, subset), values(e2, key, subset)
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                continue
            label = f"{e1}~{e2}:{key}"
            seed = _test_seed(master, label)
            pvalues[label] = permutation_test(a, b, permutations, seed)

    failures = [
        {"rep": r.rep, "reason": r.reason} for r in records if not r.ok
    ] + [
        {"rep": r.rep, "estimator": est, "reason": why}
        for r in good for est, why in sorted(r.failures.items())
    ]
    solver = [r.solver for r in good if r.solver]
    solver_summary = {}
    if solver:
        gains = np.array([s["gain"] for s in solver])
        solver_summary = {
            "mean_gain": float(gains.mean()),
            "min_gain": float(gains.min()),
            "mean_iterations": float(np.mean([s["iterations"] for s in solver])),
            "max_iterations": int(max(s["iterations"] for s in solver)),
            "not_converged": int(sum(not s["converged"] for s in solver)),
            "fell_back": int(sum(s["fell_back"] for s in solver)),
        }
    return {
        "repetitions": len(records),
        "successful": len(good),
        "estimators": names,
        "means": means,
        "wins": wins,
        "relative_improvement": relative,
        "pvalues": pvalues,
        "permutations": permutations,
        "solver": solver_summary,
        "failures": failures,
    }


def make_report(results, config):
    return {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "config": config,
        "results": results,
    }


def dumps_json(doc):
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def report_csv(results):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "split", "metric", "mean", "n"])
    for est in results["estimators"]:
        m = results["means"][est]
        for split_name, metric in itertools.product(SPLITS, METRICS):
            v = m[f"{split_name}_{metric}"]
            w.writerow([est, split_name, metric, "" if v is None else repr(v), m["n"]])
    return buf.getvalue()


def records_jsonl(records):
    return "".join(
        json.dumps(r.to_dict(), sort_keys=True, allow_nan=False) + "\n" for r in records
    )


def read_records(paths):
    records = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(RepetitionRecord.from_dict(json.loads(line)))
                except (ValueError, KeyError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: malformed record ({exc})") from None
    if not records:
        raise ValueError("no records found in " + ", ".join(map(str, paths)))
    return records
