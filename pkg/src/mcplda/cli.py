"""Command-line front end: ``mcplda fit | benchmark | report``.

Settings resolve in order: built-in defaults, a YAML/JSON key-value file
given with ``--config``, then command-line flags. The fully resolved
configuration is embedded in every report.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import yaml

from . import harness, lda, mcpl
from .dataset import SplitSpec, apply_preprocess, fit_preprocess, load_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
OUT_ENV = "MCPLDA_OUT"


class ConfigError(Exception):
    pass


@dataclasses.dataclass
class RunConfig:
    data: str | None = None
    label_col: str = "-1"
    retain: float = 0.999
    zero_var_tol: float = 1e-12
    leak_mode: str = "full"
    labeled_size: int | None = None
    unlabeled_fraction: float = 0.5
    alpha0: float = 1.0
    max_iters: int = 1000
    tol: float = 1e-6
    q_init: str = "uniform"
    select: str = "best"
    ridge: float = 0.0
    pd_rel: float = 1e-10
    estimators: tuple = ("sup", "semi", "opt", "hoc")
    self_rounds: int = 100
    reps: int = 1000
    first_rep: int = 0
    seed: int = 0
    permutations: int = 10_000
    jobs: int = 1
    out: str | None = None
    formats: tuple = ("json", "csv")
    records: bool = True

    def validate(self, need_data=True):
        if need_data:
            if not self.data:
                raise ConfigError("no dataset given (use --data)")
            if not Path(self.data).is_file():
                raise ConfigError(f"dataset file not found: {self.data}")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.jobs < 1 and self.jobs != -1:
            raise ConfigError("jobs must be positive or -1")
        if self.leak_mode not in ("full", "train-only"):
            raise ConfigError("leak-mode must be 'full' or 'train-only'")
        unknown = set(self.estimators) - set(harness.ESTIMATORS)
        if unknown:
            raise ConfigError(f"unknown estimators: {sorted(unknown)}")
        if not set(self.formats) <= {"json", "csv"}:
            raise ConfigError("formats must be drawn from json, csv")
        try:
            SplitSpec(seed=self.seed, labeled_size=self.labeled_size,
                      unlabeled_fraction=self.unlabeled_fraction)
            self.solver_config()
            self.well_posedness()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def solver_config(self):
        return mcpl.SolverConfig(
            max_iters=self.max_iters,
            objective_tol=self.tol,
            step_base=self.alpha0,
            q_init=self.q_init,
            select=self.select,
        )

    def well_posedness(self):
        return lda.WellPosedness(pd_rel=self.pd_rel, ridge=self.ridge)

    def output_dir(self):
        return Path(self.out or os.environ.get(OUT_ENV) or "mcplda-out")

    def to_dict(self):
        doc = dataclasses.asdict(self)
        doc["estimators"] = list(self.estimators)
        doc["formats"] = list(self.formats)
        doc.pop("out")
        doc.pop("jobs")
        return doc


def _csv_list(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


# flag name -> (RunConfig field, type)
FLAGS = {
    "--data": ("data", str),
    "--label-col": ("label_col", str),
    "--retain": ("retain", float),
    "--zero-var-tol": ("zero_var_tol", float),
    "--leak-mode": ("leak_mode", str),
    "--labeled-size": ("labeled_size", int),
    "--unlabeled-fraction": ("unlabeled_fraction", float),
    "--alpha0": ("alpha0", float),
    "--max-iters": ("max_iters", int),
    "--tol": ("tol", float),
    "--q-init": ("q_init", str),
    "--select": ("select", str),
    "--ridge": ("ridge", float),
    "--pd-rel": ("pd_rel", float),
    "--estimators": ("estimators", _csv_list),
    "--self-rounds": ("self_rounds", int),
    "--reps": ("reps", int),
    "--first-rep": ("first_rep", int),
    "--seed": ("seed", int),
    "--permutations": ("permutations", int),
    "--jobs": ("jobs", int),
    "--out": ("out", str),
    "--formats": ("formats", _csv_list),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mcplda",
        description="Semi-supervised LDA by maximum contrastive pessimistic likelihood.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p):
        p.add_argument("--config", help="YAML or JSON file of key: value settings")
        for flag, (dest, typ) in FLAGS.items():
            p.add_argument(flag, dest=dest, type=typ, default=None)

    p_fit = sub.add_parser("fit", help="fit all estimators on one split")
    add_run_flags(p_fit)
    p_bench = sub.add_parser("benchmark", help="repeated random splits with a full report")
    add_run_flags(p_bench)
    p_bench.add_argument("--no-records", dest="records", action="store_false", default=None,
                         help="do not write the JSON-lines record stream")
    p_rep = sub.add_parser("report", help="re-aggregate JSON-lines records")
    p_rep.add_argument("records_paths", nargs="+", metavar="RECORDS")
    p_rep.add_argument("--out", default=None)
    p_rep.add_argument("--permutations", type=int, default=10_000)
    p_rep.add_argument("--formats", type=_csv_list, default=("json", "csv"))
    return parser


def resolve_config(args):
    cfg = RunConfig()
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid config file {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a mapping of settings")
        for key, value in doc.items():
            name = key.replace("-", "_")
            if name not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            if name in ("estimators", "formats") and isinstance(value, str):
                value = _csv_list(value)
            elif isinstance(value, list):
                value = tuple(value)
            setattr(cfg, name, value)
    for name in fields:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    cfg.label_col = str(cfg.label_col)
    if "sup" not in cfg.estimators:
        cfg.estimators = ("sup",) + tuple(cfg.estimators)
    return cfg


def load_dataset(cfg):
    """Load the CSV and apply the preprocessing the leak mode asks for.

    Returns ``(data, split_template, per_split_preprocess)``.
    """
    raw = load_csv(cfg.data, cfg.label_col)
    full = fit_preprocess(raw.features, cfg.retain, cfg.zero_var_tol)
    d = full.n_components
    size = cfg.labeled_size or 2 * d + raw.n_classes
    template = SplitSpec(seed=0, labeled_size=size, unlabeled_fraction=cfg.unlabeled_fraction)
    if cfg.leak_mode == "full":
        return raw.with_features(apply_preprocess(full, raw.features)), template, None
    return raw, template, (cfg.retain, cfg.zero_var_tol)


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _summary_table(results):
    lines = [f"{'estimator':<10}{'train ll':>14}{'test ll':>14}{'train err':>11}{'test err':>10}"]
    for est in results["estimators"]:
        m = results["means"][est]

        def fmt(v, spec):
            return "n/a" if v is None else format(v, spec)

        lines.append(
            f"{est:<10}{fmt(m['train_ll'], '14.4g')}{fmt(m['test_ll'], '14.4g')}"
            f"{fmt(m['train_err'], '11.3f')}{fmt(m['test_err'], '10.3f')}"
        )
    return "\n".join(lines)


def cmd_fit(cfg):
    data, template, per_split = load_dataset(cfg)
    spec = dataclasses.replace(template, seed=harness.repetition_seed(cfg.seed, cfg.first_rep))
    ps = harness.prepare_split(data, spec, per_split)
    wp = cfg.well_posedness()
    sup = lda.fit_supervised(ps.labeled, wp)
    fitted = harness.fit_estimators(
        ps.labeled, ps.unlabeled, sup, cfg.solver_config(), wp, cfg.estimators, cfg.self_rounds
    )
    out = cfg.output_dir()
    metrics = {}
    for name, model in fitted.models.items():
        _write(out / "models" / f"{name}.json", harness.dumps_json(model.to_dict()))
        metrics[name] = harness._evaluate(model, ps.train, ps.test)
    doc = {
        "config": cfg.to_dict(),
        "sizes": {"N": ps.labeled.n_samples, "M": ps.unlabeled.n_samples, "test": ps.test.n_samples},
        "metrics": metrics,
        "failures": fitted.failures,
    }
    res = fitted.solve_result
    if res is not None:
        doc["solver"] = {k: v for k, v in res.to_dict().items() if k in ("gain", "iterations", "converged", "fell_back")}
        _write(out / "solve_result.json", harness.dumps_json(res.to_dict()))
    if fitted.hoc_diagnostics is not None:
        doc["hoc"] = fitted.hoc_diagnostics.to_dict()
    if ps.preprocess is not None:
        _write(out / "preprocess.json", harness.dumps_json(ps.preprocess.to_dict()))
    _write(out / "metrics.json", harness.dumps_json(doc))

    if res is not None:
        print(f"gain: {res.gain:.6g}  iterations: {res.iterations}  converged: {res.converged}")
    for name, m in metrics.items():
        print(f"{name:<6} train ll {m['train_ll']:.4g}  test ll {m['test_ll']:.4g}"
              f"  train err {m['train_err']:.3f}  test err {m['test_err']:.3f}")
    for name, why in fitted.failures.items():
        print(f"{name}: failed ({why})", file=sys.stderr)
    print(f"wrote {out}")
    return EXIT_OK


def _emit_report(results, config, out, formats):
    report = harness.make_report(results, config)
    if "json" in formats:
        _write(out / "report.json", harness.dumps_json(report))
    if "csv" in formats:
        _write(out / "report.csv", harness.report_csv(results))
    print(_summary_table(results))
    print(f"wrote {out}")


def cmd_benchmark(cfg):
    data, template, per_split = load_dataset(cfg)
    records = harness.run_benchmark(
        data, template, cfg.reps,
        master_seed=cfg.seed,
        cfg=cfg.solver_config(),
        wp=cfg.well_posedness(),
        estimators=cfg.estimators,
        jobs=cfg.jobs,
        first_rep=cfg.first_rep,
        preprocess=per_split,
        self_rounds=cfg.self_rounds,
    )
    out = cfg.output_dir()
    if cfg.records:
        _write(out / "records.jsonl", harness.records_jsonl(records))
    results = harness.aggregate(records, cfg.permutations)
    _emit_report(results, cfg.to_dict(), out, cfg.formats)
    return EXIT_OK


def cmd_report(args):
    records = harness.read_records(args.records_paths)
    results = harness.aggregate(records, args.permutations)
    out = Path(args.out or os.environ.get(OUT_ENV) or "mcplda-out")
    config = {"records": [str(p) for p in args.records_paths], "permutations": args.permutations}
    _emit_report(results, config, out, args.formats)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            for p in args.records_paths:
                if not Path(p).is_file():
                    raise ConfigError(f"records file not found: {p}")
            return cmd_report(args)
        cfg = resolve_config(args)
        cfg.validate()
        if args.command == "fit":
            return cmd_fit(cfg)
        return cmd_benchmark(cfg)
    except ConfigError as exc:
        print(f"mcplda: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError, FloatingPointError, OSError) as exc:
        print(f"mcplda: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
