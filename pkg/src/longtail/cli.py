"""Config-driven experiment runner.

Every command reads one INI config, derives a stable run id from
(command, config, seeds), and writes its artifacts under
<out>/<run_id>/: metrics.jsonl (one record per epoch, append-only, fully
deterministic), record.json (summary incl. wall time), and CSV tables.
Existing run directories are never touched; re-running an identical
config into a fresh --out reproduces byte-identical metrics and tables.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, baselines, bbn
from .config import ExperimentConfig, run_id
from .data import save_dataset
from .errors import LongtailError, NumericError
from .nn import Network, derived_seed

_EXIT_ERROR = 2
_EXIT_NUMERIC = 3

_ADAPTOR_LABELS = {
    "equal_weight": "Equal weight",
    "beta_distribution": "Beta distribution",
    "parabolic_increment": "Parabolic increment",
    "linear_decay": "Linear decay",
    "cosine_decay": "Cosine decay",
    "parabolic_decay": "Parabolic decay",
}
_SAMPLER_LABELS = {
    "uniform": "Uniform sampler",
    "balanced": "Balanced sampler",
    "reversed": "Reversed sampler",
}


class _RunDir:
    """Owns one fresh run directory and its append-only metrics file."""

    def __init__(self, out_root, rid: str):
        self.path = Path(out_root) / rid
        if self.path.exists():
            raise LongtailError(
                f"run directory {self.path} already exists; runs are never overwritten"
            )
        self.path.mkdir(parents=True)
        self.rid = rid
        self._metrics_path = self.path / "metrics.jsonl"

    def append_metrics(self, row: dict) -> None:
        with open(self._metrics_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    def write_record(self, record: dict) -> None:
        with open(self.path / "record.json", "w", encoding="utf-8") as fh:
            json.dump(record, fh, sort_keys=True, indent=2)
            fh.write("\n")

    def write_csv(self, name: str, header, rows) -> None:
        with open(self.path / name, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)


def _seed_list(base_seed: int, n: int):
    return [base_seed + i for i in range(n)]


def _fmt(value) -> str:
    return repr(float(value))


def _train_baseline(cfg, train_ds, test_ds, manner, seed, on_epoch=None):
    net = Network.mlp(cfg.net_widths(), derived_seed(seed, 0xB5))
    baselines.train_manner(
        net, train_ds, manner, cfg.optimizer(), cfg["train", "epochs"], seed,
        batch_size=cfg["train", "batch_size"], test_ds=test_ds, on_epoch=on_epoch,
    )
    return net


def _train_sampler_net(cfg, train_ds, sampler_kind, seed):
    """Plain single net driven by an arbitrary sampler (ensemble baseline)."""
    net = Network.mlp(cfg.net_widths(), derived_seed(seed, 0xB5))
    baselines.train_with_sampler(
        net, train_ds, sampler_kind, cfg.optimizer(), cfg["train", "epochs"], seed,
        batch_size=cfg["train", "batch_size"],
    )
    return net


def _train_bbn(cfg, train_ds, test_ds, seed, schedule=None, rebalance=None, on_epoch=None):
    model = bbn.BBNModel.create(
        cfg["data", "dim"], cfg["data", "num_classes"], seed,
        trunk_widths=cfg["model", "trunk_widths"],
        feature_dim=cfg["model", "feature_dim"],
    )
    train_cfg = bbn.BBNTrainConfig(
        t_max=cfg["train", "epochs"],
        batch_size=cfg["train", "batch_size"],
        optimizer=cfg.optimizer(),
        schedule=schedule if schedule is not None else cfg["train", "schedule"],
        seed=seed,
        rebalance_sampler=rebalance if rebalance is not None else cfg["train", "rebalance_sampler"],
    )
    bbn.train_bbn(model, train_ds, train_cfg, test_ds=test_ds, on_epoch=on_epoch)
    return model


def _cmd_gen_data(args, cfg, rundir):
    train_ds, test_ds = cfg.datasets()
    save_dataset(train_ds, rundir.path / "train.ltds")
    save_dataset(test_ds, rundir.path / "test.ltds")
    return {
        "train_samples": int(train_ds.num_samples),
        "test_samples": int(test_ds.num_samples),
        "class_counts": [int(c) for c in train_ds.class_counts],
    }


def _cmd_train_manner(args, cfg, rundir):
    train_ds, test_ds = cfg.datasets()
    seed = args.resolved_seeds[0]
    net = _train_baseline(cfg, train_ds, test_ds, args.manner, seed,
                          on_epoch=rundir.append_metrics)
    err = baselines.evaluate(net, test_ds)
    return {"kind": "method", "label": args.manner, "test_error": err}


def _cmd_train_bbn(args, cfg, rundir):
    train_ds, test_ds = cfg.datasets()
    seed = args.resolved_seeds[0]
    model = _train_bbn(cfg, train_ds, test_ds, seed, on_epoch=rundir.append_metrics)
    bbn.save_model(model, rundir.path / "model.bbnm")
    err = bbn.evaluate_bbn(model, test_ds)
    return {"kind": "method", "label": "BBN", "test_error": err}


def _cmd_two_stage(args, cfg, rundir):
    train_ds, test_ds = cfg.datasets()
    seed = args.resolved_seeds[0]
    rebalance = args.stage.upper()
    net = _train_baseline(cfg, train_ds, test_ds, "CE", seed,
                          on_epoch=rundir.append_metrics)
    stage1_epochs = cfg["train", "epochs"]

    def stage2_row(row):
        rundir.append_metrics({**row, "epoch": row["epoch"] + stage1_epochs})

    baselines.two_stage_finetune(
        net, train_ds, rebalance,
        cfg["train", "stage2_epochs"],
        cfg["optimizer", "base_lr"] * cfg["train", "stage2_lr_factor"],
        derived_seed(seed, 0x57A2), config=cfg.optimizer(),
        batch_size=cfg["train", "batch_size"], test_ds=test_ds, on_epoch=stage2_row,
    )
    err = baselines.evaluate(net, test_ds)
    return {"kind": "method", "label": f"CE-{rebalance}", "test_error": err}


def _cmd_decouple_grid(args, cfg, rundir):
    train_ds, test_ds = cfg.datasets()
    result = baselines.decouple_grid(
        train_ds, test_ds, cfg.optimizer(), args.resolved_seeds,
        cfg.net_widths(), cfg["train", "epochs"], cfg["train", "retrain_epochs"],
        batch_size=cfg["train", "batch_size"],
    )
    result.to_csv(rundir.path / "grid.csv")
    return {
        "kind": "decouple-grid",
        "manners": list(baselines.MANNERS),
        "mean_errors": result.mean_errors.tolist(),
        "per_seed_errors": result.errors.tolist(),
    }


def _cmd_ablate_sampler(args, cfg, rundir):
    train_ds, test_ds = cfg.datasets()
    per_kind = {}
    for kind in ("uniform", "balanced", "reversed"):
        errs = []
        for seed in args.resolved_seeds:
            model = _train_bbn(cfg, train_ds, None, seed, rebalance=kind)
            errs.append(bbn.evaluate_bbn(model, test_ds))
        per_kind[kind] = errs
    rows = [(_SAMPLER_LABELS[k], _fmt(np.mean(v))) for k, v in per_kind.items()]
    rundir.write_csv("samplers.csv", ["sampler", "error_rate"], rows)
    return {"kind": "ablate-sampler", "errors": per_kind}


def _cmd_ablate_adaptor(args, cfg, rundir):
    train_ds, test_ds = cfg.datasets()
    per_schedule = {}
    for schedule in bbn.SCHEDULES:
        errs = []
        for seed in args.resolved_seeds:
            model = _train_bbn(cfg, train_ds, None, seed, schedule=schedule)
            errs.append(bbn.evaluate_bbn(model, test_ds))
        per_schedule[schedule] = errs
    rows = [(_ADAPTOR_LABELS[s], _fmt(np.mean(v))) for s, v in per_schedule.items()]
    rundir.write_csv("adaptors.csv", ["adaptor", "error_rate"], rows)
    return {"kind": "ablate-adaptor", "errors": per_schedule}


def _cmd_feature_quality(args, cfg, rundir):
    train_ds, test_ds = cfg.datasets()
    rows = {label: [] for label in ("CE", "RW", "RS", "BBN-CB", "BBN-RB")}
    retrain = cfg["train", "retrain_epochs"]
    for seed in args.resolved_seeds:
        for manner in baselines.MANNERS:
            net = _train_baseline(cfg, train_ds, None, manner, seed)
            _, err = baselines.freeze_and_retrain_classifier(
                net, "CE", train_ds, test_ds, cfg.optimizer(), retrain,
                derived_seed(seed, 0xFE), batch_size=cfg["train", "batch_size"],
            )
            rows[manner].append(err)
        model = _train_bbn(cfg, train_ds, None, seed)
        branch_errs = analysis.feature_quality_eval(
            model, train_ds, test_ds, cfg.optimizer(), retrain,
            derived_seed(seed, 0xFE), batch_size=cfg["train", "batch_size"],
        )
        rows["BBN-CB"].append(branch_errs["BBN-CB"])
        rows["BBN-RB"].append(branch_errs["BBN-RB"])
    csv_rows = [(label, _fmt(np.mean(v))) for label, v in rows.items()]
    rundir.write_csv("feature_quality.csv",
                     ["representation_manner", "error_rate"], csv_rows)
    return {"kind": "feature-quality", "errors": rows}


def _cmd_ensemble(args, cfg, rundir):
    train_ds, test_ds = cfg.datasets()
    results = {"Uniform + Balanced": [], "Uniform + Reversed": [], "BBN": []}
    for seed in args.resolved_seeds:
        uniform_net = _train_sampler_net(cfg, train_ds, "uniform", seed)
        balanced_net = _train_sampler_net(cfg, train_ds, "balanced", derived_seed(seed, 0xE1))
        reversed_net = _train_sampler_net(cfg, train_ds, "reversed", derived_seed(seed, 0xE2))
        results["Uniform + Balanced"].append(
            analysis.ensemble_eval(uniform_net, balanced_net, test_ds))
        results["Uniform + Reversed"].append(
            analysis.ensemble_eval(uniform_net, reversed_net, test_ds))
        model = _train_bbn(cfg, train_ds, None, seed)
        results["BBN"].append(bbn.evaluate_bbn(model, test_ds))
    rows = [(label, _fmt(np.mean(v))) for label, v in results.items()]
    rundir.write_csv("ensembles.csv", ["method", "error_rate"], rows)
    return {"kind": "ensemble", "errors": results}


def _cmd_analyze_norms(args, cfg, rundir):
    train_ds, test_ds = cfg.datasets()
    seed = args.resolved_seeds[0]
    reports = []
    for manner in baselines.MANNERS:
        net = _train_baseline(cfg, train_ds, None, manner, seed)
        _, classifier = baselines.split_classifier(net)
        reports.append(analysis.classifier_norms(classifier.weight.value, source=manner))
    model = _train_bbn(cfg, train_ds, None, seed)
    reports.append(analysis.classifier_norms(model.classifier_c.value, source="BBN-CB"))
    reports.append(analysis.classifier_norms(model.classifier_r.value, source="BBN-RB"))
    reports.append(analysis.classifier_norms(bbn.combined_classifier(model), source="BBN-ALL"))
    sigmas = {}
    for report in reports:
        report.to_csv(rundir.path / f"norms_{report.source}.csv")
        sigmas[report.source] = report.sigma
    return {
        "kind": "analyze-norms",
        "sigmas": sigmas,
        "class_counts": [int(c) for c in train_ds.class_counts],
    }


def _cmd_analyze_compactness(args, cfg, rundir):
    train_ds, test_ds = cfg.datasets()
    seed = args.resolved_seeds[0]
    means = {}
    for manner in baselines.MANNERS:
        net = _train_baseline(cfg, train_ds, None, manner, seed)
        feats = baselines.extract_features(net, test_ds.features)
        report = analysis.compactness(feats, test_ds.labels,
                                      num_classes=test_ds.num_classes)
        report.to_csv(rundir.path / f"compactness_{manner}.csv")
        means[manner] = [float(v) for v in report.per_class_mean_distance]
    return {"kind": "analyze-compactness", "mean_distances": means}


_TABLE_FILES = {
    "method": ("methods.csv", ["method", "error_rate"]),
    "decouple-grid": ("decouple_grid.csv", None),
    "ablate-sampler": ("samplers.csv", ["sampler", "error_rate"]),
    "ablate-adaptor": ("adaptors.csv", ["adaptor", "error_rate"]),
    "feature-quality": ("feature_quality.csv", ["representation_manner", "error_rate"]),
    "ensemble": ("ensembles.csv", ["method", "error_rate"]),
}


def _cmd_export_tables(args):
    """Regroup completed runs' records into paper-shaped CSV tables."""
    run_dirs = [Path(p) for p in args.runs]
    if not run_dirs:
        raise LongtailError("no runs given; nothing to export")
    missing = [str(p) for p in run_dirs if not (p / "record.json").exists()]
    if missing:
        raise LongtailError("missing run records: " + ", ".join(missing))
    records = []
    for p in run_dirs:
        with open(p / "record.json", "r", encoding="utf-8") as fh:
            records.append(json.load(fh))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    by_kind = {}
    for rec in records:
        kind = rec.get("results", {}).get("kind")
        by_kind.setdefault(kind, []).append(rec)

    written = []
    if "method" in by_kind:
        method_order = ["CE", "RW", "RS", "CE-DRW", "CE-DRS", "BBN"]

        def method_key(rec):
            label = rec["results"]["label"]
            return method_order.index(label) if label in method_order else len(method_order)

        rows = [(r["results"]["label"], _fmt(r["results"]["test_error"]))
                for r in sorted(by_kind["method"], key=method_key)]
        _write_table(out / "methods.csv", ["method", "error_rate"], rows)
        written.append("methods.csv")
    row_orders = {
        "ablate-sampler": list(_SAMPLER_LABELS),
        "ablate-adaptor": list(bbn.SCHEDULES),
        "feature-quality": ["CE", "RW", "RS", "BBN-CB", "BBN-RB"],
        "ensemble": ["Uniform + Balanced", "Uniform + Reversed", "BBN"],
    }
    for kind, order in row_orders.items():
        for rec in by_kind.get(kind, []):
            name, header = _TABLE_FILES[kind]
            labels = {
                "ablate-sampler": _SAMPLER_LABELS,
                "ablate-adaptor": _ADAPTOR_LABELS,
            }.get(kind, {})
            errors = rec["results"]["errors"]
            rows = [(labels.get(key, key), _fmt(np.mean(errors[key])))
                    for key in order if key in errors]
            _write_table(out / name, header, rows)
            written.append(name)
    for rec in by_kind.get("decouple-grid", []):
        manners = rec["results"]["manners"]
        rows = [[rep] + [_fmt(v) for v in row]
                for rep, row in zip(manners, rec["results"]["mean_errors"])]
        _write_table(out / "decouple_grid.csv", ["representation"] + manners, rows)
        written.append("decouple_grid.csv")
    print("wrote " + ", ".join(written))
    return 0


def _write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


_COMMANDS = {
    "gen-data": (_cmd_gen_data, 1),
    "train-manner": (_cmd_train_manner, 1),
    "train-bbn": (_cmd_train_bbn, 1),
    "decouple-grid": (_cmd_decouple_grid, None),
    "two-stage": (_cmd_two_stage, 1),
    "ablate-sampler": (_cmd_ablate_sampler, None),
    "ablate-adaptor": (_cmd_ablate_adaptor, None),
    "feature-quality": (_cmd_feature_quality, None),
    "ensemble": (_cmd_ensemble, None),
    "analyze-norms": (_cmd_analyze_norms, 1),
    "analyze-compactness": (_cmd_analyze_compactness, 1),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="longtail",
        description="Config-driven long-tailed classification experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="path to the INI config")
        p.add_argument("--out", default="runs", help="output root directory")
        p.add_argument("--seed", type=int, default=None, help="base seed override")
        p.add_argument("--seeds", type=int, default=None,
                       help="number of seeds (multi-seed commands)")

    for name in _COMMANDS:
        p = sub.add_parser(name)
        add_common(p)
        if name == "train-manner":
            p.add_argument("manner", choices=list(baselines.MANNERS))
        if name == "two-stage":
            p.add_argument("stage", choices=["drw", "drs"])

    p = sub.add_parser("export-tables")
    p.add_argument("runs", nargs="*", help="run directories to export")
    p.add_argument("--out", default="tables", help="output directory for CSVs")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "export-tables":
            return _cmd_export_tables(args)

        cfg = ExperimentConfig.from_file(args.config)
        base_seed = args.seed if args.seed is not None else cfg["run", "seed"]
        handler, fixed_n = _COMMANDS[args.command]
        n_seeds = fixed_n or (args.seeds if args.seeds is not None else cfg["run", "seeds"])
        args.resolved_seeds = _seed_list(base_seed, n_seeds)

        command_tag = args.command
        if args.command == "train-manner":
            command_tag += f":{args.manner}"
        if args.command == "two-stage":
            command_tag += f":{args.stage}"
        rid = run_id(cfg, command_tag, args.resolved_seeds)
        rundir = _RunDir(args.out, rid)

        t0 = time.perf_counter()
        results = handler(args, cfg, rundir)
        rundir.write_record({
            "run_id": rid,
            "command": command_tag,
            "seeds": args.resolved_seeds,
            "config": cfg.canonical(),
            "results": results,
            "wall_ms": int(1000 * (time.perf_counter() - t0)),
        })
        print(f"{command_tag}: run {rid} written to {rundir.path}")
        return 0
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return _EXIT_NUMERIC
    except LongtailError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
