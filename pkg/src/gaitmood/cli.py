"""Command-line entry point; each study experiment maps to one subcommand.

ingest-check  parse a manifest and report rates, segments, and exclusions
extract       feature-matrix CSV from a manifest
evaluate      repeated stratified CV per user (personal models)
block-cv      contiguous emotion-block cross-validation (binary task)
louo          leave-one-user-out per condition
lift          user-lift table and permutation p-values from a report
importance    forest feature-importance distributions across users
stats         PANAS paired tests and heart-rate ANOVA
synth         generate a synthetic study

Runs are reproducible: the master seed comes from --seed, else the config
file, else $GAITMOOD_SEED, else 0, and two runs with the same inputs produce
byte-identical reports (timestamps live in a separate run_meta.json).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, GaitmoodError
from .evaluation import EvalConfig, StudyReport, evaluate_study, importance_report
from .features import FEATURE_SETS, featurize, write_feature_csv
from .ingest import estimate_sampling_rate, load_manifest, load_study, trim_to_segment
from .models import MODEL_KINDS, ModelSpec
from .preprocess import dump_window_csv, study_windows
from .synth import identical_params, separable_params, generate_study

_ENV_SEED = "GAITMOOD_SEED"
_DEFAULT_MODELS = ("baseline", "logreg", "forest")


@dataclass
class RunConfig:
    manifest: Path
    feature_set: str = "acc_gyro_hr"
    task: str = "happy_vs_sad"
    protocol: str = "cv"
    models: tuple[str, ...] = _DEFAULT_MODELS
    folds: int = 10
    repeats: int = 10
    master_seed: int = 0
    permutations: int = 10000
    l2_strength: float = 1.0
    n_trees: int = 100
    output_dir: Path = Path("gaitmood-out")
    jobs: int = 1


def _env_seed() -> int | None:
    raw = os.environ.get(_ENV_SEED)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"${_ENV_SEED} must be an integer, got {raw!r}") from exc


def _load_run_config(args: argparse.Namespace, forced_protocol: str | None = None) -> RunConfig:
    """Defaults, overlaid by the config file, overlaid by flags; seed also honors the env."""
    doc: dict = {}
    base = Path(".")
    if args.config:
        config_path = Path(args.config)
        doc = json.loads(config_path.read_text())
        base = config_path.parent
    known = {
        "manifest", "feature_set", "task", "protocol", "models", "folds", "repeats",
        "master_seed", "permutations", "l2_strength", "n_trees", "output_dir", "jobs",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    manifest = args.manifest or doc.get("manifest")
    if manifest is None:
        raise ConfigError("a manifest is required (--manifest or config file)")
    # paths in the config file resolve relative to its location
    manifest = Path(manifest) if args.manifest else base / manifest
    out = args.out_dir or doc.get("output_dir") or "gaitmood-out"
    output_dir = Path(out) if args.out_dir else (base / out if "output_dir" in doc else Path(out))

    seed = args.seed
    if seed is None:
        seed = doc.get("master_seed")
    if seed is None:
        seed = _env_seed()
    if seed is None:
        seed = 0

    models = tuple(args.models.split(",")) if args.models else tuple(doc.get("models", _DEFAULT_MODELS))
    for kind in models:
        if kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    cfg = RunConfig(
        manifest=manifest,
        feature_set=args.features or doc.get("feature_set", "acc_gyro_hr"),
        task=args.task or doc.get("task", "happy_vs_sad"),
        protocol=forced_protocol or doc.get("protocol", "cv"),
        models=models,
        folds=args.folds or int(doc.get("folds", 10)),
        repeats=args.repeats or int(doc.get("repeats", 10)),
        master_seed=int(seed),
        permutations=args.permutations or int(doc.get("permutations", 10000)),
        l2_strength=args.l2 if args.l2 is not None else float(doc.get("l2_strength", 1.0)),
        n_trees=args.trees or int(doc.get("n_trees", 100)),
        output_dir=output_dir,
        jobs=args.jobs or int(doc.get("jobs", 1)),
    )
    if cfg.feature_set not in FEATURE_SETS:
        raise ConfigError(f"unknown feature set {cfg.feature_set!r}; expected one of {FEATURE_SETS}")
    if cfg.protocol == "block_cv" and cfg.task != "happy_vs_sad":
        raise ConfigError("block_cv holds out single-emotion blocks and is binary-only; use task=happy_vs_sad")
    return cfg


def _model_specs(cfg: RunConfig) -> list[ModelSpec]:
    specs = []
    for kind in cfg.models:
        if kind == "forest":
            specs.append(ModelSpec("forest", n_trees=cfg.n_trees))
        elif kind == "logreg":
            specs.append(ModelSpec("logreg", l2_strength=cfg.l2_strength))
        else:
            specs.append(ModelSpec("baseline"))
    return specs


def _build_table(cfg: RunConfig):
    manifest = load_manifest(cfg.manifest)
    participants, excluded = load_study(manifest)
    bundles, drops = study_windows(participants)
    table = featurize(bundles, cfg.feature_set)
    data_doc = {
        "excluded_participants": [{"participant": e.participant_id, "reason": e.reason} for e in excluded],
        "dropped_windows": {
            "gyro_gap": drops.gyro_gap,
            "missing_hr": drops.missing_hr,
            "reasons": drops.reasons,
        },
        "n_participants": len(participants),
        "n_windows": len(table),
    }
    return table, data_doc


def _write_json(doc: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_run_meta(out_dir: Path, cfg: RunConfig | None = None) -> None:
    meta = {"version": __version__, "written_at_unix": time.time()}
    if cfg is not None:
        meta["jobs"] = cfg.jobs
    _write_json(meta, out_dir / "run_meta.json")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _figure_prefix(report: StudyReport) -> str:
    if report.protocol == "block_cv":
        return "fig5"
    if report.protocol == "louo":
        return "table7"
    return "fig2" if report.task == "happy_vs_sad" else "fig4"


def _emit_figures(report: StudyReport, out_dir: Path) -> None:
    prefix = _figure_prefix(report)
    acc_rows, lift_rows = [], []
    for u in report.users:
        for kind in sorted(u.metrics):
            s = u.metrics[kind].get("accuracy")
            if s:
                acc_rows.append([u.condition, kind, u.participant_id, repr(s.mean), repr(s.std)])
        for kind in sorted(u.lifts):
            lift_rows.append([u.condition, kind, u.participant_id, repr(u.lifts[kind])])
    _write_csv(
        out_dir / f"{prefix}_accuracy_per_user.csv",
        ["condition", "model", "participant", "accuracy_mean", "accuracy_std"],
        acc_rows,
    )
    quant_rows = []
    for c in report.conditions:
        for kind in sorted(c.models):
            per_user = [
                u.metrics[kind]["accuracy"].mean
                for u in report.users
                if u.condition == c.condition and kind in u.metrics
            ]
            q = np.percentile(per_user, [0, 25, 50, 75, 100])
            quant_rows.append([c.condition, kind, *[repr(float(v)) for v in q]])
    _write_csv(
        out_dir / f"{prefix}_accuracy_quantiles.csv",
        ["condition", "model", "min", "q25", "median", "q75", "max"],
        quant_rows,
    )
    if report.protocol == "cv" and lift_rows:
        name = "fig3_user_lift.csv" if report.task == "happy_vs_sad" else "fig4_user_lift.csv"
        _write_csv(out_dir / name, ["condition", "model", "participant", "lift"], lift_rows)


def _cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else (_env_seed() or 0)
    maker = identical_params if args.identical else separable_params
    params = maker(n_participants=args.participants, duration_s=args.duration, seed=seed)
    manifest_path, manifest = generate_study(params, args.out)
    print(f"wrote {len(manifest.participants)} participants to {manifest_path}")
    return 0


def _cmd_ingest_check(args) -> int:
    manifest = load_manifest(args.manifest)
    participants, excluded = load_study(manifest)
    doc = {"schema": 1, "participants": [], "excluded": [
        {"participant": e.participant_id, "reason": e.reason} for e in excluded
    ]}
    for data in sorted(participants, key=lambda d: d.participant_id):
        segments = []
        for segment in data.entry.segments:
            try:
                trimmed = trim_to_segment(data.acc, segment)
                segments.append({"emotion": segment.emotion, "n_samples": len(trimmed)})
            except GaitmoodError as exc:
                segments.append({"emotion": segment.emotion, "error": str(exc)})
        doc["participants"].append(
            {
                "participant": data.participant_id,
                "condition": data.condition,
                "acc_rate_hz": estimate_sampling_rate(data.acc),
                "gyro_rate_hz": estimate_sampling_rate(data.gyro),
                "hr_samples": len(data.hr),
                "hr_excluded_rows": data.hr.n_excluded,
                "segments": segments,
            }
        )
    rates = [p["acc_rate_hz"] for p in doc["participants"]]
    doc["mean_acc_rate_hz"] = float(np.mean(rates)) if rates else None
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _cmd_extract(args) -> int:
    cfg = _load_run_config(args)
    table, data_doc = _build_table(cfg)
    out = Path(args.out) if args.out else cfg.output_dir / "features.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_feature_csv(table, out)
    if args.dump_windows:
        manifest = load_manifest(cfg.manifest)
        participants, _ = load_study(manifest)
        bundles, _ = study_windows(participants)
        dump_window_csv(bundles, args.dump_windows)
    print(f"wrote {len(table)} windows x {len(table.feature_names)} features to {out}")
    if data_doc["excluded_participants"] or data_doc["dropped_windows"]["gyro_gap"] or data_doc["dropped_windows"]["missing_hr"]:
        print(json.dumps({k: data_doc[k] for k in ("excluded_participants", "dropped_windows")}, indent=2))
    return 0


def _run_protocol(args, protocol: str | None) -> int:
    cfg = _load_run_config(args, forced_protocol=protocol)
    table, data_doc = _build_table(cfg)
    eval_config = EvalConfig(
        folds=cfg.folds,
        repeats=cfg.repeats,
        master_seed=cfg.master_seed,
        permutations=cfg.permutations,
    )
    report = evaluate_study(
        table,
        _model_specs(cfg),
        eval_config,
        task=cfg.task,
        protocol=cfg.protocol,
        feature_set=cfg.feature_set,
        jobs=cfg.jobs,
    )
    doc = report.to_dict()
    doc["data"] = data_doc
    out_dir = cfg.output_dir
    _write_json(doc, out_dir / "report.json")
    _write_run_meta(out_dir, cfg)
    _emit_figures(report, out_dir)
    for c in report.conditions:
        for kind in sorted(c.mean_lift):
            p = c.p_value.get(kind)
            p_text = "n/a" if p is None else f"{p:.4f}"
            acc = c.models[kind]["accuracy"]
            print(
                f"condition {c.condition} {kind}: accuracy {acc.mean:.3f} ({acc.std:.3f}), "
                f"lift {c.mean_lift[kind]:+.3f}, p {p_text}"
            )
    print(f"report written to {out_dir / 'report.json'}")
    return 0


def _cmd_lift(args) -> int:
    doc = json.loads(Path(args.report).read_text())
    if doc.get("schema") != 1:
        raise ConfigError(f"unsupported report schema {doc.get('schema')!r}")
    rows = []
    for cond in doc["conditions"]:
        for kind, lifts in sorted(cond["user_lifts"].items()):
            for participant, value in lifts:
                rows.append([cond["condition"], kind, participant, repr(value)])
    out = Path(args.out) if args.out else Path(args.report).parent / "user_lift.csv"
    _write_csv(out, ["condition", "model", "participant", "lift"], rows)
    summary = [
        {
            "condition": cond["condition"],
            "model": kind,
            "mean_lift": cond["mean_lift"][kind],
            "p_value": cond["p_value"].get(kind),
        }
        for cond in doc["conditions"]
        for kind in sorted(cond["mean_lift"])
    ]
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"lift table written to {out}")
    return 0


def _cmd_importance(args) -> int:
    cfg = _load_run_config(args)
    if "forest" not in cfg.models:
        raise ConfigError("importance requires the forest model")
    table, data_doc = _build_table(cfg)
    eval_config = EvalConfig(
        folds=cfg.folds, repeats=cfg.repeats, master_seed=cfg.master_seed, permutations=cfg.permutations
    )
    report = evaluate_study(
        table,
        [ModelSpec("forest", n_trees=cfg.n_trees)],
        eval_config,
        task=cfg.task,
        protocol="cv",
        feature_set=cfg.feature_set,
        jobs=cfg.jobs,
    )
    per_user = {u.participant_id: u.importances["forest"] for u in report.users if "forest" in u.importances}
    overall = importance_report(per_user, table.feature_names)
    doc = {"schema": 1, "overall": overall.to_dict(), "conditions": {}, "data": data_doc}
    for condition in sorted({u.condition for u in report.users}):
        members = {
            u.participant_id: u.importances["forest"]
            for u in report.users
            if u.condition == condition and "forest" in u.importances
        }
        doc["conditions"][str(condition)] = importance_report(members, table.feature_names).to_dict()
    out_dir = cfg.output_dir
    _write_json(doc, out_dir / "importance.json")
    _write_run_meta(out_dir, cfg)
    rows = [
        [rank + 1, name, *[repr(float(v)) for v in overall.quantiles[rank]], name in overall.top]
        for rank, name in enumerate(overall.feature_names)
    ]
    _write_csv(
        out_dir / "fig6_importance.csv",
        ["rank", "feature", "min", "q25", "median", "q75", "max", "top30"],
        rows,
    )
    top = overall.feature_names[0]
    print(f"most important feature by median: {top}")
    print(f"importance report written to {out_dir / 'importance.json'}")
    return 0


def _cmd_stats(args) -> int:
    from .stats import heart_rate_report, load_hr_summary_csv, load_panas_csv, panas_report

    doc: dict = {"schema": 1}
    if not args.panas and not args.hr:
        raise ConfigError("stats needs --panas and/or --hr input")
    if args.panas:
        doc["panas"] = panas_report(load_panas_csv(args.panas))
    if args.hr:
        doc["heart_rate"] = heart_rate_report(load_hr_summary_csv(args.hr))
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _add_run_flags(p: argparse.ArgumentParser, with_task: bool = True) -> None:
    p.add_argument("--config", help="run-config JSON; paths inside resolve relative to it")
    p.add_argument("--manifest", help="study manifest JSON")
    p.add_argument("--features", choices=FEATURE_SETS, help="sensor subset (default acc_gyro_hr)")
    if with_task:
        p.add_argument("--task", choices=("happy_vs_sad", "happy_sad_neutral"), help="classification task")
    p.add_argument("--models", help="comma-separated subset of baseline,logreg,forest")
    p.add_argument("--folds", type=int, help="cross-validation folds (default 10)")
    p.add_argument("--repeats", type=int, help="cross-validation repeats (default 10)")
    p.add_argument("--seed", type=int, help=f"master seed (overrides ${_ENV_SEED})")
    p.add_argument("--permutations", type=int, help="sign-flip draws for lift p-values (default 10000)")
    p.add_argument("--l2", type=float, help="logistic-regression L2 strength (default 1.0)")
    p.add_argument("--trees", type=int, help="forest size (default 100)")
    p.add_argument("--out-dir", help="output directory (default gaitmood-out)")
    p.add_argument("--jobs", type=int, help="parallel per-user workers (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaitmood",
        description="Emotion recognition from wrist-worn sensor walks: features, personal models, evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"gaitmood {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic study")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--participants", type=int, default=5)
    p.add_argument("--duration", type=float, default=120.0, help="seconds of walking per emotion")
    p.add_argument("--seed", type=int, help=f"generator seed (overrides ${_ENV_SEED})")
    p.add_argument("--identical", action="store_true", help="identical per-emotion parameters (chance-level data)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest-check", help="parse a manifest and summarize streams")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="also write the summary JSON here")
    p.set_defaults(func=_cmd_ingest_check)

    p = sub.add_parser("extract", help="write the feature-matrix CSV")
    _add_run_flags(p)
    p.add_argument("--out", help="feature CSV path (default <out-dir>/features.csv)")
    p.add_argument("--dump-windows", help="also dump per-participant-emotion window CSVs here")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("evaluate", help="repeated stratified CV per user")
    _add_run_flags(p)
    p.set_defaults(func=lambda a: _run_protocol(a, None))

    p = sub.add_parser("block-cv", help="contiguous emotion-block cross-validation")
    _add_run_flags(p, with_task=False)
    p.set_defaults(func=lambda a: _run_protocol(a, "block_cv"), task=None)

    p = sub.add_parser("louo", help="leave-one-user-out per condition")
    _add_run_flags(p)
    p.set_defaults(func=lambda a: _run_protocol(a, "louo"))

    p = sub.add_parser("lift", help="user-lift table from an evaluate report")
    p.add_argument("--report", required=True, help="report.json from evaluate")
    p.add_argument("--out", help="lift CSV path")
    p.set_defaults(func=_cmd_lift)

    p = sub.add_parser("importance", help="forest feature-importance distributions")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_importance)

    p = sub.add_parser("stats", help="PANAS paired tests and heart-rate ANOVA")
    p.add_argument("--panas", help="PANAS CSV (participant,condition,emotion,phase,positive_affect,negative_affect)")
    p.add_argument("--hr", help="heart-rate summary CSV (participant,condition,emotion,mean_bpm)")
    p.add_argument("--out", help="stats-report JSON path")
    p.set_defaults(func=_cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GaitmoodError as exc:
        diagnostic = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(diagnostic, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
