"""Command-line front end: dataset generation, single sessions, multi-run
experiments, ablation sweeps, calibration sweeps, and report emission.

Subcommands
-----------
generate    write a patient cohort + history store to a JSON file
run         simulate one session, emit metrics JSON (optionally a trace CSV)
experiment  N sessions of one strategy -> runs.jsonl + summary tables
ablation    the four memory/drift variants of the adaptive strategy
compare     Welch t / Cohen's d between two experiment directories
calibrate   grid-sweep drift constants against target outcome statistics

Exit codes: 0 success, 2 usage error, 3 validation error, 4 I/O error.

All outputs are deterministic for fixed inputs (manifest timestamps aside)
and files are written atomically (temp file + rename).  Config precedence is
CLI flag > config file > built-in default; the effective config is echoed in
every experiment manifest.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import multiprocessing
import os
import sys
from pathlib import Path

from .assignment import Physician, default_roster
from .engine import ABLATION_VARIANTS, Strategy, StrategyConfig, run_session
from .errors import ValidationError
from .patients import (
    Specialty,
    UrgencyLevel,
    dataset_fingerprint,
    dataset_from_dict,
    dataset_to_dict,
    generate_dataset,
)
from .stats import summarize_runs, summary_table, welch_t
from .triage import DriftParams
from . import __version__

DEFAULT_DATASET_SEED = 42
DEFAULT_RUNS = 30
DEFAULT_BASE_SEED = 1000
DEFAULT_CALIBRATE_RUNS = 10

# Targets for `calibrate`, taken from the published outcome statistics the
# drift constants are meant to reproduce.
DEFAULT_TARGET_DRIFTS = 235.6
DEFAULT_TARGET_CRIT = 24.9


# ---------------------------------------------------------------------------
# small file helpers


def _atomic_write_text(path: Path, text: str) -> None:
    """Write via temp file + rename so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _atomic_write_json(path: Path, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _read_json(path: Path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc


# ---------------------------------------------------------------------------
# config / roster / dataset loading


def _load_config(args) -> StrategyConfig:
    """CLI flag > config file > built-in default."""
    base: dict = {}
    if getattr(args, "config", None):
        loaded = _read_json(Path(args.config))
        if not isinstance(loaded, dict):
            raise ValidationError(f"{args.config}: config must be a JSON object")
        base.update(loaded)
    if getattr(args, "strategy", None):
        base["strategy"] = args.strategy
    config = StrategyConfig.from_dict(base)
    if getattr(args, "no_memory", False) or getattr(args, "no_drift", False):
        if config.strategy is not Strategy.AGENTIC:
            print(
                f"warning: --no-memory/--no-drift are redundant for "
                f"{config.strategy.value} (it has no reassessment loop)",
                file=sys.stderr,
            )
        if getattr(args, "no_memory", False):
            config.memory_enabled = False
        if getattr(args, "no_drift", False):
            config.drift_enabled = False
    return config


def _load_roster(path: str | None) -> list[Physician]:
    if path is None:
        return default_roster()
    raw = _read_json(Path(path))
    if not isinstance(raw, list) or not raw:
        raise ValidationError(f"{path}: roster must be a non-empty JSON list")
    roster = []
    for row in raw:
        try:
            roster.append(
                Physician(physician_id=row["id"], specialty=Specialty(row["specialty"]))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: bad roster row {row!r} ({exc})") from exc
    return roster


def _roster_rows(roster: list[Physician]) -> list[dict]:
    return [{"id": p.physician_id, "specialty": p.specialty.value} for p in roster]


def _load_dataset(path: str | None):
    if path is None:
        return generate_dataset(DEFAULT_DATASET_SEED)
    return dataset_from_dict(_read_json(Path(path)))


# ---------------------------------------------------------------------------
# manifest


def build_manifest(
    config: StrategyConfig,
    dataset_fp: str,
    roster: list[Physician],
    base_seed: int,
    n_runs: int,
) -> dict:
    """Reproducibility envelope for an experiment directory.

    `compat_hash` covers everything two directories must share for a paired
    comparison to be meaningful: cohort, roster, seed ladder and code version
    — but not the strategy config (comparing strategies is the whole point)
    and not the wall-clock timestamp.
    """
    seeds = list(range(base_seed, base_seed + n_runs))
    roster_fp = _sha256(_canonical_json(_roster_rows(roster)))
    compat = _sha256(
        _canonical_json(
            {
                "dataset": dataset_fp,
                "roster": roster_fp,
                "seeds": seeds,
                "version": __version__,
            }
        )
    )
    return {
        "code_version": __version__,
        "config": config.to_dict(),
        "dataset_fingerprint": dataset_fp,
        "roster_fingerprint": roster_fp,
        "base_seed": base_seed,
        "n_runs": n_runs,
        "seeds": seeds,
        "compat_hash": compat,
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


# ---------------------------------------------------------------------------
# experiment plumbing


def _worker_run(payload) -> dict:
    """Top-level so it pickles for multiprocessing workers."""
    dataset_dict, config_dict, roster_rows, seed = payload
    patients, history = dataset_from_dict(dataset_dict)
    roster = [
        Physician(physician_id=r["id"], specialty=Specialty(r["specialty"]))
        for r in roster_rows
    ]
    result = run_session(
        patients, history, StrategyConfig.from_dict(config_dict), seed, roster=roster
    )
    crit = [
        v.wait_from_level_entry
        for v in result.served
        if v.effective_urgency is UrgencyLevel.CRITICAL
    ]
    overall = [v.wait_from_registration for v in result.served]
    return {
        "metrics": result.metrics.to_dict(),
        "critical_waits": crit,
        "overall_waits": overall,
        "escalations": [e.to_row() for e in result.escalations],
    }


def _run_many(patients, history, config, roster, base_seed, n_runs, workers) -> list[dict]:
    payloads = [
        (dataset_to_dict(patients, history), config.to_dict(), _roster_rows(roster), s)
        for s in range(base_seed, base_seed + n_runs)
    ]
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            return pool.map(_worker_run, payloads)
    return [_worker_run(p) for p in payloads]


def _summary_csv(summaries: dict, manifest_hash: str) -> str:
    buf = io.StringIO()
    buf.write(f"# manifest: {manifest_hash}\n")
    writer = csv.writer(buf)
    writer.writerow(["metric", "mean", "std", "n"])
    for name, s in summaries.items():
        writer.writerow([name, f"{s.mean:.6f}", f"{s.std:.6f}", s.n])
    return buf.getvalue()


def _escalations_csv(rows: list[tuple[int, dict]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["run_seed", "time", "patient_id", "from_level", "to_level", "cause"])
    for seed, row in rows:
        writer.writerow(
            [seed, row["time"], row["patient_id"], row["from_level"], row["to_level"], row["cause"]]
        )
    return buf.getvalue()


def _write_experiment_dir(out_dir: Path, manifest: dict, run_payloads: list[dict]) -> dict:
    """runs.jsonl + waits.json + escalations.csv + summary.csv + manifest.json."""
    out_dir = Path(out_dir)
    compat = manifest["compat_hash"]
    lines = []
    esc_rows: list[tuple[int, dict]] = []
    for payload, seed in zip(run_payloads, manifest["seeds"]):
        row = dict(payload["metrics"])
        row["manifest"] = compat
        lines.append(_canonical_json(row))
        esc_rows.extend((seed, e) for e in payload["escalations"])
    _atomic_write_text(out_dir / "runs.jsonl", "\n".join(lines) + "\n")
    _atomic_write_json(
        out_dir / "waits.json",
        {
            "manifest": compat,
            "critical": [p["critical_waits"] for p in run_payloads],
            "overall": [p["overall_waits"] for p in run_payloads],
        },
    )
    _atomic_write_text(out_dir / "escalations.csv", _escalations_csv(esc_rows))
    from .engine import SessionMetrics

    summaries = summarize_runs([SessionMetrics.from_dict(p["metrics"]) for p in run_payloads])
    _atomic_write_text(out_dir / "summary.csv", _summary_csv(summaries, compat))
    _atomic_write_json(out_dir / "manifest.json", manifest)
    return summaries


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_generate(args) -> int:
    patients, history = generate_dataset(args.seed)
    _atomic_write_json(Path(args.out), dataset_to_dict(patients, history))
    counts = {lvl.value: 0 for lvl in UrgencyLevel}
    for p in patients:
        counts[p.face_urgency.value] += 1
    print(f"wrote {args.out}: {len(patients)} patients, {len(history)} history records")
    print("face urgency counts:", _canonical_json(counts))
    print("fingerprint:", dataset_fingerprint(patients, history))
    return 0


def cmd_run(args) -> int:
    patients, history = _load_dataset(args.dataset)
    config = _load_config(args)
    roster = _load_roster(args.roster)
    result = run_session(
        patients, history, config, args.seed, roster=roster, collect_trace=args.trace
    )
    metrics_json = json.dumps(result.metrics.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        _atomic_write_text(Path(args.out), metrics_json)
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(metrics_json)
    if args.trace:
        trace_path = Path(args.trace_out or _default_trace_path(args.out))
        buf = io.StringIO()
        writer = csv.DictWriter(
            buf, fieldnames=["time", "event", "patient_id", "physician_id", "detail"]
        )
        writer.writeheader()
        writer.writerows(result.trace)
        _atomic_write_text(trace_path, buf.getvalue())
        print(f"wrote {trace_path}", file=sys.stderr)
    m = result.metrics
    print(
        f"{m.strategy} seed={m.seed}: served {m.served_count}, "
        f"avg wait {m.avg_wait:.1f} min, escalations {m.escalation_count}",
        file=sys.stderr,
    )
    return 0


def _default_trace_path(out: str | None) -> str:
    if not out:
        return "trace.csv"
    p = Path(out)
    return str(p.with_name(p.stem + ".trace.csv"))


def cmd_experiment(args) -> int:
    patients, history = _load_dataset(args.dataset)
    config = _load_config(args)
    roster = _load_roster(args.roster)
    manifest = build_manifest(
        config, dataset_fingerprint(patients, history), roster, args.base_seed, args.runs
    )
    payloads = _run_many(
        patients, history, config, roster, args.base_seed, args.runs, args.workers
    )
    summaries = _write_experiment_dir(Path(args.out_dir), manifest, payloads)
    print(f"wrote {args.out_dir} ({args.runs} runs of {config.strategy.value})")
    print(summary_table({config.strategy.value: summaries}))
    return 0


def cmd_ablation(args) -> int:
    patients, history = _load_dataset(args.dataset)
    roster = _load_roster(args.roster)
    dataset_fp = dataset_fingerprint(patients, history)
    all_summaries = {}
    for name, flags in ABLATION_VARIANTS.items():
        config = StrategyConfig(strategy=Strategy.AGENTIC, **flags)
        manifest = build_manifest(config, dataset_fp, roster, args.base_seed, args.runs)
        payloads = _run_many(
            patients, history, config, roster, args.base_seed, args.runs, args.workers
        )
        all_summaries[name] = _write_experiment_dir(
            Path(args.out_dir) / name, manifest, payloads
        )
    fields = [
        "escalation_count",
        "drift_event_count",
        "memory_escalation_count",
        "composition_critical",
        "avg_wait",
        "critical_wait_mean",
        "throughput_per_hour",
    ]
    table = summary_table(all_summaries, fields=fields)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["variant"] + fields)
    for name, summaries in all_summaries.items():
        writer.writerow([name] + [f"{summaries[f].mean:.4f}" for f in fields])
    _atomic_write_text(Path(args.out_dir) / "ablation_summary.csv", buf.getvalue())
    print(f"wrote {args.out_dir} (4 variants x {args.runs} runs)")
    print(table)
    return 0


def cmd_compare(args) -> int:
    dirs = [Path(args.dir_a), Path(args.dir_b)]
    manifests, waits = [], []
    for d in dirs:
        manifests.append(_read_json(d / "manifest.json"))
        waits.append(_read_json(d / "waits.json"))
    if manifests[0]["n_runs"] != manifests[1]["n_runs"]:
        raise ValidationError(
            f"run-count mismatch: {manifests[0]['n_runs']} vs {manifests[1]['n_runs']}"
        )
    if manifests[0]["compat_hash"] != manifests[1]["compat_hash"]:
        raise ValidationError(
            "manifest mismatch: directories were built from different cohorts, "
            "rosters, seed ladders or code versions"
        )
    key = {"critical-wait": "critical", "overall-wait": "overall"}[args.metric]
    sample_a = [w for run in waits[0][key] for w in run]
    sample_b = [w for run in waits[1][key] for w in run]
    res = welch_t(sample_a, sample_b)
    name_a = manifests[0]["config"]["strategy"]
    name_b = manifests[1]["config"]["strategy"]
    header = ["metric", "arm_a", "arm_b", "mean_a", "mean_b", "t", "df", "p", "cohen_d", "n_a", "n_b"]
    row = [
        args.metric,
        name_a,
        name_b,
        f"{res.mean_a:.4f}",
        f"{res.mean_b:.4f}",
        f"{res.t_stat:.4f}",
        f"{res.df:.2f}",
        f"{res.p_value:.6g}",
        f"{res.cohen_d:.4f}",
        res.n_a,
        res.n_b,
    ]
    print("  ".join(header))
    print("  ".join(str(c) for c in row))
    if args.out:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(header)
        writer.writerow(row)
        _atomic_write_text(Path(args.out), buf.getvalue())
    return 0


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ValidationError(f"{flag}: expected comma-separated numbers, got {text!r}") from exc
    if not values:
        raise ValidationError(f"{flag}: empty grid")
    return values


def cmd_calibrate(args) -> int:
    patients, history = _load_dataset(args.dataset)
    roster = _load_roster(args.roster)
    kappas = _parse_floats(args.kappas, "--kappas")
    p_hists = _parse_floats(args.p_hists, "--p-hists")
    rows = []
    best = None
    for kappa in kappas:
        for p_hist in p_hists:
            drift = DriftParams(history_multiplier=kappa, p_history_escalation=p_hist)
            config = StrategyConfig(strategy=Strategy.AGENTIC, drift=drift)
            payloads = _run_many(
                patients, history, config, roster, args.base_seed, args.runs, args.workers
            )
            esc = sum(p["metrics"]["escalation_count"] for p in payloads) / len(payloads)
            crit = sum(
                p["metrics"]["final_composition"]["critical"] for p in payloads
            ) / len(payloads)
            dist = (
                abs(esc - args.target_drifts) / args.target_drifts
                + abs(crit - args.target_crit) / args.target_crit
            )
            rows.append((kappa, p_hist, esc, crit, dist))
            if best is None or dist < best[4]:
                best = rows[-1]
    print("kappa  p_hist  escalations  critical  distance")
    for kappa, p_hist, esc, crit, dist in rows:
        mark = "  <-- chosen" if (kappa, p_hist) == best[:2] else ""
        print(f"{kappa:5.2f}  {p_hist:6.3f}  {esc:11.1f}  {crit:8.2f}  {dist:8.4f}{mark}")
    fragment = {
        "drift": DriftParams(
            history_multiplier=best[0], p_history_escalation=best[1]
        ).to_dict()
    }
    if args.out:
        _atomic_write_json(Path(args.out), fragment)
        print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", help="cohort JSON from `generate` (default: built-in seed-42 cohort)")
    p.add_argument("--roster", help="physician roster JSON: list of {id, specialty}")


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--runs", type=int, default=DEFAULT_RUNS, help="number of sessions (default %(default)s)")
    p.add_argument("--base-seed", type=int, default=DEFAULT_BASE_SEED,
                   help="seeds are base, base+1, ... (default %(default)s)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opdsim",
        description="Outpatient-department queueing simulator: FCFS vs rule-based "
        "vs adaptive (memory + deterioration-aware) triage.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a patient cohort JSON file")
    p.add_argument("--seed", type=int, required=True, help="cohort RNG seed")
    p.add_argument("--out", default="dataset.json", help="output path (default %(default)s)")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("run", help="simulate a single session")
    p.add_argument("--strategy", choices=[s.value for s in Strategy], help="queueing strategy")
    p.add_argument("--seed", type=int, required=True, help="session RNG seed")
    p.add_argument("--config", help="strategy config JSON (CLI flags win)")
    p.add_argument("--out", help="metrics JSON path (default: stdout)")
    p.add_argument("--no-memory", action="store_true", help="disable history escalation")
    p.add_argument("--no-drift", action="store_true", help="disable deterioration checks")
    p.add_argument("--trace", action="store_true", help="also write a CSV event log")
    p.add_argument("--trace-out", help="trace path (default: <out>.trace.csv)")
    _add_dataset_flags(p)
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("experiment", help="N sessions of one strategy -> report dir")
    p.add_argument("--strategy", choices=[s.value for s in Strategy], required=True)
    p.add_argument("--config", help="strategy config JSON (CLI flags win)")
    p.add_argument("--no-memory", action="store_true", help="disable history escalation")
    p.add_argument("--no-drift", action="store_true", help="disable deterioration checks")
    p.add_argument("--out-dir", required=True, help="report directory")
    _add_experiment_flags(p)
    _add_dataset_flags(p)
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser("ablation", help="memory/drift ablation grid of the adaptive strategy")
    p.add_argument("--out-dir", required=True, help="report directory (one subdir per variant)")
    _add_experiment_flags(p)
    _add_dataset_flags(p)
    p.set_defaults(handler=cmd_ablation)

    p = sub.add_parser("compare", help="Welch t / Cohen's d between two experiment dirs")
    p.add_argument("dir_a")
    p.add_argument("dir_b")
    p.add_argument("--metric", choices=["critical-wait", "overall-wait"],
                   default="critical-wait")
    p.add_argument("--out", help="optional CSV output path")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("calibrate", help="sweep drift constants against target statistics")
    p.add_argument("--kappas", default="1.0,1.2,1.5",
                   help="comma-separated history multipliers (default %(default)s)")
    p.add_argument("--p-hists", default="0.10,0.145,0.20",
                   help="comma-separated history-escalation probabilities (default %(default)s)")
    p.add_argument("--target-drifts", type=float, default=DEFAULT_TARGET_DRIFTS,
                   help="target mean escalation count (default %(default)s)")
    p.add_argument("--target-crit", type=float, default=DEFAULT_TARGET_CRIT,
                   help="target mean final critical count (default %(default)s)")
    p.add_argument("--runs", type=int, default=DEFAULT_CALIBRATE_RUNS,
                   help="sessions per grid cell (default %(default)s)")
    p.add_argument("--base-seed", type=int, default=DEFAULT_BASE_SEED)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="write the chosen constants as a config fragment JSON")
    _add_dataset_flags(p)
    p.set_defaults(handler=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
