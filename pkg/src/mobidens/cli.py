"""Command line entry point: simulate, train, eval, predict.

Exit status is 0 on success, 1 when a command fails at run time and 2 for
usage errors. Scenario configs, manifests and reports are JSON documents
carrying a ``format_version`` field; density fields are CSV.

Example config::

    {"format_version": 1, "windows": 10, "total_distance": 5e6,
     "scenarios": [{"d": 0.2, "d_prime": 0.2, "r": 0.2, "theta": 3.141592653589793, "seed": 7}]}
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .geometry import GridSpec
from .mdn import ModelFormatError, forward, init_model, load_model, save_model
from .metrics import GridMismatchError, MetricReport, evaluate, report_json, summarize
from .mixture import DensityField, Kind, component_fields, evaluate_on_grid, read_field_csv, write_field_csv
from .scenario import Scenario, ScenarioConstraintError
from .simulator import SimConfig, counts_to_field, run_metadata_json, simulate_counts
from .training import TrainConfig, TrainingDiverged, TrainingSet, train

log = logging.getLogger("mobidens")

CONFIG_VERSION = 1
MANIFEST_NAME = "manifest.json"
OUTPUT_ENV = "MOBIDENS_OUTPUT_DIR"


class UsageError(Exception):
    """Bad invocation or config; reported with exit status 2."""


class CommandError(Exception):
    """Run-time failure; reported with exit status 1."""


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "mobidens-out"))


def _dump(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=False) + "\n"


# -- scenario config -----------------------------------------------------------

def _scenario_entry(entry, i):
    if isinstance(entry, dict):
        try:
            vals = [entry["d"], entry["d_prime"], entry["r"], entry["theta"]]
        except KeyError as exc:
            raise UsageError(f"scenario {i}: missing field {exc}") from None
        seed = entry.get("seed")
    elif isinstance(entry, (list, tuple)) and len(entry) in (4, 5):
        vals, seed = list(entry[:4]), (entry[4] if len(entry) == 5 else None)
    else:
        raise UsageError(f"scenario {i}: expected an object or a [d, d_prime, r, theta(, seed)] list")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
        raise UsageError(f"scenario {i}: values must be numbers")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        raise UsageError(f"scenario {i}: seed must be an integer")
    try:
        s = Scenario(*map(float, vals))
    except ValueError as exc:
        raise UsageError(f"scenario {i}: {exc}") from None
    return s, seed


def load_sim_config(path) -> tuple[list[SimConfig], dict]:
    """Parse a scenario config into one :class:`SimConfig` per scenario."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise UsageError(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    version = doc.get("format_version")
    if version != CONFIG_VERSION:
        raise UsageError(f"{path}: unsupported format_version {version!r} (expected {CONFIG_VERSION})")
    entries = doc.get("scenarios")
    if not isinstance(entries, list) or not entries:
        raise UsageError(f"{path}: config lists no scenarios")
    base_seed = doc.get("seed", 0)
    common = {
        "total_distance": float(doc.get("total_distance", SimConfig.total_distance)),
        "windows": doc.get("windows", SimConfig.windows),
        "sample_step": float(doc.get("sample_step", SimConfig.sample_step)),
        "strict_regime": bool(doc.get("strict_regime", True)),
        "grid": GridSpec(int(doc.get("points_per_axis", 100))),
    }
    configs = []
    for i, entry in enumerate(entries):
        s, seed = _scenario_entry(entry, i)
        try:
            configs.append(SimConfig(s, seed=base_seed + i if seed is None else seed, **common))
        except ValueError as exc:
            raise UsageError(f"{path}: {exc}") from None
    return configs, doc


# -- datasets ------------------------------------------------------------------

def _scenario_from_dict(d) -> Scenario:
    return Scenario(float(d["d"]), float(d["d_prime"]), float(d["r"]), float(d["theta"]))


def load_dataset(dataset_dir) -> list[tuple[Scenario, DensityField]]:
    """(scenario, field) pairs listed in a simulate manifest."""
    root = Path(dataset_dir)
    mpath = root / MANIFEST_NAME
    if not mpath.is_file():
        raise CommandError(f"no dataset at {root} (missing {MANIFEST_NAME})")
    doc = json.loads(mpath.read_text())
    if not doc.get("complete", False):
        raise CommandError(f"{mpath}: dataset is marked incomplete")
    items = doc.get("dataset") or []
    if not items:
        raise CommandError(f"{mpath}: dataset lists no fields")
    out = []
    for it in items:
        s = _scenario_from_dict(it["scenario"])
        f = read_field_csv(root / it["csv"], scenario=s)
        out.append((s, f))
    grid = out[0][1].grid
    for s, f in out:
        if f.grid != grid:
            raise GridMismatchError(f"dataset mixes grids: {f.grid} vs {grid}")
    return out


def evaluate_items(predict, items) -> tuple[list[dict], dict]:
    """Per-scenario metric rows (window metrics averaged) and their summary.

    ``predict(scenario, grid)`` returns the model's field for that scenario.
    """
    by_scenario: dict[Scenario, list[MetricReport]] = {}
    cache = {}
    for s, truth in items:
        if s not in cache:
            cache[s] = predict(s, truth.grid)
        by_scenario.setdefault(s, []).append(evaluate(truth, cache[s]))
    rows, per = [], []
    for s, reps in by_scenario.items():
        r = MetricReport(float(np.mean([x.mse for x in reps])), float(np.mean([x.kl for x in reps])), reps[0].n_points)
        per.append(r)
        rows.append({"scenario": asdict(s), "windows": len(reps), **r.to_dict()})
    return rows, summarize(per)


def _model_predictor(model):
    return lambda s, grid: evaluate_on_grid(forward(model, s), grid, s)


def _field_predictor(field: DensityField):
    def predict(s, grid):
        if grid != field.grid:
            raise GridMismatchError(f"prediction grid {field.grid} does not match dataset grid {grid}")
        return field
    return predict


def format_table(rows, aggregate) -> str:
    lines = [f"{'d':>6} {'d_prime':>8} {'r':>6} {'theta':>8} {'MSE':>12} {'KL':>10}"]
    for row in rows:
        s = row["scenario"]
        lines.append(f"{s['d']:6.3g} {s['d_prime']:8.3g} {s['r']:6.3g} {s['theta']:8.4f} {row['mse']:12.5g} {row['kl']:10.5g}")
    for stat in ("mean", "min", "max"):
        lines.append(f"{stat:>31} {aggregate['mse'][stat]:12.5g} {aggregate['kl'][stat]:10.5g}")
    return "\n".join(lines)


# -- commands ------------------------------------------------------------------

def cmd_simulate(config_path, out_dir=None) -> int:
    configs, doc = load_sim_config(config_path)
    # constraint violations are reported before any work starts
    for i, cfg in enumerate(configs):
        try:
            cfg.scenario.check_simulable(strict=cfg.strict_regime)
        except ScenarioConstraintError as exc:
            raise CommandError(f"scenario {i} {cfg.scenario.as_vector()}: {exc}") from None
    out = Path(out_dir) if out_dir is not None else default_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": 1,
        "command": "simulate",
        "config": doc,
        "seeds": [c.seed for c in configs],
        "outputs": [],
        "dataset": [],
        "wall_time_s": {},
        "complete": False,
    }
    written = []
    try:
        for i, cfg in enumerate(configs):
            hist, meta = simulate_counts(cfg)
            for w, counts in enumerate(hist):
                name = f"s{i:03d}_w{w:02d}.csv"
                write_field_csv(counts_to_field(counts, cfg.grid, cfg.scenario), out / name)
                written.append(out / name)
                manifest["dataset"].append({"scenario": asdict(cfg.scenario), "window": w, "seed": cfg.seed, "csv": name})
            side = f"s{i:03d}.meta.json"
            (out / side).write_text(run_metadata_json(meta) + "\n")
            written.append(out / side)
            manifest["wall_time_s"][f"s{i:03d}"] = meta["wall_time_s"]
            print(f"scenario {i} (d={cfg.scenario.d:g}, d'={cfg.scenario.d_prime:g}, r={cfg.scenario.r:g}, "
                  f"theta={cfg.scenario.theta:.6g}): {cfg.windows} windows in {meta['wall_time_s']:.2f} s")
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        manifest["dataset"] = []
        (out / MANIFEST_NAME).write_text(_dump(manifest))
        raise
    manifest["outputs"] = [p.name for p in written]
    manifest["complete"] = True
    (out / MANIFEST_NAME).write_text(_dump(manifest))
    print(f"wrote {len(manifest['dataset'])} fields to {out}")
    return 0


def report_path_for(model_path) -> Path:
    p = Path(model_path)
    return p.with_name(p.stem + ".report.json")


def cmd_train(kind, K, dataset_dir, out_model_path, seed=0, lr=None, max_epochs=None) -> int:
    items = load_dataset(dataset_dir)
    ts = TrainingSet(items)
    overrides = {"learning_rate": lr, "max_epochs": max_epochs}
    cfg = TrainConfig(seed=seed, **{k: v for k, v in overrides.items() if v is not None})
    model = init_model(kind, K, seed)
    try:
        model, report = train(model, ts, cfg, progress_every=1000)
    except TrainingDiverged as exc:
        raise CommandError(str(exc)) from None
    rows, aggregate = evaluate_items(_model_predictor(model), items)
    save_model(model, out_model_path)
    doc = json.loads(report.to_json())
    doc["training_metrics"] = {"rows": rows, "aggregate": aggregate}
    rpath = report_path_for(out_model_path)
    rpath.write_text(_dump(doc))
    print(f"epochs: {report.epochs_run}")
    print(f"final loss: {report.final_loss:.6g}")
    print(f"converged: {str(report.converged).lower()}")
    print(f"training KL mean {aggregate['kl']['mean']:.5g}, MSE mean {aggregate['mse']['mean']:.5g}")
    print(f"model: {out_model_path}  report: {rpath}")
    return 0


def cmd_eval(model_path, dataset_dir, report_path=None) -> int:
    items = load_dataset(dataset_dir)
    mp = Path(model_path)
    if mp.suffix.lower() == ".csv":
        predict = _field_predictor(read_field_csv(mp))
    else:
        predict = _model_predictor(load_model(mp))
    rows, aggregate = evaluate_items(predict, items)
    print(format_table(rows, aggregate))
    if report_path is None:
        env = os.environ.get(OUTPUT_ENV)
        base = Path(env) if env else mp.parent
        report_path = base / (mp.stem + ".eval.json")
    report_path = Path(report_path)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report_json(rows, aggregate) + "\n")
    print(f"report: {report_path}")
    return 0


def cmd_predict(model_path, d, d_prime, r, theta, out_csv, components=False) -> int:
    scenario = Scenario(d, d_prime, r, theta)
    model = load_model(model_path)
    grid = GridSpec()
    t0 = time.perf_counter()
    mix = forward(model, scenario)
    field = evaluate_on_grid(mix, grid, scenario)
    elapsed = time.perf_counter() - t0
    out = Path(out_csv)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_field_csv(field, out)
    written = [out]
    if components:
        for k, part in enumerate(component_fields(mix, grid, scenario)):
            p = out.with_name(f"{out.stem}.component{k}{out.suffix}")
            write_field_csv(part, p)
            written.append(p)
    print(f"inference time: {elapsed * 1e3:.2f} ms for {grid.size} grid points")
    for p in written:
        print(f"wrote {p}")
    return 0


# -- argument parsing ----------------------------------------------------------

def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {v}")
    return v


def _finite(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be finite, got {text}")
    return v


def _positive_float(text):
    v = _finite(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mobidens", description="Density fields of charging-aware random waypoint mobility.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate ground-truth density fields")
    s.add_argument("config_path")
    s.add_argument("out_dir", nargs="?", help=f"output directory (default: ${OUTPUT_ENV} or ./mobidens-out)")

    t = sub.add_parser("train", help="train a mixture density network")
    t.add_argument("kind", choices=[k.value for k in Kind])
    t.add_argument("K", type=_positive_int)
    t.add_argument("dataset_dir")
    t.add_argument("out_model_path")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--lr", type=_positive_float)
    t.add_argument("--max-epochs", type=_positive_int)

    e = sub.add_parser("eval", help="MSE and KL of a model on a dataset")
    e.add_argument("model_path", help="model file, or a CSV field used as a fixed prediction")
    e.add_argument("dataset_dir")
    e.add_argument("--report", dest="report_path")

    q = sub.add_parser("predict", help="predicted density field for one scenario")
    q.add_argument("model_path")
    for name in ("d", "d_prime", "r", "theta"):
        q.add_argument(name, type=_finite)
    q.add_argument("out_csv")
    q.add_argument("--components", action="store_true", help="also write one CSV per mixture component")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command == "predict":
        try:
            Scenario(args.d, args.d_prime, args.r, args.theta)
        except ValueError as exc:
            parser.error(f"invalid scenario: {exc}")
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config_path, args.out_dir)
        if args.command == "train":
            return cmd_train(args.kind, args.K, args.dataset_dir, args.out_model_path, args.seed, args.lr, args.max_epochs)
        if args.command == "eval":
            return cmd_eval(args.model_path, args.dataset_dir, args.report_path)
        return cmd_predict(args.model_path, args.d, args.d_prime, args.r, args.theta, args.out_csv, args.components)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mobidens {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (CommandError, ModelFormatError, GridMismatchError, ValueError, OSError) as exc:
        print(f"mobidens {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
