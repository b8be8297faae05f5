"""Command-line entry point: ``hemopipe <command> ...``.

Every command exits 0 on success.  On failure it prints one JSON line
``{"error": <code>, "message": <text>}`` to stderr and exits 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .beer_lambert import default_table, load_table
from .core import HemopipeError, SessionPlan
from .drift import DRIFT_MODELS
from .dsp import DEFAULT_CUTOFF_HZ
from .features import FEATURE_NAMES
from .forest import CV_MODES, ForestModel, ForestParams, cross_validate, train
from .pipeline import DRIFT_CHOICES, process, simulate_subject, subject_seed, windows_to_dataset
from .simulator import DriftConfig, SimConfig, emit_columns, simulate_hemo
from .wire import decode_stream, encode_stream

log = logging.getLogger("hemopipe")

SEED_ENV = "HEMOPIPE_SEED"
REPORT_FORMAT = "hemopipe-report"
REPORT_VERSION = 1


def resolve_seed(cli_seed: int | None, fallback: int = 0) -> int:
    """``--seed`` wins, then ``$HEMOPIPE_SEED``, then ``fallback``."""
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env, 0)
        except ValueError:
            raise HemopipeError(f"{SEED_ENV}={env!r} is not an integer") from None
    return fallback


def parse_drift(text: str) -> DriftConfig:
    """``none`` or ``<linear|exponential>:<fraction per hour>``."""
    mode, _, mag = text.partition(":")
    if mode == "none":
        return DriftConfig()
    try:
        return DriftConfig(mode, float(mag) if mag else 0.05)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def load_sim_config(path: str | None, args) -> SimConfig:
    cfg = SimConfig.from_json(io.read_json(path)) if path else SimConfig()
    overrides = {"seed": resolve_seed(args.seed, cfg.seed)}
    if getattr(args, "drift", None) is not None:
        overrides["drift"] = args.drift
    if getattr(args, "noise", None) is not None:
        overrides["noise_sigma"] = args.noise
    return SimConfig(**{**cfg.__dict__, **overrides})


def load_params(path: str | None) -> ForestParams:
    return ForestParams.from_json(io.read_json(path)) if path else ForestParams()


# --- commands -------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_sim_config(args.config, args)
    cols = emit_columns(cfg, simulate_hemo(cfg))
    frames = cols.to_frames()
    if args.out:
        Path(args.out).write_bytes(encode_stream(frames, scale=args.scale))
    if args.csv:
        io.write_frames_csv(args.csv, cols)
    print(json.dumps({"frames": len(frames), "seed": cfg.seed}))
    return 0


def cmd_process(args) -> int:
    table = load_table(args.eps) if args.eps else default_table()
    frames, report = decode_stream(Path(args.inp).read_bytes(), scale=args.scale)
    result = process(frames, table, drift=args.drift, drift_model=args.drift_model,
                     cutoff_hz=None if args.no_filter else args.cutoff)
    io.write_series_csv(args.out, result.series)
    summary = report.to_json()
    summary["drift_fits"] = [
        {"channel": f.channel.value, "slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared}
        for f in result.fits
    ]
    if args.gaps:
        io.write_json(args.gaps, summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_windows(args) -> int:
    series = io.read_series_csv(args.inp)
    plan = SessionPlan.from_json(io.read_json(args.plan)) if args.plan else SessionPlan.default()
    dataset = windows_to_dataset(series, plan, args.subject)
    io.write_features_csv(args.out, dataset, FEATURE_NAMES)
    print(json.dumps({"windows": len(dataset)}))
    return 0


def cmd_train(args) -> int:
    dataset = io.read_features_csv(args.inp)
    model = train(dataset, load_params(args.params), resolve_seed(args.seed))
    Path(args.model).write_text(model.dumps())
    print(json.dumps({"trees": model.n_trees, "classes": list(model.class_labels)}))
    return 0


def cmd_evaluate(args) -> int:
    dataset = io.read_features_csv(args.inp)
    model = ForestModel.loads(Path(args.model).read_text())
    if dataset and dataset[0].names != model.feature_names:
        raise HemopipeError("feature names in the dataset do not match the model")
    cv = cross_validate(dataset, args.k, args.cv, model.params, model.seed)
    X = np.stack([fv.values for fv in dataset])
    y = np.array([int(fv.label) for fv in dataset])
    report = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "params": model.params.__dict__,
        "seed": model.seed,
        "cv": cv.to_json(),
        "model_accuracy": float(np.mean(model.predict_labels(X) == y)),
    }
    io.write_json(args.report, report)
    print(json.dumps({"mean_accuracy": cv.mean_accuracy}))
    return 0


def _cv_or_error(dataset, mode, k, params, seed) -> dict:
    try:
        return cross_validate(dataset, k, mode, params, seed).to_json()
    except HemopipeError as exc:
        return {"mode": mode, "error": exc.code, "message": str(exc)}


def run_pipeline(cfg: SimConfig, n_subjects: int, params: ForestParams, k: int = 5):
    """Simulate subjects, cross-validate each, and train one model on all windows."""
    subjects, pooled = [], []
    for i in range(n_subjects):
        sid = f"S{i:02d}"
        s_seed = subject_seed(cfg.seed, i)
        dataset = simulate_subject(SimConfig(**{**cfg.__dict__, "seed": s_seed}), sid)
        pooled.extend(dataset)
        counts = np.bincount([int(fv.label) for fv in dataset], minlength=3)
        subjects.append({
            "subject_id": sid,
            "seed": s_seed,
            "windows": len(dataset),
            "class_counts": counts.tolist(),
            "stratified": _cv_or_error(dataset, "stratified", k, params, cfg.seed),
            "blocked": _cv_or_error(dataset, "blocked", k, params, cfg.seed),
        })
    model = train(pooled, params, cfg.seed)

    def mean_of(mode):
        accs = [s[mode]["mean_accuracy"] for s in subjects if "mean_accuracy" in s[mode]]
        return float(np.mean(accs)) if accs else None

    sim = cfg.to_json()
    sim.pop("seed")
    report = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "seed": cfg.seed,
        "params": params.__dict__,
        "simulation": sim,
        "subjects": subjects,
        "accuracy": mean_of("stratified"),
        "blocked_accuracy": mean_of("blocked"),
    }
    return report, model


def cmd_pipeline(args) -> int:
    cfg = load_sim_config(args.config, args)
    report, model = run_pipeline(cfg, args.subjects, load_params(args.params), args.k)
    io.write_json(args.report, report)
    model_path = args.model or str(Path(args.report).with_name("model.json"))
    Path(model_path).write_text(model.dumps())
    print(json.dumps({"accuracy": report["accuracy"], "blocked_accuracy": report["blocked_accuracy"]}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hemopipe", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def sim_flags(sp):
        sp.add_argument("--config", help="simulator config JSON")
        sp.add_argument("--seed", type=int, help=f"overrides ${SEED_ENV} and the config seed")
        sp.add_argument("--drift", type=parse_drift, help="none | linear:F | exponential:F (F = fraction per hour)")
        sp.add_argument("--noise", type=float, help="read-noise sigma in counts")

    sp = sub.add_parser("simulate", help="synthesize a raw capture")
    sim_flags(sp)
    sp.add_argument("--out", help="binary wire-format output")
    sp.add_argument("--csv", help="CSV copy of the frames (keeps the X channel)")
    sp.add_argument("--scale", type=float, default=1.0, help="count scale for u16 packing")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("process", help="decode and convert to hemoglobin changes")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--eps", help="extinction table (key = value lines); defaults to the bundled one")
    sp.add_argument("--out", required=True)
    sp.add_argument("--gaps", help="write the decode report here as JSON")
    sp.add_argument("--drift", choices=DRIFT_CHOICES, default="auto")
    sp.add_argument("--drift-model", choices=sorted(DRIFT_MODELS), default="affine")
    sp.add_argument("--cutoff", type=float, default=DEFAULT_CUTOFF_HZ)
    sp.add_argument("--no-filter", action="store_true")
    sp.add_argument("--scale", type=float, default=1.0)
    sp.set_defaults(func=cmd_process)

    sp = sub.add_parser("windows", help="segment a hemo series and extract features")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--plan", help="session plan JSON; defaults to the five-segment protocol")
    sp.add_argument("--subject", default="S00")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_windows)

    sp = sub.add_parser("train", help="train a random forest")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--params", help="forest parameter JSON")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--model", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="cross-validate with a model's parameters")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--cv", choices=CV_MODES, default="stratified")
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--report", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("pipeline", help="simulate, process, window, evaluate and train end to end")
    sim_flags(sp)
    sp.add_argument("--params", help="forest parameter JSON")
    sp.add_argument("--subjects", type=int, default=1)
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--report", required=True)
    sp.add_argument("--model", help="defaults to model.json next to the report")
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HemopipeError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": "invalid-input", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
