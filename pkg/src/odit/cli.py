"""``odit`` command line.

Data goes to stdout, diagnostics to stderr. Exit codes: 0 success,
1 usage/config error, 2 data error, 3 numeric/infeasibility error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from typing import List, Optional

import numpy as np

from odit import __version__
from odit.config import build_config
from odit.detectors import GaussianMixtureLikelihood, OditState, odit_update
from odit.errors import ConfigError, DataError, OditError
from odit.gem import train_baseline
from odit.io import (canonical_json, file_digest, fmt, iter_csv, load_csv,
                     load_model, model_digest, save_model, write_csv)
from odit.simlab import (Target, calibrate_from_paths, cusum_detector, evaluate_add_far,
                         gen_anomalous, gen_nominal, gen_stream, nominal_path_pool,
                         odit_detector, train_scenario_model)

CURVE_COLUMNS = ["detector", "h", "far", "add", "censored", "trials"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _threshold(args, cfg) -> float:
    h = args.threshold if args.threshold is not None else cfg["threshold"]
    if h is None:
        raise ConfigError("a detection threshold is required (--threshold or config 'threshold')")
    if not h > 0:
        raise ConfigError(f"threshold must be positive, got {h}")
    return float(h)


def _model_for(args, cfg):
    if getattr(args, "model", None):
        return load_model(args.model)
    _note(f"training ODIT baseline on {cfg['n_train']} simulated nominal points")
    return train_scenario_model(cfg.scenario, cfg["n_train"], cfg.gem)


def _detector(kind: str, cfg, model=None):
    sc = cfg.scenario
    if kind == "odit":
        return odit_detector(model)
    bound = 1.0 if kind == "cusum" else float(cfg["misspecified_bound"])
    return cusum_detector(GaussianMixtureLikelihood(sc.dim, sc.sigma, sc.eps, bound), kind)


def cmd_train(args, cfg) -> int:
    data = load_csv(args.input, cfg["has_header"])
    model = train_baseline(data, cfg.gem)
    save_model(model, args.model, source_digest=file_digest(args.input))
    _note(f"trained: N1={model.training_sizes[0]} N2={model.training_sizes[1]} "
          f"K={model.params.K} threshold_length={fmt(model.threshold_length)}")
    return 0


def cmd_score(args, cfg) -> int:
    model = load_model(args.model)
    X = load_csv(args.input, cfg["has_header"])
    if X.shape[1] != model.dim:
        raise DataError(f"input has d={X.shape[1]} but the model expects d={model.dim}")
    D = model.scores(X)
    write_csv(args.output, ["t", "D"], ((t, d) for t, d in enumerate(D, start=1)))
    return 0


def _run_odit(evidence, h: float, out) -> Optional[int]:
    """Algorithm loop shared by ``detect`` and ``replay``: one row per sample until alarm."""
    out.write("t,statistic,alarm\n")
    state = OditState(threshold=h)
    for D in evidence:
        state, alarm = odit_update(state, D)
        out.write(f"{state.t},{fmt(state.statistic)},{fmt(alarm)}\n")
        out.flush()
        if alarm:
            _note(f"anomaly declared at T_d={state.t}")
            return state.t
    _note(f"no alarm after {state.t} samples")
    return None


def cmd_detect(args, cfg) -> int:
    model = load_model(args.model)
    h = _threshold(args, cfg)
    rows = iter_csv(args.input, cfg["has_header"], dim=model.dim)
    _run_odit((model.score(x) for _, x in rows), h, sys.stdout)
    return 0


def cmd_replay(args, cfg) -> int:
    h = _threshold(args, cfg)

    def evidence():
        for rownum, row in iter_csv(args.input, has_header=True, dim=2):
            if int(row[0]) != rownum:
                raise DataError(f"row {rownum}: time index {fmt(row[0])} out of sequence")
            yield float(row[1])

    _run_odit(evidence(), h, sys.stdout)
    return 0


def cmd_simulate(args, cfg) -> int:
    sc = cfg.scenario
    if args.kind == "stream":
        X = gen_stream(sc)
    else:
        n = args.n if args.n is not None else sc.horizon
        if n < 1:
            raise ConfigError("-n must be >= 1")
        X = gen_nominal(n, sc) if args.kind == "nominal" else gen_anomalous(n, sc)
    write_csv(args.output, None, X)
    return 0


def cmd_calibrate(args, cfg) -> int:
    kind = args.detector or cfg["detector"]
    model = _model_for(args, cfg) if kind == "odit" else None
    det = _detector(kind, cfg, model)
    target = cfg["target"]
    window = cfg["window"] or cfg.scenario.horizon
    trials = cfg["trials"]
    if args.nominal:
        X = load_csv(args.nominal, cfg["has_header"])
        n_windows = X.shape[0] // window
        if n_windows < 100:
            raise ConfigError(f"nominal source yields {n_windows} windows of length {window}; need >= 100")
        paths = np.vstack([det.path(X[i * window:(i + 1) * window]) for i in range(n_windows)])
    else:
        paths = nominal_path_pool(det, cfg.scenario, trials, window, seed=cfg["seed"])
    cal = calibrate_from_paths(paths, Target(target["kind"]), float(target["value"]))
    record = {"detector": kind, "h": cal.threshold, "target": cal.target,
              "target_value": cal.target_value, "achieved": cal.achieved,
              "std_error": cal.std_error, "trials": cal.trials, "window": cal.window,
              "search_range": list(cal.search_range), "seed": cfg["seed"]}
    print(json.dumps(record, sort_keys=True))
    return 0


def cmd_evaluate(args, cfg) -> int:
    kinds = cfg["detectors"]
    model = _model_for(args, cfg) if "odit" in kinds else None
    dets = [_detector(k, cfg, model) for k in kinds]
    grids = {k: v for k, v in cfg["thresholds"].items() if v != "auto"}
    curves = evaluate_add_far(dets, cfg.scenario, grids, cfg["trials"], seed=cfg["seed"])
    rows = ((c.detector, p.threshold, p.false_alarm_prob, p.avg_detection_delay,
             p.censored_count, p.trial_count) for c in curves for p in c.points)
    write_csv(args.output, CURVE_COLUMNS, rows)
    meta = {
        "version": __version__,
        "seed": cfg["seed"],
        "scenario_seed": cfg.scenario.seed,
        "gem_seed": cfg.gem.seed,
        "trials": cfg["trials"],
        "detectors": kinds,
        "config_digest": "sha256:" + hashlib.sha256(canonical_json(cfg.raw).encode()).hexdigest(),
        "model_digest": model_digest(model) if model is not None else None,
    }
    if args.meta:
        with open(args.meta, "w") as fh:
            fh.write(json.dumps(meta, sort_keys=True) + "\n")
    else:
        _note(json.dumps(meta, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. gem.k=3 (repeatable)")
    common.add_argument("--header", action="store_true", help="input CSVs carry a header row")

    p = _Parser(prog="odit", description="Online nonparametric anomaly detection (ODIT).")
    p.add_argument("--version", action="version", version=f"odit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", parents=[common], help="nominal CSV -> model archive")
    s.add_argument("--input", required=True)
    s.add_argument("--model", required=True, help="archive path to write")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("score", parents=[common], help="per-row outlier evidence D_t")
    s.add_argument("--model", required=True)
    s.add_argument("--input", default="-")
    s.add_argument("--output", default="-")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("detect", parents=[common], help="streaming ODIT detection")
    s.add_argument("--model", required=True)
    s.add_argument("--input", default="-")
    s.add_argument("--threshold", "-H", type=float)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("replay", parents=[common], help="run ODIT over a 'score' output")
    s.add_argument("--input", default="-")
    s.add_argument("--threshold", "-H", type=float)
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("simulate", parents=[common], help="generate a scenario CSV")
    s.add_argument("--kind", choices=["stream", "nominal", "anomalous"], default="stream")
    s.add_argument("-n", type=int, help="sample count for nominal/anomalous (default horizon)")
    s.add_argument("--output", default="-")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("calibrate", parents=[common], help="threshold for a false-alarm target")
    s.add_argument("--model", help="ODIT model archive (default: train from the scenario)")
    s.add_argument("--detector", choices=["odit", "cusum", "g-cusum"])
    s.add_argument("--nominal", help="nominal CSV cut into windows (default: simulate)")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("evaluate", parents=[common], help="ADD-vs-FAR sweep -> curve CSV")
    s.add_argument("--model", help="ODIT model archive (default: train from the scenario)")
    s.add_argument("--output", default="-")
    s.add_argument("--meta", help="write the run-metadata JSON here (default: stderr)")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = list(args.overrides)
        if args.header:
            overrides.append("has_header=true")
        cfg = build_config(args.config, overrides)
        return args.func(args, cfg)
    except OditError as exc:
        _note(f"odit {args.command}: error: {exc}")
        return exc.exit_code
    except BrokenPipeError:
        return 0


if __name__ == "__main__":
    sys.exit(main())
