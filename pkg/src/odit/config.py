"""Run configuration: a YAML key-value file plus command-line overrides.

Recognized keys (all optional; defaults shown in :data:`DEFAULTS`)::

    gem:        k, s, gamma, alpha, K, partition_fraction, seed
    scenario:   dim, sigma, eps, change_time, horizon, seed
    n_train:    training-set size when a model is trained from the scenario
    detectors:  list drawn from odit, cusum, g-cusum
    detector:   single detector for calibrate
    misspecified_bound: uniform upper bound assumed by g-cusum
    threshold:  h for detect/replay
    thresholds: mapping detector -> list of h, or "auto"
    trials, seed, window
    target:     {kind: false_alarm_prob | mean_time_to_false_alarm, value: number}
    has_header: whether input CSVs carry a header row

Overrides use dotted keys, e.g. ``--set gem.k=3 --set scenario.eps=0.1``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import yaml

from odit.errors import ConfigError
from odit.gem import GemParams
from odit.simlab import Scenario, Target

DETECTOR_KINDS = ("odit", "cusum", "g-cusum")

DEFAULTS: Dict[str, Any] = {
    "gem": {"k": 1, "s": 1, "gamma": None, "alpha": 0.05, "K": None,
            "partition_fraction": 0.1, "seed": 0},
    "scenario": {"dim": 2, "sigma": 0.1, "eps": 0.2, "change_time": 100, "horizon": 500, "seed": 0},
    "n_train": 2000,
    "detectors": list(DETECTOR_KINDS),
    "detector": "odit",
    "misspecified_bound": 0.9,
    "threshold": None,
    "thresholds": {},
    "trials": 200,
    "seed": 0,
    "window": None,
    "target": {"kind": "false_alarm_prob", "value": 0.05},
    "has_header": False,
}


def _merge(base: dict, extra: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if key not in base:
            raise ConfigError(f"unknown config key {prefix + key!r}")
        if key == "thresholds" and isinstance(val, dict):
            out[key] = {**base[key], **val}
        elif isinstance(base[key], dict) and key != "thresholds":
            if not isinstance(val, dict):
                raise ConfigError(f"config key {prefix + key!r} must be a mapping")
            out[key] = _merge(base[key], val, prefix + key + ".")
        else:
            out[key] = val
    return out


def parse_override(text: str) -> dict:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    value = yaml.safe_load(raw) if raw.strip() else None
    node: Dict[str, Any] = {}
    cur = node
    parts = key.strip().split(".")
    for p in parts[:-1]:
        cur[p] = {}
        cur = cur[p]
    cur[parts[-1]] = value
    return node


@dataclass
class RunConfig:
    raw: Dict[str, Any]
    gem: GemParams
    scenario: Scenario

    def __getitem__(self, key):
        return self.raw[key]


def _int_like(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def build_config(path: Optional[str] = None, overrides: Optional[List[str]] = None) -> RunConfig:
    """Load, merge and validate. Every problem found is reported in one ConfigError."""
    raw = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path) as fh:
                loaded = yaml.safe_load(fh) or {}
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        raw = _merge(raw, loaded)
    for text in overrides or []:
        raw = _merge(raw, parse_override(text))

    problems: List[str] = []
    gem = scenario = None
    try:
        gem = GemParams(**raw["gem"])
        gem.check()
    except (ConfigError, TypeError) as exc:
        problems.append(f"gem: {exc}")
    try:
        scenario = Scenario(**raw["scenario"])
    except (ConfigError, TypeError) as exc:
        problems.append(f"scenario: {exc}")

    for key in ("n_train", "trials", "seed"):
        if not _int_like(raw[key]) or raw[key] < 0:
            problems.append(f"{key} must be a nonnegative integer, got {raw[key]!r}")
    if _int_like(raw["trials"]) and raw["trials"] < 100:
        problems.append(f"trials must be >= 100, got {raw['trials']}")
    if raw["window"] is not None and (not _int_like(raw["window"]) or raw["window"] < 1):
        problems.append(f"window must be a positive integer, got {raw['window']!r}")
    if raw["threshold"] is not None and not (isinstance(raw["threshold"], (int, float))
                                             and raw["threshold"] > 0):
        problems.append(f"threshold must be a positive number, got {raw['threshold']!r}")
    dets = raw["detectors"]
    if not isinstance(dets, list) or not dets or any(d not in DETECTOR_KINDS for d in dets):
        problems.append(f"detectors must be a nonempty list drawn from {DETECTOR_KINDS}, got {dets!r}")
    if raw["detector"] not in DETECTOR_KINDS:
        problems.append(f"detector must be one of {DETECTOR_KINDS}, got {raw['detector']!r}")
    if not (isinstance(raw["misspecified_bound"], (int, float)) and raw["misspecified_bound"] > 0):
        problems.append("misspecified_bound must be positive")
    th = raw["thresholds"]
    if not isinstance(th, dict):
        problems.append("thresholds must map detector names to lists or 'auto'")
    else:
        for name, grid in th.items():
            if name not in DETECTOR_KINDS:
                problems.append(f"thresholds: unknown detector {name!r}")
            elif grid == "auto":
                continue
            elif (not isinstance(grid, list) or not grid
                  or not all(isinstance(h, (int, float)) and h > 0 for h in grid)):
                problems.append(f"thresholds.{name} must be 'auto' or a nonempty list of positive numbers")
    tgt = raw["target"]
    try:
        kind = Target(tgt.get("kind"))
        value = tgt.get("value")
        if not isinstance(value, (int, float)):
            problems.append("target.value must be a number")
        elif kind is Target.FALSE_ALARM_PROB and not 0 < value <= 1:
            problems.append(f"target.value must lie in (0, 1] for false_alarm_prob, got {value}")
        elif kind is Target.MEAN_TIME_TO_FALSE_ALARM and value < 1:
            problems.append(f"target.value must be >= 1 for mean_time_to_false_alarm, got {value}")
    except (ValueError, AttributeError):
        problems.append(f"target.kind must be one of {[t.value for t in Target]}")
    if not isinstance(raw["has_header"], bool):
        problems.append("has_header must be true or false")

    if problems:
        raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(problems))
    return RunConfig(raw=raw, gem=gem, scenario=scenario)
