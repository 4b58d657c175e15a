"""Simulated change-detection experiments.

A stream is nominal N(0, sigma^2 I) up to the change time and, from the change
time on, a mixture that replaces each sample by a Uniform([0, 1]^d) draw with
probability ``eps``. Detectors are compared on common random numbers: every
trial draws one stream and all detectors see exactly that stream.

Time is 1-based throughout. An alarm at ``T < tau`` is a false alarm, ``T >= tau``
a detection with delay ``T - tau``; a trial with no alarm by the horizon is
censored and enters the average delay at ``horizon - tau``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from odit.detectors import GaussianMixtureLikelihood, LikelihoodModel, clipped_path, stopping_times
from odit.errors import ConfigError, NumericError
from odit.gem import GemModel, GemParams, train_baseline


@dataclass(frozen=True)
class Scenario:
    dim: int = 2
    sigma: float = 0.1
    eps: float = 0.2
    change_time: int = 100
    horizon: int = 500
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.dim < 1:
            problems.append(f"dim must be >= 1, got {self.dim}")
        if not self.sigma > 0:
            problems.append(f"sigma must be positive, got {self.sigma}")
        if not 0.0 <= self.eps <= 1.0:
            problems.append(f"eps must lie in [0, 1], got {self.eps}")
        if not 1 <= self.change_time <= self.horizon:
            problems.append(f"need 1 <= change_time <= horizon, got {self.change_time}, {self.horizon}")
        if problems:
            raise ConfigError("; ".join(problems))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gen_nominal(n: int, scenario: Scenario, rng=None) -> np.ndarray:
    rng = _rng(scenario.seed if rng is None else rng)
    return scenario.sigma * rng.standard_normal((n, scenario.dim))


def _contaminate(base: np.ndarray, eps: float, rng: np.random.Generator) -> np.ndarray:
    # draws are made for every row so the nominal part is unaffected by eps
    pick = rng.random(base.shape[0]) < eps
    uniform = rng.random(base.shape)
    out = base.copy()
    out[pick] = uniform[pick]
    return out


def gen_anomalous(n: int, scenario: Scenario, rng=None) -> np.ndarray:
    rng = _rng(scenario.seed if rng is None else rng)
    return _contaminate(gen_nominal(n, scenario, rng), scenario.eps, rng)


def gen_stream_pair(scenario: Scenario, rng=None):
    """Return ``(stream, null_stream)``: the change stream and its no-change twin.

    Both share every nominal draw, so they coincide before the change time.
    """
    rng = _rng(scenario.seed if rng is None else rng)
    null = gen_nominal(scenario.horizon, scenario, rng)
    tail = _contaminate(null[scenario.change_time - 1:], scenario.eps, rng)
    stream = np.concatenate([null[: scenario.change_time - 1], tail])
    return stream, null


def gen_stream(scenario: Scenario, rng=None) -> np.ndarray:
    return gen_stream_pair(scenario, rng)[0]


# --- detectors as increment producers ------------------------------------


class Detector:
    """Named map from a block of samples to per-sample increments of the clipped recursion."""

    def __init__(self, name: str, increments: Callable[[np.ndarray], np.ndarray]):
        self.name = name
        self.increments = increments

    def __repr__(self) -> str:
        return f"Detector({self.name!r})"

    def path(self, X: np.ndarray) -> np.ndarray:
        return clipped_path(self.increments(X))


def odit_detector(model: GemModel, name: str = "odit") -> Detector:
    return Detector(name, model.scores)


def cusum_detector(model: LikelihoodModel, name: str = "cusum") -> Detector:
    return Detector(name, model.llr)


def standard_detectors(scenario: Scenario, model: GemModel, misspecified_bound: float = 0.9) -> List[Detector]:
    """ODIT, clairvoyant CUSUM and G-CUSUM with a misspecified uniform bound."""
    return [
        odit_detector(model),
        cusum_detector(GaussianMixtureLikelihood(scenario.dim, scenario.sigma, scenario.eps, 1.0), "cusum"),
        cusum_detector(GaussianMixtureLikelihood(scenario.dim, scenario.sigma, scenario.eps,
                                                 misspecified_bound), "g-cusum"),
    ]


def train_scenario_model(scenario: Scenario, n_train: int, params: GemParams = GemParams()) -> GemModel:
    rng = np.random.default_rng([scenario.seed, 0x7EA1])
    return train_baseline(gen_nominal(n_train, scenario, rng), params)


def trial_rngs(seed: int, trials: int) -> List[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


# --- threshold calibration --------------------------------------------------


class Target(str, enum.Enum):
    FALSE_ALARM_PROB = "false_alarm_prob"
    MEAN_TIME_TO_FALSE_ALARM = "mean_time_to_false_alarm"


@dataclass(frozen=True)
class Calibration:
    threshold: float
    target: str
    target_value: float
    achieved: float
    std_error: float
    trials: int
    window: int
    search_range: tuple


def nominal_path_pool(detector: Detector, scenario: Scenario, trials: int, window: int,
                      seed: Optional[int] = None) -> np.ndarray:
    """(trials, window) array of statistic paths over pure-nominal streams."""
    seed = scenario.seed if seed is None else seed
    X = np.concatenate([gen_nominal(window, scenario, rng) for rng in trial_rngs(seed, trials)])
    return np.vstack([detector.path(block) for block in np.split(X, trials)])


def _target_stat(times: np.ndarray, window: int, target: Target):
    if target is Target.FALSE_ALARM_PROB:
        hit = (times <= window).astype(float)
        p = hit.mean()
        return p, math.sqrt(max(p * (1 - p), 0.0) / hit.size)
    t = np.minimum(times, window).astype(float)
    return t.mean(), t.std(ddof=1) / math.sqrt(t.size) if t.size > 1 else 0.0


def calibrate_from_paths(paths: np.ndarray, target, value: float,
                         h_range=(1e-6, 1e4), iterations: int = 200) -> Calibration:
    """Smallest threshold meeting the false-alarm constraint on a fixed pool of paths.

    For a false-alarm probability target the empirical alarm fraction must be
    ``<= value``; for a mean-time target the mean alarm time (censored at the
    window length) must be ``>= value``. Both are monotone in the threshold, so
    the answer is found by bisection.
    """
    target = Target(target)
    paths = np.atleast_2d(np.asarray(paths, dtype=np.float64))
    trials, window = paths.shape
    if trials < 100:
        raise ConfigError(f"calibration needs at least 100 trials, got {trials}")
    if target is Target.FALSE_ALARM_PROB and not 0.0 < value <= 1.0:
        raise ConfigError(f"false alarm probability target must lie in (0, 1], got {value}")
    if target is Target.MEAN_TIME_TO_FALSE_ALARM and not value >= 1.0:
        raise ConfigError(f"mean time to false alarm target must be >= 1, got {value}")
    peaks = paths.max(axis=1)
    lo, hi = float(h_range[0]), float(h_range[1])

    def times(h):
        return np.where(peaks >= h, np.argmax(paths >= h, axis=1) + 1, window + 1)

    def ok(h):
        stat, _ = _target_stat(times(h), window, target)
        return stat <= value if target is Target.FALSE_ALARM_PROB else stat >= value

    if not ok(hi):
        stat, _ = _target_stat(times(hi), window, target)
        raise NumericError(f"target {target.value}={value} unreachable for thresholds in "
                           f"[{lo}, {hi}] (best achieved {stat:.6g})")
    if not ok(lo):
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-12 * max(1.0, hi):
                break
        h = hi
    else:
        h = lo
    stat, se = _target_stat(times(h), window, target)
    return Calibration(h, target.value, float(value), float(stat), float(se), trials, window,
                       (float(h_range[0]), float(h_range[1])))


def calibrate_threshold(detector: Detector, scenario: Scenario, target, value: float,
                        trials: int = 500, window: Optional[int] = None, seed: Optional[int] = None,
                        h_range=(1e-6, 1e4)) -> Calibration:
    """Calibrate on ``trials`` nominal streams of length ``window`` (default horizon)."""
    window = scenario.horizon if window is None else window
    if trials < 100:
        raise ConfigError(f"calibration needs at least 100 trials, got {trials}")
    pool = nominal_path_pool(detector, scenario, trials, window, seed)
    return calibrate_from_paths(pool, target, value, h_range)


# --- ADD vs FAR evaluation --------------------------------------------------


@dataclass(frozen=True)
class EvalPoint:
    threshold: float
    false_alarm_prob: float
    avg_detection_delay: float
    detection_count: int
    false_alarm_count: int
    censored_count: int
    trial_count: int
    mean_time_to_false_alarm: float
    mean_positive_delay: float


@dataclass
class EvalCurve:
    detector: str
    points: List[EvalPoint] = field(default_factory=list)

    def far(self) -> np.ndarray:
        return np.array([p.false_alarm_prob for p in self.points])

    def add(self) -> np.ndarray:
        return np.array([p.avg_detection_delay for p in self.points])

    def add_at_far(self, far_grid) -> np.ndarray:
        """Delay interpolated at the requested false-alarm levels.

        Where several thresholds share a FAR value the smallest threshold is
        used, being the most sensitive operating point at that FAR.
        """
        by_h = sorted(self.points, key=lambda p: p.threshold)
        best: Dict[float, float] = {}
        for p in by_h:
            if not math.isnan(p.avg_detection_delay):
                best.setdefault(p.false_alarm_prob, p.avg_detection_delay)
        far = np.array(sorted(best))
        return np.interp(far_grid, far, [best[f] for f in far])


@dataclass
class TrialPaths:
    """Statistic paths of every detector on every trial (change stream and no-change twin)."""

    names: List[str]
    change: Dict[str, np.ndarray]
    null: Dict[str, np.ndarray]


def run_trials(detectors: Sequence[Detector], scenario: Scenario, trials: int,
               seed: Optional[int] = None) -> TrialPaths:
    seed = scenario.seed if seed is None else seed
    tau, horizon = scenario.change_time, scenario.horizon
    streams, nulls = [], []
    for rng in trial_rngs(seed, trials):
        s, n = gen_stream_pair(scenario, rng)
        streams.append(s)
        nulls.append(n[tau - 1:])
    S = np.concatenate(streams)
    N = np.concatenate(nulls)
    change, null = {}, {}
    for det in detectors:
        inc = det.increments(S).reshape(trials, horizon)
        inc_null = det.increments(N).reshape(trials, horizon - tau + 1)
        change[det.name] = np.vstack([clipped_path(row) for row in inc])
        # the no-change twin shares the first tau-1 increments
        null[det.name] = np.vstack([
            clipped_path(np.concatenate([inc[i, : tau - 1], inc_null[i]])) for i in range(trials)
        ])
    return TrialPaths([d.name for d in detectors], change, null)


def curve_from_paths(name: str, change: np.ndarray, null: np.ndarray, thresholds,
                     scenario: Scenario) -> EvalCurve:
    thresholds = np.asarray(sorted(set(float(h) for h in thresholds)), dtype=np.float64)
    if thresholds.size == 0:
        raise ConfigError(f"empty threshold grid for detector {name!r}")
    if np.any(thresholds <= 0):
        raise ConfigError(f"thresholds must be positive for detector {name!r}")
    tau, horizon = scenario.change_time, scenario.horizon
    T = np.vstack([stopping_times(row, thresholds) for row in change])  # (trials, H)
    T0 = np.vstack([stopping_times(row, thresholds) for row in null])
    trials = T.shape[0]
    curve = EvalCurve(name)
    for j, h in enumerate(thresholds):
        t = T[:, j]
        false_alarm = t < tau
        censored = t > horizon
        detected = ~false_alarm & ~censored
        delays = np.minimum(t[~false_alarm], horizon) - tau
        add = float(delays.mean()) if delays.size else float("nan")
        curve.points.append(EvalPoint(
            threshold=float(h),
            false_alarm_prob=float(false_alarm.mean()),
            avg_detection_delay=add,
            detection_count=int(detected.sum()),
            false_alarm_count=int(false_alarm.sum()),
            censored_count=int(censored.sum()),
            trial_count=trials,
            mean_time_to_false_alarm=float(np.minimum(T0[:, j], horizon).mean()),
            mean_positive_delay=float(np.maximum(np.minimum(t, horizon) - tau, 0).mean()),
        ))
    return curve


def auto_thresholds(change: np.ndarray, scenario: Scenario, far_range=(0.005, 0.95)) -> np.ndarray:
    """Thresholds at the observed pre-change peaks, one FAR step per trial.

    Each peak value is a threshold at which exactly that many trials alarm
    before the change, so curves from different detectors share FAR levels.
    """
    tau = scenario.change_time
    if tau == 1:
        return np.unique(change.max(axis=1)[change.max(axis=1) > 0])
    peaks = np.sort(change[:, : tau - 1].max(axis=1))
    trials = peaks.size
    # at threshold peaks[i] (with no ties) the trials i.. alarm early
    far = 1.0 - np.arange(trials) / trials
    keep = (far >= far_range[0]) & (far <= far_range[1]) & (peaks > 0)
    hs = peaks[keep]
    above = np.nextafter(peaks[-1], np.inf)
    return np.unique(np.concatenate([hs, [above]]) if above > 0 else hs)


def evaluate_add_far(detectors: Sequence[Detector], scenario: Scenario,
                     thresholds: Optional[Mapping[str, Sequence[float]]] = None,
                     trials: int = 200, seed: Optional[int] = None) -> List[EvalCurve]:
    """ADD-vs-FAR curves on common random numbers.

    ``thresholds`` maps detector name to a grid; a missing entry gets
    :func:`auto_thresholds`.
    """
    if trials < 100:
        raise ConfigError(f"evaluation needs at least 100 trials, got {trials}")
    thresholds = dict(thresholds or {})
    paths = run_trials(detectors, scenario, trials, seed)
    curves = []
    for name in paths.names:
        grid = thresholds.get(name)
        if grid is None:
            grid = auto_thresholds(paths.change[name], scenario)
        curves.append(curve_from_paths(name, paths.change[name], paths.null[name], grid, scenario))
    return curves


def curve_rows(curves: Sequence[EvalCurve]) -> List[dict]:
    rows = []
    for c in curves:
        for p in c.points:
            rows.append({"detector": c.detector, **asdict(p)})
    return rows
