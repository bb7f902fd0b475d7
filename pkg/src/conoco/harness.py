"""Replications and metrics: ROC/AUC, anonymity, reward preservation, sweeps.

A replication is one watermarked and one plain episode on fresh
environments, each sensed into glimpses and scored independently. All
randomness flows from a master seed through :func:`replication_seeds`, so a
set of replications is reproducible and independent of execution order.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from . import baselines as bl
from .detect import DetectionConfig, detect, detect_with_offset
from .errors import ConfigurationError, ReplicationError
from .sigproc import MASK64, splitmix64, welch_spectra
from .simworld import (AdditiveAttack, BandStopAttack, GaussianPolicy, GlimpseSensor,
                       JamAttack, SequenceNoise, TournamentNoise, WGNNoise, ideal_bandstop,
                       make_task, run_episode, sense, attack_bandstop)
from .watermark import (ExplorationScaleSchedule, PolicyRateBounds, SecretKey,
                        digital_band, generate_watermark)

__all__ = [
    "AttackSpec",
    "Scenario",
    "Strategy",
    "STRATEGIES",
    "PRESETS",
    "preset",
    "replication_seeds",
    "ReplicationRecord",
    "ReplicationSet",
    "MetricReport",
    "SweepRow",
    "simulate_pair",
    "score_glimpses",
    "run_replications",
    "roc_auc",
    "bootstrap_ci",
    "two_sample_ci",
    "auc_ci",
    "evaluate",
    "anonymity",
    "reward_preservation",
    "sweep",
    "sweep_csv",
    "bandstop_tradeoff",
    "jamming_additivity",
]

PRESETS = ("T1", "T2", "T1-remote", "T2-remote", "T1-onboard", "T2-onboard", "smoke")
STRATEGIES = ("conoco", "multisine", "correlation", "tournament", "none")
SWEEP_AXES = ("length", "offset", "jitter", "drop", "projection", "adversary_strength",
              "bandstop_order")


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AttackSpec:
    """Adversary applied online to the watermarked arm only.

    ``kind`` is ``additive`` (``strength`` is the noise std, optional
    ``clip``), ``bandstop`` (Butterworth of prototype ``order`` over the
    adversary's guess ``band_hz`` of the secret band, read at the nominal
    policy rate) or ``jam`` (colored noise from a fresh key, ``strength``
    times unit variance).
    """

    kind: str
    strength: float = 0.0
    order: int = 4
    clip: float | None = None
    band_hz: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in ("additive", "bandstop", "jam"):
            raise ConfigurationError(f"unknown attack kind {self.kind!r}")
        if self.strength < 0:
            raise ConfigurationError("attack strength must be non-negative")


@dataclass(frozen=True)
class Scenario:
    """Task, plant, policy, sensor and detector settings for one experiment."""

    name: str = "T2"
    task: str = "T2"
    task_params: dict = field(default_factory=dict)
    steps: int = 1000
    policy_rate: float = 20.0
    rate_bounds: tuple[float, float] = (19.0, 21.0)
    plant_dt: float = 0.005
    process_noise: float = 0.0
    scale: ExplorationScaleSchedule = field(default_factory=ExplorationScaleSchedule)
    saturation: float | None = None
    sensor: GlimpseSensor = field(default_factory=GlimpseSensor)
    band: tuple[float, float] = (1.2, 2.49)
    offset_handling: bool = False
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    attack: AttackSpec | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError("an episode needs at least one policy step")
        if self.sensor.rate <= 2.0 * self.band[1]:
            raise ConfigurationError(
                f"glimpse rate {self.sensor.rate} Hz must exceed twice the band edge "
                f"{self.band[1]} Hz"
            )
        bounds = self.bounds
        if not bounds.contains(self.policy_rate):
            raise ConfigurationError("true policy rate lies outside the rate bounds")
        digital_band(SecretKey(1, self.band), bounds)

    @property
    def bounds(self) -> PolicyRateBounds:
        return PolicyRateBounds(*self.rate_bounds)

    @property
    def duration(self) -> float:
        return self.steps / self.policy_rate

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Strategy:
    """Watermarking strategy name plus its parameters."""

    name: str = "conoco"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in STRATEGIES:
            raise ConfigurationError(
                f"unknown strategy {self.name!r}; choose from {', '.join(STRATEGIES)}"
            )


def preset(name: str) -> Scenario:
    """Calibrated scenarios.

    ``T1`` and ``T2`` use an ideal-timing sensor at 100 Hz (five glimpses
    per policy step) with moderate noise; ``*-remote`` adds a 30 degree
    view rotation and doubles the sensor noise; ``*-onboard`` models
    low-noise onboard sensing (a fifth of the noise); ``smoke`` is a short
    T2 episode for quick checks.
    """
    if name == "T1":
        return Scenario("T1", "T1", {}, scale=ExplorationScaleSchedule(value=0.1),
                        sensor=GlimpseSensor(noise=1.0))
    if name == "T2":
        return Scenario("T2", "T2", {"init_std": 2.0}, scale=ExplorationScaleSchedule(value=0.5),
                        sensor=GlimpseSensor(noise=0.5))
    if name in ("T1-remote", "T2-remote"):
        base = preset(name[:2])
        sensor = replace(base.sensor, noise=2 * base.sensor.noise, projection=(30.0, 30.0))
        return replace(base, name=name, sensor=sensor)
    if name in ("T1-onboard", "T2-onboard"):
        base = preset(name[:2])
        return replace(base, name=name, sensor=replace(base.sensor, noise=base.sensor.noise / 5))
    if name == "smoke":
        return replace(preset("T2"), name="smoke", steps=400)
    raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


# --------------------------------------------------------------------------
# Replications
# --------------------------------------------------------------------------

_SEED_NAMES = ("owner", "wrong", "env_wm", "env_plain", "noise_plain", "sensor_wm",
               "sensor_plain", "attack", "jam", "policy")


def replication_seeds(master_seed: int, index: int) -> dict[str, int]:
    """Named, independent 64-bit seeds for replication ``index``."""
    base = splitmix64((int(master_seed) & MASK64) ^ splitmix64(int(index)))
    return {name: splitmix64(base ^ splitmix64(j + 1)) for j, name in enumerate(_SEED_NAMES)}


def _key(strategy: Strategy, seed: int, scenario: Scenario, dims: int):
    p = strategy.params
    if strategy.name == "multisine":
        return bl.multisine_key(seed, scenario.band, int(p.get("count", 8)), dims,
                                scenario.bounds)
    if strategy.name == "correlation":
        return bl.CorrelationKey(seed, float(p.get("cutoff_hz", 0.5)),
                                 float(p.get("max_lag_s", 2.0)))
    if strategy.name == "tournament":
        return bl.TournamentKey(seed, int(p.get("layers", 4)))
    return SecretKey(seed, scenario.band)


def _noise(strategy: Strategy, key, scenario: Scenario, dims: int, seeds: dict):
    n = scenario.steps
    if strategy.name == "conoco":
        return SequenceNoise(generate_watermark(key, n, dims, scenario.bounds))
    if strategy.name == "multisine":
        return SequenceNoise(bl.multisine_generate(key, n, dims, scenario.bounds))
    if strategy.name == "correlation":
        return SequenceNoise(bl.correlation_generate(key, n, dims))
    if strategy.name == "tournament":
        return TournamentNoise(key, seeds["policy"])
    return WGNNoise(seeds["policy"])


def _attack(spec: AttackSpec | None, scenario: Scenario, seeds: dict):
    if spec is None:
        return None
    if spec.kind == "additive":
        return AdditiveAttack(spec.strength, spec.clip, seeds["attack"])
    if spec.kind == "bandstop":
        lo, hi = spec.band_hz or scenario.band
        return BandStopAttack((lo / scenario.policy_rate, hi / scenario.policy_rate), spec.order)
    return JamAttack(SecretKey(seeds["jam"], spec.band_hz or scenario.band), scenario.bounds,
                     spec.strength)


def simulate_pair(scenario: Scenario, strategy: Strategy, index: int, master_seed: int,
                  owner_seed: int | None = None):
    """Watermarked and plain glimpses plus episode rewards for one replication.

    ``owner_seed`` pins the owner key instead of deriving a fresh one.
    Returns ``(glimpses_wm, glimpses_plain, reward_wm, reward_plain, seeds)``.
    """
    seeds = replication_seeds(master_seed, index)
    if owner_seed is not None:
        seeds["owner"] = int(owner_seed) & MASK64
    task = make_task(scenario.task, **scenario.task_params)
    plant = task.make_plant(scenario.plant_dt, scenario.process_noise)
    policy = GaussianPolicy(scenario.policy_rate, scenario.scale, scenario.saturation)
    d = task.action_dim
    key = _key(strategy, seeds["owner"], scenario, d)
    wm_trace = run_episode(policy, plant, _noise(strategy, key, scenario, d, seeds), task,
                           scenario.steps, seeds["env_wm"],
                           _attack(scenario.attack, scenario, seeds))
    plain_trace = run_episode(policy, plant, WGNNoise(seeds["noise_plain"]),
                              make_task(scenario.task, **scenario.task_params),
                              scenario.steps, seeds["env_plain"])
    prov = {"replication": int(index), "scenario": scenario.name}
    g_wm = sense(wm_trace, plant, scenario.sensor, seeds["sensor_wm"],
                 {**prov, "watermarked": strategy.name != "none"})
    g_plain = sense(plain_trace, plant, scenario.sensor, seeds["sensor_plain"],
                    {**prov, "watermarked": False})
    return g_wm, g_plain, wm_trace.total_reward, plain_trace.total_reward, seeds


def score_glimpses(glimpses, scenario: Scenario, strategy: Strategy, key) -> tuple[float, Any]:
    """Detection score for one glimpse sequence, plus the full report if any."""
    bounds = scenario.bounds
    f_g = glimpses.rate
    if strategy.name == "multisine":
        return bl.multisine_detect(glimpses, f_g, key, bounds, scenario.detection.grid_points), None
    if strategy.name == "correlation":
        return bl.correlation_detect(glimpses, f_g, key, bounds,
                                     scenario.detection.grid_points), None
    if strategy.name == "tournament":
        return bl.tournament_detect(glimpses, f_g, key,
                                    int(strategy.params.get("null_keys", 100))), None
    if scenario.offset_handling:
        cfg = scenario.detection
        if cfg.max_offset is None:
            cfg = replace(cfg, max_offset=0.5 * scenario.duration)
        report = detect_with_offset(glimpses, f_g, key, bounds, cfg)
    else:
        report = detect(glimpses, f_g, key, bounds, scenario.detection)
    return report.score, report


@dataclass(frozen=True)
class ReplicationRecord:
    """Scores and rewards of one replication, with the seeds that made them."""

    index: int
    seeds: dict
    positive: float
    negative: float
    reward_positive: float
    reward_negative: float
    wrong_positive: float | None = None
    wrong_negative: float | None = None
    best_rate: float | None = None
    estimated_offset: int | None = None


def _replicate(args) -> ReplicationRecord:
    scenario, strategy, index, master_seed, wrong_key, owner_seed = args
    seeds = replication_seeds(master_seed, index)
    try:
        g_wm, g_plain, r_wm, r_plain, seeds = simulate_pair(scenario, strategy, index,
                                                            master_seed, owner_seed)
        d = g_wm.dims
        det = strategy if strategy.name != "none" else Strategy("conoco")
        key = _key(det, seeds["owner"], scenario, d)
        pos, report = score_glimpses(g_wm, scenario, det, key)
        neg, _ = score_glimpses(g_plain, scenario, det, key)
        wpos = wneg = None
        if wrong_key:
            wk = _key(det, seeds["wrong"], scenario, d)
            wpos, _ = score_glimpses(g_wm, scenario, det, wk)
            wneg, _ = score_glimpses(g_plain, scenario, det, wk)
    except ConfigurationError:
        raise
    except Exception as exc:  # noqa: BLE001 - rewrapped with the failing seed
        raise ReplicationError(str(exc), index, seeds["owner"]) from exc
    return ReplicationRecord(
        int(index), seeds, float(pos), float(neg), float(r_wm), float(r_plain),
        None if wpos is None else float(wpos), None if wneg is None else float(wneg),
        None if report is None else report.best_rate,
        None if report is None else report.estimated_offset,
    )


@dataclass(frozen=True)
class ReplicationSet:
    """Outcome of ``n`` replications of one scenario and strategy."""

    scenario: Scenario
    strategy: Strategy
    master_seed: int
    records: tuple[ReplicationRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def _col(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def positives(self) -> np.ndarray:
        return self._col("positive")

    @property
    def negatives(self) -> np.ndarray:
        return self._col("negative")

    @property
    def rewards_positive(self) -> np.ndarray:
        return self._col("reward_positive")

    @property
    def rewards_negative(self) -> np.ndarray:
        return self._col("reward_negative")

    @property
    def wrong_positives(self) -> np.ndarray:
        return self._col("wrong_positive")

    @property
    def wrong_negatives(self) -> np.ndarray:
        return self._col("wrong_negative")

    @property
    def has_wrong_key(self) -> bool:
        return bool(self.records) and self.records[0].wrong_positive is not None


def run_replications(scenario: Scenario, strategy: Strategy, n: int, master_seed: int = 0,
                     wrong_key: bool = False, workers: int = 1,
                     owner_seed: int | None = None) -> ReplicationSet:
    """Run ``n`` replications; ``workers > 1`` uses a process pool.

    Every replication derives its seeds from ``(master_seed, index)`` only,
    so the result does not depend on ``workers``. ``owner_seed`` pins the
    owner key for all replications (by default each one draws a fresh key).
    """
    n = int(n)
    if n < 2:
        raise ConfigurationError("at least two replications are required")
    jobs = [(scenario, strategy, i, master_seed, wrong_key, owner_seed) for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_replicate, jobs, chunksize=max(1, n // (4 * workers))))
    else:
        records = [_replicate(job) for job in jobs]
    return ReplicationSet(scenario, strategy, int(master_seed), tuple(records))


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------

def roc_auc(positives, negatives) -> tuple[float, np.ndarray]:
    """Mann-Whitney AUC (ties count half) and ROC points.

    ROC points are ``(false positive rate, true positive rate)`` rows, one
    per distinct threshold from above the maximum score downwards.
    """
    pos = np.asarray(positives, dtype=float).ravel()
    neg = np.asarray(negatives, dtype=float).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both score sets must be non-empty")
    ranks = stats.rankdata(np.concatenate([pos, neg]))
    u = float(np.sum(ranks[:pos.size])) - pos.size * (pos.size + 1) / 2.0
    auc = u / (pos.size * neg.size)
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    tpr = [0.0] + [float(np.mean(pos >= t)) for t in thresholds]
    fpr = [0.0] + [float(np.mean(neg >= t)) for t in thresholds]
    return auc, np.column_stack([fpr, tpr])


def _level_quantiles(level: float) -> tuple[float, float]:
    if not 0.0 <= level < 1.0:
        raise ValueError("confidence level must lie in [0, 1)")
    return 50.0 * (1.0 - level), 50.0 * (1.0 + level)


def bootstrap_ci(samples, statistic: Callable = np.mean, level: float = 0.95,
                 replicates: int = 2000, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval of ``statistic`` over resampled ``samples``.

    ``level=0`` returns the degenerate interval at the point estimate.
    """
    x = np.asarray(samples, dtype=float)
    if x.shape[0] < 2:
        raise ValueError("bootstrap needs at least two samples")
    lo_q, hi_q = _level_quantiles(level)
    est = float(statistic(x))
    if level == 0.0:
        return est, est
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.shape[0], size=(int(replicates), x.shape[0]))
    boot = np.array([statistic(x[i]) for i in idx], dtype=float)
    lo, hi = np.percentile(boot, [lo_q, hi_q])
    return float(lo), float(hi)


def two_sample_ci(a, b, statistic: Callable, level: float = 0.95, replicates: int = 2000,
                  seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap of ``statistic(a, b)`` resampling each arm on its own."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("bootstrap needs at least two samples per arm")
    lo_q, hi_q = _level_quantiles(level)
    est = float(statistic(a, b))
    if level == 0.0:
        return est, est
    rng = np.random.default_rng(seed)
    ia = rng.integers(0, a.shape[0], size=(int(replicates), a.shape[0]))
    ib = rng.integers(0, b.shape[0], size=(int(replicates), b.shape[0]))
    boot = np.array([statistic(a[i], b[j]) for i, j in zip(ia, ib)], dtype=float)
    lo, hi = np.percentile(boot, [lo_q, hi_q])
    return float(lo), float(hi)


def auc_ci(positives, negatives, level: float = 0.95, replicates: int = 1000,
           seed: int = 0) -> tuple[float, float]:
    """Bootstrap interval of the AUC over replication scores."""
    return two_sample_ci(positives, negatives, lambda p, q: roc_auc(p, q)[0], level,
                         replicates, seed)


def _mean_diff(a, b):
    return float(np.mean(a) - np.mean(b))


def _summary(x: np.ndarray) -> dict:
    q = np.quantile(x, [0.05, 0.25, 0.5, 0.75, 0.95])
    return {"mean": float(np.mean(x)), "std": float(np.std(x, ddof=1)),
            "quantiles": dict(zip(("q05", "q25", "q50", "q75", "q95"), map(float, q)))}


@dataclass(frozen=True)
class MetricReport:
    """Detectability, anonymity and reward metrics of one replication set.

    Intervals are percentile bootstraps over replication scores or rewards,
    each arm resampled independently.
    """

    n: int
    auc: float
    auc_ci: tuple[float, float]
    roc_points: np.ndarray = field(repr=False)
    wrong_key_auc: float | None
    anonymity: float | None
    reward_positive: dict
    reward_negative: dict
    reward_difference: float
    reward_difference_ci: tuple[float, float]
    ci_level: float
    ci_replicates: int
    ci_method: str = "percentile bootstrap over replication scores, arms resampled separately"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roc_points"] = self.roc_points.tolist()
        d["auc_ci"] = list(self.auc_ci)
        d["reward_difference_ci"] = list(self.reward_difference_ci)
        return d


def evaluate(repset: ReplicationSet, level: float = 0.95, replicates: int = 1000,
             seed: int = 0) -> MetricReport:
    """All metrics of a replication set."""
    pos, neg = repset.positives, repset.negatives
    auc, points = roc_auc(pos, neg)
    wauc = anon = None
    if repset.has_wrong_key:
        wauc = roc_auc(repset.wrong_positives, repset.wrong_negatives)[0]
        anon = 1.0 - wauc
    rp, rn = repset.rewards_positive, repset.rewards_negative
    return MetricReport(
        len(repset), auc, auc_ci(pos, neg, level, replicates, seed), points, wauc, anon,
        _summary(rp), _summary(rn), _mean_diff(rp, rn),
        two_sample_ci(rp, rn, _mean_diff, level, replicates, seed), level, int(replicates),
    )


def anonymity(scenario: Scenario, strategy: Strategy, n: int, master_seed: int = 0,
              workers: int = 1) -> float:
    """``1 - AUC`` with an independently seeded wrong key (same band).

    The wrong key scores both the watermarked and the plain glimpses.
    """
    rs = run_replications(scenario, strategy, n, master_seed, wrong_key=True, workers=workers)
    return 1.0 - roc_auc(rs.wrong_positives, rs.wrong_negatives)[0]


def reward_preservation(scenario: Scenario, strategy: Strategy, n: int, master_seed: int = 0,
                        level: float = 0.95, replicates: int = 2000, workers: int = 1) -> dict:
    """Per-arm episode reward summaries and a CI of the mean difference."""
    rs = run_replications(scenario, strategy, n, master_seed, workers=workers)
    rp, rn = rs.rewards_positive, rs.rewards_negative
    return {
        "watermarked": _summary(rp),
        "plain": _summary(rn),
        "difference": _mean_diff(rp, rn),
        "difference_ci": two_sample_ci(rp, rn, _mean_diff, level, replicates, master_seed),
        "level": level,
        "replicates": int(replicates),
    }


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    value: Any
    auc: float
    ci_low: float
    ci_high: float
    mean_reward: float
    reward_ci_low: float
    reward_ci_high: float


def _apply_axis(scenario: Scenario, axis: str, value) -> Scenario:
    s = scenario.sensor
    if axis == "length":
        return replace(scenario, steps=int(value))
    if axis == "offset":
        # Fraction of the episode duration.
        return replace(scenario, sensor=replace(s, offset=float(value) * scenario.duration))
    if axis == "jitter":
        return replace(scenario, sensor=replace(s, jitter=float(value)))
    if axis == "drop":
        return replace(scenario, sensor=replace(s, drop_fraction=float(value), drop_count=0))
    if axis == "projection":
        ang = (float(value), float(value)) if np.isscalar(value) else tuple(map(float, value))
        return replace(scenario, sensor=replace(s, projection=ang))
    if axis == "adversary_strength":
        base = scenario.attack or AttackSpec("additive")
        return replace(scenario, attack=replace(base, strength=float(value)))
    if axis == "bandstop_order":
        base = scenario.attack if scenario.attack and scenario.attack.kind == "bandstop" \
            else AttackSpec("bandstop")
        return replace(scenario, attack=replace(base, order=int(value)))
    raise ConfigurationError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")


def sweep(axis: str, values: Sequence, scenario: Scenario, strategy: Strategy, n: int,
          master_seed: int = 0, level: float = 0.95, replicates: int = 1000,
          workers: int = 1) -> list[SweepRow]:
    """One replication set per value; all values share the same seeds.

    ``offset`` values are fractions of the episode duration; ``projection``
    values are angles in degrees applied about both axes (or explicit
    pairs).
    """
    if len(values) == 0:
        raise ConfigurationError("a sweep needs at least one value")
    rows = []
    for v in values:
        rs = run_replications(_apply_axis(scenario, axis, v), strategy, n, master_seed,
                              workers=workers)
        auc = roc_auc(rs.positives, rs.negatives)[0]
        lo, hi = auc_ci(rs.positives, rs.negatives, level, replicates, master_seed)
        rp = rs.rewards_positive
        rlo, rhi = bootstrap_ci(rp, np.mean, level, replicates, master_seed)
        rows.append(SweepRow(v, auc, lo, hi, float(np.mean(rp)), rlo, rhi))
    return rows


def sweep_csv(axis: str, rows: Sequence[SweepRow]) -> str:
    """CSV table ``value,auc,ci_low,ci_high,mean_reward,reward_ci_low,reward_ci_high``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([axis, "auc", "ci_low", "ci_high", "mean_reward", "reward_ci_low",
                "reward_ci_high"])
    for r in rows:
        v = r.value if np.isscalar(r.value) else " ".join(map(str, r.value))
        w.writerow([v] + [repr(float(x)) for x in (r.auc, r.ci_low, r.ci_high, r.mean_reward,
                                                    r.reward_ci_low, r.reward_ci_high)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# Signal-level attack studies
# --------------------------------------------------------------------------

def _band_mask(n: int, band) -> np.ndarray:
    f = np.fft.rfftfreq(n)
    return (f >= band[0]) & (f <= band[1])


def _band_power_fraction(x: np.ndarray, band) -> float:
    spec = np.abs(np.fft.rfft(x, axis=0)) ** 2
    return float(np.sum(spec[_band_mask(x.shape[0], band)]) / np.sum(spec))


def bandstop_tradeoff(orders: Sequence[int], fraction: float = 0.6, n: int = 4000,
                      seed: int = 0, band=(1.2, 2.49), policy_rate: float = 20.0,
                      rate_bounds=(19.0, 21.0), sensor_noise: float = 0.3) -> dict:
    """Band-stop attack on a synthetic Gaussian policy, ground-truth action glimpses.

    The action stream is an out-of-band mean (white noise with the
    watermark's digital band removed) plus a CoNoCo watermark, mixed so that
    ``fraction`` of its power lies in that band. The adversary band-stops
    the band at the nominal policy rate. Returned fields: the relative MSE
    of the ideal (brick-wall) band-stop and, per Butterworth order, the
    relative MSE and the detection score on noisy glimpses of the filtered
    actions.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigurationError("in-band power fraction must lie in (0, 1)")
    bounds = PolicyRateBounds(*rate_bounds)
    key = SecretKey(splitmix64(seed ^ 0xB5), band)
    dband = digital_band(key, bounds)
    w = generate_watermark(key, n, 1, bounds).samples
    mean = WGNNoise(splitmix64(seed ^ 0xB6)).sequence(n, 1)
    mean = ideal_bandstop(mean, dband)
    # Solve for the watermark scale that puts ``fraction`` of the power in band.
    mask = _band_mask(n, dband)
    sw = np.fft.rfft(w, axis=0)
    sm = np.fft.rfft(mean, axis=0)
    p_in = float(np.sum(np.abs(sw[mask]) ** 2))
    p_mean = float(np.sum(np.abs(sm) ** 2))
    p_w_out = float(np.sum(np.abs(sw[~mask]) ** 2))
    cross_out = float(np.sum(2 * np.real(np.conj(sm[~mask]) * sw[~mask])))
    # fraction * (p_mean + s cross + s^2 (p_in + p_w_out)) = s^2 p_in
    qa = p_in - fraction * (p_in + p_w_out)
    qb = -fraction * cross_out
    qc = -fraction * p_mean
    scale = (-qb + math.sqrt(qb * qb - 4 * qa * qc)) / (2 * qa)
    actions = mean + scale * w
    energy = float(np.sum(actions ** 2))
    ideal = ideal_bandstop(actions, dband)
    rows = []
    attack_band = (band[0] / policy_rate, band[1] / policy_rate)
    noise = sensor_noise * np.std(actions) * WGNNoise(splitmix64(seed ^ 0xB7)).sequence(n, 1)
    for order in orders:
        filtered = attack_bandstop(actions, attack_band, int(order))
        report = detect(filtered + noise, policy_rate, key, bounds)
        rows.append({"order": int(order),
                     "relative_mse": float(np.sum((filtered - actions) ** 2) / energy),
                     "score": report.score})
    return {
        "in_band_fraction": _band_power_fraction(actions, dband),
        "ideal_relative_mse": float(np.sum((ideal - actions) ** 2) / energy),
        "unattacked_score": detect(actions + noise, policy_rate, key, bounds).score,
        "orders": rows,
    }


def jamming_additivity(pairs: int = 20, n: int = 100_000, seed: int = 0, band=(1.2, 2.49),
                       policy_rate: float = 20.0, rate_bounds=(19.0, 21.0),
                       win_len: int = 1024) -> list[dict]:
    """In-band power of ``W``, ``J`` and ``W + J`` for independent key pairs.

    Band power integrates the Welch PSD over the secret band at the nominal
    policy rate.
    """
    bounds = PolicyRateBounds(*rate_bounds)
    out = []
    for i in range(pairs):
        ks = splitmix64(splitmix64(seed) ^ splitmix64(2 * i + 1))
        kj = splitmix64(splitmix64(seed) ^ splitmix64(2 * i + 2))
        w = generate_watermark(SecretKey(ks, band), n, 1, bounds).samples[:, 0]
        j = generate_watermark(SecretKey(kj, band), n, 1, bounds).samples[:, 0]

        def power(x):
            est = welch_spectra(x, x, policy_rate, win_len)
            sel = (est.frequencies >= band[0]) & (est.frequencies <= band[1])
            df = est.frequencies[1] - est.frequencies[0]
            return float(np.sum(est.sxx[sel]) * df)

        pw, pj, pwj = power(w), power(j), power(w + j)
        out.append({"pair": i, "owner_seed": ks, "jam_seed": kj, "power_w": pw, "power_j": pj,
                    "power_sum": pw + pj, "power_combined": pwj,
                    "relative_error": abs(pwj - (pw + pj)) / (pw + pj)})
    return out
