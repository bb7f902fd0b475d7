"""Synthetic robots: Gaussian policies on linear plants, glimpse sensors, adversaries.

Everything a detector may see leaves this module as a :class:`GlimpseSequence`.
:class:`EpisodeTrace` holds actions and plant states and is deliberately not
accepted by any detector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import linalg
from scipy import signal as sps

from .errors import BandEdgeError, ConfigurationError, InsufficientDataError
from .sigproc import GaussianStream, design_bandstop, splitmix64
from .watermark import (ExplorationScaleSchedule, PolicyRateBounds, SecretKey,
                        WatermarkSequence, derive_dim_seed, digital_band,
                        generate_watermark, inject_action)

__all__ = [
    "LinearPlant",
    "GaussianPolicy",
    "GlimpseSensor",
    "GlimpseSequence",
    "EpisodeTrace",
    "PointMassTask",
    "DoubleIntegratorTask",
    "make_task",
    "WGNNoise",
    "SequenceNoise",
    "TournamentNoise",
    "AdditiveAttack",
    "BandStopAttack",
    "JamAttack",
    "run_episode",
    "sense",
    "attack_additive",
    "attack_bandstop",
    "attack_jam",
    "ideal_bandstop",
]


# --------------------------------------------------------------------------
# Plant
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearPlant:
    """Discrete-time plant ``x+ = A x + B u + w``, output ``y = C x``.

    ``dt`` is the plant step in seconds and ``process_noise`` the standard
    deviation of the i.i.d. state disturbance ``w``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dt: float
    process_noise: float = 0.0

    def __post_init__(self):
        A, B, C = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (self.A, self.B, self.C))
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n:
            raise ConfigurationError(
                f"inconsistent plant shapes A{A.shape} B{B.shape} C{C.shape}"
            )
        radius = np.max(np.abs(np.linalg.eigvals(A)))
        if radius > 1.0 + 1e-9:
            raise ConfigurationError(f"plant is unstable (spectral radius {radius:.6g})")
        if self.dt <= 0:
            raise ConfigurationError("plant step must be positive")
        for name, m in (("A", A), ("B", B), ("C", C)):
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @classmethod
    def from_continuous(cls, A, B, C, dt: float, process_noise: float = 0.0) -> "LinearPlant":
        """Exact zero-order-hold discretization of ``x' = A x + B u``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        n, m = B.shape
        aug = np.zeros((n + m, n + m))
        aug[:n, :n] = A
        aug[:n, n:] = B
        ed = linalg.expm(aug * dt)
        return cls(ed[:n, :n], ed[:n, n:], C, dt, process_noise)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    def transfer_function(self, freqs_hz, output: int, input_: int) -> np.ndarray:
        """Discrete transfer function from one input to one output at ``freqs_hz``."""
        z = np.exp(2j * np.pi * np.asarray(freqs_hz, dtype=float) * self.dt)
        eye = np.eye(self.n_states)
        out = np.empty(z.shape, dtype=complex)
        for i, zi in enumerate(np.ravel(z)):
            out.flat[i] = (self.C[output] @ np.linalg.solve(zi * eye - self.A, self.B[:, input_]))
        return out


# --------------------------------------------------------------------------
# Tasks
# --------------------------------------------------------------------------

@dataclass
class PointMassTask:
    """T1: velocity-commanded planar point mass reaching random goals.

    The commanded velocity is tracked through a first-order lag of
    ``tau`` seconds. The mean rule is proportional to the goal offset; a new
    goal is drawn on arrival. Reward is minus the distance to the goal.
    State is ``(px, py, vx, vy)``; the plant outputs velocity.
    """

    gain: float = 1.0
    tau: float = 0.05
    goal_radius: float = 2.0
    arrival: float = 0.1
    name: str = "T1"
    action_dim: int = 2

    def make_plant(self, dt: float, process_noise: float = 0.0) -> LinearPlant:
        a = np.zeros((4, 4))
        a[0, 2] = a[1, 3] = 1.0
        a[2, 2] = a[3, 3] = -1.0 / self.tau
        b = np.zeros((4, 2))
        b[2, 0] = b[3, 1] = 1.0 / self.tau
        c = np.zeros((2, 4))
        c[0, 2] = c[1, 3] = 1.0
        return LinearPlant.from_continuous(a, b, c, dt, process_noise)

    def _goal(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-self.goal_radius, self.goal_radius, size=2)

    def reset(self, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
        return np.zeros(4), {"goal": self._goal(rng), "arrivals": 0}

    def mean(self, x: np.ndarray, ctx: dict) -> np.ndarray:
        return self.gain * (ctx["goal"] - x[:2])

    def reward(self, x: np.ndarray, action: np.ndarray, ctx: dict) -> float:
        return -float(np.linalg.norm(ctx["goal"] - x[:2]))

    def update(self, x: np.ndarray, ctx: dict, rng: np.random.Generator) -> None:
        if np.linalg.norm(ctx["goal"] - x[:2]) < self.arrival:
            ctx["goal"] = self._goal(rng)
            ctx["arrivals"] += 1


@dataclass
class DoubleIntegratorTask:
    """T2: force-commanded damped double integrator regulated to the origin.

    ``p'' = (u - damping * p') / mass`` per axis with linear state feedback
    ``u = -kp p - kd p'``. The start position is drawn from
    ``N(0, init_std**2)``. Reward is ``-(|x|^2 + 0.01 |u|^2)``.
    """

    mass: float = 1.0
    damping: float = 0.5
    kp: float = 1.0
    kd: float = 1.0
    init_std: float = 1.0
    name: str = "T2"
    action_dim: int = 2

    def make_plant(self, dt: float, process_noise: float = 0.0) -> LinearPlant:
        a = np.zeros((4, 4))
        a[0, 2] = a[1, 3] = 1.0
        a[2, 2] = a[3, 3] = -self.damping / self.mass
        b = np.zeros((4, 2))
        b[2, 0] = b[3, 1] = 1.0 / self.mass
        c = np.zeros((2, 4))
        c[0, 2] = c[1, 3] = 1.0
        return LinearPlant.from_continuous(a, b, c, dt, process_noise)

    def reset(self, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
        x = np.zeros(4)
        x[:2] = rng.normal(0.0, self.init_std, size=2)
        return x, {}

    def mean(self, x: np.ndarray, ctx: dict) -> np.ndarray:
        return -self.kp * x[:2] - self.kd * x[2:]

    def reward(self, x: np.ndarray, action: np.ndarray, ctx: dict) -> float:
        return -float(x @ x + 0.01 * (action @ action))

    def update(self, x: np.ndarray, ctx: dict, rng: np.random.Generator) -> None:
        pass


def make_task(name: str, **params):
    if name == "T1":
        return PointMassTask(**params)
    if name == "T2":
        return DoubleIntegratorTask(**params)
    raise ConfigurationError(f"unknown task {name!r}")


# --------------------------------------------------------------------------
# Policy and noise sources
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianPolicy:
    """Task mean rule plus scaled exploration noise, queried at ``rate`` Hz."""

    rate: float = 20.0
    schedule: ExplorationScaleSchedule = field(default_factory=ExplorationScaleSchedule)
    saturation: float | None = None


@dataclass(frozen=True)
class WGNNoise:
    """Plain white Gaussian exploration, one seeded stream per dimension."""

    seed: int

    def sequence(self, steps: int, d: int) -> np.ndarray:
        cols = [GaussianStream(derive_dim_seed(self.seed, k + 1)).draw(steps) for k in range(d)]
        return np.stack(cols, axis=1) if cols else np.zeros((steps, 0))


@dataclass(frozen=True)
class SequenceNoise:
    """Exploration read from a precomputed watermark (CoNoCo or a baseline)."""

    watermark: WatermarkSequence

    def sequence(self, steps: int, d: int) -> np.ndarray:
        w = self.watermark.samples
        if w.shape[0] < steps or w.shape[1] < d:
            raise ConfigurationError(
                f"noise sequence {w.shape} does not cover {steps} steps x {d} dims"
            )
        return w[:steps, :d]


@dataclass(frozen=True)
class TournamentNoise:
    """Marker for tournament sampling; the key lives in :mod:`baselines`."""

    key: Any
    seed: int


# --------------------------------------------------------------------------
# Online attacks (applied to each action before execution)
# --------------------------------------------------------------------------

@dataclass
class AdditiveAttack:
    """Adds i.i.d. ``N(0, sigma**2)`` to every action, then clips."""

    sigma: float
    clip: float | None = None
    seed: int = 0

    def start(self, steps: int, d: int) -> None:
        self._noise = self.sigma * WGNNoise(self.seed).sequence(steps, d)

    def apply(self, k: int, a: np.ndarray) -> np.ndarray:
        a = a + self._noise[k]
        return a if self.clip is None else np.clip(a, -self.clip, self.clip)


@dataclass
class BandStopAttack:
    """Causal Butterworth band-stop on the action stream (digital band)."""

    band: tuple[float, float]
    order: int

    def start(self, steps: int, d: int) -> None:
        self._sos = design_bandstop(self.order, *self.band).sections
        self._zi = np.zeros((self._sos.shape[0], 2, d))

    def apply(self, k: int, a: np.ndarray) -> np.ndarray:
        y, self._zi = sps.sosfilt(self._sos, a[None, :], axis=0, zi=self._zi)
        return y[0]


@dataclass
class JamAttack:
    """Adds ``scale * J`` with ``J`` a colored-noise sequence from a jam key."""

    key: SecretKey
    bounds: PolicyRateBounds
    scale: float = 1.0

    def start(self, steps: int, d: int) -> None:
        self._jam = self.scale * generate_watermark(self.key, steps, d, self.bounds).samples

    def apply(self, k: int, a: np.ndarray) -> np.ndarray:
        return a + self._jam[k]


# --------------------------------------------------------------------------
# Episode simulation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeTrace:
    """Everything that happened in one episode. Never handed to detectors."""

    actions: np.ndarray
    means: np.ndarray
    scales: np.ndarray
    states: np.ndarray
    rewards: np.ndarray
    dt: float
    policy_rate: float
    meta: dict = field(default_factory=dict)

    @property
    def duration(self) -> float:
        return self.actions.shape[0] / self.policy_rate

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.rewards))


def _substeps(plant: LinearPlant, rate: float) -> int:
    period = 1.0 / rate
    sub = int(round(period / plant.dt))
    if sub < 1 or abs(sub * plant.dt - period) > 1e-9:
        raise ConfigurationError(
            f"plant step {plant.dt} s does not divide the policy period {period} s"
        )
    return sub


def run_episode(policy: GaussianPolicy, plant: LinearPlant, noise, task, steps: int,
                seed: int = 0, attack=None) -> EpisodeTrace:
    """Simulate ``steps`` policy calls with zero-order hold on the plant.

    ``noise`` is a :class:`WGNNoise`, :class:`SequenceNoise` or
    :class:`TournamentNoise`; ``None`` means no exploration. ``seed`` drives
    task randomness (start state, goals) and process noise. ``attack``
    optionally rewrites each action before execution.
    """
    steps = int(steps)
    sub = _substeps(plant, policy.rate)
    rng = np.random.default_rng(splitmix64(seed))
    d = task.action_dim
    if plant.n_inputs != d:
        raise ConfigurationError(f"plant takes {plant.n_inputs} inputs, task acts in {d}")

    scales = policy.schedule.sample(steps, d)
    if noise is None:
        eps = np.zeros((steps, d))
    elif isinstance(noise, TournamentNoise):
        from .baselines import tournament_act  # baselines imports this module

        eps = None
        t_rng = np.random.default_rng(splitmix64(noise.seed))
    else:
        eps = noise.sequence(steps, d)
    if attack is not None:
        attack.start(steps, d)

    A, B, C = plant.A, plant.B, plant.C
    n = plant.n_states
    # Powers of A and accumulated input gains for every substep of one hold.
    a_pow = np.empty((sub, n, n))
    b_acc = np.empty((sub, n, d))
    ap, ba = np.eye(n), np.zeros((n, d))
    for j in range(sub):
        ba = A @ ba + B
        ap = A @ ap
        a_pow[j], b_acc[j] = ap, ba
    pn = plant.process_noise

    x, ctx = task.reset(rng)
    states = np.empty((steps * sub + 1, n))
    states[0] = x
    actions = np.empty((steps, d))
    means = np.empty((steps, d))
    rewards = np.empty(steps)
    for k in range(steps):
        mu = task.mean(x, ctx)
        means[k] = mu
        if eps is None:
            context = float(np.linalg.norm(C @ x))
            a = tournament_act(noise.key, mu, scales[k], context, t_rng)
            if policy.saturation is not None:
                a = np.clip(a, -policy.saturation, policy.saturation)
        else:
            a = inject_action(mu, scales[k], eps[k], policy.saturation)
        if attack is not None:
            a = attack.apply(k, a)
        actions[k] = a
        if pn > 0:
            for j in range(sub):
                x = A @ x + B @ a + pn * rng.standard_normal(n)
                states[k * sub + j + 1] = x
        else:
            block = a_pow @ x + b_acc @ a
            states[k * sub + 1:(k + 1) * sub + 1] = block
            x = block[-1]
        rewards[k] = task.reward(x, a, ctx)
        task.update(x, ctx, rng)
    return EpisodeTrace(actions, means, scales, states, rewards, plant.dt, policy.rate,
                        {"task": task.name, "steps": steps})


# --------------------------------------------------------------------------
# Glimpses
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GlimpseSensor:
    """Remote sampling of plant outputs with the usual real-world alterations.

    ``jitter`` is the relative standard deviation of the sampling interval,
    ``offset`` the recording start in seconds, ``projection`` an (x, y)
    rotation in degrees of the planar signal lifted to 3-D. Set either
    ``drop_count`` or ``drop_fraction``.
    """

    rate: float = 100.0
    noise: float = 0.0
    jitter: float = 0.0
    drop_count: int = 0
    drop_fraction: float = 0.0
    offset: float = 0.0
    projection: tuple[float, float] | None = None
    channels: tuple[int, ...] | None = None
    n_glimpses: int | None = None

    def __post_init__(self):
        if self.rate <= 0:
            raise ConfigurationError("glimpse rate must be positive")
        if self.jitter < 0 or self.noise < 0 or self.offset < 0:
            raise ConfigurationError("jitter, noise and offset must be non-negative")
        if not 0.0 <= self.drop_fraction < 1.0:
            raise ConfigurationError("drop_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class GlimpseSequence:
    """Remote observations: the only input a detector receives.

    ``samples`` is ``N x D``; ``timestamps`` are the capture times in seconds.
    ``provenance`` is bookkeeping for files and reports and carries no
    signal.
    """

    samples: np.ndarray
    rate: float
    timestamps: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        t = np.asarray(self.timestamps, dtype=float)
        if t.shape[0] != s.shape[0]:
            raise ConfigurationError("one timestamp per glimpse is required")
        if t.shape[0] > 1 and np.any(np.diff(t) <= 0):
            raise ConfigurationError("glimpse timestamps must be strictly increasing")
        s.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "timestamps", t)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def dims(self) -> int:
        return self.samples.shape[1]


def _rotation(x_deg: float, y_deg: float) -> np.ndarray:
    ax, ay = math.radians(x_deg), math.radians(y_deg)
    rx = np.array([[1, 0, 0], [0, math.cos(ax), -math.sin(ax)], [0, math.sin(ax), math.cos(ax)]])
    ry = np.array([[math.cos(ay), 0, math.sin(ay)], [0, 1, 0], [-math.sin(ay), 0, math.cos(ay)]])
    return ry @ rx


def sense(trace: EpisodeTrace, plant: LinearPlant, sensor: GlimpseSensor, seed: int = 0,
          provenance: dict | None = None) -> GlimpseSequence:
    """Sample ``C x(t)`` at the sensor's (jittered) capture times.

    Outputs are interpolated linearly between plant steps, optionally
    rotated and projected, corrupted with white noise of std
    ``sensor.noise``, and finally thinned by the configured drops.
    """
    rng = np.random.default_rng(splitmix64(seed ^ 0x5E115E))
    t_end = (trace.states.shape[0] - 1) * trace.dt
    if sensor.offset >= t_end:
        raise InsufficientDataError(
            f"glimpse offset {sensor.offset} s is beyond the episode end {t_end} s"
        )
    period = 1.0 / sensor.rate
    n = sensor.n_glimpses
    if n is None:
        n = int(math.floor((t_end - sensor.offset) * sensor.rate + 1e-9)) + 1
    if sensor.jitter > 0:
        gaps = rng.normal(period, sensor.jitter * period, size=n - 1)
        gaps = np.maximum(gaps, 0.1 * period)
        times = sensor.offset + np.concatenate([[0.0], np.cumsum(gaps)])
    else:
        times = sensor.offset + period * np.arange(n)
    times = times[times <= t_end + 1e-9]
    if times.shape[0] == 0:
        raise InsufficientDataError("no glimpse falls inside the episode")

    chan = list(sensor.channels) if sensor.channels is not None else list(range(plant.n_outputs))
    outputs = trace.states @ plant.C[chan].T
    grid = trace.dt * np.arange(trace.states.shape[0])
    y = np.stack([np.interp(times, grid, outputs[:, j]) for j in range(len(chan))], axis=1)

    if sensor.projection is not None:
        if y.shape[1] != 2:
            raise ConfigurationError("projection needs exactly two planar channels")
        lifted = np.column_stack([y, np.zeros(y.shape[0])])
        y = (lifted @ _rotation(*sensor.projection).T)[:, :2]
    if sensor.noise > 0:
        y = y + rng.normal(0.0, sensor.noise, size=y.shape)

    n_drop = sensor.drop_count or int(round(sensor.drop_fraction * y.shape[0]))
    if n_drop:
        if n_drop >= y.shape[0]:
            raise InsufficientDataError("cannot drop every glimpse")
        keep = np.ones(y.shape[0], dtype=bool)
        keep[rng.choice(y.shape[0], size=n_drop, replace=False)] = False
        y, times = y[keep], times[keep]
    return GlimpseSequence(y, sensor.rate, times, dict(provenance or {}))


# --------------------------------------------------------------------------
# Offline attacks on action arrays
# --------------------------------------------------------------------------

def attack_additive(actions, sigma: float, clip: float | None = None, seed: int = 0) -> np.ndarray:
    """``clip(a + eta)`` with ``eta ~ N(0, sigma**2)`` i.i.d. per entry."""
    if sigma < 0:
        raise ValueError("attack strength must be non-negative")
    a = np.asarray(actions, dtype=float)
    a2 = a.reshape(a.shape[0], -1)
    out = a2 + sigma * WGNNoise(seed).sequence(a2.shape[0], a2.shape[1])
    if clip is not None:
        out = np.clip(out, -clip, clip)
    return out.reshape(a.shape)


def attack_bandstop(actions, band, order: int) -> np.ndarray:
    """Causal Butterworth band-stop over ``band`` (cycles/sample) per dimension."""
    return sps.sosfilt(design_bandstop(order, *band).sections,
                       np.asarray(actions, dtype=float), axis=0)


def ideal_bandstop(actions, band) -> np.ndarray:
    """Brick-wall band-stop: zero every DFT bin with ``band[0] <= f <= band[1]``."""
    lo, hi = band
    if not 0.0 <= lo < hi <= 0.5:
        raise BandEdgeError(f"invalid digital band {band}")
    a = np.asarray(actions, dtype=float)
    spec = np.fft.rfft(a, axis=0)
    f = np.fft.rfftfreq(a.shape[0])
    spec[(f >= lo) & (f <= hi)] = 0.0
    return np.fft.irfft(spec, a.shape[0], axis=0)


def attack_jam(actions, scales, jam_key: SecretKey, bounds: PolicyRateBounds,
               owner_seed: int | None = None) -> np.ndarray:
    """Add ``scales * J`` where ``J`` is colored noise from ``jam_key``."""
    if owner_seed is not None and (int(owner_seed) & ((1 << 64) - 1)) == jam_key.seed:
        raise ConfigurationError("the jamming key must not reuse the owner seed")
    a = np.asarray(actions, dtype=float)
    a2 = a.reshape(a.shape[0], -1)
    digital_band(jam_key, bounds)
    jam = generate_watermark(jam_key, a2.shape[0], a2.shape[1], bounds).samples
    s = np.asarray(scales, dtype=float)
    if s.ndim == 1 and s.shape[0] == a2.shape[0]:
        s = s[:, None]
    return (a2 + s * jam).reshape(a.shape)
