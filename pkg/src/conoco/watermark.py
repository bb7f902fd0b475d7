"""Watermark identity, colored-noise generation, and action injection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BandEdgeError, ConfigurationError, InsufficientDataError
from .sigproc import (MASK64, apply_filter, design_bandpass, gaussian_stream,
                      splitmix64)

__all__ = [
    "SecretKey",
    "PolicyRateBounds",
    "WatermarkSequence",
    "ExplorationScaleSchedule",
    "FILTER_ORDER",
    "derive_dim_seed",
    "digital_band",
    "generate_watermark",
    "inject_action",
    "smooth_scale",
]

FILTER_ORDER = 4
_GOLDEN = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class SecretKey:
    """Owner seed plus the secret band in Hz."""

    seed: int
    band: tuple[float, float]

    def __post_init__(self):
        lo, hi = (float(v) for v in self.band)
        if not 0.0 < lo < hi:
            raise BandEdgeError(f"secret band must satisfy 0 < f_min < f_max, got {self.band}")
        object.__setattr__(self, "band", (lo, hi))
        object.__setattr__(self, "seed", int(self.seed) & MASK64)

    def with_seed(self, seed: int) -> "SecretKey":
        return SecretKey(seed, self.band)


@dataclass(frozen=True)
class PolicyRateBounds:
    """Known bounds on the (unknown) policy execution rate, in Hz."""

    f_lb: float
    f_ub: float

    def __post_init__(self):
        if not 0.0 < self.f_lb <= self.f_ub:
            raise ConfigurationError(
                f"rate bounds must satisfy 0 < f_lb <= f_ub, got [{self.f_lb}, {self.f_ub}]"
            )

    def contains(self, rate: float) -> bool:
        return self.f_lb - 1e-9 <= rate <= self.f_ub + 1e-9


def digital_band(key: SecretKey, bounds: PolicyRateBounds) -> tuple[float, float]:
    """Band in cycles/sample that covers ``key.band`` at any admissible rate."""
    lo = key.band[0] / bounds.f_ub
    hi = key.band[1] / bounds.f_lb
    if not 0.0 < lo < hi < 0.5:
        raise BandEdgeError(
            f"band {key.band} Hz is not representable at policy rates "
            f"[{bounds.f_lb}, {bounds.f_ub}] Hz (digital edges {lo:.4g}, {hi:.4g})"
        )
    return lo, hi


def derive_dim_seed(seed: int, d: int) -> int:
    """Seed of the white-noise stream for dimension ``d`` (1-based)."""
    if d < 1:
        raise ValueError("dimension index starts at 1")
    return splitmix64((int(seed) & MASK64) ^ ((d * _GOLDEN) & MASK64))


@dataclass(frozen=True)
class WatermarkSequence:
    """``N x D`` unit-variance watermark samples at policy rate."""

    samples: np.ndarray
    key: SecretKey | None = None
    rate_bounds: PolicyRateBounds | None = None
    kind: str = "conoco"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dims(self) -> int:
        return self.samples.shape[1]


def generate_watermark(key: SecretKey, n: int, d: int, bounds: PolicyRateBounds,
                       order: int = FILTER_ORDER) -> WatermarkSequence:
    """Colored Gaussian watermark: band-passed white noise, one stream per dim.

    Each column is white noise from :func:`derive_dim_seed`, filtered by a
    Butterworth band-pass spanning ``digital_band(key, bounds)`` and divided
    by its population standard deviation, transient included.
    """
    n, d = int(n), int(d)
    if d < 1:
        raise ValueError("at least one dimension is required")
    if n <= 10 * order:
        raise InsufficientDataError(
            f"watermark length {n} does not exceed the filter settling length {10 * order}"
        )
    lo, hi = digital_band(key, bounds)
    bpf = design_bandpass(order, lo, hi)
    out = np.empty((n, d))
    for dim in range(1, d + 1):
        raw = apply_filter(bpf, gaussian_stream(derive_dim_seed(key.seed, dim), n))
        out[:, dim - 1] = raw / np.std(raw)
    return WatermarkSequence(out, key, bounds)


def inject_action(mean, scale, w, saturation: float | None = None) -> np.ndarray:
    """Watermarked action ``mean + scale * w``, optionally clipped last."""
    a = np.asarray(mean, dtype=float) + np.asarray(scale, dtype=float) * np.asarray(w, dtype=float)
    if saturation is not None:
        a = np.clip(a, -saturation, saturation)
    return a


def smooth_scale(values, window: int) -> np.ndarray:
    """Trailing moving average over the last ``window`` scale values.

    The first ``window - 1`` outputs average the values seen so far.
    """
    window = int(window)
    if window < 1:
        raise ValueError("smoothing window must be >= 1")
    v = np.asarray(values, dtype=float)
    if window == 1 or v.shape[0] == 0:
        return v.copy()
    c = np.cumsum(v, axis=0)
    out = np.empty_like(v)
    head = min(window, v.shape[0])
    counts = np.arange(1, head + 1).reshape((-1,) + (1,) * (v.ndim - 1))
    out[:head] = c[:head] / counts
    out[window:] = (c[window:] - c[:-window]) / window
    return out


@dataclass(frozen=True)
class ExplorationScaleSchedule:
    """Per-step exploration scale.

    Modes: ``constant`` (``value``), ``sinusoidal`` (``value`` plus an
    oscillation of ``amplitude`` with ``period`` steps), ``step`` (``value``
    until ``step_at``, then ``step_to``) and ``custom`` (explicit
    ``values``). ``smoothing`` applies :func:`smooth_scale`.
    """

    mode: str = "constant"
    value: float = 1.0
    amplitude: float = 0.0
    period: float = 100.0
    step_at: int = 0
    step_to: float = 1.0
    values: tuple = field(default_factory=tuple)
    smoothing: int = 1

    def __post_init__(self):
        if self.mode not in ("constant", "sinusoidal", "step", "custom"):
            raise ConfigurationError(f"unknown schedule mode {self.mode!r}")

    def sample(self, n: int, d: int) -> np.ndarray:
        k = np.arange(n, dtype=float)
        if self.mode == "constant":
            s = np.full(n, float(self.value))
        elif self.mode == "sinusoidal":
            s = self.value + self.amplitude * np.sin(2.0 * np.pi * k / self.period)
        elif self.mode == "step":
            s = np.where(k < self.step_at, float(self.value), float(self.step_to))
        else:
            v = np.asarray(self.values, dtype=float)
            if v.shape[0] < n:
                raise ConfigurationError(f"custom schedule has {v.shape[0]} values, need {n}")
            s = v[:n]
        s = np.broadcast_to(s.reshape(n, -1), (n, d)).astype(float)
        if self.smoothing > 1:
            s = smooth_scale(s, self.smoothing)
        if np.any(s < 0):
            raise ConfigurationError("exploration scale must be non-negative")
        return s
