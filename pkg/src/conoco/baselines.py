"""Comparison watermarks: multi-sine, correlation-based, tournament-based.

Each strategy has a generator (or an action sampler for the tournament) and
a detector that sees glimpses only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detect import glimpse_matrix, search_grid, DetectionConfig
from .errors import ConfigurationError, InsufficientDataError
from .sigproc import (apply_filter, design_highpass, resample_rational,
                      splitmix64)
from .simworld import WGNNoise
from .watermark import (PolicyRateBounds, WatermarkSequence, derive_dim_seed,
                        digital_band, SecretKey)

__all__ = [
    "MultiSineKey",
    "multisine_key",
    "multisine_generate",
    "multisine_detect",
    "CorrelationKey",
    "correlation_generate",
    "correlation_detect",
    "TournamentKey",
    "tournament_params",
    "tournament_act",
    "tournament_detect",
]


def _grid(bounds: PolicyRateBounds, grid) -> np.ndarray:
    if grid is None:
        return search_grid(bounds, DetectionConfig())
    if isinstance(grid, int):
        return search_grid(bounds, DetectionConfig(grid_points=grid))
    return np.asarray(grid, dtype=float)


# --------------------------------------------------------------------------
# Multi-sine
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiSineKey:
    """Secret tones per dimension.

    ``frequencies[d]`` are digital frequencies (cycles/sample) and
    ``signs[d]`` mark each one as embedded (+1) or as a decoy that must stay
    quiet (-1). The first entry of every dimension is always embedded.
    """

    seed: int
    band: tuple[float, float]
    count: int
    frequencies: tuple[tuple[float, ...], ...]
    signs: tuple[tuple[int, ...], ...]
    phases: tuple[tuple[float, ...], ...]

    @property
    def dims(self) -> int:
        return len(self.frequencies)


def multisine_key(seed: int, band, count: int, dims: int, bounds: PolicyRateBounds,
                  edge_margin: float = 0.05, min_spacing: float = 0.002) -> MultiSineKey:
    """Draw ``count`` distinct tones per dimension inside the digital band."""
    if count < 1:
        raise ConfigurationError("multi-sine needs at least one tone")
    key = SecretKey(seed, band)
    lo, hi = digital_band(key, bounds)
    width = hi - lo
    lo, hi = lo + edge_margin * width, hi - edge_margin * width
    freqs, signs, phases = [], [], []
    for d in range(1, dims + 1):
        rng = np.random.default_rng(derive_dim_seed(key.seed, d))
        f: list[float] = []
        while len(f) < count:
            cand = float(rng.uniform(lo, hi))
            if all(abs(cand - v) >= min_spacing for v in f):
                f.append(cand)
        s = [1] + [int(v) for v in rng.choice([-1, 1], size=count - 1)]
        freqs.append(tuple(f))
        signs.append(tuple(s))
        phases.append(tuple(float(v) for v in rng.uniform(0, 2 * np.pi, size=count)))
    return MultiSineKey(key.seed, key.band, count, tuple(freqs), tuple(signs), tuple(phases))


def multisine_generate(key: MultiSineKey, n: int, d: int,
                       bounds: PolicyRateBounds | None = None) -> WatermarkSequence:
    """Sum of the embedded tones, normalized to unit variance per column."""
    if d > key.dims:
        raise ConfigurationError(f"key covers {key.dims} dimensions, {d} requested")
    k = np.arange(int(n), dtype=float)
    out = np.empty((int(n), d))
    for j in range(d):
        col = np.zeros(int(n))
        for f, s, ph in zip(key.frequencies[j], key.signs[j], key.phases[j]):
            if s > 0:
                col += np.sin(2 * np.pi * f * k + ph)
        out[:, j] = col / np.std(col)
    return WatermarkSequence(out, SecretKey(key.seed, key.band), bounds, kind="multisine")


def multisine_detect(glimpses, f_g: float | None, key: MultiSineKey, bounds: PolicyRateBounds,
                     grid=None) -> float:
    """Signed tone energy over total band energy, maximized over the rate grid.

    Tone energy is the squared DTFT magnitude of the mean-removed glimpse at
    the hypothesized physical frequency; band energy is the one-sided DFT
    energy over the key's band at the same hypothesis, which puts a pure
    tone at ratio 1. The score lies in [-1, 1].
    """
    if f_g is None:
        f_g = glimpses.rate
    g = glimpse_matrix(glimpses)
    n, d = g.shape
    if d > key.dims:
        raise ConfigurationError("glimpses have more dimensions than the key")
    if n < 2:
        raise InsufficientDataError("multi-sine detection needs at least two glimpses")
    g = g - g.mean(axis=0)
    spec = np.abs(np.fft.rfft(g, axis=0)) ** 2
    bins = np.fft.rfftfreq(n, 1.0 / f_g)
    lo, hi = digital_band(SecretKey(key.seed, key.band), bounds)
    t = np.arange(n) / f_g
    best = -np.inf
    for s in _grid(bounds, grid):
        sel = (bins >= lo * s) & (bins <= hi * s)
        scores = []
        for j in range(d):
            total = float(np.sum(spec[sel, j]))
            if total <= 0:
                scores.append(0.0)
                continue
            f = np.asarray(key.frequencies[j]) * s
            basis = np.exp(-2j * np.pi * np.outer(t, f))
            energy = np.abs(g[:, j] @ basis) ** 2
            scores.append(float(np.dot(key.signs[j], energy)) / total)
        best = max(best, float(np.mean(scores)))
    return float(np.clip(best, -1.0, 1.0))


# --------------------------------------------------------------------------
# Correlation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationKey:
    """Owner seed plus the detector's high-pass cutoff and lag range."""

    seed: int
    cutoff_hz: float = 0.5
    max_lag_s: float = 2.0
    order: int = 2


def correlation_generate(key: CorrelationKey, n: int, d: int) -> WatermarkSequence:
    """Secret white Gaussian sequence, one stream per dimension."""
    return WatermarkSequence(WGNNoise(key.seed).sequence(int(n), int(d)), kind="correlation")


def correlation_detect(glimpses, f_g: float | None, key: CorrelationKey,
                       bounds: PolicyRateBounds, grid=None) -> float:
    """Maximum normalized cross-correlation after high-pass filtering.

    Both the glimpses and the regenerated, resampled sequence go through the
    same Butterworth high-pass. Per hypothesis, each dimension contributes
    its peak correlation over lags ``0..max_lag``; dimensions are averaged
    and the best hypothesis wins.
    """
    if f_g is None:
        f_g = glimpses.rate
    if not 0 < key.cutoff_hz < f_g / 2:
        raise ConfigurationError("high-pass cutoff must lie inside (0, f_g / 2)")
    g = glimpse_matrix(glimpses)
    n, d = g.shape
    max_lag = int(round(key.max_lag_s * f_g))
    if n <= max_lag:
        raise InsufficientDataError("glimpse sequence is shorter than the lag range")
    hp = design_highpass(key.order, key.cutoff_hz / f_g)
    g = apply_filter(hp, g)
    g = g - g.mean(axis=0)
    gnorm = np.linalg.norm(g, axis=0)
    grid = _grid(bounds, grid)
    base = correlation_generate(key, math.ceil((n + max_lag) * float(np.max(grid)) / f_g) + 64,
                                d).samples
    nfft = 1 << (2 * n + max_lag).bit_length()
    fg = np.conj(np.fft.rfft(g, nfft, axis=0))
    best = -np.inf
    for s in grid:
        w = resample_rational(base, f_g / s)[:n + max_lag]
        w = apply_filter(hp, w)
        cc = np.fft.irfft(fg * np.fft.rfft(w, nfft, axis=0), nfft, axis=0)[:max_lag + 1]
        # Energy of the window of w aligned with g at each lag.
        c2 = np.concatenate([np.zeros((1, d)), np.cumsum(w * w, axis=0)])
        wnorm = np.sqrt(c2[n:n + max_lag + 1] - c2[:max_lag + 1])
        denom = gnorm * wnorm
        ncc = np.divide(cc, denom, out=np.zeros_like(cc), where=denom > 0)
        best = max(best, float(np.mean(np.max(ncc, axis=0))))
    return best


# --------------------------------------------------------------------------
# Tournament
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TournamentKey:
    """Owner seed and the family of bell-shaped scoring functions."""

    seed: int
    layers: int = 4
    center_range: tuple[float, float] = (-1.0, 1.0)
    width_range: tuple[float, float] = (0.1, 0.5)
    decimals: int = 3

    def __post_init__(self):
        if self.layers < 0:
            raise ConfigurationError("layer count must be non-negative")
        if not 0 < self.width_range[0] <= self.width_range[1]:
            raise ConfigurationError("bell widths must be positive")

    @property
    def candidates(self) -> int:
        return 1 << self.layers


_U53 = float(1 << 53)


def _mix(x: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 over uint64 arrays (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def tournament_params(key: TournamentKey, context) -> tuple[np.ndarray, np.ndarray]:
    """Bell centers and widths, shape ``(len(context), layers)``.

    The values are a hash of the owner seed, the context rounded to
    ``key.decimals`` digits and the layer index, so the sampler and the
    detector derive the same functions from the same observation.
    """
    ctx = np.atleast_1d(np.asarray(context, dtype=float))
    q = np.rint(ctx * 10 ** key.decimals).astype(np.int64).view(np.uint64)
    base = _mix(q ^ np.uint64(splitmix64(key.seed)))
    layer = np.arange(key.layers, dtype=np.uint64)[None, :]
    h1 = _mix(base[:, None] ^ _mix(layer * np.uint64(2)))
    h2 = _mix(base[:, None] ^ _mix(layer * np.uint64(2) + np.uint64(1)))
    u1 = (h1 >> np.uint64(11)).astype(float) / _U53
    u2 = (h2 >> np.uint64(11)).astype(float) / _U53
    c0, c1 = key.center_range
    w0, w1 = key.width_range
    return c0 + (c1 - c0) * u1, w0 + (w1 - w0) * u2


def _bell(h, c, w):
    return np.exp(-((h - c) ** 2) / (2.0 * w * w))


def tournament_act(key: TournamentKey, mean, scale, context: float,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Sample ``2**layers`` candidates and return the tournament winner.

    Each duel compares ``g(h(a))`` with ``h(a)`` the sum of the action's
    components; the larger score wins and ties go to the first candidate.
    """
    rng = rng if rng is not None else np.random.default_rng()
    mean = np.asarray(mean, dtype=float)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), mean.shape)
    cands = mean + scale * rng.standard_normal((key.candidates,) + mean.shape)
    if key.layers == 0:
        return cands[0]
    centers, widths = tournament_params(key, [context])
    for layer in range(key.layers):
        g = _bell(cands.sum(axis=1), centers[0, layer], widths[0, layer])
        first, second = g[0::2], g[1::2]
        cands = np.where((first >= second)[:, None], cands[0::2], cands[1::2])
    return cands[0]


def tournament_detect(glimpses, f_g: float | None, key: TournamentKey, null_keys: int = 100,
                      proxy: str = "difference") -> float:
    """z-score of the mean bell score against random keys.

    For glimpse step ``i`` the context is ``|G_i|`` and the action proxy is
    ``(G_{i+1} - G_i) * f_g`` (``proxy="difference"``) or ``G_{i+1}``
    (``proxy="direct"``). The statistic is the mean of ``g`` over steps and
    layers; ``null_keys`` other seeds give its null mean and spread.
    """
    if f_g is None:
        f_g = glimpses.rate
    g = glimpse_matrix(glimpses)
    if g.shape[0] < 2:
        raise InsufficientDataError("tournament detection needs at least two glimpses")
    context = np.linalg.norm(g[:-1], axis=1)
    if proxy == "difference":
        act = np.diff(g, axis=0) * f_g
    elif proxy == "direct":
        act = g[1:]
    else:
        raise ConfigurationError(f"unknown action proxy {proxy!r}")
    h = act.sum(axis=1)[:, None]

    def stat(k: TournamentKey) -> float:
        c, w = tournament_params(k, context)
        return float(np.mean(_bell(h, c, w)))

    own = stat(key)
    null_seed = splitmix64(key.seed ^ 0xA5A5A5A5A5A5A5A5)
    null = []
    for _ in range(null_keys):
        null_seed = splitmix64(null_seed)
        null.append(stat(TournamentKey(null_seed, key.layers, key.center_range,
                                       key.width_range, key.decimals)))
    null = np.asarray(null)
    sd = float(np.std(null, ddof=1))
    return float((own - np.mean(null)) / sd) if sd > 0 else 0.0
