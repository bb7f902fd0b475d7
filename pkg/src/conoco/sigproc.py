"""Deterministic DSP primitives.

Seeded Gaussian streams, Butterworth design and causal IIR filtering, Welch
auto/cross spectra, complex coherency, band averaging, rational resampling
and GCC-PHAT delay estimation. Every function here is pure: the same inputs
give bit-identical outputs.

Arrays with a time axis always keep time on axis 0, so an ``(N, D)`` matrix
is processed as ``D`` independent channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import signal as sps

from .errors import BandEdgeError, EmptyBandError, InsufficientDataError

__all__ = [
    "MASK64",
    "splitmix64",
    "GaussianStream",
    "gaussian_stream",
    "IIRFilter",
    "design_bandpass",
    "design_bandstop",
    "design_highpass",
    "apply_filter",
    "SpectralEstimate",
    "welch_spectra",
    "CoherencyCurve",
    "coherency",
    "band_mean",
    "rational_approximation",
    "resample_rational",
    "gcc_phat",
    "default_win_len",
]

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / (1 << 53)


# --------------------------------------------------------------------------
# Pseudo-random numbers
# --------------------------------------------------------------------------

def splitmix64(x: int) -> int:
    """One splitmix64 step: advance ``x`` by the golden gamma and mix it."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class GaussianStream:
    """Standard-normal samples from xoshiro256** seeded through splitmix64.

    Uniforms carry 53 bits of the raw 64-bit output and are turned into
    normals by the Box-Muller transform, two normals per pair of draws.
    Integer arithmetic is exact and the transcendental functions come from
    the C math library, so a seed reproduces the same stream everywhere.

    Parameters
    ----------
    seed : int
        Unsigned 64-bit seed. Larger integers are reduced modulo 2**64.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.position = 0
        state = []
        z = self.seed
        for _ in range(4):
            state.append(splitmix64(z))
            z = (z + _GOLDEN) & MASK64
        self._s = state
        self._spare: float | None = None

    def _raw(self, n: int) -> list[int]:
        s0, s1, s2, s3 = self._s
        out = [0] * n
        for i in range(n):
            r = (s1 * 5) & MASK64
            r = ((r << 7) | (r >> 57)) & MASK64
            out[i] = (r * 9) & MASK64
            t = (s1 << 17) & MASK64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
        self._s = [s0, s1, s2, s3]
        return out

    def draw(self, n: int) -> np.ndarray:
        """Return the next ``n`` samples as a float64 array."""
        n = int(n)
        if n < 0:
            raise ValueError("sample count must be non-negative")
        out: list[float] = []
        if n and self._spare is not None:
            out.append(self._spare)
            self._spare = None
        need = n - len(out)
        if need > 0:
            pairs = (need + 1) // 2
            raw = self._raw(2 * pairs)
            log, sqrt, cos, sin = math.log, math.sqrt, math.cos, math.sin
            for i in range(pairs):
                u1 = ((raw[2 * i] >> 11) + 1) * _INV_2_53
                u2 = (raw[2 * i + 1] >> 11) * _INV_2_53
                r = sqrt(-2.0 * log(u1))
                out.append(r * cos(_TWO_PI * u2))
                out.append(r * sin(_TWO_PI * u2))
            if len(out) > n:
                self._spare = out.pop()
        self.position += n
        return np.asarray(out, dtype=np.float64)


def gaussian_stream(seed: int, n: int) -> np.ndarray:
    """First ``n`` standard-normal samples of the stream seeded by ``seed``."""
    return GaussianStream(seed).draw(n)


# --------------------------------------------------------------------------
# IIR filters
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IIRFilter:
    """Cascade of second-order sections.

    ``sections`` has one row ``(b0, b1, b2, 1, a1, a2)`` per section, the
    layout used by :func:`scipy.signal.sosfilt`. ``band`` holds the design
    edges in cycles/sample.
    """

    sections: np.ndarray
    band: tuple[float, float]
    kind: str = "bandpass"

    def response(self, freqs) -> np.ndarray:
        """Complex frequency response at ``freqs`` (cycles/sample)."""
        z = np.exp(-2j * np.pi * np.asarray(freqs, dtype=float))
        h = np.ones_like(z)
        for b0, b1, b2, a0, a1, a2 in self.sections:
            h = h * (b0 + b1 * z + b2 * z * z) / (a0 + a1 * z + a2 * z * z)
        return h

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots(sec[3:]) for sec in self.sections])

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))


def _check_band(low: float, high: float) -> None:
    if not (0.0 < low < high < 0.5):
        raise BandEdgeError(
            f"band edges must satisfy 0 < low < high < 0.5 cycles/sample, "
            f"got ({low!r}, {high!r})"
        )


def _check_order(order: int) -> int:
    order = int(order)
    if order < 2 or order % 2:
        raise ValueError(f"filter order must be an even integer >= 2, got {order}")
    return order


def design_bandpass(order: int, low: float, high: float) -> IIRFilter:
    """Butterworth band-pass from an order-``order`` low-pass prototype.

    ``low`` and ``high`` are the -3 dB edges in cycles/sample. The
    realization has ``order`` second-order sections, so an order-4 design
    keeps about 90% of white-noise power inside the band.
    """
    order = _check_order(order)
    _check_band(low, high)
    sos = sps.butter(order, [2.0 * low, 2.0 * high], btype="bandpass", output="sos")
    return IIRFilter(np.asarray(sos, dtype=float), (float(low), float(high)), "bandpass")


def design_bandstop(order: int, low: float, high: float) -> IIRFilter:
    """Butterworth band-stop counterpart of :func:`design_bandpass`."""
    order = _check_order(order)
    _check_band(low, high)
    sos = sps.butter(order, [2.0 * low, 2.0 * high], btype="bandstop", output="sos")
    return IIRFilter(np.asarray(sos, dtype=float), (float(low), float(high)), "bandstop")


def design_highpass(order: int, cutoff: float) -> IIRFilter:
    """Butterworth high-pass with its -3 dB point at ``cutoff`` cycles/sample."""
    if not 0.0 < cutoff < 0.5:
        raise BandEdgeError(f"cutoff must lie in (0, 0.5) cycles/sample, got {cutoff!r}")
    sos = sps.butter(int(order), 2.0 * cutoff, btype="highpass", output="sos")
    return IIRFilter(np.asarray(sos, dtype=float), (float(cutoff), 0.5), "highpass")


def apply_filter(filt: IIRFilter, x) -> np.ndarray:
    """Causal cascade of transposed direct-form II sections, zero initial state."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] == 0:
        return x.copy()
    return sps.sosfilt(filt.sections, x, axis=0)


# --------------------------------------------------------------------------
# Spectral estimation
# --------------------------------------------------------------------------

def default_win_len(n: int) -> int:
    """Welch window for a glimpse sequence of ``n`` samples."""
    return 64 if n < 10000 else 256


@dataclass(frozen=True)
class SpectralEstimate:
    """One-sided Welch auto and cross spectra, in power per Hz.

    ``sxx``, ``syy`` and ``sxy`` share the leading frequency axis; trailing
    axes are channels.
    """

    frequencies: np.ndarray
    sxx: np.ndarray
    syy: np.ndarray
    sxy: np.ndarray
    segment_count: int


def _window(name: str, n: int) -> np.ndarray:
    if name not in ("hann", "hanning"):
        raise ValueError(f"unsupported window {name!r}; only 'hann' is available")
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n)


def _segments(x: np.ndarray, win_len: int, step: int) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(x, win_len, axis=0)
    segs = view[::step]
    return segs - segs.mean(axis=-1, keepdims=True)


def welch_spectra(x, y, fs: float, win_len: int, overlap: float = 0.5,
                  window: str = "hann") -> SpectralEstimate:
    """Welch estimate of ``Sxx``, ``Syy`` and ``Sxy = E[conj(X) Y]``.

    Segments of ``win_len`` samples advance by ``win_len - floor(overlap *
    win_len)``, are mean-detrended and tapered, and their (cross-)
    periodograms are averaged with density scaling, so that integrating
    ``Sxx`` over frequency recovers the variance of ``x``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"x and y must have the same shape, got {x.shape} and {y.shape}")
    win_len = int(win_len)
    if win_len < 2:
        raise ValueError("win_len must be at least 2")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must lie in [0, 1)")
    n = x.shape[0]
    if n < win_len:
        raise InsufficientDataError(
            f"sequence of {n} samples is shorter than the Welch window ({win_len})"
        )
    step = win_len - int(math.floor(overlap * win_len))
    w = _window(window, win_len)
    scale = 1.0 / (fs * np.sum(w * w))

    fx = np.fft.rfft(_segments(x, win_len, step) * w, axis=-1)
    fy = np.fft.rfft(_segments(y, win_len, step) * w, axis=-1)
    count = fx.shape[0]
    sxx = np.mean(np.abs(fx) ** 2, axis=0) * scale
    syy = np.mean(np.abs(fy) ** 2, axis=0) * scale
    sxy = np.mean(np.conj(fx) * fy, axis=0) * scale
    # One-sided: double every bin except DC and, for even windows, Nyquist.
    last = -1 if win_len % 2 == 0 else None
    for arr in (sxx, syy, sxy):
        arr[..., 1:last] *= 2.0
    freqs = np.fft.rfftfreq(win_len, 1.0 / fs)
    # Frequency goes first, channels after.
    return SpectralEstimate(freqs, np.moveaxis(sxx, -1, 0), np.moveaxis(syy, -1, 0),
                            np.moveaxis(sxy, -1, 0), int(count))


@dataclass(frozen=True)
class CoherencyCurve:
    """Complex coherency per frequency (first axis) and channel."""

    frequencies: np.ndarray
    values: np.ndarray


_TINY = 1e-300


def coherency(x, y, fs: float, win_len: int, overlap: float = 0.5,
              window: str = "hann") -> CoherencyCurve:
    """Complex coherency ``Sxy / sqrt(Sxx * Syy)`` from one Welch estimate.

    Bins where either auto-spectrum falls below 1e-300 carry no evidence and
    are set to 0. Magnitudes are clipped to 1 against round-off.
    """
    est = welch_spectra(x, y, fs, win_len, overlap, window)
    denom = np.sqrt(est.sxx * est.syy)
    valid = (est.sxx > _TINY) & (est.syy > _TINY)
    values = np.zeros_like(est.sxy)
    values[valid] = est.sxy[valid] / denom[valid]
    mag = np.abs(values)
    over = mag > 1.0
    values[over] /= mag[over]
    return CoherencyCurve(est.frequencies, values)


def band_mean(curve, band) -> float | np.ndarray:
    """Mean magnitude over bins with ``band[0] <= f <= band[1]``.

    ``curve`` is a :class:`CoherencyCurve` or a ``(frequencies, values)``
    pair. Multi-channel values give one mean per channel.
    """
    if isinstance(curve, CoherencyCurve):
        freqs, values = curve.frequencies, curve.values
    else:
        freqs, values = curve
    freqs = np.asarray(freqs, dtype=float)
    lo, hi = float(band[0]), float(band[1])
    if lo > hi:
        raise BandEdgeError(f"inverted band ({lo}, {hi})")
    sel = (freqs >= lo) & (freqs <= hi)
    if not np.any(sel):
        raise EmptyBandError(
            f"band [{lo}, {hi}] Hz contains no bins (resolution "
            f"{freqs[1] - freqs[0] if freqs.size > 1 else float('nan'):.4g} Hz, "
            f"max {freqs[-1]:.4g} Hz)"
        )
    out = np.mean(np.abs(np.asarray(values)[sel]), axis=0)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# Resampling
# --------------------------------------------------------------------------

KAISER_BETA = 8.6
TAPS_PER_PHASE = 10


def rational_approximation(ratio: float, max_denominator: int = 1000) -> tuple[int, int]:
    """Best ``p/q`` approximation of ``ratio`` with ``q <= max_denominator``."""
    if not ratio > 0:
        raise ValueError(f"resampling ratio must be positive, got {ratio!r}")
    frac = Fraction(ratio).limit_denominator(int(max_denominator))
    if frac == 0:
        frac = Fraction(1, int(max_denominator))
    return frac.numerator, frac.denominator


@lru_cache(maxsize=256)
def _antialias_fir(p: int, q: int) -> np.ndarray:
    rate = max(p, q)
    taps = sps.firwin(2 * TAPS_PER_PHASE * rate + 1, 1.0 / rate,
                      window=("kaiser", KAISER_BETA))
    taps.setflags(write=False)
    return taps


def resample_rational(x, ratio: float, max_denominator: int = 1000) -> np.ndarray:
    """Polyphase resampling by the rational approximation of ``ratio``.

    The anti-aliasing low-pass is a Kaiser-windowed sinc (beta 8.6) with ten
    taps per polyphase branch; its group delay is compensated, and the
    output has ``ceil(len(x) * p / q)`` samples.
    """
    x = np.asarray(x, dtype=float)
    p, q = rational_approximation(ratio, max_denominator)
    g = math.gcd(p, q)
    p, q = p // g, q // g
    if p == q:
        return x.copy()
    return sps.resample_poly(x, p, q, axis=0, window=_antialias_fir(p, q))


# --------------------------------------------------------------------------
# Delay estimation
# --------------------------------------------------------------------------

def gcc_phat(x, y, fs: float, band=None, max_lag: int | None = None):
    """Generalized cross-correlation with phase transform.

    A positive lag ``L`` means ``y`` is ``x`` delayed by ``L`` samples,
    i.e. ``y[n] ~ x[n - L]``. The cross-spectrum is whitened by its
    magnitude and zeroed outside ``band`` (Hz) before the inverse transform.

    Returns
    -------
    lags : ndarray of int
        ``-max_lag .. max_lag``.
    curve : ndarray
        Correlation value at each lag; one column per channel for 2-D input.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = x.shape[0], y.shape[0]
    if max_lag is None:
        max_lag = min(nx, ny) // 2
    max_lag = int(max_lag)
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    if max_lag >= nx or max_lag >= ny:
        raise InsufficientDataError(
            f"max_lag {max_lag} must be shorter than both sequences ({nx}, {ny})"
        )
    nfft = 1 << (nx + ny - 1).bit_length()
    cross = np.conj(np.fft.rfft(x, nfft, axis=0)) * np.fft.rfft(y, nfft, axis=0)
    mag = np.abs(cross)
    phat = np.zeros_like(cross)
    nz = mag > _TINY
    phat[nz] = cross[nz] / mag[nz]
    if band is not None:
        freqs = np.fft.rfftfreq(nfft, 1.0 / fs)
        phat[(freqs < band[0]) | (freqs > band[1])] = 0.0
    cc = np.fft.irfft(phat, nfft, axis=0)
    curve = np.concatenate([cc[nfft - max_lag:], cc[:max_lag + 1]], axis=0)
    lags = np.arange(-max_lag, max_lag + 1)
    return lags, curve
