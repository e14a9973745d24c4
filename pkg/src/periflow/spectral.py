"""Frequency-domain utilities: period discovery, band-noise augmentation,
and a seasonal-strength diagnostic.

Convention throughout: unnormalized forward transform, 1/n inverse, so
Parseval reads sum|x|^2 = (1/n) sum|X|^2. The DC bin never participates
in period selection because it encodes the mean, not a rhythm.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .series import MultivariateSeries


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class AmplitudeSpectrum:
    amplitudes: np.ndarray
    bin_count: int
    source_length: int


@dataclass(frozen=True)
class PeriodSet:
    """Top-k frequency bins with their period lengths and raw amplitudes."""

    frequencies: tuple[int, ...]
    periods: tuple[int, ...]
    weights: np.ndarray
    short_count: bool = False

    def __post_init__(self):
        if len(self.frequencies) < 1:
            raise SpectralError("a period set needs at least one frequency")
        if len(set(self.frequencies)) != len(self.frequencies):
            raise SpectralError("frequencies must be distinct")

    @property
    def k(self) -> int:
        return len(self.frequencies)


def forward_fft(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.size == 0:
        raise SpectralError("empty input")
    if not np.all(np.isfinite(x)):
        raise SpectralError("non-finite input to forward_fft")
    return np.fft.fft(x, axis=0) if x.ndim > 1 else np.fft.fft(x)


def inverse_fft(spectrum: np.ndarray) -> np.ndarray:
    spectrum = np.asarray(spectrum)
    if not np.all(np.isfinite(spectrum)):
        raise SpectralError("non-finite input to inverse_fft")
    out = np.fft.ifft(spectrum, axis=0) if spectrum.ndim > 1 else np.fft.ifft(spectrum)
    return out


def amplitude_spectrum(x: np.ndarray) -> AmplitudeSpectrum:
    """Channel-averaged amplitude of the forward transform of (n,) or (n, D)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] == 1 and x.size > 1:
        x = x.T
    spec = np.abs(np.fft.fft(x, axis=0)).mean(axis=1)
    return AmplitudeSpectrum(spec, spec.shape[0], x.shape[0])


def _dominant_bin(amplitudes: np.ndarray, n: int) -> int:
    # Candidates are the non-redundant bins 1..n//2; the conjugate half
    # mirrors them for real input. Ties resolve to the lower bin.
    half = n // 2
    if half < 1:
        raise SpectralError("series too short for period discovery")
    band = amplitudes[1:half + 1]
    return int(np.argmax(band)) + 1


def discover_global_period(series: MultivariateSeries) -> int:
    """Dominant period of the full series: ceil(T_l / argmax averaged amplitude)."""
    values = series.values
    if series.length < 4:
        raise SpectralError("need at least 4 samples to discover a period")
    if np.allclose(values, values[0], atol=1e-12):
        raise SpectralError("constant series has no dominant frequency")
    amp = amplitude_spectrum(values).amplitudes
    f_g = _dominant_bin(amp, series.length)
    return int(np.ceil(series.length / f_g))


def top_k_periods(x: np.ndarray, k: int) -> PeriodSet:
    """k largest-amplitude bins (channel-averaged, DC excluded) of (T, C).

    Candidate bins are the non-redundant half 1..T//2. If fewer bins carry
    energy than requested, all available ones are returned and the result
    is flagged short.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    t = x.shape[0]
    if not 1 <= k < t / 2:
        raise SpectralError(f"k must satisfy 1 <= k < T/2, got k={k}, T={t}")
    amp = np.abs(np.fft.fft(x, axis=0)).mean(axis=1)
    half = t // 2
    band = amp[1:half + 1]
    order = np.argsort(-band, kind="stable")
    chosen = []
    for idx in order:
        f = int(idx) + 1
        period = int(np.ceil(t / f))
        if period < 2:
            continue
        if band[idx] <= 1e-12 and chosen:
            break
        chosen.append((f, period, float(amp[f])))
        if len(chosen) == k:
            break
    short = len(chosen) < k
    freqs, periods, weights = zip(*chosen)
    return PeriodSet(freqs, periods, np.asarray(weights), short_count=short)


def intervene(x: np.ndarray, k_h_frac: float = 0.25, sigma: float = 0.1,
              noise: str = "gaussian", location: str = "high",
              rng: np.random.Generator | None = None) -> np.ndarray:
    """Perturb one frequency band of a (T, D) window and transform back.

    The spectrum splits at bin k_h = round(k_h_frac * T). Noise with
    per-component scale sigma lands on the selected band; conjugate
    symmetry is maintained so the output stays real, which leaves the
    mirror images of the untouched band clean as well.
    """
    if sigma < 0:
        raise SpectralError("sigma must be non-negative")
    if not 0 < k_h_frac < 1:
        raise SpectralError("k_h_frac must lie in (0, 1)")
    if noise not in ("gaussian", "laplace"):
        raise SpectralError(f"unknown noise type {noise!r}")
    if location not in ("high", "low"):
        raise SpectralError(f"unknown noise location {location!r}")
    rng = rng or np.random.default_rng()
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    t, d = x.shape
    k_h = int(round(k_h_frac * t))
    k_h = min(max(k_h, 1), t // 2)

    spec = np.fft.fft(x, axis=0)
    half = t // 2
    if location == "high":
        bins = np.arange(k_h, half + 1)
    else:
        bins = np.arange(0, k_h)
    draw = rng.standard_normal if noise == "gaussian" else (
        lambda size: rng.laplace(0.0, 1.0 / np.sqrt(2.0), size=size))
    for b in bins:
        self_conjugate = b == 0 or (t % 2 == 0 and b == half)
        re = sigma * draw((d,))
        im = 0.0 if self_conjugate else sigma * draw((d,))
        eta = re + 1j * im
        spec[b] += eta
        if not self_conjugate:
            spec[t - b] += np.conj(eta)
    out = np.fft.ifft(spec, axis=0).real
    return out[:, 0] if squeeze else out


def periodicity_strength(x: np.ndarray, seasonal_period: int) -> float:
    """Seasonal-to-noise strength in [0, 1] of one channel.

    Decomposes with a centered moving-average trend and per-phase seasonal
    means, then returns max(0, 1 - Var(residual) / Var(seasonal+residual)).
    A flat decomposition (zero variance) scores 0.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    p = int(seasonal_period)
    if p < 2:
        raise SpectralError("seasonal period must be >= 2")
    if x.size < 2 * p:
        raise SpectralError(f"need at least {2 * p} samples for period {p}")

    # Centered MA of width p (classic 2xMA for even p keeps it centered).
    if p % 2 == 1:
        kernel = np.full(p, 1.0 / p)
    else:
        kernel = np.full(p + 1, 1.0 / p)
        kernel[0] = kernel[-1] = 0.5 / p
    pad = len(kernel) // 2
    padded = np.concatenate([np.full(pad, x[0]), x, np.full(pad, x[-1])])
    trend = np.convolve(padded, kernel, mode="valid")

    detrended = x - trend
    phases = np.arange(x.size) % p
    seasonal = np.zeros_like(x)
    for ph in range(p):
        idx = phases == ph
        seasonal[idx] = detrended[idx].mean()
    seasonal -= seasonal.mean()
    residual = detrended - seasonal

    denom = np.var(seasonal + residual)
    if denom < 1e-12:
        return 0.0
    return float(max(0.0, 1.0 - np.var(residual) / denom))
