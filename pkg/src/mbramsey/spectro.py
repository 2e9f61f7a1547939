"""Fringe spectra: one-sided DFT, robust noise floor, prominence-gated peaks."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import signal

LOWPASS_CUT = 20.0      # MHz
PROMINENCE_SIGMA = 6.0
FALLBACK_SIGMA = 4.0
PEAK_HALF_WIDTH = 2     # bins
MAD_SCALE = 1.4826
REFINE_OVERSAMPLE = 16


class SpectroError(ValueError):
    pass


class NoPeakError(RuntimeError):
    """No spectral feature passed the prominence gate."""


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray
    magnitude: np.ndarray
    resolution: float
    dt: float
    n_samples: int
    window: str = "rect"
    series: np.ndarray | None = field(default=None, repr=False)

    @property
    def nyquist(self) -> float:
        return 0.5 / self.dt


@dataclass(frozen=True)
class Peak:
    freq: float
    magnitude: float
    prominence: float
    sigma_ratio: float
    weight: float
    bin: int


@dataclass(frozen=True)
class PeakSet:
    peaks: tuple[Peak, ...]
    sigma_noise: float
    lowpass_cut: float
    threshold: float
    filter: str = "hard-mask"

    def __len__(self) -> int:
        return len(self.peaks)

    def __iter__(self):
        return iter(self.peaks)

    @property
    def dominant(self) -> Peak:
        if not self.peaks:
            raise NoPeakError("no qualifying peak")
        return max(self.peaks, key=lambda p: p.magnitude)

    @property
    def dominant_fraction(self) -> float:
        total = sum(p.weight for p in self.peaks)
        return self.dominant.weight / total if total > 0 else 0.0

    def to_records(self) -> list[dict]:
        return [{"freq_MHz": p.freq, "magnitude": p.magnitude, "prominence": p.prominence,
                 "sigma_ratio": p.sigma_ratio, "weight": p.weight} for p in self.peaks]


def _series(trace, dt: float | None):
    if hasattr(trace, "hold_times"):
        t = np.asarray(trace.hold_times, dtype=float)
        y = np.asarray(getattr(trace, "population", getattr(trace, "values", None)), dtype=float)
    else:
        t, y = (np.asarray(a, dtype=float) for a in trace)
    if len(t) != len(y):
        raise SpectroError("time and value arrays differ in length")
    if len(t) < 4:
        raise SpectroError("need at least 4 samples for a spectrum")
    steps = np.diff(t)
    step = float(np.mean(steps)) if dt is None else dt
    if step <= 0 or not np.allclose(steps, step, rtol=1e-6, atol=1e-12):
        raise SpectroError("hold times must be uniformly sampled")
    return y, step


def fft_spectrum(trace, dt: float | None = None, window: str = "rect",
                 pad: int = 1) -> Spectrum:
    """One-sided DFT magnitude of the mean-subtracted trace.

    ``trace`` is a RamseyTrace or a ``(times, values)`` pair.  Magnitudes are
    scaled so that sum(magnitude**2) equals the time-domain power
    sum((y - mean)**2) for the rectangular window, with or without padding.
    """
    y, step = _series(trace, dt)
    n = len(y)
    x = y - y.mean()
    if window == "hann":
        x = x * np.hanning(n)
    elif window != "rect":
        raise SpectroError(f"unknown window {window!r}")
    if pad < 1:
        raise SpectroError("pad factor must be >= 1")
    n_fft = n * int(pad)
    X = np.fft.rfft(x, n_fft)
    c = np.full(len(X), 2.0)
    c[0] = 1.0
    if n_fft % 2 == 0:
        c[-1] = 1.0
    mag = np.abs(X) * np.sqrt(c / n_fft)
    freqs = np.fft.rfftfreq(n_fft, step)
    return Spectrum(freqs, mag, 1.0 / (n * step), step, n, window, x)


def lowpass_mask(spec: Spectrum, cut: float = LOWPASS_CUT) -> np.ndarray:
    return spec.freqs >= cut


def apply_lowpass(spec: Spectrum, cut: float = LOWPASS_CUT) -> Spectrum:
    """Zero the bins below ``cut`` (a hard mask; applying twice changes nothing)."""
    mag = np.where(lowpass_mask(spec, cut), spec.magnitude, 0.0)
    return replace(spec, magnitude=mag)


def _mad_sigma(x: np.ndarray) -> float:
    if len(x) == 0:
        return 0.0
    return MAD_SCALE * float(np.median(np.abs(x - np.median(x))))


def noise_sigma(mag: np.ndarray, candidates: Sequence[int],
                half_width: int = PEAK_HALF_WIDTH) -> float:
    keep = np.ones(len(mag), dtype=bool)
    for k in candidates:
        keep[max(0, k - half_width):k + half_width + 1] = False
    return _mad_sigma(mag[keep] if keep.any() else mag)


def _parabolic(a: float, b: float, c: float) -> float:
    den = a - 2 * b + c
    if den == 0:
        return 0.0
    return float(np.clip(0.5 * (a - c) / den, -0.5, 0.5))


def _refine(spec: Spectrum, f0: float, oversample: int = REFINE_OVERSAMPLE) -> float:
    """Sub-bin peak position.

    The DTFT of the stored series is evaluated on a grid ``oversample``
    times finer than the bin spacing within one bin of ``f0``, and the
    largest sample is refined with a 3-point parabola.  Interpolating the
    raw bins directly is biased by up to ~0.2 bin for a rectangular window.
    """
    x = spec.series
    bin_f = spec.freqs[1] - spec.freqs[0]
    if x is None:
        return f0
    step = bin_f / oversample
    grid = f0 + step * np.arange(-oversample - 1, oversample + 2)
    t = np.arange(len(x)) * spec.dt
    mag = np.abs(np.exp(-2j * np.pi * np.outer(grid, t)) @ x)
    k = int(np.clip(np.argmax(mag), 1, len(grid) - 2))
    return float(grid[k] + _parabolic(mag[k - 1], mag[k], mag[k + 1]) * step)


def find_peaks(spec: Spectrum, lowpass_cut: float = LOWPASS_CUT,
               prominence_sigma: float = PROMINENCE_SIGMA) -> PeakSet:
    """All peaks above ``lowpass_cut`` whose prominence exceeds the noise gate."""
    mask = lowpass_mask(spec, lowpass_cut)
    idx = np.nonzero(mask)[0]
    if len(idx) < 3:
        raise SpectroError("fewer than 3 bins survive the low-pass mask")
    mag = spec.magnitude[idx]
    scale = float(mag.max()) if len(mag) else 0.0
    # preliminary pass: candidates against a whole-band MAD estimate
    s0 = max(_mad_sigma(mag), 1e-12 * scale)
    # an edge bin counts only if it beats its unmasked neighbour below the cut
    below = spec.magnitude[idx[0] - 1] if idx[0] > 0 else 0.0
    edged = np.concatenate(([below], mag, [0.0]))
    cand, _ = signal.find_peaks(edged, prominence=prominence_sigma * s0)
    cand = cand - 1
    sigma = max(noise_sigma(mag, cand), 1e-12 * scale, np.finfo(float).tiny)
    found, props = signal.find_peaks(edged, prominence=prominence_sigma * sigma)
    found = found - 1
    peaks = []
    for j, k in enumerate(found):
        lo, hi = max(0, k - PEAK_HALF_WIDTH), k + PEAK_HALF_WIDTH + 1
        prom = float(props["prominences"][j])
        peaks.append(Peak(
            freq=float(np.clip(_refine(spec, float(spec.freqs[idx[k]])),
                               lowpass_cut, spec.nyquist)),
            magnitude=float(mag[k]),
            prominence=prom,
            sigma_ratio=prom / sigma,
            weight=float(np.sum(mag[lo:hi] ** 2)),
            bin=int(idx[k]),
        ))
    return PeakSet(tuple(peaks), sigma, lowpass_cut, prominence_sigma)


def find_dominant_peak(spec: Spectrum, lowpass_cut: float = LOWPASS_CUT,
                       prominence_sigma: float = PROMINENCE_SIGMA,
                       fallback: bool = False) -> float:
    """Frequency of the largest qualifying peak.

    With ``fallback`` the gate is relaxed to 4 sigma before giving up.
    """
    ps = find_peaks(spec, lowpass_cut, prominence_sigma)
    if not ps.peaks and fallback and prominence_sigma > FALLBACK_SIGMA:
        ps = find_peaks(spec, lowpass_cut, FALLBACK_SIGMA)
    if not ps.peaks:
        raise NoPeakError(
            f"no peak above {lowpass_cut} MHz with prominence >= {ps.threshold} sigma")
    return ps.dominant.freq


def untranslate(freq: float, virtual_freq: float) -> float:
    """Recover the demodulated energy difference from a fringe frequency.

    The fringe oscillates at |x - virtual_freq|; the branch assumes
    x < virtual_freq when virtual_freq > 0.
    """
    return virtual_freq - freq if virtual_freq > 0 else virtual_freq + freq


@dataclass
class ScanResult:
    taus: np.ndarray
    spectra: list[Spectrum] = field(repr=False)
    peaks: list[PeakSet] = field(repr=False)

    def heatmap(self) -> np.ndarray:
        return np.vstack([s.magnitude for s in self.spectra])

    def dominant_fractions(self) -> np.ndarray:
        return np.array([p.dominant_fraction if len(p) else 0.0 for p in self.peaks])

    def peak_counts(self) -> np.ndarray:
        return np.array([len(p) for p in self.peaks])


def _scan_point(args):
    from .protocol import run_manybody_ramsey

    config, tau, lowpass_cut, prominence_sigma = args
    trace = run_manybody_ramsey(replace(config, tau_melt=float(tau)))
    spec = fft_spectrum(trace)
    return spec, find_peaks(spec, lowpass_cut, prominence_sigma)


def ramp_scan(config, taus: Sequence[float], lowpass_cut: float = LOWPASS_CUT,
              prominence_sigma: float = PROMINENCE_SIGMA, workers: int = 1) -> ScanResult:
    """Run the interferometer at each melt time and stack the spectra."""
    taus = np.asarray(taus, dtype=float)
    if np.any(taus <= 0):
        raise SpectroError("ramp times must be positive")
    jobs = [(config, t, lowpass_cut, prominence_sigma) for t in taus]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            res = list(ex.map(_scan_point, jobs))
    else:
        res = [_scan_point(j) for j in jobs]
    return ScanResult(taus, [r[0] for r in res], [r[1] for r in res])
