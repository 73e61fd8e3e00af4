"""
Leakage Current Signal Processing
Filters, fundamental extraction, residual, pulse detection and harmonic spectrum
for uniformly sampled LC waveforms
"""
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import median_abs_deviation

from config.flashover_config import FlashoverConfig
from errors import InsufficientDataError, InvalidArgumentError, WaveformFormatError

logger = logging.getLogger(__name__)

N_HARMONICS = 10
HEADER_KEYS = ('sample_rate', 'mains_freq', 'applied_voltage')


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled LC record (mA) with its acquisition metadata"""
    samples: np.ndarray
    sample_rate: float
    mains_freq: float = 50.0
    applied_voltage: float = 1.0  # kV, phase-to-ground at measurement time

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        object.__setattr__(self, 'samples', samples)

        if not self.sample_rate > 0 or not self.mains_freq > 0:
            raise InvalidArgumentError("sample_rate and mains_freq must be positive")
        if self.sample_rate < 20 * self.mains_freq:
            raise InvalidArgumentError(
                f"sample_rate {self.sample_rate} Hz cannot resolve 10 harmonics of {self.mains_freq} Hz"
            )
        if not self.applied_voltage > 0:
            raise InvalidArgumentError("applied_voltage must be positive")
        if len(samples) < self.samples_per_period:
            raise InsufficientDataError(
                f"{len(samples)} samples do not cover one mains period ({self.samples_per_period:.1f})"
            )
        if not np.all(np.isfinite(samples)):
            raise InvalidArgumentError("waveform contains NaN or infinite samples")

    @property
    def samples_per_period(self) -> float:
        return self.sample_rate / self.mains_freq

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)

    def with_samples(self, samples: np.ndarray) -> 'Waveform':
        """Same metadata, new samples"""
        return replace(self, samples=samples)


@dataclass(frozen=True, eq=False)
class Fundamental:
    """Mains-frequency component: amplitude·sin(2π·freq·t + phase)"""
    amplitude: float
    phase: float
    freq: float
    reconstructed: np.ndarray


@dataclass(frozen=True)
class Pulse:
    start_index: int
    end_index: int
    peak_amplitude: float
    polarity: int


@dataclass(frozen=True)
class HarmonicSpectrum:
    """Harmonic amplitudes in mA; amplitudes[0] is the 1st harmonic"""
    amplitudes: Tuple[float, ...]

    def amplitude(self, k: int) -> float:
        if not 1 <= k <= len(self.amplitudes):
            raise InvalidArgumentError(f"harmonic {k} outside 1..{len(self.amplitudes)}")
        return self.amplitudes[k - 1]


@dataclass(frozen=True)
class DspConfig:
    """Filter and pulse-detection parameters; None threshold = robust auto threshold"""
    ma_window: int = FlashoverConfig.MA_WINDOW
    es_alpha: float = FlashoverConfig.ES_ALPHA
    pulse_threshold_ma: Optional[float] = None
    pulse_threshold_floor_ma: float = FlashoverConfig.PULSE_THRESHOLD_FLOOR_MA
    pulse_mad_multiplier: float = FlashoverConfig.PULSE_MAD_MULTIPLIER

    @classmethod
    def from_dict(cls, data: dict) -> 'DspConfig':
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


# Filters

Signal = Union[Waveform, np.ndarray, List[float]]


def _samples_of(x: Signal) -> np.ndarray:
    if isinstance(x, Waveform):
        return x.samples
    return np.asarray(x, dtype=np.float64).reshape(-1)


def _like(x: Signal, samples: np.ndarray) -> Signal:
    """Wrap samples the way the input came in: Waveform keeps its metadata"""
    return x.with_samples(samples) if isinstance(x, Waveform) else samples


def moving_average(w: Signal, window: int) -> Signal:
    """Centred moving average, window truncated at the edges (no padding)"""
    x = _samples_of(w)
    if window < 1 or window > len(x):
        raise InvalidArgumentError(f"window {window} outside 1..{len(x)}")
    if window == 1:
        return _like(w, x.copy())

    # (window - 1) // 2 samples before, window // 2 after
    before = (window - 1) // 2
    after = window // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(len(x))
    lo = np.maximum(idx - before, 0)
    hi = np.minimum(idx + after + 1, len(x))
    return _like(w, (csum[hi] - csum[lo]) / (hi - lo))


def exponential_smoothing(w: Signal, alpha: float) -> Signal:
    """out[0] = in[0]; out[i] = alpha·in[i] + (1 − alpha)·out[i−1]"""
    if not 0 < alpha <= 1:
        raise InvalidArgumentError(f"alpha {alpha} outside (0, 1]")
    x = _samples_of(w)
    if alpha == 1:
        return _like(w, x.copy())
    out = pd.Series(x).ewm(alpha=alpha, adjust=False).mean().to_numpy()
    return _like(w, out)


# Fourier projection

def _integer_period_span(w: Waveform) -> int:
    """Sample count of the largest whole number of mains periods inside the record"""
    periods = int(np.floor(len(w) / w.samples_per_period + 1e-9))
    if periods < 1:
        raise InsufficientDataError("waveform shorter than one mains period")
    return min(len(w), int(round(periods * w.samples_per_period)))


def _project(samples: np.ndarray, t: np.ndarray, freq: float) -> Tuple[float, float]:
    """Sine/cosine coefficients at freq over the given span"""
    omega_t = 2 * np.pi * freq * t
    a = 2.0 * np.dot(samples, np.sin(omega_t)) / len(samples)
    b = 2.0 * np.dot(samples, np.cos(omega_t)) / len(samples)
    return float(a), float(b)


def extract_fundamental(w: Waveform) -> Fundamental:
    """Single-bin Fourier projection at the mains frequency over whole periods"""
    span = _integer_period_span(w)
    t = w.times
    a, b = _project(w.samples[:span], t[:span], w.mains_freq)

    amplitude = float(np.hypot(a, b))
    phase = float(np.arctan2(b, a))
    reconstructed = amplitude * np.sin(2 * np.pi * w.mains_freq * t + phase)
    return Fundamental(amplitude=amplitude, phase=phase, freq=w.mains_freq, reconstructed=reconstructed)


def residual(w: Waveform, f: Fundamental) -> Waveform:
    if len(f.reconstructed) != len(w):
        raise InvalidArgumentError(
            f"fundamental length {len(f.reconstructed)} does not match waveform length {len(w)}"
        )
    return w.with_samples(w.samples - f.reconstructed)


def harmonic_spectrum(w: Waveform, n_harmonics: int = N_HARMONICS) -> HarmonicSpectrum:
    """Amplitudes of harmonics 1..n via projection over whole periods"""
    if n_harmonics * w.mains_freq >= w.sample_rate / 2:
        raise InvalidArgumentError(
            f"harmonic {n_harmonics} ({n_harmonics * w.mains_freq} Hz) is not below Nyquist"
        )
    span = _integer_period_span(w)
    x = w.samples[:span]
    t = w.times[:span]

    amplitudes = []
    for k in range(1, n_harmonics + 1):
        a, b = _project(x, t, k * w.mains_freq)
        amplitudes.append(float(np.hypot(a, b)))
    return HarmonicSpectrum(amplitudes=tuple(amplitudes))


# Pulses

def default_pulse_threshold(r: Signal, config: DspConfig = DspConfig()) -> float:
    """Fixed threshold if configured, else max(floor, k × MAD of the residual)"""
    if config.pulse_threshold_ma is not None:
        return float(config.pulse_threshold_ma)
    mad = float(median_abs_deviation(_samples_of(r), scale=1.0))
    return max(config.pulse_threshold_floor_ma, config.pulse_mad_multiplier * mad)


def detect_pulses(r: Signal, threshold: float) -> List[Pulse]:
    """Maximal runs of |residual| > threshold, in index order"""
    if not threshold > 0:
        raise InvalidArgumentError(f"pulse threshold must be positive, got {threshold}")

    samples = _samples_of(r)
    magnitude = np.abs(samples)
    above = magnitude > threshold
    if not above.any():
        return []

    edges = np.diff(above.astype(np.int8))
    starts = list(np.flatnonzero(edges == 1) + 1)
    ends = list(np.flatnonzero(edges == -1))
    if above[0]:
        starts.insert(0, 0)
    if above[-1]:
        ends.append(len(above) - 1)

    pulses = []
    for start, end in zip(starts, ends):
        peak = start + int(np.argmax(magnitude[start:end + 1]))
        pulses.append(Pulse(
            start_index=int(start),
            end_index=int(end),
            peak_amplitude=float(magnitude[peak]),
            polarity=1 if samples[peak] >= 0 else -1,
        ))
    return pulses


# Waveform CSV

def write_waveform_csv(w: Waveform, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = (f"# sample_rate={w.sample_rate:.10g} mains_freq={w.mains_freq:.10g} "
              f"applied_voltage={w.applied_voltage:.10g}")
    with open(path, 'w') as f:
        f.write(header + "\n")
        f.writelines(f"{v:.10g}\n" for v in w.samples)
    return path


def read_waveform_csv(path) -> Waveform:
    path = Path(path)
    with open(path, 'r') as f:
        header = f.readline().strip()
        if not header.startswith('#'):
            raise WaveformFormatError(f"{path}: missing '# key=value' header line")

        meta = {}
        for token in header.lstrip('#').split():
            if '=' in token:
                key, value = token.split('=', 1)
                meta[key.strip()] = value.strip()

        missing = [k for k in HEADER_KEYS if k not in meta]
        if missing:
            raise WaveformFormatError(f"{path}: header missing {', '.join(missing)}")

        try:
            values = np.array([float(line) for line in f if line.strip()], dtype=np.float64)
            rates = {k: float(meta[k]) for k in HEADER_KEYS}
        except ValueError as e:
            raise WaveformFormatError(f"{path}: {e}") from e

    return Waveform(
        samples=values,
        sample_rate=rates['sample_rate'],
        mains_freq=rates['mains_freq'],
        applied_voltage=rates['applied_voltage'],
    )
