"""
Synthetic Leakage Current Generator
Labelled LC waveforms with controllable contamination and wetness for desk-scale
training and testing. A fixture with fixed monotonic behaviour, not a physical model:
  - fundamental amplitude grows with applied voltage, conductance and wetness
  - odd-harmonic distortion grows with conductance (stronger on dry surfaces)
  - pulse trains grow with %U50; wet pulses are small against the fundamental,
    dry-band pulses are large
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from errors import InvalidArgumentError
from signal_processing import Waveform, write_waveform_csv

logger = logging.getLogger(__name__)

CONDITIONS = ('wet', 'dry')
MANIFEST_COLUMNS = ['file', 'condition', 'conductance_us', 'applied_voltage_kv', 'true_u50_kv', 'pct_u50']

# Generator constants
LC_MA_PER_KV = 0.02
CONDUCTANCE_GAIN = 0.15          # fundamental gain per µS
WET_GAIN = 2.5
AMPLITUDE_JITTER = 0.05          # log-normal sigma
NOISE_FRACTION = 0.005
NOISE_FLOOR_MA = 0.002
PULSE_TAU_SAMPLES = 2.0
PULSE_PHASE_JITTER_S = 5e-4
REFERENCE_CONDUCTANCE_US = 18.33


@dataclass(frozen=True)
class ScenarioConfig:
    condition: str
    contamination_conductance: float   # µS
    applied_voltage: float             # kV
    true_u50: float                    # kV
    sample_rate: float = 10000.0
    duration: float = 0.2              # s
    seed: int = 0
    mains_freq: float = 50.0

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise InvalidArgumentError(f"condition must be one of {CONDITIONS}, got '{self.condition}'")
        if not self.contamination_conductance > 0:
            raise InvalidArgumentError("contamination_conductance must be positive")
        if not self.applied_voltage > 0:
            raise InvalidArgumentError("applied_voltage must be positive")
        if not self.true_u50 > self.applied_voltage:
            raise InvalidArgumentError(
                f"true_u50 {self.true_u50} kV must exceed applied_voltage {self.applied_voltage} kV"
            )
        if not self.duration * self.mains_freq >= 1:
            raise InvalidArgumentError("duration must cover at least one mains period")

    @property
    def pct_u50(self) -> float:
        return 100.0 * self.applied_voltage / self.true_u50

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


def _pulse_rate(condition: str, pct: float) -> float:
    """Expected pulses per second"""
    if condition == 'wet':
        return 50.0 + 250.0 * ((max(pct, 25.0) - 25.0) / 73.0) ** 2
    return 150.0 * (max(pct - 50.0, 0.0) / 48.0) ** 2


def _pulse_ratio_params(condition: str) -> Tuple[float, float]:
    """(median peak / fundamental, log-normal sigma)"""
    return (0.25, 0.3) if condition == 'wet' else (2.5, 0.5)


def _harmonic_ratio(condition: str, conductance: float) -> float:
    level = min(conductance / REFERENCE_CONDUCTANCE_US, 1.0)
    if condition == 'wet':
        return 0.004 + 0.008 * level
    return 0.01 + 0.03 * level


def fundamental_amplitude(cfg: ScenarioConfig) -> float:
    """Noise-free fundamental amplitude (mA) before jitter"""
    wet = WET_GAIN if cfg.condition == 'wet' else 1.0
    return LC_MA_PER_KV * cfg.applied_voltage * (1.0 + CONDUCTANCE_GAIN * cfg.contamination_conductance) * wet


def generate(cfg: ScenarioConfig) -> Tuple[Waveform, Dict]:
    """One waveform plus its labels {condition, pct_u50}; deterministic per cfg.seed"""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_samples
    t = np.arange(n) / cfg.sample_rate
    omega = 2 * np.pi * cfg.mains_freq

    amplitude = fundamental_amplitude(cfg) * float(np.exp(rng.normal(0.0, AMPLITUDE_JITTER)))
    phase = float(rng.uniform(0, 2 * np.pi))
    samples = amplitude * np.sin(omega * t + phase)

    base = _harmonic_ratio(cfg.condition, cfg.contamination_conductance)
    for k, divisor in ((3, 1.0), (5, 2.0), (7, 3.0)):
        samples += amplitude * base / divisor * np.sin(k * omega * t + float(rng.uniform(0, 2 * np.pi)))

    # Pulses cluster around the voltage peaks, polarity follows the half cycle
    n_pulses = int(rng.poisson(_pulse_rate(cfg.condition, cfg.pct_u50) * cfg.duration))
    median_ratio, spread = _pulse_ratio_params(cfg.condition)
    half_cycles = int(np.floor(cfg.duration * cfg.mains_freq * 2))
    first_peak = (np.pi / 2 - phase) % np.pi
    width = int(np.ceil(6 * PULSE_TAU_SAMPLES))
    for _ in range(n_pulses):
        k = int(rng.integers(0, max(half_cycles, 1)))
        peak_time = (first_peak + k * np.pi) / omega
        centre = int(round((peak_time + rng.normal(0.0, PULSE_PHASE_JITTER_S)) * cfg.sample_rate))
        height = amplitude * median_ratio * float(np.exp(rng.normal(0.0, spread)))
        if not 0 <= centre < n:
            continue
        lo, hi = max(centre - width, 0), min(centre + width + 1, n)
        polarity = 1.0 if np.sin(omega * t[centre] + phase) >= 0 else -1.0
        samples[lo:hi] += polarity * height * np.exp(-np.abs(np.arange(lo, hi) - centre) / PULSE_TAU_SAMPLES)

    noise_std = NOISE_FRACTION * amplitude + NOISE_FLOOR_MA
    samples = samples + rng.normal(0.0, noise_std, size=n)

    w = Waveform(samples=samples, sample_rate=cfg.sample_rate, mains_freq=cfg.mains_freq,
                 applied_voltage=cfg.applied_voltage)
    return w, {'condition': cfg.condition, 'pct_u50': cfg.pct_u50}


@dataclass(frozen=True)
class DatasetRanges:
    conductance_us: Tuple[float, float] = (1.58, 18.33)   # drawn log-uniform
    pct_u50: Tuple[float, float] = (25.0, 98.0)
    u50_clean_kv: Dict[str, float] = field(default_factory=lambda: {'wet': 110.0, 'dry': 160.0})
    contamination_coeff: float = 0.05                     # U50 = clean / (1 + coeff·G)
    sample_rate: float = 10000.0
    duration: float = 0.2
    mains_freq: float = 50.0

    def __post_init__(self):
        lo, hi = self.conductance_us
        if not 0 < lo <= hi:
            raise InvalidArgumentError(f"bad conductance range {self.conductance_us}")
        lo, hi = self.pct_u50
        if not 0 < lo <= hi <= 100:
            raise InvalidArgumentError(f"pct_u50 range {self.pct_u50} must lie in (0, 100]")
        if set(self.u50_clean_kv) != set(CONDITIONS):
            raise InvalidArgumentError("u50_clean_kv needs a 'wet' and a 'dry' value")

    def u50(self, condition: str, conductance: float) -> float:
        return self.u50_clean_kv[condition] / (1.0 + self.contamination_coeff * conductance)


@dataclass
class SyntheticCorpus:
    waveforms: List[Tuple[str, Waveform]]
    manifest: pd.DataFrame

    def __len__(self) -> int:
        return len(self.waveforms)


def scenario(index: int, condition: str, ranges: DatasetRanges, seed: int) -> ScenarioConfig:
    """Scenario `index` of a dataset; all draws come from SeedSequence([seed, index])"""
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    lo, hi = ranges.conductance_us
    conductance = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    pct = float(rng.uniform(*ranges.pct_u50))
    u50 = ranges.u50(condition, conductance)
    # pct at the top of the range would put the applied voltage on U50 itself
    voltage = min(pct, 99.999) * u50 / 100.0
    return ScenarioConfig(
        condition=condition,
        contamination_conductance=conductance,
        applied_voltage=voltage,
        true_u50=u50,
        sample_rate=ranges.sample_rate,
        duration=ranges.duration,
        seed=int(rng.integers(0, 2 ** 32)),
        mains_freq=ranges.mains_freq,
    )


def generate_dataset(n: int, ranges: DatasetRanges = DatasetRanges(), seed: int = 0,
                     out_dir=None, max_workers: int = 1) -> SyntheticCorpus:
    """n wet + n dry scenarios; writes waveform CSVs and manifest.csv when out_dir is given"""
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")

    plan = [(i, 'wet' if i < n else 'dry') for i in range(2 * n)]

    def _one(item):
        index, condition = item
        cfg = scenario(index, condition, ranges, seed)
        w, labels = generate(cfg)
        name = f"lc_{index:05d}_{condition}.csv"
        row = {
            'file': name,
            'condition': condition,
            'conductance_us': cfg.contamination_conductance,
            'applied_voltage_kv': cfg.applied_voltage,
            'true_u50_kv': cfg.true_u50,
            'pct_u50': labels['pct_u50'],
        }
        return name, w, row

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_one, plan))
    else:
        results = [_one(item) for item in plan]

    manifest = pd.DataFrame([row for _, _, row in results], columns=MANIFEST_COLUMNS)
    corpus = SyntheticCorpus(waveforms=[(name, w) for name, w, _ in results], manifest=manifest)

    if out_dir is not None:
        write_corpus(corpus, out_dir)
    logger.info(f"Generated {len(corpus)} synthetic waveforms ({n} wet + {n} dry, seed {seed})")
    return corpus


def write_corpus(corpus: SyntheticCorpus, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, w in corpus.waveforms:
        write_waveform_csv(w, out / name)
    manifest_path = out / 'manifest.csv'
    corpus.manifest.to_csv(manifest_path, index=False)
    return manifest_path


def read_manifest(path) -> pd.DataFrame:
    df = pd.read_csv(path)
    missing = [c for c in ('file', 'condition', 'pct_u50') if c not in df.columns]
    if missing:
        raise InvalidArgumentError(f"{path}: manifest lacks columns {missing}")
    return df
