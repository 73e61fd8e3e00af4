"""
LC Feature Extraction
Builds the named feature catalog and turns one waveform into a fixed-order feature vector:
residual statistics per filter (MA, ES), fundamental amplitude and its transforms,
pulse counts binned in mA and in percent of the fundamental, harmonics 1-10 and the
applied voltage
"""
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import FlashoverError, IncompatibleInputError, InvalidArgumentError
from signal_processing import (
    DspConfig,
    N_HARMONICS,
    Pulse,
    Waveform,
    default_pulse_threshold,
    detect_pulses,
    exponential_smoothing,
    extract_fundamental,
    harmonic_spectrum,
    moving_average,
    residual,
)

logger = logging.getLogger(__name__)

CATALOG_SCHEMA = 'lc-v1'

# Groups
RESIDUAL_MA = 'residual-stat-MA'
RESIDUAL_ES = 'residual-stat-ES'
FUNDAMENTAL = 'fundamental-amplitude'
PULSE_BIN_MA = 'pulse-bin-mA'
PULSE_BIN_PCT = 'pulse-bin-percent'
HARMONIC = 'harmonic'
APPLIED_VOLTAGE = 'applied-voltage'
ALL_GROUPS = (RESIDUAL_MA, RESIDUAL_ES, FUNDAMENTAL, PULSE_BIN_MA, PULSE_BIN_PCT, HARMONIC, APPLIED_VOLTAGE)

# Label columns of a training feature matrix
LABEL_CONDITION = 'label_condition'
LABEL_PCT_U50 = 'label_pct_u50'
SOURCE_COLUMN = 'source'
NON_FEATURE_COLUMNS = (LABEL_CONDITION, LABEL_PCT_U50, SOURCE_COLUMN)

# Clamping of the transforms (ln/log10/inverse of zero, overflow of exp and 10^x)
EPSILON_MA = 1e-9
TRANSFORM_CAP = 1e12

TRANSFORMS = (
    ('square', 'square'),
    ('sqrt', 'square root'),
    ('ln', 'natural log'),
    ('log10', 'common log'),
    ('exp', 'exponential function'),
    ('inverse', 'inverse proportion'),
    ('pow10', 'power of 10'),
)

PULSE_MA_EDGES = (0.0, 0.2, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 7.5, 10.0, 15.0, 20.0, np.inf)
PULSE_PCT_EDGES = (0.0, 50.0, 100.0, 200.0, 300.0, 400.0, 500.0, np.inf)


def apply_transform(name: str, x: float) -> float:
    """Named transform of a non-negative mA value, clamped so the result stays finite"""
    if name == 'square':
        return x * x
    if name == 'sqrt':
        return float(np.sqrt(max(x, 0.0)))
    if name == 'ln':
        return float(np.log(max(x, EPSILON_MA)))
    if name == 'log10':
        return float(np.log10(max(x, EPSILON_MA)))
    if name == 'inverse':
        return 1.0 / max(x, EPSILON_MA)
    if name == 'exp':
        return float(min(np.exp(min(x, np.log(TRANSFORM_CAP))), TRANSFORM_CAP))
    if name == 'pow10':
        return float(min(10.0 ** min(x, 12.0), TRANSFORM_CAP))
    raise InvalidArgumentError(f"unknown transform '{name}'")


def _edge_label(value: float) -> str:
    if np.isinf(value):
        return 'inf'
    return f"{value:g}".replace('.', 'p')


def _bin_ids(prefix: str, edges: Sequence[float]) -> List[Tuple[str, float, float]]:
    return [(f"{prefix}_{_edge_label(lo)}_{_edge_label(hi)}", lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]


@dataclass(frozen=True)
class FeatureSpec:
    feature_id: str
    description: str
    group: str


@dataclass(frozen=True)
class CatalogConfig:
    """Which feature groups the catalog carries"""
    groups: Tuple[str, ...] = ALL_GROUPS

    def __post_init__(self):
        unknown = set(self.groups) - set(ALL_GROUPS)
        if unknown:
            raise InvalidArgumentError(f"unknown feature groups: {sorted(unknown)}")

    @classmethod
    def without(cls, *groups: str) -> 'CatalogConfig':
        return cls(groups=tuple(g for g in ALL_GROUPS if g not in groups))


@dataclass(frozen=True)
class FeatureCatalog:
    entries: Tuple[FeatureSpec, ...]
    version: str = ''

    def __post_init__(self):
        ids = self.ids
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("feature ids in a catalog must be unique")
        if not self.version:
            object.__setattr__(self, 'version', catalog_version(ids))

    @property
    def ids(self) -> List[str]:
        return [e.feature_id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def index(self, feature_id: str) -> int:
        return self.ids.index(feature_id)

    def group(self, group: str) -> List[FeatureSpec]:
        return [e for e in self.entries if e.group == group]

    def to_json(self) -> List[Dict[str, str]]:
        return [{'id': e.feature_id, 'description': e.description, 'group': e.group} for e in self.entries]


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Scalar features aligned with a catalog"""
    values: np.ndarray
    catalog_version: str
    feature_ids: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, 'values', values)
        if self.feature_ids and len(self.feature_ids) != len(values):
            raise InvalidArgumentError("feature vector length does not match its ids")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("feature vector contains NaN or infinite values")

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, feature_id: str) -> float:
        return float(self.values[self.feature_ids.index(feature_id)])

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.feature_ids, self.values.tolist()))


def catalog_version(ids: Sequence[str]) -> str:
    digest = hashlib.sha1(','.join(ids).encode('utf-8')).hexdigest()[:10]
    return f"{CATALOG_SCHEMA}-{digest}"


def _residual_entries(prefix: str, label: str, group: str) -> List[FeatureSpec]:
    src = f"residual of raw signal vs fundamental of the {label}-filtered signal"
    entries = [
        FeatureSpec(f"{prefix}_resid_mean", f"mean of {src}", group),
        FeatureSpec(f"{prefix}_resid_std", f"standard deviation of {src}", group),
        FeatureSpec(f"{prefix}_resid_min", f"min of {src}", group),
        FeatureSpec(f"{prefix}_resid_max", f"max of {src}", group),
        FeatureSpec(f"{prefix}_resid_absmax", f"absolute maximum of {src}", group),
    ]
    entries += [
        FeatureSpec(f"{prefix}_resid_absmax_{name}", f"{desc} of the absolute maximum ({label})", group)
        for name, desc in TRANSFORMS
    ]
    entries += [
        FeatureSpec(f"{prefix}_resid_p{q}", f"{q}th percentile of {src}", group) for q in (25, 50, 75)
    ]
    entries += [
        FeatureSpec(f"{prefix}_pulse_mean", f"mean peak amplitude of pulses on the {label} residual", group),
        FeatureSpec(f"{prefix}_pulse_count", f"number of pulses on the {label} residual", group),
    ]
    return entries


def build_catalog(config: CatalogConfig = CatalogConfig()) -> FeatureCatalog:
    """Deterministic catalog; group order is fixed regardless of config order"""
    enabled = set(config.groups)
    entries: List[FeatureSpec] = []

    if RESIDUAL_MA in enabled:
        entries += _residual_entries('ma', 'MA', RESIDUAL_MA)
    if RESIDUAL_ES in enabled:
        entries += _residual_entries('es', 'ES', RESIDUAL_ES)
    if FUNDAMENTAL in enabled:
        entries.append(FeatureSpec('fund_amp', 'amplitude of the fundamental of the MA-filtered signal', FUNDAMENTAL))
        entries += [
            FeatureSpec(f"fund_amp_{name}", f"{desc} of the fundamental amplitude", FUNDAMENTAL)
            for name, desc in TRANSFORMS
        ]
    if PULSE_BIN_MA in enabled:
        entries += [
            FeatureSpec(fid, f"pulses with peak in [{lo:g}, {hi:g}) mA", PULSE_BIN_MA)
            for fid, lo, hi in _bin_ids('pulse_ma', PULSE_MA_EDGES)
        ]
    if PULSE_BIN_PCT in enabled:
        entries += [
            FeatureSpec(fid, f"pulses with peak in [{lo:g}, {hi:g}) % of the fundamental amplitude", PULSE_BIN_PCT)
            for fid, lo, hi in _bin_ids('pulse_pct', PULSE_PCT_EDGES)
        ]
    if HARMONIC in enabled:
        entries += [
            FeatureSpec(f"harmonic_{k:02d}", f"amplitude of harmonic {k}", HARMONIC)
            for k in range(1, N_HARMONICS + 1)
        ]
    if APPLIED_VOLTAGE in enabled:
        entries.append(FeatureSpec('applied_voltage_kv', 'applied phase-to-ground voltage (kV)', APPLIED_VOLTAGE))

    return FeatureCatalog(entries=tuple(entries))


def bin_counts(values: Sequence[float], edges: Sequence[float]) -> np.ndarray:
    """Counts per half-open bin [edges[i], edges[i+1])"""
    counts = np.zeros(len(edges) - 1, dtype=np.int64)
    if len(values) == 0:
        return counts
    idx = np.searchsorted(np.asarray(edges), np.asarray(values, dtype=np.float64), side='right') - 1
    idx = np.clip(idx, 0, len(counts) - 1)
    return np.bincount(idx, minlength=len(counts))


def _residual_features(prefix: str, resid: np.ndarray, pulses: List[Pulse]) -> Dict[str, float]:
    absmax = float(max(abs(resid.min()), abs(resid.max())))
    feats = {
        f"{prefix}_resid_mean": float(np.mean(resid)),
        f"{prefix}_resid_std": float(np.std(resid)),
        f"{prefix}_resid_min": float(resid.min()),
        f"{prefix}_resid_max": float(resid.max()),
        f"{prefix}_resid_absmax": absmax,
    }
    for name, _ in TRANSFORMS:
        feats[f"{prefix}_resid_absmax_{name}"] = apply_transform(name, absmax)
    for q, value in zip((25, 50, 75), np.percentile(resid, [25, 50, 75], method='linear')):
        feats[f"{prefix}_resid_p{q}"] = float(value)
    peaks = [p.peak_amplitude for p in pulses]
    feats[f"{prefix}_pulse_mean"] = float(np.mean(peaks)) if peaks else 0.0
    feats[f"{prefix}_pulse_count"] = float(len(peaks))
    return feats


def compute_features(w: Waveform, dsp_config: DspConfig = DspConfig()) -> Dict[str, float]:
    """Every feature the full catalog knows, keyed by id"""
    feats: Dict[str, float] = {}

    filtered = {
        'ma': moving_average(w, dsp_config.ma_window),
        'es': exponential_smoothing(w, dsp_config.es_alpha),
    }
    fundamentals = {name: extract_fundamental(sig) for name, sig in filtered.items()}

    pulses_by_filter = {}
    for name, fund in fundamentals.items():
        resid = residual(w, fund)
        threshold = default_pulse_threshold(resid, dsp_config)
        pulses = detect_pulses(resid, threshold)
        pulses_by_filter[name] = pulses
        feats.update(_residual_features(name, resid.samples, pulses))

    fund_amp = fundamentals['ma'].amplitude
    feats['fund_amp'] = fund_amp
    for name, _ in TRANSFORMS:
        feats[f"fund_amp_{name}"] = apply_transform(name, fund_amp)

    # Bins use the MA residual pulses, relative to the MA fundamental
    peaks = np.array([p.peak_amplitude for p in pulses_by_filter['ma']], dtype=np.float64)
    for (fid, _, _), count in zip(_bin_ids('pulse_ma', PULSE_MA_EDGES), bin_counts(peaks, PULSE_MA_EDGES)):
        feats[fid] = float(count)

    if fund_amp > 0:
        pct = 100.0 * peaks / fund_amp
    else:
        pct = np.full(len(peaks), np.inf)  # zero fundamental: every pulse lands in the open-ended bin
    for (fid, _, _), count in zip(_bin_ids('pulse_pct', PULSE_PCT_EDGES), bin_counts(pct, PULSE_PCT_EDGES)):
        feats[fid] = float(count)

    spectrum = harmonic_spectrum(w)
    for k in range(1, N_HARMONICS + 1):
        feats[f"harmonic_{k:02d}"] = spectrum.amplitude(k)

    feats['applied_voltage_kv'] = float(w.applied_voltage)
    return feats


def extract(w: Waveform, catalog: FeatureCatalog, dsp_config: DspConfig = DspConfig()) -> FeatureVector:
    feats = compute_features(w, dsp_config)
    values = np.array([feats[fid] for fid in catalog.ids], dtype=np.float64)
    return FeatureVector(values=values, catalog_version=catalog.version, feature_ids=tuple(catalog.ids))


def extract_matrix(waveforms: Iterable[Tuple[str, Waveform]], catalog: FeatureCatalog,
                   dsp_config: DspConfig = DspConfig(), max_workers: int = 1,
                   errors: Optional[Dict[str, str]] = None) -> pd.DataFrame:
    """
    One row per (source, waveform); rows keep input order.
    With an errors dict, waveforms that fail extraction are skipped and
    recorded as source → message instead of raising.
    """
    items = list(waveforms)

    def _row(item):
        if errors is None:
            return extract(item[1], catalog, dsp_config).values
        try:
            return extract(item[1], catalog, dsp_config).values
        except FlashoverError as e:
            return e

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_row, items))
    else:
        results = [_row(item) for item in items]

    rows, sources = [], []
    for (source, _), result in zip(items, results):
        if isinstance(result, Exception):
            errors[source] = str(result)
            logger.warning(f"Skipping {source}: {result}")
            continue
        rows.append(result)
        sources.append(source)

    df = pd.DataFrame(rows, columns=catalog.ids) if rows else pd.DataFrame(columns=catalog.ids)
    df[SOURCE_COLUMN] = sources
    logger.info(f"Extracted {len(df)} feature rows ({len(catalog)} features, catalog {catalog.version})")
    return df


# Feature matrix / catalog files

def feature_columns(df: pd.DataFrame) -> List[str]:
    return [c for c in df.columns if c not in NON_FEATURE_COLUMNS]


def attach_labels(df: pd.DataFrame, labels: pd.DataFrame) -> pd.DataFrame:
    """Join condition / %U50 labels (manifest columns file, condition, pct_u50) onto rows by source file name"""
    by_file = labels.set_index(labels['file'].map(lambda p: Path(str(p)).name))
    names = df[SOURCE_COLUMN].map(lambda p: Path(str(p)).name)
    missing = sorted(set(names) - set(by_file.index))
    if missing:
        raise InvalidArgumentError(f"no labels for {missing[:5]}")
    out = df.copy()
    out[LABEL_CONDITION] = by_file.loc[names, 'condition'].to_numpy()
    out[LABEL_PCT_U50] = by_file.loc[names, 'pct_u50'].to_numpy(dtype=np.float64)
    return out


def check_catalog(df: pd.DataFrame, catalog: FeatureCatalog):
    missing = [fid for fid in catalog.ids if fid not in df.columns]
    if missing:
        raise IncompatibleInputError(f"feature matrix lacks catalog features: {missing[:5]}")


def write_feature_matrix(df: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)
    return path


def read_feature_matrix(path) -> pd.DataFrame:
    df = pd.read_csv(path)
    if LABEL_CONDITION in df.columns:
        df[LABEL_CONDITION] = df[LABEL_CONDITION].astype('object')
    return df


def write_catalog_json(catalog: FeatureCatalog, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(catalog.to_json(), f, indent=2)
    return path


def read_catalog_json(path) -> FeatureCatalog:
    with open(path, 'r') as f:
        data = json.load(f)
    return FeatureCatalog(entries=tuple(FeatureSpec(d['id'], d['description'], d['group']) for d in data))


def catalog_from_columns(columns: Sequence[str]) -> FeatureCatalog:
    """Sub-catalog of the full catalog restricted to the given feature columns, in catalog order"""
    full = build_catalog()
    wanted = set(columns)
    entries = tuple(e for e in full.entries if e.feature_id in wanted)
    unknown = wanted - {e.feature_id for e in entries}
    if unknown:
        raise IncompatibleInputError(f"columns not in the feature catalog: {sorted(unknown)[:5]}")
    return FeatureCatalog(entries=entries)
