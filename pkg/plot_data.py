"""
Plot Data
Plot-ready tables for the waveform / pulse / spectrum view, LC amplitude versus
applied voltage per contamination level and the top-feature relevance bars,
with optional matplotlib rendering
"""
import logging
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import pandas as pd

from feature_extraction import LABEL_CONDITION, SOURCE_COLUMN
from mrmr_selection import SelectionResult
from signal_processing import (
    DspConfig,
    Waveform,
    default_pulse_threshold,
    detect_pulses,
    extract_fundamental,
    harmonic_spectrum,
    moving_average,
    residual,
)

logger = logging.getLogger(__name__)


def waveform_view(w: Waveform, dsp_config: DspConfig = DspConfig()) -> Dict[str, pd.DataFrame]:
    """Time series (raw, filtered, fundamental, residual, pulse mask) and harmonic amplitudes"""
    filtered = moving_average(w, dsp_config.ma_window)
    fundamental = extract_fundamental(filtered)
    resid = residual(w, fundamental)
    pulses = detect_pulses(resid, default_pulse_threshold(resid, dsp_config))

    in_pulse = np.zeros(len(w), dtype=bool)
    for p in pulses:
        in_pulse[p.start_index:p.end_index + 1] = True

    series = pd.DataFrame({
        'time_s': w.times,
        'raw_ma': w.samples,
        'ma_filtered_ma': filtered.samples,
        'fundamental_ma': fundamental.reconstructed,
        'residual_ma': resid.samples,
        'in_pulse': in_pulse,
    })
    spectrum = harmonic_spectrum(w)
    harmonics = pd.DataFrame({
        'harmonic': np.arange(1, len(spectrum.amplitudes) + 1),
        'amplitude_ma': spectrum.amplitudes,
    })
    return {'waveform': series, 'spectrum': harmonics}


def amplitude_vs_voltage(matrix: pd.DataFrame, manifest: Optional[pd.DataFrame] = None) -> pd.DataFrame:
    """Fundamental amplitude against applied voltage, tagged with condition and conductance when known"""
    out = pd.DataFrame({
        'source': matrix[SOURCE_COLUMN].to_numpy() if SOURCE_COLUMN in matrix else np.arange(len(matrix)),
        'applied_voltage_kv': matrix['applied_voltage_kv'].to_numpy(),
        'fund_amp_ma': matrix['fund_amp'].to_numpy(),
        'condition': matrix[LABEL_CONDITION].to_numpy() if LABEL_CONDITION in matrix else 'n/a',
        'conductance_us': np.nan,
    })
    if manifest is not None and 'conductance_us' in manifest.columns:
        by_file = manifest.set_index(manifest['file'].map(lambda p: Path(str(p)).name))['conductance_us']
        names = out['source'].map(lambda p: Path(str(p)).name)
        out['conductance_us'] = names.map(by_file).to_numpy()
    return out.sort_values(['condition', 'applied_voltage_kv'], kind='mergesort').reset_index(drop=True)


def top_features(ranking: SelectionResult, n: int = 15) -> pd.DataFrame:
    ids = ranking.ranked_ids[:n]
    return pd.DataFrame({
        'rank': np.arange(1, len(ids) + 1),
        'feature_id': ids,
        'relevance': [ranking.relevance[fid] for fid in ids],
        'mrmr_score': ranking.scores[:len(ids)],
    })


def write_tables(tables: Dict[str, pd.DataFrame], out_dir) -> Dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, df in tables.items():
        paths[name] = out / f"plot_{name}.csv"
        df.to_csv(paths[name], index=False)
    return paths


def render_figures(tables: Dict[str, pd.DataFrame], out_dir) -> Dict[str, Path]:
    """One PNG per known table"""
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}

    if 'waveform' in tables:
        df = tables['waveform']
        fig, ax = plt.subplots(figsize=(10, 4))
        ax.plot(df['time_s'], df['raw_ma'], color='black', linewidth=0.5, label='LC')
        ax.plot(df['time_s'], df['fundamental_ma'], color='tab:blue', linewidth=1, label='fundamental')
        ax.plot(df['time_s'], df['residual_ma'], color='tab:orange', linewidth=0.5, label='residual')
        pulse = df[df['in_pulse']]
        ax.plot(pulse['time_s'], pulse['residual_ma'], 'r.', markersize=2, label='pulse')
        ax.set_xlabel('time (s)')
        ax.set_ylabel('current (mA)')
        ax.legend(loc='upper right')
        written['waveform'] = _save(fig, out / 'waveform.png')

    if 'spectrum' in tables:
        df = tables['spectrum']
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar(df['harmonic'], df['amplitude_ma'], color='tab:blue')
        ax.set_xlabel('harmonic')
        ax.set_ylabel('amplitude (mA)')
        written['spectrum'] = _save(fig, out / 'spectrum.png')

    if 'amplitude' in tables:
        df = tables['amplitude']
        fig, ax = plt.subplots(figsize=(6, 4))
        for condition, group in df.groupby('condition'):
            scatter = ax.scatter(group['applied_voltage_kv'], group['fund_amp_ma'], s=8,
                                 c=group['conductance_us'] if group['conductance_us'].notna().all() else None,
                                 marker='o' if condition == 'wet' else '^', label=str(condition))
        if df['conductance_us'].notna().all():
            fig.colorbar(scatter, ax=ax, label='conductance (µS)')
        ax.set_xlabel('applied voltage (kV)')
        ax.set_ylabel('LC fundamental amplitude (mA)')
        ax.legend()
        written['amplitude'] = _save(fig, out / 'amplitude_vs_voltage.png')

    if 'top_features' in tables:
        df = tables['top_features']
        fig, ax = plt.subplots(figsize=(6, max(3, 0.3 * len(df))))
        ax.barh(df['feature_id'][::-1], df['relevance'][::-1], color='tab:green')
        ax.set_xlabel('mutual information (nats)')
        written['top_features'] = _save(fig, out / 'top_features.png')

    return written


def _save(fig, path: Path) -> Path:
    import matplotlib.pyplot as plt
    fig.tight_layout()
    fig.savefig(path, format='png', dpi=120)
    plt.close(fig)
    logger.info(f"Figure saved to {path}")
    return path
