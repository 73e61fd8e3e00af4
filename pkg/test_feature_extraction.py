"""
Test feature catalog construction, per-waveform extraction and matrix/catalog files
"""
import numpy as np
import pandas as pd
import pytest

from errors import IncompatibleInputError, InvalidArgumentError
from feature_extraction import (
    LABEL_CONDITION,
    LABEL_PCT_U50,
    PULSE_BIN_PCT,
    PULSE_MA_EDGES,
    SOURCE_COLUMN,
    CatalogConfig,
    FeatureVector,
    apply_transform,
    attach_labels,
    bin_counts,
    build_catalog,
    catalog_from_columns,
    compute_features,
    extract,
    extract_matrix,
    feature_columns,
    read_catalog_json,
    read_feature_matrix,
    write_catalog_json,
    write_feature_matrix,
)
from signal_processing import DspConfig, Waveform

FS = 10000.0


def sine(amplitude=5.0, periods=10, voltage=1.0, extra=None):
    n = int(round(periods * FS / 50.0))
    t = np.arange(n) / FS
    x = amplitude * np.sin(2 * np.pi * 50 * t)
    if extra is not None:
        x = x + extra
    return Waveform(samples=x, sample_rate=FS, applied_voltage=voltage)


def test_default_catalog_size_and_groups():
    catalog = build_catalog()
    assert len(catalog) == 72
    ids = catalog.ids
    assert len(set(ids)) == len(ids)
    assert ids.count('applied_voltage_kv') == 1
    assert len([i for i in ids if i.startswith('harmonic_')]) == 10
    assert len([i for i in ids if i.startswith('pulse_ma_')]) == 12
    assert len([i for i in ids if i.startswith('pulse_pct_')]) == 7
    assert len([i for i in ids if i.startswith('ma_')]) == 17
    assert len([i for i in ids if i.startswith('es_')]) == 17
    assert len([i for i in ids if i.startswith('fund_amp')]) == 8


def test_catalog_is_deterministic_and_versioned():
    a, b = build_catalog(), build_catalog()
    assert a.ids == b.ids
    assert a.version == b.version
    assert a.version.startswith('lc-v1-')

    pruned = build_catalog(CatalogConfig.without(PULSE_BIN_PCT))
    assert len(pruned) == 65
    assert pruned.version != a.version


def test_catalog_rejects_unknown_group():
    with pytest.raises(InvalidArgumentError):
        CatalogConfig(groups=('not-a-group',))


def test_clean_sine_features():
    catalog = build_catalog()
    fv = extract(sine(5.0, voltage=63.5), catalog)
    assert len(fv) == len(catalog)
    assert fv.catalog_version == catalog.version
    assert fv['fund_amp'] == pytest.approx(5.0, rel=2e-3)  # slight MA attenuation
    assert fv['applied_voltage_kv'] == 63.5
    for fid in catalog.ids:
        if fid.startswith('pulse_') or fid.endswith('pulse_count'):
            assert fv[fid] == 0.0, fid
    assert fv['harmonic_01'] == pytest.approx(5.0, abs=1e-6)
    for k in range(2, 11):
        assert fv[f'harmonic_{k:02d}'] < 1e-6


def test_bin_counts_by_hand():
    counts = bin_counts([0.3, 1.5, 25.0], PULSE_MA_EDGES)
    expected = np.zeros(12, dtype=int)
    expected[1] = 1   # [0.2, 0.5)
    expected[3] = 1   # [1, 2)
    expected[11] = 1  # [20, inf)
    assert np.array_equal(counts, expected)
    # half-open bins: an edge value belongs to the bin it opens
    assert bin_counts([0.5], PULSE_MA_EDGES)[2] == 1
    assert bin_counts([], PULSE_MA_EDGES).sum() == 0


def test_pulses_land_in_ma_and_percent_bins():
    base = sine(2.0).samples
    spikes = np.zeros(len(base))
    spikes[[301, 905, 1507]] = [0.3, 1.5, 25.0]
    w = sine(2.0, extra=spikes)
    feats = compute_features(w, DspConfig(pulse_threshold_ma=0.25))
    assert feats['ma_pulse_count'] == 3
    assert feats['pulse_ma_0p2_0p5'] == 1
    assert feats['pulse_ma_1_2'] == 1
    assert feats['pulse_ma_20_inf'] == 1
    # relative to a ~2 mA fundamental: ~15 %, ~75 %, ~1250 %
    assert feats['pulse_pct_0_50'] == 1
    assert feats['pulse_pct_50_100'] == 1
    assert feats['pulse_pct_500_inf'] == 1


def test_zero_fundamental_sends_pulses_to_open_bin():
    # equal spikes half a period apart cancel in the projection
    x = np.zeros(2000)
    x[[500, 600]] = 3.0
    feats = compute_features(Waveform(samples=x, sample_rate=FS), DspConfig(pulse_threshold_ma=1.0))
    assert feats['fund_amp'] < 1e-9
    assert feats['ma_pulse_count'] == 2
    assert feats['pulse_pct_500_inf'] == 2
    assert sum(v for k, v in feats.items() if k.startswith('pulse_pct_')) == 2


def test_transforms_are_finite():
    for name in ('square', 'sqrt', 'ln', 'log10', 'exp', 'inverse', 'pow10'):
        for x in (0.0, 1e-12, 1.0, 50.0, 1e6):
            assert np.isfinite(apply_transform(name, x)), (name, x)
    assert apply_transform('square', 3.0) == 9.0
    assert apply_transform('ln', np.e) == pytest.approx(1.0)


def test_feature_vector_rejects_nan():
    with pytest.raises(InvalidArgumentError):
        FeatureVector(values=np.array([1.0, np.nan]), catalog_version='x', feature_ids=('a', 'b'))


def test_extract_matrix_rows_and_files(tmp_path):
    catalog = build_catalog()
    items = [(f"w{i}.csv", sine(1.0 + i, voltage=10.0 * (i + 1))) for i in range(3)]
    df = extract_matrix(items, catalog)
    assert len(df) == 3
    assert list(df[SOURCE_COLUMN]) == ['w0.csv', 'w1.csv', 'w2.csv']
    assert feature_columns(df) == catalog.ids

    threaded = extract_matrix(items, catalog, max_workers=3)
    pd.testing.assert_frame_equal(df, threaded)

    path = write_feature_matrix(df, tmp_path / 'features.csv')
    back = read_feature_matrix(path)
    assert list(back.columns) == list(df.columns)
    assert np.allclose(back[catalog.ids].to_numpy(), df[catalog.ids].to_numpy())

    again = write_feature_matrix(extract_matrix(items, catalog), tmp_path / 'again.csv')
    assert again.read_bytes() == path.read_bytes()


def test_catalog_json_round_trip(tmp_path):
    catalog = build_catalog(CatalogConfig.without(PULSE_BIN_PCT))
    back = read_catalog_json(write_catalog_json(catalog, tmp_path / 'catalog.json'))
    assert back.ids == catalog.ids
    assert back.version == catalog.version


def test_catalog_from_columns():
    catalog = build_catalog()
    sub = catalog_from_columns(list(reversed(catalog.ids)))
    assert sub.ids == catalog.ids
    assert sub.version == catalog.version
    with pytest.raises(IncompatibleInputError):
        catalog_from_columns(['fund_amp', 'bogus_feature'])


def test_attach_labels_by_file_name():
    df = pd.DataFrame({'fund_amp': [1.0, 2.0], SOURCE_COLUMN: ['a.csv', 'b.csv']})
    manifest = pd.DataFrame({'file': ['b.csv', 'a.csv'], 'condition': ['dry', 'wet'], 'pct_u50': [40.0, 80.0]})
    out = attach_labels(df, manifest)
    assert list(out[LABEL_CONDITION]) == ['wet', 'dry']
    assert list(out[LABEL_PCT_U50]) == [80.0, 40.0]

    with pytest.raises(InvalidArgumentError):
        attach_labels(pd.DataFrame({SOURCE_COLUMN: ['c.csv']}), manifest)


def spiked(seed, amplitude=2.0, n_spikes=6):
    rng = np.random.default_rng(seed)
    base = sine(amplitude).samples
    extra = rng.normal(0, 0.02, size=len(base))
    positions = rng.choice(np.arange(50, len(base) - 50), size=n_spikes, replace=False)
    extra[positions] += rng.choice([-1.0, 1.0], size=n_spikes) * rng.uniform(0.3, 30.0, size=n_spikes)
    return sine(amplitude, voltage=20.0, extra=extra)


def test_pulse_bins_sum_to_pulse_count():
    for seed in range(6):
        feats = compute_features(spiked(seed))
        ma_bins = [v for k, v in feats.items() if k.startswith('pulse_ma_')]
        pct_bins = [v for k, v in feats.items() if k.startswith('pulse_pct_')]
        assert len(ma_bins) == 12 and len(pct_bins) == 7
        assert sum(ma_bins) == feats['ma_pulse_count']
        assert sum(pct_bins) == feats['ma_pulse_count']
        assert feats['ma_pulse_count'] > 0


def test_transform_features_agree_with_their_source():
    w = sine(2.0, voltage=20.0, extra=np.where(np.arange(2000) == 640, 3.0, 0.0))
    fv = extract(w, build_catalog())
    for source in ('ma_resid_absmax', 'es_resid_absmax', 'fund_amp'):
        x = fv[source]
        assert 1e-3 < x < 20.0, source
        assert fv[f"{source}_square"] == pytest.approx(x ** 2, rel=1e-12)
        assert fv[f"{source}_sqrt"] == pytest.approx(np.sqrt(x), rel=1e-12)
        assert fv[f"{source}_ln"] == pytest.approx(np.log(x), rel=1e-12)
        assert fv[f"{source}_log10"] == pytest.approx(np.log10(x), rel=1e-12)
        assert fv[f"{source}_exp"] == pytest.approx(np.exp(x), rel=1e-12)
        assert fv[f"{source}_inverse"] == pytest.approx(1.0 / x, rel=1e-12)
        assert fv[f"{source}_pow10"] == pytest.approx(10.0 ** x, rel=1e-12)


@pytest.mark.parametrize('scale', [2.0, 0.5, 3.0])
def test_current_scaling(scale):
    w = spiked(3)
    base = compute_features(w, DspConfig(pulse_threshold_ma=0.25))
    scaled = compute_features(w.with_samples(scale * w.samples), DspConfig(pulse_threshold_ma=0.25 * scale))

    stats = ['fund_amp']
    for prefix in ('ma', 'es'):
        stats += [f"{prefix}_resid_{name}" for name in ('mean', 'std', 'min', 'max', 'absmax', 'p25', 'p50', 'p75')]
        stats.append(f"{prefix}_pulse_mean")
    for fid in stats:
        assert scaled[fid] == pytest.approx(scale * base[fid], rel=1e-9, abs=1e-12), fid

    for fid in base:
        if fid.startswith('pulse_pct_') or fid.endswith('_pulse_count'):
            assert scaled[fid] == base[fid], fid


def test_extract_matrix_collects_per_waveform_errors():
    catalog = build_catalog()
    # accepted by the reader, but the 10th harmonic sits exactly on Nyquist
    edge = Waveform(samples=np.sin(2 * np.pi * 50 * np.arange(200) / 1000.0), sample_rate=1000.0)
    items = [('good.csv', sine(1.0)), ('edge.csv', edge), ('also_good.csv', sine(2.0))]

    with pytest.raises(InvalidArgumentError):
        extract_matrix(items, catalog)

    errors = {}
    df = extract_matrix(items, catalog, errors=errors)
    assert list(df[SOURCE_COLUMN]) == ['good.csv', 'also_good.csv']
    assert list(errors) == ['edge.csv']
    assert 'Nyquist' in errors['edge.csv']

    threaded_errors = {}
    threaded = extract_matrix(items, catalog, max_workers=3, errors=threaded_errors)
    pd.testing.assert_frame_equal(df, threaded)
    assert threaded_errors == errors
