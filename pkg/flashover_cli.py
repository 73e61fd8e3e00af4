"""
Flashover Estimation CLI
generate → extract → rank → train → predict / assess, plus sweep and report

Exit codes: 0 success, 1 validation failure, 2 I/O failure
"""
import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from assessment_logger import AssessmentLogger
from condition_assessment import assess_prediction
from config.config import ASSESSMENT_LOG_DIR, LOG_FILE, LOG_LEVEL, OUTPUT_DIR
from config.flashover_config import FlashoverConfig
from config.run_manifest import RunManifest
from errors import FlashoverError, IncompatibleInputError, InvalidArgumentError
from evaluation import (
    TASKS,
    SWEEP_MODES,
    SplitSpec,
    SweepReport,
    apply_voltage_floor,
    evaluate_task,
    fit_task,
    rank_task,
    run_sweep,
    split,
    task_data,
)
from feature_extraction import (
    CatalogConfig,
    FeatureVector,
    attach_labels,
    build_catalog,
    catalog_from_columns,
    extract,
    extract_matrix,
    feature_columns,
    read_feature_matrix,
    write_catalog_json,
    write_feature_matrix,
)
from gradient_boosting import Hyperparameters, load_model, predict, predict_matrix, save_model
from hyperparameter_search import random_search, save_results
from mrmr_selection import MrmrConfig, mrmr_rank, read_ranking_report, write_ranking_report
from plot_data import amplitude_vs_voltage, render_figures, top_features, waveform_view, write_tables
from signal_processing import DspConfig, read_waveform_csv
from synthetic_data import DatasetRanges, generate_dataset, read_manifest

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = {'classification': 20, 'regression-wet': 10, 'regression-dry': 10}


def setup_logging(level: str = LOG_LEVEL, log_file: Optional[str] = LOG_FILE):
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s'
    )
    if log_file:
        root = logging.getLogger()
        target = os.path.abspath(log_file)
        if not any(getattr(h, 'baseFilename', None) == target for h in root.handlers):
            os.makedirs(os.path.dirname(target), exist_ok=True)
            handler = logging.FileHandler(target)
            handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
            root.addHandler(handler)


def banner(title: str):
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


# Shared helpers

def _run_manifest(args) -> RunManifest:
    manifest = RunManifest.load(args.manifest) if args.manifest else RunManifest()
    manifest.command = args.command
    if args.seed is not None:
        manifest.seed = args.seed
    manifest.outputs = []
    return manifest


def _dsp(manifest: RunManifest) -> DspConfig:
    return DspConfig.from_dict(manifest.dsp_config)


def _catalog(manifest: RunManifest):
    config = CatalogConfig(groups=tuple(manifest.catalog_groups)) if manifest.catalog_groups else CatalogConfig()
    return build_catalog(config)


def _mrmr(manifest: RunManifest) -> MrmrConfig:
    return MrmrConfig(**{k: v for k, v in manifest.mrmr_config.items() if k in ('bins', 'redundancy_floor')})


def _split_spec(manifest: RunManifest) -> SplitSpec:
    return SplitSpec(train_fraction=manifest.train_fraction, seed=manifest.split_seed)


def _finish(manifest: RunManifest, out_dir: Path, outputs: List[Path]) -> Path:
    manifest.outputs = sorted(str(p) for p in outputs)
    return manifest.save(out_dir / f"run_manifest_{manifest.command}.json")


def _load_hp(args, task: str, seed: int) -> Hyperparameters:
    if getattr(args, 'hp_file', None):
        with open(args.hp_file, 'r') as f:
            data = json.load(f)
        if task in data:
            data = data[task]
        objective = 'logistic' if task == 'classification' else 'squared'
        return Hyperparameters.from_dict({**data, 'objective': objective, 'seed': seed})
    preset = getattr(args, 'preset', None) or FlashoverConfig.TASK_PRESETS[task]
    return Hyperparameters.preset(preset, seed=seed)


def _collect_waveform_files(paths: List[str]) -> List[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += [f for f in sorted(p.glob('*.csv')) if f.name != 'manifest.csv']
        else:
            files.append(p)
    return files


# Commands

def cmd_generate(args, manifest: RunManifest, out_dir: Path) -> int:
    ranges = DatasetRanges(duration=args.duration, sample_rate=args.sample_rate)
    corpus = generate_dataset(args.n, ranges, seed=manifest.seed, out_dir=out_dir / 'waveforms',
                              max_workers=args.workers)
    banner(f"🧪 GENERATED {len(corpus)} SYNTHETIC WAVEFORMS")
    print(corpus.manifest.groupby('condition')['pct_u50'].describe().to_string())
    outputs = [out_dir / 'waveforms' / 'manifest.csv'] + [out_dir / 'waveforms' / n for n, _ in corpus.waveforms]
    _finish(manifest, out_dir, outputs)
    return 0


def cmd_extract(args, manifest: RunManifest, out_dir: Path) -> int:
    catalog = _catalog(manifest)
    dsp = _dsp(manifest)

    items, paths, errors = [], {}, {}
    for path in _collect_waveform_files(args.waveforms):
        try:
            items.append((path.name, read_waveform_csv(path)))
            paths[path.name] = str(path)
        except (FlashoverError, OSError) as e:
            errors[str(path)] = str(e)
            logger.warning(f"Skipping {path}: {e}")

    extract_errors: Dict[str, str] = {}
    matrix = extract_matrix(items, catalog, dsp, max_workers=args.workers, errors=extract_errors)
    errors.update({paths[name]: message for name, message in extract_errors.items()})
    if args.labels:
        matrix = attach_labels(matrix, read_manifest(args.labels))

    matrix_path = out_dir / args.output
    errors_path = matrix_path.parent / 'extract_errors.json'
    outputs = [write_feature_matrix(matrix, matrix_path),
               write_catalog_json(catalog, matrix_path.parent / 'catalog.json')]
    manifest.catalog_version = catalog.version

    banner(f"📈 EXTRACTED {len(matrix)} ROWS x {len(catalog)} FEATURES")
    print(f"Catalog version: {catalog.version}")
    if errors:
        outputs.append(errors_path)
        with open(errors_path, 'w') as f:
            json.dump(errors, f, indent=2, sort_keys=True)
        print(f"❌ {len(errors)} file(s) failed, see extract_errors.json")
    _finish(manifest, out_dir, outputs)
    return 1 if errors else 0


def _matrix(path, manifest: RunManifest) -> pd.DataFrame:
    df = read_feature_matrix(path)
    if not feature_columns(df):
        raise InvalidArgumentError(f"{path} has no feature columns")
    return apply_voltage_floor(df, manifest.min_voltage_kv)


def cmd_rank(args, manifest: RunManifest, out_dir: Path) -> int:
    df = _matrix(args.matrix, manifest)
    rows, y = task_data(df, args.task)
    kind = 'categorical' if args.task == 'classification' else 'continuous'
    config = MrmrConfig(bins=_mrmr(manifest).bins, redundancy_floor=_mrmr(manifest).redundancy_floor,
                        target_kind=kind)
    ranking = mrmr_rank(rows[feature_columns(rows)], y, args.top_k or 'all', config, max_workers=args.workers)
    path = write_ranking_report(ranking, out_dir / f"ranking_{args.task}.json")

    banner(f"🏅 MRMR RANKING ({args.task})")
    for i, (fid, score) in enumerate(zip(ranking.ranked_ids[:20], ranking.scores), start=1):
        print(f"{i:3d}. {fid:32s} score={score:.4f} MI={ranking.relevance[fid]:.4f}")
    _finish(manifest, out_dir, [path])
    return 0


def cmd_train(args, manifest: RunManifest, out_dir: Path) -> int:
    df = _matrix(args.matrix, manifest)
    task = args.task
    top_k = args.top_k or DEFAULT_TOP_K[task]
    catalog_version = catalog_from_columns(feature_columns(df)).version

    rows, _ = task_data(df, task)
    train_df, test_df = split(rows, _split_spec(manifest))
    hp = _load_hp(args, task, manifest.seed)
    outputs = []

    if args.search_trials:
        ranking = rank_task(train_df, task, _mrmr(manifest))
        inner_train, inner_val = split(train_df, SplitSpec(seed=manifest.seed))
        selected = ranking.top(min(top_k, len(ranking.ranked_ids)))
        _, y_inner = task_data(inner_train, task)
        _, y_val = task_data(inner_val, task)
        trials = random_search(inner_train[selected], y_inner, inner_val[selected], y_val,
                               hp.objective, trials=args.search_trials, seed=manifest.seed)
        outputs.append(out_dir / f"search_{task}.csv")
        save_results(trials, str(outputs[-1]))
        hp = trials[0].hyperparameters

    model, ranking = fit_task(train_df, task, top_k, hp, _mrmr(manifest), catalog_version=catalog_version)
    model.metrics = evaluate_task(model, test_df, task)

    model_path = save_model(model, out_dir / f"model_{task}.json")
    outputs += [model_path, write_ranking_report(ranking, out_dir / f"ranking_{task}.json")]
    manifest.catalog_version = catalog_version
    manifest.model_paths[task] = str(model_path)

    banner(f"🌲 TRAINED {task.upper()} MODEL")
    hp_used = model.hyperparameters
    print(f"Trees: {hp_used.n_estimators}  depth: {hp_used.max_depth}  lr: {hp_used.learning_rate}  "
          f"subsample: {hp_used.subsample}  colsample: {hp_used.colsample_bytree}")
    print(f"Features ({len(model.selected_feature_ids)}): {', '.join(model.selected_feature_ids[:10])}")
    for name, value in model.metrics.items():
        print(f"  {name}: {value:.4f}" if isinstance(value, float) else f"  {name}: {value}")
    _finish(manifest, out_dir, outputs)
    return 0


def cmd_predict(args, manifest: RunManifest, out_dir: Path) -> int:
    df = read_feature_matrix(args.matrix)
    model = load_model(args.model)
    expected = model.catalog_version
    if expected and catalog_from_columns(feature_columns(df)).version != expected:
        raise IncompatibleInputError(f"matrix catalog differs from the model's ({expected})")

    out = pd.DataFrame({'source': df['source'] if 'source' in df else np.arange(len(df)),
                        'prediction': predict_matrix(model, df)})
    path = out_dir / args.output
    path.parent.mkdir(parents=True, exist_ok=True)
    out.to_csv(path, index=False)

    banner(f"🔮 PREDICTED {len(out)} ROWS ({model.objective})")
    print(out.head(10).to_string(index=False))
    _finish(manifest, out_dir, [path])
    return 0


def _assessment_input(args, manifest: RunManifest):
    """(FeatureVector, source path) from --waveform or --features/--row"""
    if args.waveform:
        w = read_waveform_csv(args.waveform)
        return extract(w, _catalog(manifest), _dsp(manifest)), Path(args.waveform)
    df = read_feature_matrix(args.features)
    if not 0 <= args.row < len(df):
        raise InvalidArgumentError(f"row {args.row} outside 0..{len(df) - 1}")
    cols = feature_columns(df)
    fv = FeatureVector(values=df.iloc[args.row][cols].to_numpy(dtype=np.float64),
                       catalog_version=catalog_from_columns(cols).version, feature_ids=tuple(cols))
    return fv, Path(args.features)


def cmd_assess(args, manifest: RunManifest, out_dir: Path) -> int:
    if bool(args.waveform) == bool(args.features):
        raise InvalidArgumentError("give exactly one of --waveform or --features")
    fv, source = _assessment_input(args, manifest)

    classifier = load_model(args.classifier)
    regressors = {'wet': load_model(args.wet_model), 'dry': load_model(args.dry_model)}

    p_wet = predict(classifier, fv)
    condition = 'wet' if p_wet >= FlashoverConfig.ROUTING_THRESHOLD else 'dry'
    regressor = regressors[condition]
    pct = predict(regressor, fv)
    if 'rmse_pct' not in regressor.metrics:
        raise IncompatibleInputError(f"{condition} model carries no held-out rmse_pct")

    if args.timestamp:
        timestamp = datetime.fromisoformat(args.timestamp)
        if timestamp.tzinfo is None:
            timestamp = timestamp.replace(tzinfo=timezone.utc)
    else:
        timestamp = datetime.fromtimestamp(int(source.stat().st_mtime), tz=timezone.utc)

    u_ph = args.u_ph if args.u_ph is not None else manifest.u_ph
    r = args.r if args.r is not None else manifest.r
    sigma = args.sigma_kv if args.sigma_kv is not None else manifest.sigma_default_kv

    assessment = assess_prediction(pct, regressor.metrics['rmse_pct'], u_ph, r, sigma,
                                   timestamp=timestamp, string_id=args.string_id)
    provenance = {
        'source': source.name,
        'condition': condition,
        'p_wet': p_wet,
        'predicted_pct_u50': pct,
        'catalog_version': fv.catalog_version,
        'classifier': Path(args.classifier).name,
        'regressor': Path(args.wet_model if condition == 'wet' else args.dry_model).name,
    }
    record = assessment.to_record()
    record['provenance'] = provenance

    path = out_dir / 'assessment.json'
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(record, f, indent=2, sort_keys=True)
    if args.log_dir:
        AssessmentLogger(args.log_dir).log_assessment(assessment, provenance)

    manifest.u_ph, manifest.r, manifest.sigma_default_kv = u_ph, r, sigma
    manifest.model_paths = {'classification': args.classifier, 'regression-wet': args.wet_model,
                            'regression-dry': args.dry_model}

    banner(f"⚡ STRING {args.string_id or '(unnamed)'}: {assessment.state.value}")
    print(f"Condition: {condition} (p_wet={p_wet:.3f})")
    print(f"Estimated %U50: {assessment.pct_u50:.2f}%  → U50 = {assessment.u50_hat:.2f} kV")
    print(f"sigma_t = {assessment.sigma:.2f} + {assessment.sigma_m_hat:.2f} = {assessment.sigma_total:.2f} kV")
    print(f"r*U_ph = {assessment.operating_level:.2f} kV  "
          f"(U50-3sigma {assessment.lower_3sigma:.2f}, U50-1.28sigma {assessment.lower_1p28sigma:.2f})")
    _finish(manifest, out_dir, [path])
    return 0


def cmd_sweep(args, manifest: RunManifest, out_dir: Path) -> int:
    df = _matrix(args.matrix, manifest)
    counts = args.counts or FlashoverConfig.FEATURE_COUNTS
    hp = None
    if args.hp_file:
        with open(args.hp_file, 'r') as f:
            data = json.load(f)
        if set(data) & set(TASKS):
            hp = {task: Hyperparameters.from_dict({**data[task], 'objective':
                  'logistic' if task == 'classification' else 'squared'}) for task in TASKS if task in data}
        else:
            hp = Hyperparameters.from_dict(data)

    report = run_sweep(df, counts, args.mode, hp, _split_spec(manifest), _mrmr(manifest),
                       classifier_counts=args.classifier_counts, base_seed=manifest.seed,
                       max_workers=args.workers)
    outputs = [report.to_csv(out_dir / f"sweep_{args.mode}.csv"),
               report.to_json(out_dir / f"sweep_{args.mode}.json")]

    banner(f"📊 SWEEP ({args.mode})")
    print(report.pivot().to_string())
    _finish(manifest, out_dir, outputs)
    return 0


def cmd_report(args, manifest: RunManifest, out_dir: Path) -> int:
    report = SweepReport.from_json(args.sweep)
    banner(f"📋 SWEEP REPORT ({report.mode})")
    print(report.pivot().to_string())

    tables: Dict[str, pd.DataFrame] = {}
    if args.waveform:
        tables.update(waveform_view(read_waveform_csv(args.waveform), _dsp(manifest)))
    if args.matrix:
        labels = read_manifest(args.labels) if args.labels else None
        tables['amplitude'] = amplitude_vs_voltage(read_feature_matrix(args.matrix), labels)
    if args.ranking:
        tables['top_features'] = top_features(read_ranking_report(args.ranking))

    paths = write_tables(tables, out_dir)
    outputs = list(paths.values())
    if args.plot and tables:
        outputs += list(render_figures(tables, out_dir).values())
    for name, path in paths.items():
        print(f"  {name}: {path}")
    _finish(manifest, out_dir, outputs)
    return 0


COMMANDS = {
    'generate': cmd_generate,
    'extract': cmd_extract,
    'rank': cmd_rank,
    'train': cmd_train,
    'predict': cmd_predict,
    'assess': cmd_assess,
    'sweep': cmd_sweep,
    'report': cmd_report,
}


def _count(value: str):
    return value if value == 'all' else int(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='flashover_cli',
        description='Leakage-current feature extraction, flashover voltage estimation and string assessment',
    )
    parser.add_argument('--manifest', help='run manifest JSON to reproduce')
    parser.add_argument('--seed', type=int, default=None, help='base seed (overrides the manifest)')
    parser.add_argument('--out-dir', default=OUTPUT_DIR, help='output directory')
    parser.add_argument('--workers', type=int, default=1, help='thread pool size')
    parser.add_argument('--log-level', default=LOG_LEVEL)
    parser.add_argument('--log-file', default=LOG_FILE, help="empty string disables file logging")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('generate', help='write a synthetic labelled waveform corpus')
    p.add_argument('--n', type=int, default=200, help='scenarios per condition')
    p.add_argument('--duration', type=float, default=0.2)
    p.add_argument('--sample-rate', type=float, default=10000.0)

    p = sub.add_parser('extract', help='waveform CSVs → feature matrix')
    p.add_argument('waveforms', nargs='+', help='waveform CSV files or directories')
    p.add_argument('--labels', help='manifest CSV with file, condition, pct_u50')
    p.add_argument('--output', default='features.csv')

    p = sub.add_parser('rank', help='MRMR ranking for a task')
    p.add_argument('matrix')
    p.add_argument('--task', choices=TASKS, required=True)
    p.add_argument('--top-k', type=int, default=None)

    p = sub.add_parser('train', help='rank, truncate, train and save a model')
    p.add_argument('matrix')
    p.add_argument('--task', choices=TASKS, required=True)
    p.add_argument('--top-k', type=int, default=None)
    group = p.add_mutually_exclusive_group()
    group.add_argument('--preset', choices=sorted({**FlashoverConfig.PRESETS, **FlashoverConfig.PRESET_ALIASES}))
    group.add_argument('--hp-file', help='hyperparameter JSON')
    p.add_argument('--search-trials', type=int, default=0, help='random-search trials before the final fit')

    p = sub.add_parser('predict', help='apply a model to a feature matrix')
    p.add_argument('matrix')
    p.add_argument('--model', required=True)
    p.add_argument('--output', default='predictions.csv')

    p = sub.add_parser('assess', help='classify → regress → string state')
    p.add_argument('--waveform')
    p.add_argument('--features')
    p.add_argument('--row', type=int, default=0)
    p.add_argument('--classifier', required=True)
    p.add_argument('--wet-model', required=True)
    p.add_argument('--dry-model', required=True)
    p.add_argument('--u-ph', type=float, default=None, help='phase-to-ground operating voltage (kV)')
    p.add_argument('--r', type=float, default=None, help='overvoltage safety factor')
    p.add_argument('--sigma-kv', type=float, default=None, help='flashover-test sigma (kV)')
    p.add_argument('--string-id', default='')
    p.add_argument('--timestamp', default=None, help='ISO-8601; default is the input file mtime (UTC)')
    p.add_argument('--log-dir', default=ASSESSMENT_LOG_DIR, help="assessment journal directory ('' disables)")

    p = sub.add_parser('sweep', help='metric per selected-feature count')
    p.add_argument('matrix')
    p.add_argument('--mode', choices=SWEEP_MODES, required=True)
    p.add_argument('--counts', nargs='+', type=_count, default=None)
    p.add_argument('--classifier-counts', nargs='+', type=int, default=None)
    p.add_argument('--hp-file', help='hyperparameter JSON (one set, or keyed by task)')

    p = sub.add_parser('report', help='print a sweep table and write plot data')
    p.add_argument('sweep', help='sweep JSON')
    p.add_argument('--ranking')
    p.add_argument('--waveform')
    p.add_argument('--matrix')
    p.add_argument('--labels')
    p.add_argument('--plot', action='store_true', help='render PNG figures')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.log_file)

    out_dir = Path(args.out_dir)
    try:
        manifest = _run_manifest(args)
        out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, manifest, out_dir)
    except FlashoverError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"❌ {e}")
        return 1
    except OSError as e:
        logger.error(f"{args.command} I/O failure: {e}")
        print(f"❌ {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
