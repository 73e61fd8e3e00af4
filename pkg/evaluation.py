"""
Evaluation Harness
Metrics (F1, %-point RMSE), seeded train/test split and the feature-count sweep
for the condition classifier, the per-condition regressors and the full
classify-then-regress method
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config.flashover_config import FlashoverConfig
from errors import InsufficientDataError, InvalidArgumentError
from feature_extraction import LABEL_CONDITION, LABEL_PCT_U50, feature_columns
from gradient_boosting import BoostedModel, Hyperparameters, predict_matrix, train
from mrmr_selection import MrmrConfig, SelectionResult, mrmr_rank

logger = logging.getLogger(__name__)

TASKS = ('classification', 'regression-wet', 'regression-dry')
SWEEP_MODES = TASKS + ('full',)
POSITIVE_CONDITION = 'wet'
CONDITIONS = ('wet', 'dry')
APPLIED_VOLTAGE_FEATURE = 'applied_voltage_kv'


# Metrics

class F1Result(NamedTuple):
    f1: float
    precision: float
    recall: float
    degenerate: bool


def f1_detail(tp: int, fp: int, fn: int) -> F1Result:
    """F1 with precision/recall; empty denominators give 0 and degenerate=True"""
    if min(tp, fp, fn) < 0:
        raise InvalidArgumentError(f"counts must be >= 0, got tp={tp} fp={fp} fn={fn}")
    if tp + fp == 0 or tp + fn == 0:
        return F1Result(0.0, 0.0, 0.0, True)
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    if precision + recall == 0:
        return F1Result(0.0, precision, recall, False)
    return F1Result(2 * precision * recall / (precision + recall), precision, recall, False)


def f1_score(tp: int, fp: int, fn: int) -> float:
    return f1_detail(tp, fp, fn).f1


def confusion_counts(actual: Sequence, predicted: Sequence, positive=POSITIVE_CONDITION) -> Tuple[int, int, int]:
    """(tp, fp, fn) for the positive label"""
    actual = np.asarray(actual)
    predicted = np.asarray(predicted)
    if actual.shape != predicted.shape:
        raise InvalidArgumentError("actual and predicted labels differ in length")
    tp = int(np.sum((predicted == positive) & (actual == positive)))
    fp = int(np.sum((predicted == positive) & (actual != positive)))
    fn = int(np.sum((predicted != positive) & (actual == positive)))
    return tp, fp, fn


def rmse_percent(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """Root mean squared error in percentage points"""
    a = np.asarray(actual, dtype=np.float64).reshape(-1)
    p = np.asarray(predicted, dtype=np.float64).reshape(-1)
    if len(a) != len(p):
        raise InvalidArgumentError(f"length mismatch: {len(a)} vs {len(p)}")
    if len(a) == 0:
        raise InvalidArgumentError("rmse of empty vectors")
    return float(np.sqrt(np.mean((a - p) ** 2)))


# Splitting

@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = FlashoverConfig.TRAIN_FRACTION
    seed: int = FlashoverConfig.SPLIT_SEED

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise InvalidArgumentError(f"train_fraction {self.train_fraction} outside (0, 1)")


def split_indices(n: int, spec: SplitSpec = SplitSpec()) -> Tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise InsufficientDataError(f"cannot split {n} rows into two non-empty parts")
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train = min(max(int(round(n * spec.train_fraction)), 1), n - 1)
    return order[:n_train], order[n_train:]


def split(dataset, spec: SplitSpec = SplitSpec()):
    """Seeded shuffle, then the first round(n·fraction) rows train, the rest test"""
    train_idx, test_idx = split_indices(len(dataset), spec)
    if isinstance(dataset, (pd.DataFrame, pd.Series)):
        return dataset.iloc[train_idx], dataset.iloc[test_idx]
    if isinstance(dataset, np.ndarray):
        return dataset[train_idx], dataset[test_idx]
    items = list(dataset)
    return [items[i] for i in train_idx], [items[i] for i in test_idx]


# Task plumbing

def apply_voltage_floor(df: pd.DataFrame, min_voltage_kv: Optional[float]) -> pd.DataFrame:
    """Drop records measured below min_voltage_kv (None = keep everything)"""
    if min_voltage_kv is None:
        return df
    if APPLIED_VOLTAGE_FEATURE not in df.columns:
        raise InvalidArgumentError(f"voltage floor needs the '{APPLIED_VOLTAGE_FEATURE}' column")
    kept = df[df[APPLIED_VOLTAGE_FEATURE] >= min_voltage_kv]
    if len(kept) < len(df):
        logger.info(f"Voltage floor {min_voltage_kv} kV dropped {len(df) - len(kept)} of {len(df)} records")
    return kept


def _require_labels(df: pd.DataFrame, columns: Sequence[str]):
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise InvalidArgumentError(f"dataset lacks label columns: {missing}")
    for c in columns:
        if df[c].isna().any():
            raise InvalidArgumentError(f"label column '{c}' has missing values")


def task_data(df: pd.DataFrame, task: str) -> Tuple[pd.DataFrame, np.ndarray]:
    """Rows and target for one task: wet=1/dry=0 for classification, %U50 for a condition's regressor"""
    if task not in TASKS:
        raise InvalidArgumentError(f"unknown task '{task}' (have {TASKS})")
    _require_labels(df, [LABEL_CONDITION])
    if task == 'classification':
        unknown = set(df[LABEL_CONDITION]) - set(CONDITIONS)
        if unknown:
            raise InvalidArgumentError(f"unknown condition labels: {sorted(map(str, unknown))}")
        return df, (df[LABEL_CONDITION] == POSITIVE_CONDITION).to_numpy(dtype=np.float64)

    _require_labels(df, [LABEL_PCT_U50])
    condition = task.split('-', 1)[1]
    rows = df[df[LABEL_CONDITION] == condition]
    return rows, rows[LABEL_PCT_U50].to_numpy(dtype=np.float64)


def default_hyperparameters(task: str) -> Hyperparameters:
    return Hyperparameters.preset(FlashoverConfig.TASK_PRESETS[task])


def _mrmr_config_for(task: str, config: MrmrConfig) -> MrmrConfig:
    kind = 'categorical' if task == 'classification' else 'continuous'
    return MrmrConfig(bins=config.bins, redundancy_floor=config.redundancy_floor, target_kind=kind)


def fit_task(train_df: pd.DataFrame, task: str, top_k: Union[int, str], hp: Hyperparameters,
             mrmr_config: MrmrConfig = MrmrConfig(), catalog_version: str = '',
             ranking: Optional[SelectionResult] = None) -> Tuple[BoostedModel, SelectionResult]:
    """MRMR-rank the task's training rows, keep top_k, train"""
    rows, y = task_data(train_df, task)
    feats = feature_columns(rows)
    if ranking is None:
        ranking = mrmr_rank(rows[feats], y, 'all', _mrmr_config_for(task, mrmr_config))
    selected = ranking.top(_resolve_count(top_k, len(ranking.ranked_ids)))
    model = train(rows[selected], y, hp, feature_ids=selected, catalog_version=catalog_version)
    return model, ranking


def evaluate_task(model: BoostedModel, test_df: pd.DataFrame, task: str) -> Dict[str, float]:
    rows, y = task_data(test_df, task)
    if len(rows) == 0:
        raise InsufficientDataError(f"no test rows for task '{task}'")
    predicted = predict_matrix(model, rows)
    if task == 'classification':
        labels = np.where(predicted >= FlashoverConfig.ROUTING_THRESHOLD, 'wet', 'dry')
        actual = rows[LABEL_CONDITION].to_numpy()
        detail = f1_detail(*confusion_counts(actual, labels))
        return {'f1': detail.f1, 'precision': detail.precision, 'recall': detail.recall, 'n_test': len(rows)}
    return {'rmse_pct': rmse_percent(y, predicted), 'n_test': len(rows)}


def _resolve_count(count: Union[int, str], available: int) -> int:
    if count == 'all':
        return available
    count = int(count)
    if count < 1:
        raise InvalidArgumentError(f"feature count must be >= 1, got {count}")
    return min(count, available)


def cell_seed(base_seed: int, cell_index: int) -> int:
    return int(np.random.SeedSequence([base_seed, cell_index]).generate_state(1)[0])


# Sweep report

@dataclass
class SweepRow:
    feature_count: str
    model: str
    condition: str
    metric: str
    value: float
    n_features_used: int
    n_test: int


@dataclass
class SweepReport:
    mode: str
    feature_counts: List[str]
    rows: List[SweepRow] = field(default_factory=list)

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.rows],
                            columns=list(SweepRow.__dataclass_fields__))

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_dataframe().to_csv(path, index=False)
        return path

    def to_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            json.dump({'mode': self.mode, 'feature_counts': self.feature_counts,
                       'rows': [asdict(r) for r in self.rows]}, f, indent=2)
        return path

    @classmethod
    def from_json(cls, path) -> 'SweepReport':
        with open(path, 'r') as f:
            data = json.load(f)
        return cls(mode=data['mode'], feature_counts=list(data['feature_counts']),
                   rows=[SweepRow(**r) for r in data['rows']])

    def pivot(self) -> pd.DataFrame:
        """Feature counts down, (model, condition, metric) across"""
        df = self.to_dataframe()
        if df.empty:
            return df
        table = df.pivot_table(index='feature_count', columns=['model', 'condition', 'metric'],
                               values='value', aggfunc='first')
        return table.reindex([c for c in self.feature_counts if c in table.index])

    def value(self, feature_count, model: str, condition: str = 'n/a', metric: Optional[str] = None) -> float:
        for r in self.rows:
            if (r.feature_count == str(feature_count) and r.model == model and r.condition == condition
                    and (metric is None or r.metric == metric)):
                return r.value
        raise KeyError((feature_count, model, condition, metric))


# Sweep

def _hp_for(task: str, hp) -> Hyperparameters:
    if hp is None:
        return default_hyperparameters(task)
    if isinstance(hp, Hyperparameters):
        objective = 'logistic' if task == 'classification' else 'squared'
        return Hyperparameters.from_dict({**asdict(hp), 'objective': objective})
    return hp[task] if task in hp else default_hyperparameters(task)


def _map_cells(fn, cells: list, max_workers: int) -> list:
    if max_workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def run_sweep(dataset: pd.DataFrame, feature_counts: Optional[Sequence] = None, task: str = 'classification',
              hp=None, split_spec: SplitSpec = SplitSpec(), mrmr_config: MrmrConfig = MrmrConfig(),
              classifier_counts: Optional[Sequence[int]] = None, base_seed: int = 0,
              max_workers: int = 1) -> SweepReport:
    """
    One split per sweep. For each feature count: take that prefix of the
    training-split MRMR ranking, train, score on the test split.
    task='full' routes test rows through the classifier to the matching regressor.
    hp: None (task presets), one Hyperparameters for every task, or a dict keyed by task
    """
    if task not in SWEEP_MODES:
        raise InvalidArgumentError(f"unknown sweep mode '{task}' (have {SWEEP_MODES})")
    counts = [str(c) for c in (feature_counts or FlashoverConfig.FEATURE_COUNTS)]

    if task == 'full':
        return _run_full_sweep(dataset, counts, hp, split_spec, mrmr_config,
                               classifier_counts or FlashoverConfig.CLASSIFIER_COUNTS, base_seed, max_workers)

    rows_df, _ = task_data(dataset, task)
    train_df, test_df = split(rows_df, split_spec)
    base_hp = _hp_for(task, hp)
    ranking = rank_task(train_df, task, mrmr_config)
    n_available = len(ranking.ranked_ids)

    def _cell(indexed):
        idx, count = indexed
        k = _resolve_count(count, n_available)
        model, _ = fit_task(train_df, task, k, base_hp.with_seed(cell_seed(base_seed, idx)),
                            mrmr_config, ranking=ranking)
        return count, k, evaluate_task(model, test_df, task)

    report = SweepReport(mode=task, feature_counts=counts)
    for count, k, scores in _map_cells(_cell, list(enumerate(counts)), max_workers):
        if task == 'classification':
            report.rows.append(SweepRow(count, 'classifier', 'n/a', 'f1', scores['f1'], k, scores['n_test']))
        else:
            condition = task.split('-', 1)[1]
            report.rows.append(SweepRow(count, f'regressor-{condition}', condition, 'rmse_pct',
                                        scores['rmse_pct'], k, scores['n_test']))
        logger.info(f"Sweep {task} @ {count} features: {report.rows[-1].metric}={report.rows[-1].value:.4f}")
    return report


def rank_task(train_df: pd.DataFrame, task: str, mrmr_config: MrmrConfig) -> SelectionResult:
    rows, y = task_data(train_df, task)
    return mrmr_rank(rows[feature_columns(rows)], y, 'all', _mrmr_config_for(task, mrmr_config))


def _run_full_sweep(dataset: pd.DataFrame, counts: List[str], hp, split_spec: SplitSpec,
                    mrmr_config: MrmrConfig, classifier_counts: Sequence[int],
                    base_seed: int, max_workers: int) -> SweepReport:
    _require_labels(dataset, [LABEL_CONDITION, LABEL_PCT_U50])
    train_df, test_df = split(dataset, split_spec)

    rankings = {task: rank_task(train_df, task, mrmr_config) for task in TASKS}

    # (task, count) training cells, seeded by their position in this list
    cells = [('classification', str(c)) for c in classifier_counts]
    cells += [(f'regression-{cond}', count) for cond in CONDITIONS for count in counts]

    def _cell(indexed):
        idx, (task, count) = indexed
        ranking = rankings[task]
        k = _resolve_count(count, len(ranking.ranked_ids))
        model, _ = fit_task(train_df, task, k, _hp_for(task, hp).with_seed(cell_seed(base_seed, idx)),
                            mrmr_config, ranking=ranking)
        return (task, count), (k, model)

    models = dict(_map_cells(_cell, list(enumerate(cells)), max_workers))

    actual_condition = test_df[LABEL_CONDITION].to_numpy()
    actual_pct = test_df[LABEL_PCT_U50].to_numpy(dtype=np.float64)
    report = SweepReport(mode='full', feature_counts=counts)

    for count in counts:
        regressor_k = models[('regression-wet', count)][0]
        regressor_preds = {
            cond: predict_matrix(models[(f'regression-{cond}', count)][1], test_df) for cond in CONDITIONS
        }

        oracle = np.where(actual_condition == 'wet', regressor_preds['wet'], regressor_preds['dry'])
        _append_rmse_rows(report, count, 'oracle', 'rmse_oracle', actual_condition, actual_pct,
                          oracle, regressor_k)

        for c in classifier_counts:
            classifier = models[('classification', str(c))][1]
            routed_wet = predict_matrix(classifier, test_df) >= FlashoverConfig.ROUTING_THRESHOLD
            routed = np.where(routed_wet, regressor_preds['wet'], regressor_preds['dry'])
            _append_rmse_rows(report, count, f'full-clf{c}', 'rmse_full', actual_condition, actual_pct,
                              routed, regressor_k)

        logger.info(f"Full-method sweep @ {count} features: "
                    f"oracle RMSE {report.value(count, 'oracle'):.4f}")
    return report


def _append_rmse_rows(report: SweepReport, count: str, model: str, metric: str,
                      conditions: np.ndarray, actual: np.ndarray, predicted: np.ndarray, k: int):
    for cond in CONDITIONS:
        mask = conditions == cond
        if mask.any():
            report.rows.append(SweepRow(count, model, cond, metric,
                                        rmse_percent(actual[mask], predicted[mask]), k, int(mask.sum())))
    report.rows.append(SweepRow(count, model, 'n/a', metric, rmse_percent(actual, predicted), k, len(actual)))
