"""
MRMR Feature Ranking
Maximum Relevance Minimum Redundancy with mutual-information relevance
(equal-frequency binning) and Spearman-rank redundancy
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import rankdata
from sklearn.metrics import mutual_info_score

from config.flashover_config import FlashoverConfig
from errors import InsufficientDataError, InvalidArgumentError

logger = logging.getLogger(__name__)

MIN_SAMPLES = 4


class SpearmanResult(NamedTuple):
    rho: float
    degenerate: bool


@dataclass(frozen=True)
class MrmrConfig:
    bins: int = FlashoverConfig.MRMR_BINS
    redundancy_floor: float = FlashoverConfig.REDUNDANCY_FLOOR
    target_kind: str = 'auto'  # 'auto' | 'categorical' | 'continuous'

    def __post_init__(self):
        if self.bins < 2:
            raise InvalidArgumentError(f"bins must be >= 2, got {self.bins}")
        if not self.redundancy_floor > 0:
            raise InvalidArgumentError("redundancy_floor must be positive")
        if self.target_kind not in ('auto', 'categorical', 'continuous'):
            raise InvalidArgumentError(f"unknown target_kind '{self.target_kind}'")


@dataclass(frozen=True)
class SelectionResult:
    ranked_ids: Tuple[str, ...]
    scores: Tuple[float, ...]
    relevance: Dict[str, float]
    config: MrmrConfig
    target_kind: str = 'continuous'

    def top(self, n: Union[int, str]) -> List[str]:
        if n == 'all':
            return list(self.ranked_ids)
        n = int(n)
        if n < 1 or n > len(self.ranked_ids):
            raise InvalidArgumentError(f"cannot take top {n} of {len(self.ranked_ids)} ranked features")
        return list(self.ranked_ids[:n])

    def to_report(self) -> Dict:
        return {
            'target_kind': self.target_kind,
            'ranked': [
                {'id': fid, 'score': score, 'relevance': self.relevance[fid]}
                for fid, score in zip(self.ranked_ids, self.scores)
            ],
            'config': asdict(self.config),
        }


# Discretisation and the two association measures

def equal_frequency_bins(x: Sequence[float], bins: int) -> np.ndarray:
    """Quantile bin codes 0..bins-1; tied values always share a bin"""
    values = np.asarray(x, dtype=np.float64)
    ranks = rankdata(values, method='average')
    codes = np.floor((ranks - 1.0) * bins / len(values)).astype(np.int64)
    return np.clip(codes, 0, bins - 1)


def _is_categorical(y: Sequence, bins: int) -> bool:
    arr = np.asarray(y)
    if arr.dtype.kind not in 'biuf':
        return True
    return len(np.unique(arr)) <= min(bins, 2)


def _target_codes(y: Sequence, bins: int, kind: str) -> np.ndarray:
    if kind == 'auto':
        kind = 'categorical' if _is_categorical(y, bins) else 'continuous'
    if kind == 'categorical':
        return np.unique(np.asarray(y), return_inverse=True)[1]
    return equal_frequency_bins(y, bins)


def mutual_information(x: Sequence[float], y: Sequence, bins: int = FlashoverConfig.MRMR_BINS,
                       target_kind: str = 'auto') -> float:
    """MI in nats between equal-frequency binned x and y (y binned alike unless categorical)"""
    if len(x) != len(y):
        raise InvalidArgumentError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < MIN_SAMPLES:
        raise InsufficientDataError(f"mutual information needs >= {MIN_SAMPLES} samples")
    if bins < 2:
        raise InvalidArgumentError(f"bins must be >= 2, got {bins}")

    x_codes = equal_frequency_bins(x, bins)
    y_codes = _target_codes(y, bins, target_kind)
    return float(max(mutual_info_score(x_codes, y_codes), 0.0))


def _pearson(a: np.ndarray, b: np.ndarray) -> SpearmanResult:
    da = a - a.mean()
    db = b - b.mean()
    denom = float(np.sqrt(np.dot(da, da) * np.dot(db, db)))
    if not denom > 0:
        return SpearmanResult(0.0, True)
    rho = float(np.dot(da, db) / denom)
    return SpearmanResult(float(np.clip(rho, -1.0, 1.0)), False)


def spearman_detail(x: Sequence[float], y: Sequence[float]) -> SpearmanResult:
    """Spearman rho with average ranks for ties; zero rank variance gives (0, degenerate)"""
    if len(x) != len(y):
        raise InvalidArgumentError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise InsufficientDataError("spearman needs >= 2 samples")
    return _pearson(rankdata(np.asarray(x, dtype=np.float64)), rankdata(np.asarray(y, dtype=np.float64)))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    return spearman_detail(x, y).rho


# Greedy ranking

def _as_matrix(features, feature_ids: Optional[Sequence[str]]) -> Tuple[np.ndarray, List[str]]:
    if isinstance(features, pd.DataFrame):
        ids = list(feature_ids) if feature_ids is not None else [str(c) for c in features.columns]
        return features[ids].to_numpy(dtype=np.float64), ids
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidArgumentError("feature matrix must be two-dimensional")
    ids = list(feature_ids) if feature_ids is not None else [f"f{i}" for i in range(X.shape[1])]
    if len(ids) != X.shape[1]:
        raise InvalidArgumentError("feature_ids length does not match the matrix")
    return X, ids


def mrmr_rank(features, target: Sequence, k: Union[int, str], config: MrmrConfig = MrmrConfig(),
              feature_ids: Optional[Sequence[str]] = None, max_workers: int = 1) -> SelectionResult:
    """
    Greedy MRMR: first pick = max relevance; then argmax of
    relevance / max(mean |spearman| against the selected set, floor).
    Ties go to the earlier feature in catalog order.
    """
    X, ids = _as_matrix(features, feature_ids)
    n_samples, n_features = X.shape
    y = np.asarray(target)

    if k == 'all':
        k = n_features
    k = int(k)
    if k > n_features or k < 1:
        raise InvalidArgumentError(f"k={k} outside 1..{n_features}")
    if n_samples < MIN_SAMPLES:
        raise InsufficientDataError(f"MRMR needs >= {MIN_SAMPLES} samples, got {n_samples}")
    if len(y) != n_samples:
        raise InvalidArgumentError("target length does not match the feature matrix")

    kind = config.target_kind
    if kind == 'auto':
        kind = 'categorical' if _is_categorical(y, config.bins) else 'continuous'

    def _relevance(j):
        return mutual_information(X[:, j], y, config.bins, kind)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            relevance = np.array(list(pool.map(_relevance, range(n_features))))
    else:
        relevance = np.array([_relevance(j) for j in range(n_features)])

    ranks = np.column_stack([rankdata(X[:, j]) for j in range(n_features)])
    abs_rho: Dict[Tuple[int, int], float] = {}

    def _redundancy(j: int, selected: List[int]) -> float:
        values = []
        for s in selected:
            key = (min(j, s), max(j, s))
            if key not in abs_rho:
                abs_rho[key] = abs(_pearson(ranks[:, key[0]], ranks[:, key[1]]).rho)
            values.append(abs_rho[key])
        return float(np.mean(values))

    first = int(np.argmax(relevance))
    selected = [first]
    scores = [float(relevance[first])]
    remaining = [j for j in range(n_features) if j != first]

    while len(selected) < k:
        best_j, best_score = None, -np.inf
        for j in remaining:
            score = relevance[j] / max(_redundancy(j, selected), config.redundancy_floor)
            if score > best_score:
                best_j, best_score = j, score
        selected.append(best_j)
        scores.append(float(best_score))
        remaining.remove(best_j)
        logger.debug(f"MRMR pick {len(selected)}: {ids[best_j]} (score {best_score:.4f})")

    result = SelectionResult(
        ranked_ids=tuple(ids[j] for j in selected),
        scores=tuple(scores),
        relevance={fid: float(r) for fid, r in zip(ids, relevance)},
        config=config,
        target_kind=kind,
    )
    logger.info(f"MRMR ranked {k} of {n_features} features ({kind} target); top: {', '.join(result.ranked_ids[:5])}")
    return result


def write_ranking_report(result: SelectionResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(result.to_report(), f, indent=2)
    return path


def read_ranking_report(path) -> SelectionResult:
    with open(path, 'r') as f:
        data = json.load(f)
    ranked = data['ranked']
    return SelectionResult(
        ranked_ids=tuple(r['id'] for r in ranked),
        scores=tuple(r['score'] for r in ranked),
        relevance={r['id']: r['relevance'] for r in ranked},
        config=MrmrConfig(**data['config']),
        target_kind=data['target_kind'],
    )
