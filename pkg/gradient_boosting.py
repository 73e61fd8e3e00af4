"""
Second-Order Gradient Boosted Trees
Newton boosting with L2 (lambda), L1 (alpha) and per-leaf (gamma) regularisation,
exact greedy split search, row subsampling and per-tree column sampling.
Objectives: 'squared' (regression) and 'logistic' (binary classification)
"""
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit

from config.flashover_config import FlashoverConfig
from errors import DegenerateTargetError, IncompatibleInputError, InvalidArgumentError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
OBJECTIVES = ('squared', 'logistic')


@dataclass(frozen=True)
class Hyperparameters:
    n_estimators: int = 100
    max_depth: int = 6            # 0 = single leaf per round
    learning_rate: float = 0.3
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    reg_lambda: float = 1.0
    gamma: float = 0.0
    reg_alpha: float = 0.0
    min_child_hessian: float = 1e-3
    objective: str = 'squared'
    seed: int = 0
    base_score: Optional[float] = None  # None: mean(y) / log-odds of the class prior

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise InvalidArgumentError(f"unknown objective '{self.objective}'")
        if self.n_estimators < 1:
            raise InvalidArgumentError("n_estimators must be >= 1")
        if self.max_depth < 0:
            raise InvalidArgumentError("max_depth must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise InvalidArgumentError(f"learning_rate {self.learning_rate} outside (0, 1]")
        for name in ('subsample', 'colsample_bytree'):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise InvalidArgumentError(f"{name} {value} outside (0, 1]")
        for name in ('reg_lambda', 'gamma', 'reg_alpha', 'min_child_hessian'):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")

    @classmethod
    def preset(cls, name: str, **overrides) -> 'Hyperparameters':
        """Optimal settings shipped as named presets ('tuned-classifier', 'tuned-wet', 'tuned-dry')"""
        name = FlashoverConfig.PRESET_ALIASES.get(name, name)
        if name not in FlashoverConfig.PRESETS:
            raise InvalidArgumentError(f"unknown preset '{name}' (have {sorted(FlashoverConfig.PRESETS)})")
        return cls(**{**FlashoverConfig.PRESETS[name], **overrides})

    @classmethod
    def from_dict(cls, data: Dict) -> 'Hyperparameters':
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})

    def with_seed(self, seed: int) -> 'Hyperparameters':
        return replace(self, seed=int(seed))


@dataclass
class TreeNode:
    """Split node (feature/threshold/children) or leaf (weight). x < threshold goes left"""
    weight: Optional[float] = None
    feature_id: Optional[str] = None
    feature_index: int = -1
    threshold: float = 0.0
    left: Optional['TreeNode'] = None
    right: Optional['TreeNode'] = None
    default_direction: str = 'left'
    gain: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.weight is not None

    def to_dict(self) -> Dict:
        if self.is_leaf:
            return {'weight': self.weight}
        return {
            'feature_id': self.feature_id,
            'threshold': self.threshold,
            'default_direction': self.default_direction,
            'gain': self.gain,
            'left': self.left.to_dict(),
            'right': self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict, feature_ids: Sequence[str]) -> 'TreeNode':
        if 'weight' in data:
            return cls(weight=float(data['weight']))
        if data['feature_id'] not in feature_ids:
            raise IncompatibleInputError(f"tree splits on unknown feature '{data['feature_id']}'")
        return cls(
            feature_id=data['feature_id'],
            feature_index=list(feature_ids).index(data['feature_id']),
            threshold=float(data['threshold']),
            default_direction=data.get('default_direction', 'left'),
            gain=float(data.get('gain', 0.0)),
            left=cls.from_dict(data['left'], feature_ids),
            right=cls.from_dict(data['right'], feature_ids),
        )

    def leaves(self) -> List['TreeNode']:
        if self.is_leaf:
            return [self]
        return self.left.leaves() + self.right.leaves()

    def output(self, X: np.ndarray) -> np.ndarray:
        """Leaf weight reached by every row of X"""
        out = np.empty(len(X), dtype=np.float64)
        stack = [(self, np.arange(len(X)))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                out[idx] = node.weight
                continue
            go_left = X[idx, node.feature_index] < node.threshold
            stack.append((node.left, idx[go_left]))
            stack.append((node.right, idx[~go_left]))
        return out


@dataclass
class BoostedModel:
    trees: List[TreeNode]
    base_score: float
    hyperparameters: Hyperparameters
    selected_feature_ids: Tuple[str, ...]
    catalog_version: str = ''
    train_loss: List[float] = field(default_factory=list)
    metrics: Dict[str, float] = field(default_factory=dict)

    @property
    def objective(self) -> str:
        return self.hyperparameters.objective

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        """base_score + sum of tree outputs (learning rate already baked into leaves)"""
        X = np.asarray(X, dtype=np.float64)
        raw = np.full(len(X), self.base_score, dtype=np.float64)
        for tree in self.trees:
            raw += tree.output(X)
        return raw

    def feature_importance(self) -> Dict[str, float]:
        """Total split gain per selected feature"""
        totals = {fid: 0.0 for fid in self.selected_feature_ids}
        stack = list(self.trees)
        while stack:
            node = stack.pop()
            if not node.is_leaf:
                totals[node.feature_id] += node.gain
                stack.extend((node.left, node.right))
        return totals

    def to_dict(self) -> Dict:
        return {
            'format_version': FORMAT_VERSION,
            'objective': self.objective,
            'base_score': self.base_score,
            'hyperparameters': asdict(self.hyperparameters),
            'selected_feature_ids': list(self.selected_feature_ids),
            'catalog_version': self.catalog_version,
            'metrics': self.metrics,
            'train_loss': self.train_loss,
            'trees': [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'BoostedModel':
        if data.get('format_version') != FORMAT_VERSION:
            raise IncompatibleInputError(f"unsupported model format_version {data.get('format_version')}")
        ids = tuple(data['selected_feature_ids'])
        return cls(
            trees=[TreeNode.from_dict(t, ids) for t in data['trees']],
            base_score=float(data['base_score']),
            hyperparameters=Hyperparameters.from_dict(data['hyperparameters']),
            selected_feature_ids=ids,
            catalog_version=data.get('catalog_version', ''),
            train_loss=list(data.get('train_loss', [])),
            metrics=dict(data.get('metrics', {})),
        )


# Objective derivatives

def gradients(objective: str, y: Sequence[float], y_hat_raw: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sample first and second derivatives of the loss w.r.t. the raw score"""
    y = np.asarray(y, dtype=np.float64)
    raw = np.asarray(y_hat_raw, dtype=np.float64)
    if y.shape != raw.shape:
        raise InvalidArgumentError(f"length mismatch: {y.shape} vs {raw.shape}")
    if objective == 'squared':
        return raw - y, np.ones_like(raw)
    if objective == 'logistic':
        p = expit(raw)
        return p - y, p * (1.0 - p)
    raise InvalidArgumentError(f"unknown objective '{objective}'")


def objective_loss(objective: str, y: Sequence[float], y_hat_raw: Sequence[float]) -> np.ndarray:
    """Per-sample loss: ½(ŷ−y)² or logistic log-loss of the raw score"""
    y = np.asarray(y, dtype=np.float64)
    raw = np.asarray(y_hat_raw, dtype=np.float64)
    if objective == 'squared':
        return 0.5 * (raw - y) ** 2
    if objective == 'logistic':
        return np.logaddexp(0.0, raw) - y * raw
    raise InvalidArgumentError(f"unknown objective '{objective}'")


def _soft_threshold(G, alpha: float):
    if alpha == 0:
        return G
    return np.sign(G) * np.maximum(np.abs(G) - alpha, 0.0)


def leaf_weight(G: float, H: float, reg_lambda: float, reg_alpha: float = 0.0) -> float:
    """Newton step −T(G)/(H+λ), T = soft threshold by alpha"""
    denom = H + reg_lambda
    if denom <= 0:
        return 0.0
    return float(-_soft_threshold(G, reg_alpha) / denom)


# Tree growing

class _TreeGrower:
    """Exact greedy tree growth over presorted feature columns"""

    def __init__(self, X: np.ndarray, sorted_idx: np.ndarray, g: np.ndarray, h: np.ndarray,
                 features: np.ndarray, feature_ids: Sequence[str], hp: Hyperparameters):
        self.X = X
        self.sorted_idx = sorted_idx[features]
        self.g = g
        self.h = h
        self.features = features
        self.feature_ids = feature_ids
        self.hp = hp

    def _score(self, G, H):
        denom = H + self.hp.reg_lambda
        T = _soft_threshold(G, self.hp.reg_alpha)
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.where(denom > 0, T * T / np.where(denom > 0, denom, 1.0), 0.0)

    def _best_split(self, rows: np.ndarray, G: float, H: float):
        n_rows = int(rows.sum())
        if n_rows < 2:
            return None

        order = self.sorted_idx
        ordered = order[rows[order]].reshape(len(self.features), n_rows)
        xs = self.X[ordered, self.features[:, None]]
        GL = np.cumsum(self.g[ordered], axis=1)[:, :-1]
        HL = np.cumsum(self.h[ordered], axis=1)[:, :-1]
        GR = G - GL
        HR = H - HL

        mch = self.hp.min_child_hessian
        valid = (xs[:, 1:] > xs[:, :-1]) & (HL >= mch) & (HR >= mch)
        if not valid.any():
            return None

        gain = 0.5 * (self._score(GL, HL) + self._score(GR, HR) - self._score(G, H)) - self.hp.gamma
        gain = np.where(valid, gain, -np.inf)
        # argmax of the row-major flattening: first feature in catalog order, then lowest threshold
        flat = int(np.argmax(gain))
        fi, pos = divmod(flat, n_rows - 1)
        best_gain = float(gain[fi, pos])
        if not best_gain > 0:
            return None

        lo, hi = xs[fi, pos], xs[fi, pos + 1]
        threshold = float(lo + (hi - lo) / 2.0)
        if threshold <= lo:
            threshold = float(hi)
        return int(self.features[fi]), threshold, best_gain

    def grow(self, rows: np.ndarray, depth: int = 0) -> TreeNode:
        G = float(self.g[rows].sum())
        H = float(self.h[rows].sum())

        split = self._best_split(rows, G, H) if depth < self.hp.max_depth else None
        if split is None:
            w = leaf_weight(G, H, self.hp.reg_lambda, self.hp.reg_alpha) * self.hp.learning_rate
            return TreeNode(weight=w)

        feature, threshold, gain = split
        go_left = self.X[:, feature] < threshold
        return TreeNode(
            feature_id=self.feature_ids[feature],
            feature_index=feature,
            threshold=threshold,
            gain=gain,
            left=self.grow(rows & go_left, depth + 1),
            right=self.grow(rows & ~go_left, depth + 1),
        )


def _as_training_matrix(X, feature_ids: Optional[Sequence[str]]) -> Tuple[np.ndarray, Tuple[str, ...]]:
    if isinstance(X, pd.DataFrame):
        ids = tuple(feature_ids) if feature_ids is not None else tuple(str(c) for c in X.columns)
        return X[list(ids)].to_numpy(dtype=np.float64), ids
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidArgumentError("feature matrix must be two-dimensional")
    ids = tuple(feature_ids) if feature_ids is not None else tuple(f"f{i}" for i in range(X.shape[1]))
    if len(ids) != X.shape[1]:
        raise InvalidArgumentError("feature_ids length does not match the matrix")
    return X, ids


def _initial_score(objective: str, y: np.ndarray) -> float:
    if objective == 'squared':
        return float(np.mean(y))
    p = float(np.mean(y))
    return float(np.log(p / (1.0 - p)))


def train(X, y, hp: Hyperparameters, feature_ids: Optional[Sequence[str]] = None,
          catalog_version: str = '') -> BoostedModel:
    """Fit hp.n_estimators Newton-boosting rounds"""
    X, ids = _as_training_matrix(X, feature_ids)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n, n_features = X.shape if X.size else (len(X), 0)

    if n == 0 or n_features == 0:
        raise InvalidArgumentError("training data is empty")
    if n != len(y):
        raise InvalidArgumentError(f"{n} rows but {len(y)} targets")
    if n < 2:
        raise InvalidArgumentError("training needs at least 2 rows")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise InvalidArgumentError("training data contains NaN or infinite values")
    if hp.objective == 'logistic':
        if not np.all((y == 0) | (y == 1)):
            raise InvalidArgumentError("logistic targets must be 0/1")
        if len(np.unique(y)) < 2:
            raise DegenerateTargetError("logistic target has a single class")

    base_score = hp.base_score if hp.base_score is not None else _initial_score(hp.objective, y)
    rng = np.random.default_rng(hp.seed)
    sorted_idx = np.argsort(X, axis=0, kind='mergesort').T.copy()

    n_rows = max(1, int(round(hp.subsample * n)))
    n_cols = max(1, int(round(hp.colsample_bytree * n_features)))

    raw = np.full(n, base_score, dtype=np.float64)
    trees: List[TreeNode] = []
    history: List[float] = []

    for round_idx in range(hp.n_estimators):
        g, h = gradients(hp.objective, y, raw)

        rows = np.ones(n, dtype=bool)
        if n_rows < n:
            rows[:] = False
            rows[rng.choice(n, size=n_rows, replace=False)] = True
        if n_cols < n_features:
            features = np.sort(rng.choice(n_features, size=n_cols, replace=False))
        else:
            features = np.arange(n_features)

        tree = _TreeGrower(X, sorted_idx, g, h, features, ids, hp).grow(rows)
        trees.append(tree)
        raw += tree.output(X)
        history.append(float(np.mean(objective_loss(hp.objective, y, raw))))

        if (round_idx + 1) % 100 == 0:
            logger.debug(f"round {round_idx + 1}/{hp.n_estimators}: train loss {history[-1]:.6g}")

    logger.info(
        f"Trained {hp.objective} ensemble: {len(trees)} trees, {n} rows x {n_features} features, "
        f"final train loss {history[-1]:.6g}"
    )
    return BoostedModel(
        trees=trees,
        base_score=base_score,
        hyperparameters=hp,
        selected_feature_ids=ids,
        catalog_version=catalog_version,
        train_loss=history,
    )


# Prediction

def _select_columns(model: BoostedModel, X) -> np.ndarray:
    if isinstance(X, pd.DataFrame):
        missing = [fid for fid in model.selected_feature_ids if fid not in X.columns]
        if missing:
            raise IncompatibleInputError(f"input lacks model features: {missing[:5]}")
        return X[list(model.selected_feature_ids)].to_numpy(dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != len(model.selected_feature_ids):
        raise IncompatibleInputError(
            f"input has {X.shape[1]} columns, model expects {len(model.selected_feature_ids)}"
        )
    return X


def predict_matrix(model: BoostedModel, X) -> np.ndarray:
    """Raw scores (squared) or probabilities (logistic) for every row"""
    raw = model.predict_raw(_select_columns(model, X))
    return expit(raw) if model.objective == 'logistic' else raw


def predict(model: BoostedModel, x) -> float:
    """Single FeatureVector (or aligned array) → score / probability"""
    if hasattr(x, 'catalog_version') and hasattr(x, 'feature_ids'):
        if model.catalog_version and x.catalog_version != model.catalog_version:
            raise IncompatibleInputError(
                f"feature vector catalog {x.catalog_version} != model catalog {model.catalog_version}"
            )
        missing = [fid for fid in model.selected_feature_ids if fid not in x.feature_ids]
        if missing:
            raise IncompatibleInputError(f"feature vector lacks model features: {missing[:5]}")
        row = np.array([x[fid] for fid in model.selected_feature_ids], dtype=np.float64)
    else:
        row = np.asarray(x, dtype=np.float64).reshape(-1)
    return float(predict_matrix(model, row.reshape(1, -1))[0])


# Model files

def save_model(model: BoostedModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(model.to_dict(), f, indent=1)
    return path


def load_model(path) -> BoostedModel:
    with open(path, 'r') as f:
        return BoostedModel.from_dict(json.load(f))
