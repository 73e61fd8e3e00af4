"""
Hyperparameter Search
Seeded random search over the boosting search ranges, scored on a validation split
"""
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config.flashover_config import FlashoverConfig
from errors import InvalidArgumentError
from evaluation import confusion_counts, f1_score, rmse_percent
from gradient_boosting import Hyperparameters, predict_matrix, train

logger = logging.getLogger(__name__)


@dataclass
class SearchTrial:
    """One sampled configuration and its validation score"""
    trial: int
    hyperparameters: Hyperparameters
    metric: str
    score: float

    @property
    def better_is_higher(self) -> bool:
        return self.metric == 'f1'

    def to_dict(self) -> Dict:
        return {'trial': self.trial, 'metric': self.metric, 'score': self.score, **asdict(self.hyperparameters)}


def sample_hyperparameters(rng: np.random.Generator, objective: str,
                           ranges: Dict[str, Tuple[float, float]] = FlashoverConfig.SEARCH_RANGES,
                           seed: int = 0) -> Hyperparameters:
    """Integers uniform, learning rate log-uniform, fractions uniform"""
    lo, hi = ranges['learning_rate']
    return Hyperparameters(
        n_estimators=int(rng.integers(ranges['n_estimators'][0], ranges['n_estimators'][1] + 1)),
        max_depth=int(rng.integers(ranges['max_depth'][0], ranges['max_depth'][1] + 1)),
        learning_rate=float(np.exp(rng.uniform(np.log(lo), np.log(hi)))),
        subsample=float(rng.uniform(*ranges['subsample'])),
        colsample_bytree=float(rng.uniform(*ranges['colsample_bytree'])),
        objective=objective,
        seed=seed,
    )


def _validation_score(model, X_val, y_val, objective: str) -> Tuple[str, float]:
    predicted = predict_matrix(model, X_val)
    if objective == 'logistic':
        labels = np.where(predicted >= FlashoverConfig.ROUTING_THRESHOLD, 1, 0)
        return 'f1', f1_score(*confusion_counts(np.asarray(y_val).astype(int), labels, positive=1))
    return 'rmse_pct', rmse_percent(y_val, predicted)


def random_search(X_train, y_train, X_val, y_val, objective: str, trials: int = 20, seed: int = 0,
                  ranges: Optional[Dict[str, Tuple[float, float]]] = None) -> List[SearchTrial]:
    """Trials sorted best first (highest F1 or lowest RMSE); draw order depends only on seed"""
    if trials < 1:
        raise InvalidArgumentError(f"trials must be >= 1, got {trials}")
    ranges = ranges or FlashoverConfig.SEARCH_RANGES
    rng = np.random.default_rng(seed)

    results = []
    for i in range(trials):
        hp = sample_hyperparameters(rng, objective, ranges, seed=seed + i)
        model = train(X_train, y_train, hp)
        metric, score = _validation_score(model, X_val, y_val, objective)
        results.append(SearchTrial(trial=i, hyperparameters=hp, metric=metric, score=score))
        logger.info(f"Trial {i + 1}/{trials}: {metric}={score:.4f} "
                    f"(trees={hp.n_estimators}, depth={hp.max_depth}, lr={hp.learning_rate:.4f})")

    higher = results[0].better_is_higher
    results.sort(key=lambda t: (-t.score if higher else t.score, t.trial))
    return results


def save_results(results: List[SearchTrial], filename: str = 'search_results.csv') -> pd.DataFrame:
    df = pd.DataFrame([t.to_dict() for t in results])
    df.to_csv(filename, index=False)
    logger.info(f"Search results saved to {filename}")
    return df
