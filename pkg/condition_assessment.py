"""
Insulator String Condition Assessment
Flashover-test statistics, %U50 → U50 / sigma_m conversion and the three-state
classification with its rolling worst-case rule
"""
import logging
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from config.flashover_config import FlashoverConfig
from errors import InsufficientDataError, InvalidArgumentError

logger = logging.getLogger(__name__)

# 90% confidence constants for the lab flashover statistics
LOWER_BOUND_FACTOR = 0.572
RELATIVE_SIGMA_FACTOR = 1.64
U50_SIGMA_FACTOR = 1.3

# Standard deviations below U50 marking the state boundaries
OPERATIONAL_SIGMAS = 3.0
HAZARDOUS_SIGMAS = 1.28

SIGMA_MODES = ('relative', 'absolute_as_written')


class State(Enum):
    OPERATIONAL = 'Operational'
    HAZARDOUS = 'Hazardous'
    EXTREMELY_HAZARDOUS = 'ExtremelyHazardous'

    @property
    def severity(self) -> int:
        return _SEVERITY[self]


_SEVERITY = {State.OPERATIONAL: 0, State.HAZARDOUS: 1, State.EXTREMELY_HAZARDOUS: 2}


@dataclass(frozen=True)
class FlashoverTestResult:
    flashover_voltages: tuple
    u_avg: float
    sigma: float
    u_avg_low: float
    sigma_rel: float
    u50: float
    sigma_mode: str = 'relative'

    @property
    def sigma_used(self) -> float:
        return self.sigma_rel if self.sigma_mode == 'relative' else self.sigma


def flashover_statistics(u_f: Sequence[float], sigma_mode: str = FlashoverConfig.U50_SIGMA_MODE) -> FlashoverTestResult:
    """
    Statistics of N repeated flashover tests (kV):
    mean, sample std (N-1), 90% lower mean bound, relative sigma and U50.

    sigma_mode='relative' applies the relative sigma in U50 = U_low·(1 − 1.3·sigma);
    'absolute_as_written' plugs in the kV sigma unchanged.
    """
    if sigma_mode not in SIGMA_MODES:
        raise InvalidArgumentError(f"sigma_mode must be one of {SIGMA_MODES}, got '{sigma_mode}'")
    voltages = np.asarray(u_f, dtype=np.float64).reshape(-1)
    if len(voltages) < 2:
        raise InsufficientDataError(f"flashover statistics need >= 2 tests, got {len(voltages)}")
    if not np.all(voltages > 0):
        raise InvalidArgumentError("flashover voltages must be positive")

    u_avg = float(np.mean(voltages))
    sigma = float(np.std(voltages, ddof=1))
    u_avg_low = u_avg - LOWER_BOUND_FACTOR * sigma
    sigma_rel = RELATIVE_SIGMA_FACTOR * sigma / u_avg
    sigma_used = sigma_rel if sigma_mode == 'relative' else sigma
    u50 = u_avg_low * (1.0 - U50_SIGMA_FACTOR * sigma_used)

    return FlashoverTestResult(
        flashover_voltages=tuple(float(v) for v in voltages),
        u_avg=u_avg,
        sigma=sigma,
        u_avg_low=u_avg_low,
        sigma_rel=sigma_rel,
        u50=u50,
        sigma_mode=sigma_mode,
    )


def u50_from_percent(u_ph: float, pct_u50: float) -> float:
    """U50 (kV) of a string operated at u_ph that sits at pct_u50 % of its U50"""
    if not pct_u50 > 0:
        raise InvalidArgumentError(f"pct_u50 must be positive, got {pct_u50}")
    if not u_ph > 0:
        raise InvalidArgumentError(f"u_ph must be positive, got {u_ph}")
    return 100.0 * u_ph / pct_u50


def percent_from_u50(u_ph: float, u50: float) -> float:
    if not u50 > 0 or not u_ph > 0:
        raise InvalidArgumentError("u_ph and u50 must be positive")
    return 100.0 * u_ph / u50


def sigma_m_from_percent(pct_sigma_m: float, u50_hat: float) -> float:
    """Model uncertainty in kV from a %-point RMSE"""
    if pct_sigma_m < 0:
        raise InvalidArgumentError(f"pct_sigma_m must be >= 0, got {pct_sigma_m}")
    if u50_hat < 0:
        raise InvalidArgumentError(f"u50_hat must be >= 0, got {u50_hat}")
    return pct_sigma_m * u50_hat / 100.0


@dataclass(frozen=True)
class StateAssessment:
    state: State
    u50_hat: float
    sigma: float
    sigma_m_hat: float
    sigma_total: float
    u_ph: float
    r: float
    lower_3sigma: float
    lower_1p28sigma: float
    timestamp: Optional[datetime] = None
    string_id: str = ''
    pct_u50: Optional[float] = None
    pct_sigma_m: Optional[float] = None

    @property
    def thresholds(self) -> Dict[str, float]:
        return {'lower_3sigma': self.lower_3sigma, 'lower_1p28sigma': self.lower_1p28sigma}

    @property
    def operating_level(self) -> float:
        return self.r * self.u_ph

    def rederive(self) -> State:
        """State recomputed from the stored voltages and sigmas"""
        return classify_state(self.u50_hat, self.sigma, self.sigma_m_hat, self.u_ph, self.r).state

    def to_record(self) -> Dict:
        return {
            'timestamp': self.timestamp.isoformat() if self.timestamp else None,
            'string_id': self.string_id,
            'u_ph_kv': self.u_ph,
            'r': self.r,
            'pct_u50': self.pct_u50,
            'pct_sigma_m': self.pct_sigma_m,
            'u50_hat_kv': self.u50_hat,
            'sigma_kv': self.sigma,
            'sigma_m_kv': self.sigma_m_hat,
            'sigma_t_kv': self.sigma_total,
            'state': self.state.value,
            'thresholds': self.thresholds,
        }

    @classmethod
    def from_record(cls, record: Dict) -> 'StateAssessment':
        timestamp = record.get('timestamp')
        return cls(
            state=State(record['state']),
            u50_hat=record['u50_hat_kv'],
            sigma=record['sigma_kv'],
            sigma_m_hat=record['sigma_m_kv'],
            sigma_total=record['sigma_t_kv'],
            u_ph=record['u_ph_kv'],
            r=record['r'],
            lower_3sigma=record['thresholds']['lower_3sigma'],
            lower_1p28sigma=record['thresholds']['lower_1p28sigma'],
            timestamp=datetime.fromisoformat(timestamp) if timestamp else None,
            string_id=record.get('string_id', ''),
            pct_u50=record.get('pct_u50'),
            pct_sigma_m=record.get('pct_sigma_m'),
        )


def classify_state(u50_hat: float, sigma: float, sigma_m_hat: float, u_ph: float,
                   r: float = FlashoverConfig.SAFETY_FACTOR) -> StateAssessment:
    """
    sigma_t = sigma + sigma_m_hat, operating level = r·u_ph:
      Operational         level <  U50 − 3·sigma_t
      Hazardous           U50 − 3·sigma_t <= level < U50 − 1.28·sigma_t
      ExtremelyHazardous  level >= U50 − 1.28·sigma_t
    """
    if not u50_hat > 0 or not u_ph > 0:
        raise InvalidArgumentError("u50_hat and u_ph must be positive")
    if sigma < 0 or sigma_m_hat < 0:
        raise InvalidArgumentError("sigmas must be >= 0")
    if not r > 0:
        raise InvalidArgumentError(f"safety factor r must be positive, got {r}")

    sigma_total = sigma + sigma_m_hat
    lower_3sigma = u50_hat - OPERATIONAL_SIGMAS * sigma_total
    lower_1p28sigma = u50_hat - HAZARDOUS_SIGMAS * sigma_total
    level = r * u_ph

    if level < lower_3sigma:
        state = State.OPERATIONAL
    elif level < lower_1p28sigma:
        state = State.HAZARDOUS
    else:
        state = State.EXTREMELY_HAZARDOUS

    return StateAssessment(
        state=state,
        u50_hat=u50_hat,
        sigma=sigma,
        sigma_m_hat=sigma_m_hat,
        sigma_total=sigma_total,
        u_ph=u_ph,
        r=r,
        lower_3sigma=lower_3sigma,
        lower_1p28sigma=lower_1p28sigma,
    )


def assess_prediction(pct_u50: float, pct_sigma_m: float, u_ph: float,
                      r: float = FlashoverConfig.SAFETY_FACTOR,
                      sigma: float = FlashoverConfig.SIGMA_DEFAULT_KV,
                      timestamp: Optional[datetime] = None, string_id: str = '') -> StateAssessment:
    """Predicted %U50 and model RMSE (%) → U50, sigma_m → state, with provenance"""
    if pct_u50 < FlashoverConfig.MIN_PCT_U50:
        logger.warning(
            f"Predicted %U50 {pct_u50:.4g} below {FlashoverConfig.MIN_PCT_U50}; clamped"
        )
        pct_u50 = FlashoverConfig.MIN_PCT_U50

    u50_hat = u50_from_percent(u_ph, pct_u50)
    sigma_m_hat = sigma_m_from_percent(pct_sigma_m, u50_hat)
    result = classify_state(u50_hat, sigma, sigma_m_hat, u_ph, r)

    assessment = StateAssessment(
        **{**result.__dict__, 'timestamp': timestamp, 'string_id': string_id,
           'pct_u50': float(pct_u50), 'pct_sigma_m': float(pct_sigma_m)}
    )
    logger.info(
        f"{string_id or 'string'}: %U50={pct_u50:.2f} → U50={u50_hat:.2f} kV, "
        f"sigma_t={assessment.sigma_total:.2f} kV → {assessment.state.value}"
    )
    return assessment


def worst_case_over_window(assessments: Iterable[StateAssessment],
                           window_days: float = FlashoverConfig.WORST_CASE_WINDOW_DAYS,
                           now: Optional[datetime] = None) -> StateAssessment:
    """
    Most severe assessment with now − window <= timestamp <= now.
    now defaults to the newest timestamp; ties go to the most recent.
    """
    items: List[StateAssessment] = list(assessments)
    if not items:
        raise InsufficientDataError("no assessments to aggregate")
    if not window_days > 0:
        raise InvalidArgumentError(f"window must be positive, got {window_days} days")
    if any(a.timestamp is None for a in items):
        raise InvalidArgumentError("every assessment needs a timestamp for windowing")

    items = [a if a.timestamp.tzinfo else _as_utc(a) for a in items]
    if now is None:
        now = max(a.timestamp for a in items)
    elif now.tzinfo is None:
        now = now.replace(tzinfo=timezone.utc)

    start = now - timedelta(days=window_days)
    in_window = [a for a in items if start <= a.timestamp <= now]
    if not in_window:
        raise InsufficientDataError(f"no assessments within {window_days} days of {now.isoformat()}")

    return max(in_window, key=lambda a: (a.state.severity, a.timestamp, -a.u50_hat, a.string_id))


def _as_utc(a: StateAssessment) -> StateAssessment:
    return StateAssessment(**{**a.__dict__, 'timestamp': a.timestamp.replace(tzinfo=timezone.utc)})
