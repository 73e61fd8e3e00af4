"""
Run Manifest
Everything needed to reproduce a pipeline run, saved next to its outputs
"""
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from config.flashover_config import FlashoverConfig


@dataclass
class RunManifest:
    command: str = ''
    seed: int = 0
    dsp_config: Dict = field(default_factory=lambda: {
        'ma_window': FlashoverConfig.MA_WINDOW,
        'es_alpha': FlashoverConfig.ES_ALPHA,
        'pulse_threshold_ma': None,
        'pulse_threshold_floor_ma': FlashoverConfig.PULSE_THRESHOLD_FLOOR_MA,
        'pulse_mad_multiplier': FlashoverConfig.PULSE_MAD_MULTIPLIER,
    })
    catalog_groups: Optional[List[str]] = None     # None = every group
    catalog_version: str = ''
    mrmr_config: Dict = field(default_factory=lambda: {
        'bins': FlashoverConfig.MRMR_BINS,
        'redundancy_floor': FlashoverConfig.REDUNDANCY_FLOOR,
    })
    train_fraction: float = FlashoverConfig.TRAIN_FRACTION
    split_seed: int = FlashoverConfig.SPLIT_SEED
    model_paths: Dict[str, str] = field(default_factory=dict)
    u_ph: float = FlashoverConfig.U_PH_KV
    r: float = FlashoverConfig.SAFETY_FACTOR
    sigma_default_kv: float = FlashoverConfig.SIGMA_DEFAULT_KV
    sigma_mode: str = FlashoverConfig.U50_SIGMA_MODE
    min_voltage_kv: Optional[float] = FlashoverConfig.MIN_VOLTAGE_KV
    outputs: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> 'RunManifest':
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
        return path

    @classmethod
    def load(cls, path) -> 'RunManifest':
        with open(path, 'r') as f:
            return cls.from_dict(json.load(f))

