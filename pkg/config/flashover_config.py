"""
Flashover Estimation Configuration
Defaults for DSP, feature selection, boosting presets and state assessment
"""
import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class FlashoverConfig:
    """Pipeline configuration"""

    # DSP (the lab filter parameters were never published; these are declared defaults)
    MA_WINDOW = 5                 # samples
    ES_ALPHA = 0.3
    PULSE_THRESHOLD_FLOOR_MA = 0.1
    PULSE_MAD_MULTIPLIER = 3.0
    MAINS_FREQ_HZ = 50.0

    # MRMR
    MRMR_BINS = 10
    REDUNDANCY_FLOOR = 0.01

    # Evaluation
    TRAIN_FRACTION = 0.8
    SPLIT_SEED = 0
    FEATURE_COUNTS = [1, 5, 10, 15, 20, 30, 40, 'all']
    CLASSIFIER_COUNTS = [10, 20]  # classifier sizes used for the full-method validation
    ROUTING_THRESHOLD = 0.5

    # State assessment
    SAFETY_FACTOR = float(os.getenv('FLASHOVER_R', '1.6'))          # OHL shorter than 100 km
    SIGMA_DEFAULT_KV = float(os.getenv('FLASHOVER_SIGMA_KV', '14'))  # fleet-average lab scatter
    U_PH_KV = float(os.getenv('FLASHOVER_U_PH_KV', '63.5'))
    WORST_CASE_WINDOW_DAYS = 90
    U50_SIGMA_MODE = 'relative'       # 'relative' | 'absolute_as_written'
    MIN_PCT_U50 = 0.1             # floor applied to regressor output before the U50 conversion

    # Training data filter (lab used 1.5 kV for IEC compliance; disabled by default)
    MIN_VOLTAGE_KV = None
    LAB_MIN_VOLTAGE_KV = 1.5

    # Tuned boosting hyperparameters
    PRESETS = {
        'tuned-classifier': {            # classification, top 20 features
            'n_estimators': 422,
            'max_depth': 4,
            'learning_rate': 0.157,
            'subsample': 0.837,
            'colsample_bytree': 0.603,
            'objective': 'logistic',
        },
        'tuned-wet': {        # regression, wet model, top 10 features
            'n_estimators': 732,
            'max_depth': 7,
            'learning_rate': 0.008,
            'subsample': 0.5,
            'colsample_bytree': 1.0,
            'objective': 'squared',
        },
        'tuned-dry': {        # regression, dry model, top 10 features
            'n_estimators': 810,
            'max_depth': 7,
            'learning_rate': 0.016,
            'subsample': 0.5,
            'colsample_bytree': 1.0,
            'objective': 'squared',
        },
    }

    # Alternate preset names accepted by `train --preset`
    PRESET_ALIASES = {
        'table2': 'tuned-classifier',
        'table4-wet': 'tuned-wet',
        'table4-dry': 'tuned-dry',
    }

    # Search ranges used when tuning
    SEARCH_RANGES = {
        'n_estimators': (50, 1000),
        'max_depth': (3, 15),
        'learning_rate': (0.001, 1.0),
        'subsample': (0.5, 1.0),
        'colsample_bytree': (0.5, 1.0),
    }

    # Default preset per training task
    TASK_PRESETS = {
        'classification': 'tuned-classifier',
        'regression-wet': 'tuned-wet',
        'regression-dry': 'tuned-dry',
    }
