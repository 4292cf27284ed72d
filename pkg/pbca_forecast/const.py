"""Constants for the position-based content attention forecaster."""
from typing import Final

# Package
DOMAIN: Final = "pbca_forecast"
VERSION: Final = "0.3.0"

# Checkpoint format
CHECKPOINT_MAGIC: Final = b"PBCA1\n"
CHECKPOINT_CONFIG_NAME: Final = "__config__"

# Exit codes
EXIT_OK: Final = 0
EXIT_USAGE: Final = 2
EXIT_DATA: Final = 3
EXIT_NUMERIC: Final = 4

# Adam
ADAM_BETA1: Final = 0.9
ADAM_BETA2: Final = 0.999
ADAM_EPSILON: Final = 1e-8

# Training defaults
DEFAULT_HIDDEN: Final = 128
DEFAULT_ATTENTION_UNITS: Final = 256
DEFAULT_LEARNING_RATE: Final = 1e-3
DEFAULT_L2: Final = 1e-4
DEFAULT_BATCH_SIZE: Final = 64
DEFAULT_MAX_EPOCHS: Final = 100
DEFAULT_PATIENCE: Final = 10
DEFAULT_SEED: Final = 0
FORGET_BIAS_INIT: Final = 1.0

# Sweep grid
SWEEP_HIDDEN_SIZES: Final = (128, 256)
SWEEP_ATTENTION_UNITS: Final = (256, 512)

# Split protocol: train ends at 56.25 %, validation at 75 %
TRAIN_FRACTION: Final = 0.5625
TRAIN_VALIDATION_FRACTION: Final = 0.75

# Partitions
PARTITION_TRAIN: Final = "train"
PARTITION_VALIDATION: Final = "validation"
PARTITION_TEST: Final = "test"

# Statistics
SIGNIFICANCE_LEVEL: Final = 0.05
SIGNIFICANCE_MARKER: Final = "*"

# Numerical checks
FINITE_DIFF_EPSILON: Final = 1e-5
FINITE_DIFF_FLOOR: Final = 1e-8

# CSV
DEFAULT_MISSING_TOKEN: Final = ""

# Dataset presets: history, horizon, sampling rate, univariate target,
# multivariate variables (the target is always one of them). A None target
# means the CSV column has to be named in the config.
DATASET_PRESETS: Final = {
    "PSE": {
        "T": 96,
        "T_prime": 4,
        "sampling": "2 hours",
        "target": None,
        "variables": (),
    },
    "PW": {
        "T": 548,
        "T_prime": 7,
        "sampling": "1 day",
        "target": None,
        "variables": (),
    },
    "NAB": {
        "T": 72,
        "T_prime": 6,
        "sampling": "5 minutes",
        "target": None,
        "variables": (),
    },
    "AQ": {
        "T": 192,
        "T_prime": 6,
        "sampling": "1 hour",
        "target": "C6H6(GT)",
        "variables": ("C6H6(GT)", "NO2(GT)", "CO(GT)", "NOx(GT)"),
    },
    "AEP": {
        "T": 216,
        "T_prime": 6,
        "sampling": "10 minutes",
        "target": "RH_6",
        "variables": ("T1", "T6", "RH_6", "RH_8"),
    },
    "OLD": {
        "T": 548,
        "T_prime": 7,
        "sampling": "1 day",
        "target": "T3",
        "variables": ("T0", "T1", "T2", "T3"),
    },
}
