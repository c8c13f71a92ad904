import json
import os

from errors import ConfigError

# Runtime environment
BFTS_LOG_LEVEL = os.environ.get("BFTS_LOG_LEVEL", "WARNING")

# SBM benchmark (two communities: 600 majority-class, 400 minority-class nodes)
DEFAULT_BLOCK_SIZES = (600, 400)
# dense and assortative enough that the lowest-degree nodes are almost all minority-class
DEFAULT_P_IN = 0.2
DEFAULT_P_OUT = 0.01
DEFAULT_P_BIAS = 0.7
DEFAULT_N_FEATURES = 20
DEFAULT_N_NOISE = 8
DEFAULT_GAMMA = 1.0
DEFAULT_TRAIN_FRAC = 0.3
DEFAULT_VAL_FRAC = 0.2

# Missingness
DEFAULT_OBSERVED_FRAC = 0.3
DEFAULT_COVERAGE_RADIUS = 1
EXACT_MKU_MAX_SETS = 20

# Models
DEFAULT_HIDDEN_CLASSIFIER = 64
DEFAULT_HIDDEN_IMPUTER = 64
DEFAULT_HIDDEN_ADVERSARY = 32
DEFAULT_DROPOUT = 0.5

# Training
DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 1.0
DEFAULT_LDAM_C = 0.5
DEFAULT_LR = 1e-3
DEFAULT_EPOCHS = 1000
HARD_THRESHOLD = 0.5
INDEP_HOLDOUT_FRAC = 0.2
WORST_CASE_WARMUP = 100

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3


def load_config_file(path, allowed_keys=None):
    """Read a flat JSON object of option values (lists of scalars allowed)."""
    try:
        with open(path, encoding="utf-8") as handle:
            values = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    if not isinstance(values, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    nested = [
        key for key, value in values.items()
        if isinstance(value, dict) or (isinstance(value, list) and any(isinstance(v, (dict, list)) for v in value))
    ]
    if nested:
        raise ConfigError(f"config file {path} must be flat; nested keys: {nested}")
    if allowed_keys is not None:
        unknown = sorted(set(values) - set(allowed_keys))
        if unknown:
            raise ConfigError(f"unknown keys in {path}: {unknown}")
    return values


def merge_overrides(file_values, cli_values):
    """CLI values win over file values; ``None`` means the flag was not given."""
    merged = dict(file_values or {})
    merged.update({key: value for key, value in cli_values.items() if value is not None})
    return merged


def worker_limit():
    """Parallelism cap from ``BFTS_WORKERS`` (unset or 0 means one per CPU)."""
    raw = os.environ.get("BFTS_WORKERS", "0")
    try:
        workers = int(raw)
    except ValueError as e:
        raise ConfigError(f"BFTS_WORKERS must be an integer, got {raw!r}") from e
    if workers < 0:
        raise ConfigError("BFTS_WORKERS cannot be negative")
    return workers or (os.cpu_count() or 1)
