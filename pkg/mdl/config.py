import os
from dotenv import load_dotenv

from mdl.errors import ConfigError


def _positive_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == '':
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(name, f'{name} must be an integer, got {raw!r}') from None
    if value <= 0:
        raise ConfigError(name, f'{name} must be positive, got {value}')
    return value


class Config:
    """Configuration for the toolkit.

    Reads the configuration from the environment variables, after loading a
    `.env` file if one is present.

    Attributes:
        log_level: The log level used by the command line interface.
        workers: The number of worker threads used to fan out seeds.
        max_matrix_entries: The largest risk matrix brute_force_opt will solve.
        max_feature_bits: The largest feature domain for which all labelings
            are enumerated.
        max_rounds: The cap on the number of rounds in doubling searches.
    """
    def __init__(self):
        load_dotenv()

        self.log_level = os.getenv('MDL_LOG_LEVEL', 'INFO').upper()
        self.workers = _positive_int('MDL_WORKERS', 1)
        self.max_matrix_entries = _positive_int('MDL_MAX_MATRIX_ENTRIES', 100_000)
        self.max_feature_bits = _positive_int('MDL_MAX_FEATURE_BITS', 16)
        self.max_rounds = _positive_int('MDL_MAX_ROUNDS', 262_144)

config = Config()
