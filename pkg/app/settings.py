from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file='.env', env_file_encoding='utf-8', extra='ignore'
    )

    SEED: int = 7
    OUTPUT_DIR: Path = Path('results')
    LOG_LEVEL: str = 'INFO'
    BLOCK_SIZE: int = 4096

    MAX_TREE_DEPTH: int = 12
    MAX_LEAVES: int = 2**20
    MAX_STOPPING_TIMES: int = 10**7
    SAMPLED_STOPPING_TIMES: int = 10**5
    MAX_GRID_STEPS: int = 10**7
    MAX_EXPECTED_JUMPS: int = 10**4
    LEVEL_BUDGET: int = 200

    SPARSE_THRESHOLD: float = 4.0
    EXACT_TOL: float = 1e-12
    NUMERIC_TOL: float = 1e-9
    TELESCOPING_TOL: float = 1e-10
    SIGMA_BAND: float = 3.0
    SPARSITY_BINS: int = 32

    RIESZ_BINS: int = 64
    MIN_BIN_HITS: int = 100
    MAX_CENSORED_FRACTION: float = 0.01
    MAX_LOW_CONFIDENCE_FRACTION: float = 0.1
