"""
Utility functions and constants for pavi
"""

import os
import datetime
import tempfile
from typing import Dict

import numpy as np
import pandas as pd
import psutil

# Import environment configuration
try:
    from decouple import config
except ImportError:
    from dotenv import load_dotenv

    load_dotenv()

    def config(key, default=None, cast=None):
        value = os.environ.get(key, default)
        if cast is not None and value is not None:
            return cast(value)
        return value

from pavi.errors import PaviError, IO_ERROR

PROJECT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Environment driven settings
DEFAULT_SEED = config("PAVI_SEED", default=42, cast=int)
LOG_DIR = config("PAVI_LOG_DIR", default=os.path.join(PROJECT_DIR, "logs"))
LOG_LEVEL = config("PAVI_LOG_LEVEL", default="INFO")

# Default output file names for the command line front end
DEFAULT_PATHS = {
    "assessment": "assessment.tsv",
    "contributions": "contributions.tsv",
    "diagnostics": "diagnostics.tsv",
    "simulation": "simulation_example{example}_{family}.tsv",
    "replications": "simulation_example{example}_{family}_replications.tsv",
    "sweep": "sweep_example{example}.tsv",
    "path": "path_{penalty}.tsv",
    "accuracy": "accuracy.tsv",
    "overlap": "overlap.tsv",
}

# Six significant digits in every emitted table
FLOAT_FORMAT = "%.6g"

FAMILIES = ("gaussian", "binomial")


def default_threads() -> int:
    """Parallelism cap from PAVI_THREADS, falling back to the physical core count"""
    cores = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True) or 1
    return max(1, config("PAVI_THREADS", default=cores, cast=int))


def child_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Independent seed stream for item `index` under a master seed"""
    return np.random.SeedSequence([int(seed), int(index)])


def child_random_state(seed: int, index: int) -> int:
    """Integer random_state for scikit-learn splitters derived from (seed, index)"""
    return int(child_seed(seed, index).generate_state(1)[0])


def progress_every(total: int) -> int:
    """Step between progress log lines, roughly every 10%"""
    return max(1, total // 10)


def write_tsv(frame: pd.DataFrame, path: str) -> str:
    """Write a table atomically: temp file in the target directory, then rename"""
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        handle, tmp_path = tempfile.mkstemp(prefix=".pavi_", suffix=".tsv", dir=directory)
        try:
            with os.fdopen(handle, "w", encoding="utf-8", newline="") as f:
                frame.to_csv(f, sep="\t", index=False, float_format=FLOAT_FORMAT)
            os.replace(tmp_path, path)
        finally:
            if os.path.exists(tmp_path):
                os.remove(tmp_path)
    except OSError as e:
        raise PaviError(IO_ERROR, "could not write output", f"{path}: {str(e)}")
    return path


def output_path(out_dir: str, key: str, **fields: str) -> str:
    return os.path.join(out_dir, DEFAULT_PATHS[key].format(**fields))


def get_formatted_timestamp() -> str:
    """Returns the current time for run banners"""
    now = datetime.datetime.now()

    # Format: "2025-04-02 15:45:10"
    return now.strftime("%Y-%m-%d %H:%M:%S")


def describe_environment() -> Dict[str, str]:
    """Versions and settings worth recording at the top of a run log"""
    return {
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "threads": str(default_threads()),
        "seed": str(DEFAULT_SEED),
        "log_dir": LOG_DIR,
    }


def log_progress(logger, done: int, total: int, label: str):
    """Log a progress line roughly every 10% of `total`"""
    if done % progress_every(total) == 0 or done == total:
        logger.info(f"{label}: {done}/{total} ({100.0 * done / total:.0f}%)")
