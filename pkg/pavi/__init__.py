"""
pavi

Estimation of F- and G-measures for variable-selection outcomes from
weighted ensembles of candidate models.
"""

import os
import logging
from logging.handlers import TimedRotatingFileHandler
import datetime

from pavi.utils import LOG_DIR

# pavi version
__version__ = "1.0.0"


# Set up logging
def setup_module_logging(module_name):
    if not os.path.exists(LOG_DIR):
        os.makedirs(LOG_DIR)

    # Create logger
    logger = logging.getLogger(module_name)
    if logger.level == logging.NOTSET:
        logger.setLevel(logging.INFO)

    # Skip setup if already configured
    if any(getattr(h, "name", None) == "modules_file" for h in logger.handlers):
        return logger

    # Create formatter
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    # Create file handler
    module_log_file = os.path.join(LOG_DIR, f"modules_{datetime.datetime.now().strftime('%Y%m%d')}.log")
    file_handler = TimedRotatingFileHandler(
        module_log_file,
        when='midnight',
        interval=1,
        backupCount=14
    )
    file_handler.set_name("modules_file")
    file_handler.setFormatter(formatter)
    file_handler.setLevel(logging.INFO)

    # Add handler to logger
    logger.addHandler(file_handler)

    return logger


# Create a logger for the pavi package; module loggers are its children
logger = setup_module_logging("pavi")

from pavi.errors import PaviError  # noqa: E402
from pavi.measures import (  # noqa: E402
    VariableSet,
    CandidateEnsemble,
    AssessmentReport,
    f_measure,
    g_measure,
    estimate_f,
    estimate_g,
    sd_estimate,
    assess,
)

__all__ = [
    "PaviError",
    "VariableSet",
    "CandidateEnsemble",
    "AssessmentReport",
    "f_measure",
    "g_measure",
    "estimate_f",
    "estimate_g",
    "sd_estimate",
    "assess",
    "setup_module_logging",
    "__version__",
]
