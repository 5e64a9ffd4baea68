"""
PAVI

Command line entry point: logging setup, log retention and dispatch to the
pavi commands.
"""

import sys
import platform
import os
import logging
from logging.handlers import TimedRotatingFileHandler
import datetime

# Add current directory to path
current_dir = os.path.dirname(os.path.abspath(__file__))
if current_dir not in sys.path:
    sys.path.insert(0, current_dir)

from pavi import __version__, setup_module_logging  # noqa: E402
from pavi.utils import LOG_DIR, LOG_LEVEL, describe_environment, get_formatted_timestamp  # noqa: E402

logs_dir = LOG_DIR

# Handlers owned by setup_logging, replaced on every call
MAIN_HANDLERS = ("console", "main_file", "debug_file")


# Configure logging with enhanced features
def setup_logging():
    # The package logger; every pavi module logs through a child of it
    logger = setup_module_logging("pavi")
    logger.setLevel(logging.DEBUG)

    # Clear handlers from a previous call
    for handler in list(logger.handlers):
        if handler.get_name() in MAIN_HANDLERS:
            logger.removeHandler(handler)
            handler.close()

    # Create formatters
    standard_formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    detailed_formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s')

    # Console handler (stderr, so stdout stays clean)
    console_handler = logging.StreamHandler()
    console_handler.set_name("console")
    console_handler.setFormatter(standard_formatter)
    console_handler.setLevel(getattr(logging, str(LOG_LEVEL).upper(), logging.INFO))

    # File handler with daily rotation
    log_file = os.path.join(logs_dir, f"pavi_{datetime.datetime.now().strftime('%Y%m%d')}.log")
    file_handler = TimedRotatingFileHandler(
        log_file,
        when='midnight',
        interval=1,
        backupCount=30  # Keep logs for a month
    )
    file_handler.set_name("main_file")
    file_handler.setFormatter(detailed_formatter)
    file_handler.setLevel(logging.INFO)

    # Debug log (separate file for detailed debugging)
    debug_log_file = os.path.join(logs_dir, f"debug_{datetime.datetime.now().strftime('%Y%m%d')}.log")
    debug_handler = TimedRotatingFileHandler(
        debug_log_file,
        when='midnight',
        interval=1,
        backupCount=7  # Keep debug logs for a week
    )
    debug_handler.set_name("debug_file")
    debug_handler.setFormatter(detailed_formatter)
    debug_handler.setLevel(logging.DEBUG)

    # Add handlers to logger
    logger.addHandler(console_handler)
    logger.addHandler(file_handler)
    logger.addHandler(debug_handler)

    # Clean up old log files that might not be handled by the rotation system
    try:
        cleanup_old_logs()
    except Exception as e:
        logger.warning(f"Error cleaning up old logs: {e}")

    return logger


def cleanup_old_logs(now=None):
    """Remove dated log files beyond their retention period"""
    if not os.path.exists(logs_dir):
        return []

    # Retention periods in days
    retention = {
        "pavi_": 30,
        "debug_": 7,
        "modules_": 14,
    }

    now = now or datetime.datetime.now()
    removed = []
    for log_file in os.listdir(logs_dir):
        # Skip non-log files
        if not log_file.endswith('.log'):
            continue

        for prefix, days in retention.items():
            if not log_file.startswith(prefix):
                continue
            # Extract date from filename (format: prefix_YYYYMMDD.log)
            try:
                date_str = log_file[len(prefix):len(prefix) + 8]
                file_date = datetime.datetime.strptime(date_str, '%Y%m%d')
            except (ValueError, IndexError):
                continue

            # Delete if older than retention period
            if (now - file_date).days > days:
                try:
                    os.remove(os.path.join(logs_dir, log_file))
                    removed.append(log_file)
                except OSError as e:
                    logging.getLogger("pavi").warning(f"Error removing log file {log_file}: {e}")
    return removed


def main(argv=None):
    logger = setup_logging()
    logger.debug("=== PAVI started ===")
    logger.debug(f"pavi {__version__} on Python {platform.python_version()} at {get_formatted_timestamp()}")
    logger.debug(f"Environment: {describe_environment()}")

    # Imported late so that logging is in place before the numerical stack loads
    from pavi.cli import run

    code = run(argv)
    logger.debug(f"=== PAVI finished with exit code {code} ===")
    return code


if __name__ == "__main__":
    sys.exit(main())
