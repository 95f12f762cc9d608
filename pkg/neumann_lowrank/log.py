"""
.. module:: log
   :platform: Unix, Windows
   :synopsis: logger factory for the library

Every module takes its logger from :func:`get_logger`. The package itself only
attaches a :class:`logging.NullHandler`; applications (and the command line tool)
call :func:`configure` to get console output in the ``LEVEL:: name: message`` form.
"""

import logging

ROOT = "neumann_lowrank"
FORMAT = "%(levelname)s:: %(name)s: %(message)s"

logging.getLogger(ROOT).addHandler(logging.NullHandler())


def get_logger(name):
    """Return the package logger for module ``name`` (``neumann_lowrank.<name>``)."""
    if name.startswith(ROOT):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT}.{name}")


def configure(level=logging.INFO, stream=None):
    """Attach a single stream handler to the package logger.

    Calling it twice replaces the previous handler.

    :param level: logging level for the package logger.
    :param stream: target stream, ``sys.stderr`` when omitted.
    :return: the configured root logger of the package.
    """
    logger = logging.getLogger(ROOT)
    for handler in list(logger.handlers):
        if getattr(handler, "_neumann_lowrank", False):
            logger.removeHandler(handler)
    handler = logging.StreamHandler(stream)
    handler.setFormatter(logging.Formatter(FORMAT))
    handler._neumann_lowrank = True
    logger.addHandler(handler)
    logger.setLevel(level)
    return logger
