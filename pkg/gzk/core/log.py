import logging
from rich.logging import RichHandler
from gzk.core.config import settings

_configured = False


def get_logger(name: str) -> logging.Logger:
    """
    Returns a module logger. The root 'gzk' logger gets a single RichHandler
    the first time any module asks for one.
    """
    global _configured
    if not _configured:
        root = logging.getLogger("gzk")
        root.setLevel(settings.LOG_LEVEL.upper())
        handler = RichHandler(show_path=False, rich_tracebacks=True)
        handler.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(handler)
        root.propagate = False
        _configured = True
    return logging.getLogger(name)
