import logging

from rich.logging import RichHandler

from app.settings import Settings


def configure_logging(level: str | None = None) -> None:
    """Instala um único RichHandler no logger raiz."""
    logging.basicConfig(
        level=(level or Settings().LOG_LEVEL).upper(),
        format='%(message)s',
        datefmt='[%X]',
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
        force=True,
    )
