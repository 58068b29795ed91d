import logging

import pytest

from subunit.core.config import settings
from subunit.core.logging import PACKAGE_LOGGER, setup_logging


@pytest.fixture(autouse=True)
def _restore_logging():
    yield
    setup_logging()


def test_console_handler_is_replaced_not_stacked():
    setup_logging()
    logger = setup_logging(verbose=True)
    assert logger.name == PACKAGE_LOGGER
    assert len(logger.handlers) == 1
    assert logger.level == logging.DEBUG
    assert logger.propagate is False
    assert setup_logging().level == logging.INFO


def test_log_file_records_debug_from_package_modules(tmp_path):
    path = tmp_path / "nested" / "subunit.log"
    logger = setup_logging(log_file=str(path))
    assert len(logger.handlers) == 2
    assert logger.handlers[0].level == logging.INFO
    logging.getLogger("subunit.services.fitting").debug("start %s -> cost %.1e", (0.9,), 1e-3)
    logging.getLogger("elsewhere").warning("not ours")
    text = path.read_text(encoding="utf-8")
    assert "DEBUG" in text
    assert "subunit.services.fitting: start (0.9,) -> cost 1.0e-03" in text
    assert "not ours" not in text


def test_log_file_falls_back_to_settings(tmp_path, monkeypatch):
    path = tmp_path / "from_env.log"
    monkeypatch.setattr(settings, "log_file", str(path))
    setup_logging()
    logging.getLogger("subunit.services.protocols").info("Protocol 2 k=%d", 3)
    assert "Protocol 2 k=3" in path.read_text(encoding="utf-8")
