"""
Tests for the loguru setup.
"""

import logging

from loguru import logger

from dfms.core.logger import LOG_FILE, setup_logging


def test_setup_logging_writes_file_and_console(tmp_path, capsys):
    log_file = setup_logging("INFO", log_dir=tmp_path / "logs")
    assert log_file == tmp_path / "logs" / LOG_FILE

    logger.info("corpus written")
    logger.debug("hidden at INFO")
    logging.getLogger("uvicorn.error").info("victim server started")
    logging.getLogger("httpx").info("HTTP Request: POST /query")
    logger.remove()

    text = log_file.read_text()
    assert "corpus written" in text
    assert "victim server started" in text
    assert "hidden at INFO" not in text
    assert "HTTP Request" not in text

    captured = capsys.readouterr()
    assert "corpus written" in captured.err
    assert "corpus written" not in captured.out


def test_level_defaults_to_settings(tmp_path, monkeypatch):
    from dfms.core.config import settings

    monkeypatch.setattr(settings, "LOG_LEVEL", "warning")
    log_file = setup_logging(log_dir=tmp_path)
    logger.info("quiet")
    logger.warning("loud")
    logger.remove()
    text = log_file.read_text()
    assert "loud" in text
    assert "quiet" not in text
