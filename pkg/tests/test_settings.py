"""Tests for runtime settings read from the environment."""

import logging

import pytest
from pydantic import ValidationError

from selrand.settings import RuntimeSettings


class TestRuntimeDefaults:
    def test_default_values(self, monkeypatch: pytest.MonkeyPatch):
        for name in ("SELRAND_THREADS", "SELRAND_LOG_LEVEL", "SELRAND_CONFIG"):
            monkeypatch.delenv(name, raising=False)
        s = RuntimeSettings()
        assert s.threads == 1
        assert s.log_level == "INFO"
        assert s.config is None
        assert s.level == logging.INFO


class TestFromEnvironment:
    def test_reads_prefixed_variables(self, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.setenv("SELRAND_THREADS", "6")
        monkeypatch.setenv("SELRAND_LOG_LEVEL", "debug")
        s = RuntimeSettings()
        assert s.threads == 6
        assert s.log_level == "DEBUG"
        assert s.level == logging.DEBUG
        assert "threads" in s.model_fields_set

    def test_unknown_level_rejected(self, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.setenv("SELRAND_LOG_LEVEL", "chatty")
        with pytest.raises(ValidationError, match="Unknown log level"):
            RuntimeSettings()

    def test_threads_must_be_positive(self, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.setenv("SELRAND_THREADS", "0")
        with pytest.raises(ValidationError):
            RuntimeSettings()
