import os
import unittest
from unittest.mock import patch

import numpy as np
from pydantic import BaseModel, ValidationError

from config.exceptions import (
    ConfigError, DataValidationError, GmvError, LeakageError, NumericalError,
    error_response, exit_code_for, handle_exception,
)
from config.logging_config import get_logger
from config.seeds import STREAM_BACKTEST, STREAM_TRAIN, make_rng
from config.settings import Settings


class _Model(BaseModel):
    value: int


class ExceptionTest(unittest.TestCase):
    """예외 계층과 오류 응답"""

    def test_error_codes(self):
        self.assertEqual(ConfigError("x").error_code, "CONFIG_ERROR")
        self.assertEqual(NumericalError("x").error_code, "NUMERICAL_ERROR")
        self.assertEqual(GmvError("x", error_code="CUSTOM").error_code, "CUSTOM")

    def test_exit_codes(self):
        self.assertEqual(exit_code_for(ConfigError("x")), 1)
        self.assertEqual(exit_code_for(DataValidationError("x")), 1)
        self.assertEqual(exit_code_for(LeakageError("x")), 2)
        self.assertEqual(exit_code_for(RuntimeError("x")), 2)
        with self.assertRaises(ValidationError) as ctx:
            _Model(value="abc")
        self.assertEqual(exit_code_for(ctx.exception), 1)

    def test_response_shape(self):
        body = error_response("실패", "DATA_ERROR", {"line": 3})
        self.assertEqual(body, {"success": False, "message": "실패", "error_code": "DATA_ERROR",
                                "details": {"line": 3}})

    def test_handle_gmv_error(self):
        body = handle_exception(DataValidationError("행 오류", details={"line": 7}))
        self.assertFalse(body["success"])
        self.assertEqual(body["error_code"], "DATA_ERROR")
        self.assertEqual(body["details"], {"line": 7})

    def test_handle_validation_error(self):
        with self.assertRaises(ValidationError) as ctx:
            _Model(value="abc")
        body = handle_exception(ctx.exception)
        self.assertEqual(body["error_code"], "VALIDATION_ERROR")
        self.assertEqual(body["details"][0]["loc"], "value")

    def test_handle_unknown(self):
        body = handle_exception(KeyError("k"))
        self.assertEqual(body["error_code"], "INTERNAL_ERROR")


class SeedTest(unittest.TestCase):
    """난수 스트림"""

    def test_same_key_same_stream(self):
        a = make_rng(5, STREAM_TRAIN, 3).standard_normal(8)
        b = make_rng(5, STREAM_TRAIN, 3).standard_normal(8)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = make_rng(5, STREAM_TRAIN).standard_normal(8)
        b = make_rng(5, STREAM_BACKTEST).standard_normal(8)
        c = make_rng(6, STREAM_TRAIN).standard_normal(8)
        self.assertFalse(np.allclose(a, b))
        self.assertFalse(np.allclose(a, c))

    def test_negative_seed_wraps(self):
        draws = make_rng(-1, STREAM_TRAIN).standard_normal(4)
        self.assertTrue(np.all(np.isfinite(draws)))


class SettingsTest(unittest.TestCase):

    def test_environment_override(self):
        with patch.dict(os.environ, {"OUTPUT_DIR": "results", "THREADS": "4", "LOG_TO_FILE": "False"}):
            current = Settings()
        self.assertEqual(current.OUTPUT_DIR, "results")
        self.assertEqual(current.THREADS, 4)
        self.assertFalse(current.LOG_TO_FILE)

    def test_logger_name(self):
        self.assertEqual(get_logger("panel.ingest").name, "panel.ingest")
