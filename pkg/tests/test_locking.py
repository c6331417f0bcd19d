import json

import numpy as np
import pytest
from filelock import FileLock

from app.core.exceptions import HistopolationError, MeshInversionError
from app.utils.locking import AtomicFileWriter, format_cell, json_safe
from app.utils.retry import create_retry_decorator, is_retryable_error


def test_json_safe_maps_non_finite_to_null():
    payload = {"beta": float("inf"), "values": np.array([1.0, np.nan]), "n": np.int64(3)}
    assert json_safe(payload) == {"beta": None, "values": [1.0, None], "n": 3}


def test_format_cell():
    assert format_cell(None, "%.3e") == ""
    assert format_cell(float("nan"), "%.3e") == ""
    assert format_cell(0.5, "%.3e") == "5.000e-01"
    assert format_cell("linear", "%.3e") == "linear"
    assert format_cell(7, "%.3e") == "7"


def test_write_json_and_csv(tmp_path):
    json_path = tmp_path / "out" / "report.json"
    AtomicFileWriter(str(json_path)).write_json({"kappa": float("inf"), "ok": True})
    assert json.loads(json_path.read_text(encoding="utf-8")) == {"kappa": None, "ok": True}

    csv_path = tmp_path / "table.csv"
    AtomicFileWriter(str(csv_path)).write_csv(("n", "error"), [[5, 0.25], [9, None]], float_format="%.2f")
    assert csv_path.read_text(encoding="utf-8") == "n,error\n5,0.25\n9,\n"
    assert not list(tmp_path.glob("*.tmp"))


def test_lock_timeout_raises(tmp_path):
    target = tmp_path / "busy.csv"
    writer = AtomicFileWriter(str(target), timeout_seconds=0.05)
    with FileLock(writer.lock_path):
        with pytest.raises(HistopolationError):
            writer.write_text("x\n")
    assert not target.exists()


def test_retry_decorator_stops_after_max_attempts():
    calls = []

    @create_retry_decorator(max_attempts=3)
    def flaky():
        calls.append(1)
        raise MeshInversionError("inverted")

    with pytest.raises(MeshInversionError):
        flaky()
    assert len(calls) == 3
    assert is_retryable_error(MeshInversionError("x"))
    assert not is_retryable_error(ValueError("x"))


def test_retry_decorator_does_not_retry_other_errors():
    calls = []

    @create_retry_decorator(max_attempts=5)
    def broken():
        calls.append(1)
        raise ValueError("bad input")

    with pytest.raises(ValueError):
        broken()
    assert len(calls) == 1
