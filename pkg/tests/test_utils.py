import io
import json
import logging
import tempfile

import numpy as np
import pytest

from src.utils.io_utils import atomic_write_text, rows_to_csv_text
from src.utils.logging_setup import configure_logging
from src.utils.validators import as_points, as_vector, ensure_int, ensure_positive, ensure_symmetric


def test_atomic_write_text():
    with tempfile.NamedTemporaryFile("w", delete=False) as tmp:
        path = tmp.name
    atomic_write_text(path, "W0 = x")
    with open(path, "r", encoding="utf-8") as f:
        content = f.read()
    assert content == "W0 = x"


def test_atomic_write_creates_parent_directories(tmp_path):
    target = tmp_path / "run" / "nested" / "report.json"
    atomic_write_text(target, "{}")
    assert target.read_text(encoding="utf-8") == "{}"


def test_rows_to_csv_text_keeps_column_order():
    text = rows_to_csv_text([{"b": 2, "a": 1, "extra": 9}], ["a", "b"])
    assert text == "a,b\n1,2\n"


def test_ensure_int():
    assert ensure_int("7") == 7
    assert ensure_int(3.0) == 3
    with pytest.raises(ValueError):
        ensure_int(2.5)
    with pytest.raises(ValueError):
        ensure_int(True)
    with pytest.raises(ValueError):
        ensure_int(0, must_be_positive=True)


def test_ensure_positive_rejects_non_finite():
    with pytest.raises(ValueError):
        ensure_positive(float("inf"), "dt")
    with pytest.raises(ValueError):
        ensure_positive(0.0, "dt")


def test_shape_helpers():
    assert as_points([1.0, 2.0], 1).shape == (2, 1)
    assert as_points([1.0, 2.0], 2).shape == (1, 2)
    with pytest.raises(ValueError):
        as_points(np.zeros((2, 3)), 2)
    with pytest.raises(ValueError):
        as_vector([1.0, 2.0], 1)
    with pytest.raises(ValueError):
        ensure_symmetric([[1.0, 2.0], [0.0, 1.0]])


def test_json_logging_emits_one_object_per_line():
    stream = io.StringIO()
    configure_logging("INFO", json_output=True, stream=stream)
    try:
        logging.getLogger("src.lipsolve.solver").info("Picard iteration %d", 4, extra={"model": "lq"})
        record = json.loads(stream.getvalue().strip().splitlines()[-1])
        assert record["message"] == "Picard iteration 4"
        assert record["levelname"] == "INFO"
        assert record["model"] == "lq"
    finally:
        configure_logging("WARNING")


def test_reconfiguring_logging_does_not_stack_handlers():
    configure_logging("DEBUG")
    configure_logging("WARNING")
    named = [h for h in logging.getLogger().handlers if h.get_name() == "mfg-lab"]
    assert len(named) == 1
