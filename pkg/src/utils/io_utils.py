# src/utils/io_utils.py
from __future__ import annotations

import contextlib
import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, Union

PathLike = Union[str, Path]


def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    """
    Write `data` to `path` so readers see either the old file or the whole new one.

    Parent directories are created. The bytes go to a hidden sibling temp file,
    which is fsynced and then moved over the target with `os.replace`; the temp
    file is removed if anything fails.

    Raises:
        OSError: any I/O failure, after cleanup.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)

    # same directory so os.replace stays on one filesystem
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".part", dir=target.parent)
    tmp = Path(tmp_name)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            with contextlib.suppress(AttributeError, OSError):
                os.fsync(fh.fileno())
        os.replace(tmp, target)
    except OSError:
        with contextlib.suppress(OSError):
            tmp.unlink(missing_ok=True)
        raise


def atomic_write_text(path: PathLike, text: str, encoding: str = "utf-8") -> None:
    """Atomically write `text` to `path` (see `atomic_write_bytes`)."""
    atomic_write_bytes(path, text.encode(encoding))


def rows_to_csv_text(rows: Iterable[Mapping[str, Any]], fieldnames: Sequence[str]) -> str:
    """Render dict rows as CSV text with a header; unknown keys are ignored."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fieldnames), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in fieldnames})
    return buf.getvalue()
