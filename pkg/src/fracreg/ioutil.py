"""Atomic file writing and shared numeric formatting for exports."""

from __future__ import annotations

import os
import tempfile


def fmt12(x: float) -> str:
    """12 significant digits, the package-wide CSV convention."""
    return f"{float(x):.12g}"


def _atomic_write(path: str, data, mode: str) -> None:
    # temp file in the destination directory so os.replace stays atomic
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path: str, text: str) -> None:
    _atomic_write(path, text, "w")


def atomic_write_bytes(path: str, blob: bytes) -> None:
    _atomic_write(path, blob, "wb")


def write_csv(path: str, header: str, rows) -> None:
    """Rows of floats, 12 significant digits, LF line endings."""
    lines = [header]
    for row in rows:
        lines.append(",".join(fmt12(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
