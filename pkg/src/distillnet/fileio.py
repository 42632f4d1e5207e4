"""Atomic file writes: stages must never leave partial outputs behind."""

from __future__ import annotations

import os


def atomic_write_bytes(path, data):
    """Write to a sibling temp file, then rename over the target."""
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))
