"""Flat ``key = value`` configuration files."""

from __future__ import annotations

import os
from pathlib import Path

from .core import DataError


def parse_flat(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines. ``#`` starts a comment; later keys override earlier ones."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise DataError(f"{source}:{lineno}: expected 'key = value'")
        key, value = body.split("=", 1)
        key = key.strip()
        if not key:
            raise DataError(f"{source}:{lineno}: empty key")
        out[key] = value.strip()
    return out


def read_flat(path: str | os.PathLike) -> dict[str, str]:
    return parse_flat(Path(path).read_text(), str(path))


def split_list(value: str, sep: str = ",") -> list[str]:
    return [item.strip() for item in value.split(sep) if item.strip()]
