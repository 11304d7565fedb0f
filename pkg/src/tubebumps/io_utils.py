"""Small file helpers: atomic writes and key=value sidecars."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path


def atomic_write_text(path, text: str):
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_keyvalue(path, data: dict):
    lines = [f"{k}={_fmt(v)}" for k, v in data.items()]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_keyvalue(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows, digits: int = 9):
    """CSV with floats in ``digits`` significant digits."""
    fmt = f"%.{digits}g"

    def cell(x):
        if isinstance(x, (float,)) or hasattr(x, "dtype"):
            return fmt % float(x)
        return str(x)

    lines = [",".join(header)]
    lines += [",".join(cell(x) for x in row) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")
