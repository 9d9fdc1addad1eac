import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Any, Iterator

import numpy as np

from .types import FloatArray

LOGGER = logging.getLogger(__name__)

DATA_DIR_ENV = "ENTYPE_DATA_DIR"
"""Environment variable holding the default directory for relative data paths."""


def resolve_data_path(path: str | Path) -> Path:
    """Resolves a data path. Relative paths that do not exist from the working directory
    are looked up in the directory named by `$ENTYPE_DATA_DIR`, if set."""
    path = Path(path)
    if path.is_absolute() or path.exists():
        return path
    if (data_dir := os.environ.get(DATA_DIR_ENV)) is not None:
        candidate = Path(data_dir) / path
        LOGGER.debug(f"Resolved '{path}' against ${DATA_DIR_ENV}: {candidate}")
        return candidate
    return path


@contextmanager
def atomic_write(path: str | Path, mode: str = "w") -> Iterator[IO[Any]]:
    """Opens a temporary file next to `path` and moves it into place when the block exits
    without error. On error the temporary file is removed and `path` is left untouched."""
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=parent)
    try:
        if "b" in mode:
            with os.fdopen(fd, mode) as file:
                yield file
        else:
            with os.fdopen(fd, mode, encoding="utf-8", newline="\n") as file:
                yield file
        os.replace(tmp_name, path)
        LOGGER.debug(f"Wrote {path}")
    except BaseException:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise


def uniform(
    rng: np.random.Generator, shape: tuple[int, ...], scale: float, dtype: type[np.floating]
) -> FloatArray:
    """Draws i.i.d. values from U(-scale, scale) with the given dtype."""
    return rng.uniform(-scale, scale, size=shape).astype(dtype)


def format_float(value: float) -> str:
    """Formats a float for text artifacts (vectors, logs) with a stable representation."""
    return f"{value:.8g}"


def sigmoid(z: FloatArray) -> FloatArray:
    """Logistic function evaluated without overflow for large |z|."""
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
