"""On-disk artifact formats shared by the pipelines.

* raw arrays: little-endian bytes plus a JSON header file
* images: binary 8-bit PGM (P5)
* tables: CSV with a header row
"""

import csv
import json
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ArgumentError

RAW_DTYPES = {"float32": "<f4", "float64": "<f8", "complex64": "<c8", "complex128": "<c16", "int32": "<i4"}


def write_raw(path: str | Path, array: np.ndarray, dtype: str) -> None:
    """Write ``array`` as little-endian ``dtype`` bytes."""
    if dtype not in RAW_DTYPES:
        raise ArgumentError(f"unsupported raw dtype {dtype!r}")
    Path(path).write_bytes(np.ascontiguousarray(array, dtype=RAW_DTYPES[dtype]).tobytes())


def read_raw(path: str | Path, dtype: str, shape: Sequence[int]) -> np.ndarray:
    """Read a raw little-endian array of known shape.

    Raises:
        ArgumentError: If the file size does not match ``shape``
    """
    if dtype not in RAW_DTYPES:
        raise ArgumentError(f"unsupported raw dtype {dtype!r}")
    data = np.frombuffer(Path(path).read_bytes(), dtype=RAW_DTYPES[dtype])
    expected = int(np.prod(shape))
    if data.size != expected:
        raise ArgumentError(f"{path}: holds {data.size} values, header says {expected}")
    return data.reshape(tuple(shape)).copy()


def write_header(path: str | Path, header: dict[str, Any]) -> None:
    Path(path).write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_header(path: str | Path) -> dict[str, Any]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ArgumentError(f"cannot read header {path}: {e}") from e


def to_gray(image: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Linearly map [lo, hi] to 0..255, clipping outside."""
    if hi <= lo:
        return np.zeros(image.shape, dtype=np.uint8)
    scaled = (np.asarray(image, dtype=np.float64) - lo) / (hi - lo)
    return np.clip(np.rint(scaled * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    """Write an 8-bit grayscale image as binary PGM."""
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise ArgumentError("PGM images must be 2-D uint8 arrays")
    height, width = gray.shape
    Path(path).write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + gray.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5":
        raise ArgumentError(f"{path} is not a binary PGM")
    width, height = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(height, width).copy()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
