"""Tilt-series and volume files: raw float32 plus a JSON header."""

from pathlib import Path

import numpy as np

from src.core.errors import ArgumentError
from src.core.formats import read_header, read_raw, to_gray, write_csv, write_header, write_pgm, write_raw

from .params import TiltSeries

SERIES_RAW = "tilt_series.raw"
SERIES_HEADER = "tilt_series.json"


def write_series(directory: str | Path, series: TiltSeries, seed: int | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_raw(directory / SERIES_RAW, series.data, "float32")
    write_header(
        directory / SERIES_HEADER,
        {"dims": list(series.shape), "dtype": "float32", "angles": series.angles.tolist(), "seed": seed},
    )
    return directory


def read_series(directory: str | Path) -> TiltSeries:
    """Load a tilt series written by ``write_series``.

    Raises:
        ArgumentError: If the header is missing or malformed
    """
    directory = Path(directory)
    header = read_header(directory / SERIES_HEADER)
    try:
        dims, angles = header["dims"], header["angles"]
    except KeyError as e:
        raise ArgumentError(f"malformed tilt-series header in {directory}: missing {e}") from e
    data = read_raw(directory / SERIES_RAW, header.get("dtype", "float32"), dims)
    return TiltSeries(data, np.asarray(angles, dtype=np.float64))


def write_volume(directory: str | Path, volume: np.ndarray, name: str = "volume") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_raw(directory / f"{name}.raw", volume, "float32")
    write_header(directory / f"{name}.json", {"dims": list(volume.shape), "dtype": "float32"})
    return directory / f"{name}.raw"


def read_volume(directory: str | Path, name: str = "volume") -> np.ndarray:
    directory = Path(directory)
    header = read_header(directory / f"{name}.json")
    return read_raw(directory / f"{name}.raw", header.get("dtype", "float32"), header["dims"])


def write_slice_pgms(directory: str | Path, volume: np.ndarray) -> list[Path]:
    """One PGM per slice, each mapped from its own [min, max] to 0..255."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for s, image in enumerate(volume):
        path = directory / f"slice_{s:03d}.pgm"
        write_pgm(path, to_gray(image, float(image.min()), float(image.max())))
        paths.append(path)
    return paths


def write_timing_csv(path: str | Path, rows: list[tuple[int, float]]) -> None:
    write_csv(path, ("workers", "seconds"), ((w, f"{s:.6f}") for w, s in sorted(rows)))
