"""Scan and reconstruction files.

A scan directory holds ``scan.json`` (dims, dtype, positions, seed) next to
``intensities.raw`` (float32) and, for simulations, ``probe_true.raw`` and
``object_true.raw`` (complex64).
"""

from pathlib import Path

import numpy as np

from src.core.errors import ArgumentError
from src.core.formats import read_header, read_raw, to_gray, write_csv, write_header, write_pgm, write_raw

from .params import ScanSet

SCAN_HEADER = "scan.json"


def write_scan(directory: str | Path, scan: ScanSet) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {"intensities": "intensities.raw"}
    write_raw(directory / files["intensities"], scan.intensities, "float32")
    if scan.probe_true is not None:
        files["probe_true"] = "probe_true.raw"
        write_raw(directory / files["probe_true"], scan.probe_true, "complex64")
    if scan.object_true is not None:
        files["object_true"] = "object_true.raw"
        write_raw(directory / files["object_true"], scan.object_true, "complex64")
    header = {
        "dims": {
            "frames": scan.num_frames,
            "frame": list(scan.frame_shape),
            "object": list(scan.object_shape),
        },
        "dtype": "float32",
        "positions": scan.positions.tolist(),
        "seed": scan.seed,
        "files": files,
    }
    write_header(directory / SCAN_HEADER, header)
    return directory


def read_scan(directory: str | Path) -> ScanSet:
    """Load a scan directory.

    Raises:
        ArgumentError: If the header is missing or inconsistent with the data
    """
    directory = Path(directory)
    header = read_header(directory / SCAN_HEADER)
    try:
        dims, files = header["dims"], header["files"]
        frames, frame, object_shape = int(dims["frames"]), tuple(dims["frame"]), tuple(dims["object"])
        positions = np.asarray(header["positions"], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as e:
        raise ArgumentError(f"malformed scan header in {directory}: {e}") from e
    intensities = read_raw(directory / files["intensities"], header.get("dtype", "float32"), (frames, *frame))
    probe = obj = None
    if "probe_true" in files:
        probe = read_raw(directory / files["probe_true"], "complex64", frame).astype(np.complex128)
    if "object_true" in files:
        obj = read_raw(directory / files["object_true"], "complex64", object_shape).astype(np.complex128)
    return ScanSet(intensities, positions, object_shape, probe, obj, header.get("seed"))


def write_complex(path: str | Path, field: np.ndarray) -> None:
    """Write a complex64 raw file plus its ``.json`` header."""
    path = Path(path)
    write_raw(path, field, "complex64")
    write_header(path.with_suffix(".json"), {"dims": list(field.shape), "dtype": "complex64"})


def write_phase_pgm(path: str | Path, field: np.ndarray) -> None:
    """Phase image with [-pi, pi] mapped linearly to 0..255."""
    write_pgm(path, to_gray(np.angle(field), -np.pi, np.pi))


def write_epsilon_csv(path: str | Path, history: list[float]) -> None:
    write_csv(path, ("iter", "epsilon"), ((n, repr(float(e))) for n, e in enumerate(history)))
