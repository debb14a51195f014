"""On-disk container helpers: JSON manifest plus raw little-endian f32 blobs.

Every persisted artifact (HRTF sets, fitted models) uses the same scheme: a
UTF-8 JSON manifest naming one raw binary file per matrix, each row-major
little-endian float32. Chosen for diff-ability and zero-dependency parsing.
"""

import json
import os
import tempfile

import numpy as np


class ContainerError(ValueError):
    """Malformed or inconsistent container contents."""


def write_blob(path, array) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    if not np.all(np.isfinite(arr)):
        raise ContainerError(f"refusing to write non-finite values to {path}")
    _atomic_write_bytes(path, arr.tobytes())


def read_blob(path, shape, field_name: str) -> np.ndarray:
    expected = int(np.prod(shape))
    try:
        data = np.fromfile(path, dtype="<f4")
    except (FileNotFoundError, OSError):
        raise ContainerError(f"blob for {field_name!r} not found: {path}")
    if data.size != expected:
        raise ContainerError(
            f"blob for {field_name!r} has {data.size} values, expected {expected}"
        )
    if not np.all(np.isfinite(data)):
        raise ContainerError(f"blob for {field_name!r} contains non-finite values")
    return data.reshape(shape).astype(np.float64)


def write_manifest(path, manifest: dict) -> None:
    _atomic_write_bytes(
        path, json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8")
    )


def read_manifest(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ContainerError(f"manifest not found: {path}")
    except json.JSONDecodeError as exc:
        raise ContainerError(f"manifest is not valid JSON: {exc}")


def _atomic_write_bytes(path, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
