"""Binary tensor container used for all .bin artifacts (samples, checkpoints,
part databases).

Layout: 8-byte magic ``ANISEBIN``, u32 LE version, u32 LE manifest length,
UTF-8 JSON manifest, then raw little-endian float32/int32 blobs. Blob offsets
are relative to the payload start (the first 64-byte boundary after the
manifest) and every blob starts 64-byte aligned.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"ANISEBIN"
VERSION = 1
_ALIGN = 64

_DTYPES = {
    "float32": np.dtype("<f4"),
    "int32": np.dtype("<i4"),
}


class ContainerError(ValueError):
    """Malformed or unsupported container file."""


def _align(n: int) -> int:
    return (n + _ALIGN - 1) // _ALIGN * _ALIGN


def _coerce(name: str, arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype.kind == "f":
        return np.ascontiguousarray(arr, dtype="<f4")
    if arr.dtype.kind in "iu":
        if arr.size and (arr.min() < np.iinfo(np.int32).min or arr.max() > np.iinfo(np.int32).max):
            raise ContainerError(f"tensor {name!r} exceeds int32 range")
        return np.ascontiguousarray(arr, dtype="<i4")
    if arr.dtype.kind == "b":
        return np.ascontiguousarray(arr, dtype="<i4")
    raise ContainerError(f"tensor {name!r} has unsupported dtype {arr.dtype}")


def write_container(path: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = _coerce(name, arr)
        offset = _align(offset)
        entries.append(
            {
                "name": name,
                "dtype": str(arr.dtype.name),
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": int(arr.nbytes),
            }
        )
        blobs.append((offset, arr))
        offset += arr.nbytes

    manifest = {"meta": meta or {}, "tensors": entries}
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")

    header = MAGIC + VERSION.to_bytes(4, "little") + len(manifest_bytes).to_bytes(4, "little")
    payload_start = _align(len(header) + len(manifest_bytes))
    total = payload_start + (blobs[-1][0] + blobs[-1][1].nbytes if blobs else 0)

    buf = bytearray(total)
    buf[: len(header)] = header
    buf[len(header) : len(header) + len(manifest_bytes)] = manifest_bytes
    for off, arr in blobs:
        start = payload_start + off
        buf[start : start + arr.nbytes] = arr.tobytes()

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(bytes(buf))


def read_container(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise ContainerError(f"{path}: not a container file (bad magic)")
    version = int.from_bytes(raw[8:12], "little")
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    manifest_len = int.from_bytes(raw[12:16], "little")
    if 16 + manifest_len > len(raw):
        raise ContainerError(f"{path}: manifest length exceeds file size")
    try:
        manifest = json.loads(raw[16 : 16 + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: bad manifest ({exc})") from exc

    payload_start = _align(16 + manifest_len)
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest.get("tensors", []):
        name = entry["name"]
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise ContainerError(f"{path}: tensor {name!r} has unsupported dtype {entry['dtype']}")
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = int(entry["nbytes"])
        if int(np.prod(shape, dtype=np.int64)) * dtype.itemsize != nbytes:
            raise ContainerError(f"{path}: tensor {name!r} shape/nbytes mismatch")
        start = payload_start + int(entry["offset"])
        if start % _ALIGN != 0:
            raise ContainerError(f"{path}: tensor {name!r} not 64-byte aligned")
        if start + nbytes > len(raw):
            raise ContainerError(f"{path}: tensor {name!r} payload out of bounds")
        tensors[name] = np.frombuffer(raw, dtype=dtype, count=nbytes // dtype.itemsize, offset=start).reshape(shape).copy()
    return tensors, manifest.get("meta", {})
