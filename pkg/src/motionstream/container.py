"""Versioned binary container shared by clip, codec and index files.

Layout: one UTF-8 JSON header line terminated by ``\\n``, then the raw
array payloads back to back.  The header carries a magic string, a format
name, a version, free-form metadata and an ordered array directory; every
payload is row-major little-endian float64.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import FormatError, TruncatedFileError, VersionMismatchError

MAGIC = "MOTC"
VERSION = 1
_DTYPE = "<f8"


def write_container(path, fmt: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    directory = []
    payloads = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        directory.append({"name": name, "shape": list(arr.shape)})
        payloads.append(arr)
    header = {
        "magic": MAGIC,
        "format": fmt,
        "version": VERSION,
        "meta": meta,
        "dtype": _DTYPE,
        "arrays": directory,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        for arr in payloads:
            fh.write(arr.astype(_DTYPE, copy=False).tobytes(order="C"))


def read_container(path, expected_format: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise FormatError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc
    if not isinstance(header, dict):
        raise FormatError(f"{path}: header is not an object")
    if header.get("magic") != MAGIC:
        raise FormatError(f"{path}: bad magic {header.get('magic')!r}")
    if header.get("version") != VERSION:
        raise VersionMismatchError(
            f"{path}: container version {header.get('version')!r}, expected {VERSION}"
        )
    if header.get("format") != expected_format:
        raise FormatError(
            f"{path}: container holds {header.get('format')!r}, expected {expected_format!r}"
        )
    directory = header.get("arrays", [])
    meta = header.get("meta", {})
    if not isinstance(directory, list) or not isinstance(meta, dict):
        raise FormatError(f"{path}: malformed array directory")
    itemsize = np.dtype(_DTYPE).itemsize
    offset = newline + 1
    arrays: dict[str, np.ndarray] = {}
    for entry in directory:
        try:
            name = entry["name"]
            shape = tuple(int(s) for s in entry["shape"])
        except (TypeError, KeyError, ValueError) as exc:
            raise FormatError(f"{path}: malformed array entry: {exc!r}") from exc
        if not isinstance(name, str) or any(s < 0 for s in shape):
            raise FormatError(f"{path}: malformed array entry {entry!r}")
        count = int(np.prod(shape)) if shape else 1
        if count > (len(raw) // itemsize) + 1:
            raise TruncatedFileError(
                f"{path}: payload for {name!r} claims {count} values beyond the file size",
                byte_offset=len(raw),
            )
        nbytes = count * itemsize
        if offset + nbytes > len(raw):
            raise TruncatedFileError(
                f"{path}: payload for {name!r} ends at byte {len(raw)}, "
                f"expected {offset + nbytes}",
                byte_offset=len(raw),
            )
        arrays[name] = np.frombuffer(
            raw, dtype=_DTYPE, count=count, offset=offset
        ).reshape(shape).copy()
        offset += nbytes
    return meta, arrays
