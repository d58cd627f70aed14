"""Bit-exact model container.

Layout: 4-byte magic b"KWSM", then two little-endian uint32 words (format
version, header length in bytes), then a UTF-8 JSON header, then the weight
payload: every tensor as little-endian float32 in C order, concatenated in
manifest order. The header holds the architecture description, the label
names, and the ordered tensor manifest with shapes; it is serialized with
sorted keys and fixed separators, so saving the same model twice produces
byte-identical files. Loading is declarative: the header is parsed, never
executed, and the architecture is re-validated before any payload is read.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arch import ArchSpec, arch_from_dict, arch_to_dict, check_weights, validate, weight_manifest
from .errors import (
    BadMagicError,
    ManifestMismatchError,
    ModelFormatError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)

MAGIC = b"KWSM"
VERSION = 1

__all__ = ["MAGIC", "VERSION", "LoadedModel", "save_model", "load_model"]


@dataclass
class LoadedModel:
    arch: ArchSpec
    weights: dict[str, np.ndarray]
    labels: list[str]


def _header_bytes(arch: ArchSpec, labels: list[str]) -> bytes:
    manifest = [[name, list(shape)] for name, shape in weight_manifest(arch)]
    doc = {"arch": arch_to_dict(arch), "labels": list(labels), "manifest": manifest}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_model(path: str | Path, arch: ArchSpec, weights: dict[str, np.ndarray], labels: list[str]) -> None:
    """Write arch + labels + weights; same model in, same bytes out."""
    validate(arch)
    check_weights(arch, weights)
    if len(labels) != arch.labels:
        raise ManifestMismatchError(
            f"{len(labels)} label names for an architecture with {arch.labels} outputs"
        )
    header = _header_bytes(arch, labels)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for name, _ in weight_manifest(arch):
            fh.write(np.ascontiguousarray(weights[name], dtype="<f4").tobytes())


def load_model(path: str | Path) -> LoadedModel:
    """Read a model container, failing loudly and specifically.

    Raises BadMagicError, UnsupportedVersionError, TruncatedPayloadError, or
    ManifestMismatchError depending on what is wrong with the file.
    """
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a model file (bad magic {data[:4]!r})")
    if len(data) < 12:
        raise TruncatedPayloadError(f"{path}: file ends inside the fixed header")
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: container version {version}, expected {VERSION}")
    if len(data) < 12 + header_len:
        raise TruncatedPayloadError(f"{path}: file ends inside the JSON header")
    try:
        doc = json.loads(data[12 : 12 + header_len].decode("utf-8"))
        arch = arch_from_dict(doc["arch"])
        labels = [str(name) for name in doc["labels"]]
        stored_manifest = [(str(n), tuple(int(d) for d in s)) for n, s in doc["manifest"]]
    except ModelFormatError:
        raise
    except Exception as exc:
        raise ModelFormatError(f"{path}: malformed model header ({exc})") from exc

    validate(arch)
    expected_manifest = weight_manifest(arch)
    if stored_manifest != expected_manifest:
        raise ManifestMismatchError(
            f"{path}: stored tensor manifest does not match the architecture"
        )
    if len(labels) != arch.labels:
        raise ManifestMismatchError(
            f"{path}: {len(labels)} label names for {arch.labels} outputs"
        )

    expected_bytes = sum(4 * int(np.prod(shape)) for _, shape in expected_manifest)
    payload = data[12 + header_len :]
    if len(payload) < expected_bytes:
        raise TruncatedPayloadError(
            f"{path}: weight payload has {len(payload)} bytes, needs {expected_bytes}"
        )
    if len(payload) > expected_bytes:
        raise TruncatedPayloadError(
            f"{path}: {len(payload) - expected_bytes} trailing bytes after the weight payload"
        )

    weights: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in expected_manifest:
        nbytes = 4 * int(np.prod(shape))
        weights[name] = (
            np.frombuffer(payload, dtype="<f4", count=int(np.prod(shape)), offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += nbytes
    check_weights(arch, weights)
    return LoadedModel(arch, weights, labels)
