"""KTC tensor file format: one JSON header line followed by a raw payload.

Header fields: magic "KTC1", kind, shape, dtype tag, byte_order "LE", plus
optional extensions (acs_range/acceleration for masks, extents/tikhonov for
kernels, config_hash for every artifact). Complex payloads are interleaved
(real, imag) little-endian floats in row-major order; masks store one byte
per (t, ky).
"""
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ktclair.errors import KtcFormatError
from ktclair.tensors import (
    ImageSeries,
    KSpaceSeries,
    KtKernel,
    SamplingMask,
    SensitivityMaps,
)

MAGIC = "KTC1"

Kind = Literal["image", "kspace", "sens", "mask", "kernel"]
DtypeTag = Literal["c64", "c128", "u8"]

_NUMPY_DTYPES: dict[str, str] = {"c64": "<c8", "c128": "<c16", "u8": "u1"}
_KINDS: dict[type, str] = {
    ImageSeries: "image",
    KSpaceSeries: "kspace",
    SensitivityMaps: "sens",
    SamplingMask: "mask",
    KtKernel: "kernel",
}


class KtcHeader(BaseModel):
    """Header line of a KTC buffer."""

    model_config = ConfigDict(extra="forbid")

    magic: Literal["KTC1"] = Field(default=MAGIC, description="Format magic.")
    kind: Kind = Field(description="Tensor kind stored in the payload.")
    shape: list[int] = Field(description="Row-major shape of the payload.")
    dtype: DtypeTag = Field(description="Element type tag.")
    byte_order: Literal["LE"] = Field(default="LE", description="Payload byte order.")
    acs_range: list[int] | None = Field(default=None, description="Inclusive ACS ky interval (masks).")
    acceleration: int | None = Field(default=None, description="Nominal acceleration (masks).")
    extents: list[int] | None = Field(default=None, description="Kernel extents (dt, dky, dkx).")
    tikhonov: float | None = Field(default=None, description="Calibration regularization (kernels).")
    config_hash: str | None = Field(default=None, description="Hash of the producing configuration.")


@dataclass(frozen=True)
class FlatBuffer:
    header: KtcHeader
    payload: bytes

    def expected_length(self) -> int:
        itemsize = np.dtype(_NUMPY_DTYPES[self.header.dtype]).itemsize
        return math.prod(self.header.shape) * itemsize


def to_buffer(value, precision: str | None = None, config_hash: str | None = None) -> FlatBuffer:
    """Flatten a validated tensor; masks ignore ``precision`` and store bytes.

    Storage defaults to c64, except sensitivity maps which keep c128 so the
    per-pixel normalization still holds after a round trip.
    """
    kind = _KINDS.get(type(value))
    if kind is None:
        raise KtcFormatError(f"cannot store {type(value).__name__} in KTC")
    if precision is None:
        precision = "c128" if kind == "sens" else "c64"
    if precision not in ("c64", "c128"):
        raise KtcFormatError(f"unknown dtype tag {precision!r}")

    extra: dict = {}
    if isinstance(value, SamplingMask):
        arr = value.lines.astype(np.uint8)
        dtype = "u8"
        extra["acs_range"] = list(value.acs_range) if value.acs_range is not None else None
        extra["acceleration"] = value.acceleration
    elif isinstance(value, KtKernel):
        arr = value.weights
        dtype = precision
        extra["extents"] = list(value.extents)
        extra["tikhonov"] = value.tikhonov
    else:
        arr = value.data
        dtype = precision

    header = KtcHeader(kind=kind, shape=list(arr.shape), dtype=dtype, config_hash=config_hash, **extra)
    payload = np.ascontiguousarray(arr, dtype=_NUMPY_DTYPES[dtype]).tobytes()
    return FlatBuffer(header=header, payload=payload)


def from_buffer(buf: FlatBuffer):
    """Rebuild the tensor described by ``buf``; values come back in complex128."""
    if len(buf.payload) != buf.expected_length():
        raise KtcFormatError(
            f"payload holds {len(buf.payload)} bytes, header {buf.header.shape}/{buf.header.dtype} "
            f"requires {buf.expected_length()}"
        )
    header = buf.header
    if (header.kind == "mask") != (header.dtype == "u8"):
        raise KtcFormatError(f"dtype {header.dtype} is not valid for kind {header.kind}")

    arr = np.frombuffer(buf.payload, dtype=_NUMPY_DTYPES[header.dtype]).reshape(header.shape)
    match header.kind:
        case "image":
            return ImageSeries(arr)
        case "kspace":
            return KSpaceSeries(arr)
        case "sens":
            return SensitivityMaps(arr)
        case "kernel":
            return KtKernel(arr, tikhonov=header.tikhonov or 0.0)
        case "mask":
            acs = tuple(header.acs_range) if header.acs_range is not None else None
            return SamplingMask(arr.astype(bool), acs_range=acs, acceleration=header.acceleration or 1)


def encode(buf: FlatBuffer) -> bytes:
    line = buf.header.model_dump_json(exclude_none=True)
    return line.encode("utf-8") + b"\n" + buf.payload


def decode(blob: bytes) -> FlatBuffer:
    head, sep, payload = blob.partition(b"\n")
    if not sep:
        raise KtcFormatError("missing header terminator")
    try:
        header = KtcHeader.model_validate_json(head.decode("utf-8"))
    except (ValidationError, UnicodeDecodeError) as e:
        raise KtcFormatError(f"invalid KTC header: {e}") from e
    return FlatBuffer(header=header, payload=payload)


def write_ktc(path: Path, value, precision: str | None = None, config_hash: str | None = None) -> KtcHeader:
    buf = to_buffer(value, precision=precision, config_hash=config_hash)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(buf))
    return buf.header


def read_ktc(path: Path):
    """Return ``(value, header)`` for the KTC file at ``path``."""
    buf = decode(Path(path).read_bytes())
    return from_buffer(buf), buf.header
