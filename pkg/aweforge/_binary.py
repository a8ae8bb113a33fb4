"""
Little-endian record readers and writers shared by the FARC, AWEM, FPRS and AWEF file formats.
"""

import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from .errors import FormatError

_FORMATS = {"u16": "<H", "u32": "<I", "u64": "<Q", "f32": "<f"}


class BinaryWriter:
    def __init__(self, fo: BinaryIO):
        self.fo = fo

    def magic(self, magic: bytes):
        self.fo.write(magic)

    def scalar(self, kind: str, value):
        self.fo.write(struct.pack(_FORMATS[kind], value))

    def text(self, value: str, length_kind="u16"):
        encoded = value.encode("utf-8")
        self.scalar(length_kind, len(encoded))
        self.fo.write(encoded)

    def floats(self, values: np.ndarray):
        self.fo.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


class BinaryReader:
    """
    Reads fields in order. Running out of bytes raises a :class:`~aweforge.errors.FormatError` naming the field being read.
    """

    def __init__(self, fo: BinaryIO, path: Union[str, Path]):
        self.fo = fo
        self.path = path

    def _read(self, n_bytes: int, field: str) -> bytes:
        data = self.fo.read(n_bytes)
        if len(data) != n_bytes:
            raise FormatError(
                self.path, field, f"truncated, expected {n_bytes} bytes, found {len(data)}"
            )
        return data

    def magic(self, expected: bytes):
        if (found := self._read(len(expected), "magic")) != expected:
            raise FormatError(self.path, "magic", f"expected {expected!r}, found {found!r}")

    def version(self, supported: int):
        if (found := self.scalar("u16", "version")) != supported:
            raise FormatError(self.path, "version", f"unsupported version {found}")
        return found

    def scalar(self, kind: str, field: str):
        fmt = _FORMATS[kind]
        return struct.unpack(fmt, self._read(struct.calcsize(fmt), field))[0]

    def text(self, field: str, length_kind="u16") -> str:
        n_bytes = self.scalar(length_kind, f"{field} length")
        try:
            return self._read(n_bytes, field).decode("utf-8")
        except UnicodeDecodeError as err:
            raise FormatError(self.path, field, str(err))

    def floats(self, count: int, field: str) -> np.ndarray:
        return np.frombuffer(self._read(4 * count, field), dtype="<f4").astype(np.float32)

    def at_end(self) -> bool:
        return self.fo.read(1) == b""
