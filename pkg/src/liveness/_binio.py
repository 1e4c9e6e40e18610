"""Little-endian binary helpers shared by the weights and dataset formats."""

import os
import struct
import tempfile
import zlib

from .errors import CorruptionError, TruncatedFileError


def crc32(data):
    return zlib.crc32(data) & 0xFFFFFFFF


def with_crc(payload):
    return payload + struct.pack("<I", crc32(payload))


def split_crc(blob):
    """Return the payload after checking the trailing CRC-32."""
    if len(blob) < 4:
        raise TruncatedFileError("file too short to hold a checksum")
    payload, stored = blob[:-4], struct.unpack("<I", blob[-4:])[0]
    if crc32(payload) != stored:
        raise CorruptionError("CRC-32 mismatch")
    return payload


class Reader:
    def __init__(self, data, offset=0):
        self.data = data
        self.pos = offset

    def take(self, n):
        end = self.pos + n
        if end > len(self.data):
            raise TruncatedFileError(
                f"unexpected end of file at byte {len(self.data)} (needed {end})")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def unpack(self, fmt):
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    @property
    def remaining(self):
        return len(self.data) - self.pos


def atomic_write(path, data):
    """Write bytes via a temp file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write(path, text.encode("utf-8"))
