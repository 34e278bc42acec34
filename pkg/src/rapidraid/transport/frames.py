"""Chunk frame wire format shared by the simulated and socket transports.

Layout (big-endian)::

    0   2  magic "RR"
    2   1  version (0x01)
    3  16  object id
    19  1  stream role
    20  2  stage (pipeline position of the sender)
    22  4  sequence number
    26  4  payload length
    30  .  payload
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

MAGIC = b"RR"
VERSION = 0x01
HEADER = struct.Struct(">2sB16sBHII")
HEADER_SIZE = HEADER.size


class FrameError(ValueError):
    pass


class StreamRole(enum.IntEnum):
    FORWARD_X = 1
    SOURCE_PULL = 2
    PARITY_PUSH = 3


@dataclass(frozen=True)
class ChunkFrame:
    object_id: bytes
    role: StreamRole
    stage: int
    seq: int
    payload: bytes

    def __post_init__(self):
        if len(self.object_id) != 16:
            raise FrameError(f"object id must be 16 bytes, got {len(self.object_id)}")

    def __len__(self):
        return HEADER_SIZE + len(self.payload)

    def encode(self) -> bytes:
        return HEADER.pack(MAGIC, VERSION, self.object_id, int(self.role), self.stage,
                           self.seq, len(self.payload)) + bytes(self.payload)

    @classmethod
    def decode_header(cls, header: bytes) -> tuple[bytes, StreamRole, int, int, int]:
        if len(header) != HEADER_SIZE:
            raise FrameError(f"short header: {len(header)} bytes")
        magic, version, oid, role, stage, seq, length = HEADER.unpack(header)
        if magic != MAGIC:
            raise FrameError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FrameError(f"unsupported frame version {version}")
        try:
            role = StreamRole(role)
        except ValueError:
            raise FrameError(f"unknown stream role {role}") from None
        return oid, role, stage, seq, length

    @classmethod
    def decode(cls, data: bytes) -> ChunkFrame:
        oid, role, stage, seq, length = cls.decode_header(data[:HEADER_SIZE])
        payload = data[HEADER_SIZE:]
        if len(payload) != length:
            raise FrameError(f"payload length {len(payload)} does not match header {length}")
        return cls(oid, role, stage, seq, bytes(payload))


def chunk_frames(object_id: bytes, role: StreamRole, stage: int, data: bytes, chunk_size: int):
    """Split ``data`` into frames of ``chunk_size`` (the last may be shorter)."""
    if chunk_size <= 0:
        raise FrameError("chunk size must be positive")
    for seq, start in enumerate(range(0, len(data), chunk_size)):
        yield ChunkFrame(object_id, role, stage, seq, data[start:start + chunk_size])
