"""Pieces shared by the classical and pipelined encoding engines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

DEFAULT_CHUNK = 64 * 1024


class EncodeAborted(RuntimeError):
    """An encode job failed; no coded block of the object was left behind."""

    def __init__(self, message: str, failures: list | None = None):
        super().__init__(message)
        self.failures = failures or []


class NodeFailure(RuntimeError):
    pass


class BlockSink(Protocol):
    def persist(self, node: str, index: int, data: bytes) -> None: ...

    def discard(self, node: str, index: int) -> None: ...


class MemorySink:
    def __init__(self):
        self.blocks: dict[int, bytes] = {}
        self.where: dict[int, str] = {}

    def persist(self, node: str, index: int, data: bytes):
        self.blocks[index] = data
        self.where[index] = node

    def discard(self, node: str, index: int):
        self.blocks.pop(index, None)
        self.where.pop(index, None)


@dataclass
class EncodeResult:
    blocks: dict[int, bytes]
    started: float
    finished: float
    payload_bytes: int
    frames: int
    block_finish: dict[int, float] = field(default_factory=dict)

    @property
    def elapsed(self) -> float:
        return self.finished - self.started

    def codeword(self) -> list[bytes]:
        return [self.blocks[i] for i in sorted(self.blocks)]


def split_chunks(length: int, chunk_size: int, word_bytes: int) -> list[tuple[int, int]]:
    """Byte ranges of successive chunks; all boundaries fall on word boundaries."""
    if chunk_size <= 0 or chunk_size % word_bytes:
        raise ValueError(f"chunk size {chunk_size} must be a positive multiple of {word_bytes}")
    if length % word_bytes:
        raise ValueError(f"block length {length} is not a multiple of the {word_bytes}-byte word")
    return [(s, min(length, s + chunk_size)) for s in range(0, length, chunk_size)] or [(0, 0)]
