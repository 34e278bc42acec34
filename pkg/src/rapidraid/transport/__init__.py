"""Chunk-stream transports: a deterministic simulator and a TCP implementation."""

from .frames import HEADER_SIZE, ChunkFrame, FrameError, StreamRole, chunk_frames
from .sim import (
    CONGESTED,
    GIGABIT,
    FlowControl,
    LinkProfile,
    SimNetwork,
    SimStream,
    StreamClosed,
    TransportError,
    UnknownEndpoint,
)
from .sockets import SocketNetwork, SocketStream

__all__ = [
    "CONGESTED",
    "GIGABIT",
    "HEADER_SIZE",
    "ChunkFrame",
    "FlowControl",
    "FrameError",
    "LinkProfile",
    "SimNetwork",
    "SimStream",
    "SocketNetwork",
    "SocketStream",
    "StreamClosed",
    "StreamRole",
    "TransportError",
    "UnknownEndpoint",
    "chunk_frames",
]
