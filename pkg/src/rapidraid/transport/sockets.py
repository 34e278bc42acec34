"""TCP transport speaking the same frame format as the simulator.

Each registered endpoint listens on ``host:port``. A stream is one TCP
connection; the receiver demultiplexes frames by (object id, role, stage)
into per-stream queues. Flow control is left to TCP.
"""

from __future__ import annotations

import logging
import queue
import socket
import threading

from .frames import HEADER_SIZE, ChunkFrame, StreamRole
from .sim import StreamClosed, TransportError, UnknownEndpoint

log = logging.getLogger(__name__)

_EOF = object()


def parse_address(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint address must be host:port, got {addr!r}")
    return host or "127.0.0.1", int(port)


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        part = sock.recv(n - len(buf))
        if not part:
            return None if not buf else bytes(buf)
        buf += part
    return bytes(buf)


class SocketEndpoint:
    def __init__(self, name: str, address: str = "127.0.0.1:0"):
        self.name = name
        self._server = socket.create_server(parse_address(address))
        host, port = self._server.getsockname()[:2]
        self.address = f"{host}:{port}"
        self._queues: dict[tuple, queue.Queue] = {}
        self._lock = threading.Lock()
        self._closed = False
        self._thread = threading.Thread(target=self._accept_loop, name=f"accept-{name}", daemon=True)
        self._thread.start()

    def inbox(self, key: tuple) -> queue.Queue:
        with self._lock:
            return self._queues.setdefault(key, queue.Queue())

    def _accept_loop(self):
        while not self._closed:
            try:
                conn, _ = self._server.accept()
            except OSError:
                return
            threading.Thread(target=self._read_loop, args=(conn,), daemon=True).start()

    def _read_loop(self, conn: socket.socket):
        key = None
        with conn:
            while True:
                header = _recv_exact(conn, HEADER_SIZE)
                if header is None:
                    break
                if len(header) < HEADER_SIZE:
                    log.warning("%s: truncated frame header", self.name)
                    break
                oid, role, stage, _seq, length = ChunkFrame.decode_header(header)
                payload = _recv_exact(conn, length) if length else b""
                if payload is None or len(payload) < length:
                    log.warning("%s: truncated frame payload", self.name)
                    break
                key = (oid, role, stage)
                self.inbox(key).put(ChunkFrame.decode(header + payload))
        if key is not None:
            self.inbox(key).put(_EOF)

    def close(self):
        self._closed = True
        self._server.close()


class SocketStream:
    def __init__(self, net: SocketNetwork, src: str, dst: str, role: StreamRole, object_id: bytes, stage: int):
        self.src, self.dst, self.role = src, dst, StreamRole(role)
        self.net = net
        self._key = (object_id, self.role, stage)
        self._inbox = net.endpoint(dst).inbox(self._key)
        self._sock: socket.socket | None = None
        self.frames = 0
        self.payload_bytes = 0

    def send(self, frame: ChunkFrame):
        if (frame.object_id, frame.role, frame.stage) != self._key:
            raise TransportError("frame does not belong to this stream")
        if self._sock is None:
            self._sock = socket.create_connection(parse_address(self.net.endpoint(self.dst).address))
        data = frame.encode()
        try:
            self._sock.sendall(data)
        except OSError as e:
            raise StreamClosed(f"{self.src}->{self.dst}: {e}") from e
        self.frames += 1
        self.payload_bytes += len(frame.payload)
        self.net.record(self, data)

    def recv(self, timeout: float | None = 30.0) -> ChunkFrame:
        try:
            item = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise StreamClosed(f"{self.src}->{self.dst}: timed out") from None
        if item is _EOF:
            raise StreamClosed(f"{self.src}->{self.dst}: connection closed")
        return item

    def close(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None


class SocketNetwork:
    def __init__(self, capture: bool = False):
        self.endpoints: dict[str, SocketEndpoint] = {}
        self.captured: list[tuple[str, str, bytes]] | None = [] if capture else None
        self._lock = threading.Lock()

    def register(self, name: str, address: str = "127.0.0.1:0") -> SocketEndpoint:
        if name not in self.endpoints:
            self.endpoints[name] = SocketEndpoint(name, address)
        return self.endpoints[name]

    def endpoint(self, name: str) -> SocketEndpoint:
        try:
            return self.endpoints[name]
        except KeyError:
            raise UnknownEndpoint(name) from None

    def open_stream(self, src: str, dst: str, role: StreamRole, object_id: bytes, stage: int) -> SocketStream:
        self.endpoint(src)
        return SocketStream(self, src, dst, role, object_id, stage)

    def record(self, stream: SocketStream, data: bytes):
        if self.captured is not None:
            with self._lock:
                self.captured.append((stream.src, stream.dst, data))

    def close(self):
        for ep in self.endpoints.values():
            ep.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
