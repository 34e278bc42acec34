"""On-disk blocks and object manifests, one directory per node.

Block file layout (64-byte header, big-endian)::

    0   4  magic "RRBK"
    4   1  format version
    5   1  role (1 source replica, 2 coded)
    6   1  word bits
    7   1  reserved
    8   4  reduction polynomial
    12 16  object id
    28  2  block index
    30  2  replica number (source blocks), 0 for coded
    32  8  payload length
    40 16  code digest
    56  4  CRC32C of the payload
    60  4  reserved
    64  .  payload
"""

from __future__ import annotations

import enum
import os
import struct
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import crc32c

from .codespec import CodeSpec
from .galois import FieldSpec

MAGIC = b"RRBK"
FORMAT_VERSION = 1
HEADER = struct.Struct(">4sBBBxI16sHHQ16sI4x")
HEADER_SIZE = HEADER.size
assert HEADER_SIZE == 64
MANIFEST_DIR = "manifests"


class StoreError(RuntimeError):
    pass


class BlockNotFound(StoreError, KeyError):
    pass


class BlockCorruption(StoreError):
    pass


class TransitionError(StoreError):
    pass


class BlockRole(enum.IntEnum):
    SOURCE = 1
    CODED = 2


@dataclass(frozen=True)
class Block:
    object_id: bytes
    index: int
    role: BlockRole
    field: FieldSpec
    code_digest: bytes
    payload: bytes
    replica: int = 0

    def __post_init__(self):
        if len(self.object_id) != 16 or len(self.code_digest) != 16:
            raise ValueError("object id and code digest are 16 bytes each")
        if self.role == BlockRole.SOURCE and self.replica not in (1, 2):
            raise ValueError("source blocks are replica 1 or 2")
        if self.role == BlockRole.CODED and self.replica:
            raise ValueError("coded blocks carry no replica number")

    @property
    def checksum(self) -> int:
        return crc32c.crc32c(self.payload)

    def header(self) -> bytes:
        return HEADER.pack(MAGIC, FORMAT_VERSION, int(self.role), self.field.word_bits,
                           self.field.reduction_polynomial, self.object_id, self.index,
                           self.replica, len(self.payload), self.code_digest, self.checksum)

    def encode(self) -> bytes:
        return self.header() + self.payload

    @classmethod
    def decode(cls, data: bytes) -> Block:
        if len(data) < HEADER_SIZE:
            raise BlockCorruption(f"block file too short ({len(data)} bytes)")
        (magic, version, role, word_bits, poly, oid, index, replica,
         length, digest, crc) = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise BlockCorruption(f"bad block magic {magic!r}")
        if version != FORMAT_VERSION:
            raise BlockCorruption(f"unsupported block format {version}")
        if data[7] or any(data[HEADER_SIZE - 4:HEADER_SIZE]):
            raise BlockCorruption("reserved header bytes are not zero")
        payload = bytes(data[HEADER_SIZE:])
        if len(payload) != length:
            raise BlockCorruption(f"payload is {len(payload)} bytes, header says {length}")
        if crc32c.crc32c(payload) != crc:
            raise BlockCorruption(f"checksum mismatch in block {index} of {oid.hex()}")
        try:
            return cls(oid, index, BlockRole(role), FieldSpec(word_bits, poly), digest, payload, replica)
        except ValueError as e:
            raise BlockCorruption(str(e)) from None


class ArchivalState(enum.Enum):
    REPLICATED = "replicated"
    ENCODING = "encoding"
    ARCHIVED = "archived"


LEGAL_TRANSITIONS = {
    (ArchivalState.REPLICATED, ArchivalState.ENCODING),
    (ArchivalState.ENCODING, ArchivalState.ARCHIVED),
    (ArchivalState.ENCODING, ArchivalState.REPLICATED),  # rollback after a failed encode
}


@dataclass(frozen=True)
class ObjectManifest:
    object_id: bytes
    n: int
    k: int
    block_size: int
    length: int  # true object length before padding
    code: str  # canonical code spec text
    replica1: tuple[str, ...]  # node holding replica 1 of source block j
    replica2: tuple[str, ...]
    coded: tuple[str, ...]  # node storing coded block i
    state: ArchivalState = ArchivalState.REPLICATED

    def __post_init__(self):
        if len(self.replica1) != self.k or len(self.replica2) != self.k or len(self.coded) != self.n:
            raise ValueError("manifest assignments do not match (n, k)")

    @property
    def code_digest(self) -> bytes:
        return CodeSpec.from_text(self.code).digest()

    def to_text(self) -> str:
        lines = [
            "# rapidraid object manifest v1",
            f"object_id={self.object_id.hex()}",
            f"n={self.n}",
            f"k={self.k}",
            f"block_size={self.block_size}",
            f"length={self.length}",
            f"state={self.state.value}",
        ]
        lines += [f"replica1.{j + 1}={node}" for j, node in enumerate(self.replica1)]
        lines += [f"replica2.{j + 1}={node}" for j, node in enumerate(self.replica2)]
        lines += [f"coded.{i + 1}={node}" for i, node in enumerate(self.coded)]
        lines += [f"code.{line}" for line in self.code.splitlines() if line and not line.startswith("#")]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> ObjectManifest:
        kv: dict[str, str] = {}
        code_lines = ["# rapidraid code spec v1"]
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise StoreError(f"malformed manifest line {raw!r}")
            if key.startswith("code."):
                code_lines.append(f"{key[5:]}={value}")
            else:
                kv[key] = value
        try:
            n, k = int(kv["n"]), int(kv["k"])
            return cls(
                object_id=bytes.fromhex(kv["object_id"]),
                n=n,
                k=k,
                block_size=int(kv["block_size"]),
                length=int(kv["length"]),
                code="\n".join(code_lines) + "\n",
                replica1=tuple(kv[f"replica1.{j + 1}"] for j in range(k)),
                replica2=tuple(kv[f"replica2.{j + 1}"] for j in range(k)),
                coded=tuple(kv[f"coded.{i + 1}"] for i in range(n)),
                state=ArchivalState(kv["state"]),
            )
        except KeyError as e:
            raise StoreError(f"manifest is missing {e.args[0]!r}") from None
        except ValueError as e:
            raise StoreError(f"bad manifest: {e}") from None


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


class BlockStore:
    """Blocks under ``root/<node>/``, manifests under ``root/manifests/``."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def _name(object_id: bytes, role: BlockRole, index: int, replica: int) -> str:
        if role == BlockRole.SOURCE:
            return f"{object_id.hex()}.src{index + 1}.r{replica}.blk"
        return f"{object_id.hex()}.coded{index + 1}.blk"

    def path(self, node: str, object_id: bytes, role: BlockRole, index: int, replica: int = 0) -> Path:
        if not node or "/" in node or node.startswith(".") or node == MANIFEST_DIR:
            raise StoreError(f"invalid node name {node!r}")
        return self.root / node / self._name(object_id, role, index, replica)

    def put_block(self, node: str, block: Block) -> Path:
        path = self.path(node, block.object_id, block.role, block.index, block.replica)
        _atomic_write(path, block.encode())
        return path

    def get_block(self, node: str, object_id: bytes, index: int, role: BlockRole = BlockRole.CODED,
                  replica: int = 0) -> Block:
        path = self.path(node, object_id, role, index, replica)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise BlockNotFound(f"{node}: {path.name}") from None
        block = Block.decode(data)
        if (block.object_id, block.index, block.role, block.replica) != (object_id, index, role, replica):
            raise BlockCorruption(f"{path} holds a different block")
        return block

    def has_block(self, node: str, object_id: bytes, index: int, role: BlockRole = BlockRole.CODED,
                  replica: int = 0) -> bool:
        return self.path(node, object_id, role, index, replica).exists()

    def delete_block(self, node: str, object_id: bytes, index: int, role: BlockRole = BlockRole.CODED,
                     replica: int = 0):
        try:
            self.path(node, object_id, role, index, replica).unlink()
        except FileNotFoundError:
            raise BlockNotFound(f"{node}: block {index + 1} of {object_id.hex()}") from None

    def usage(self, object_id: bytes | None = None) -> int:
        """Payload bytes stored (for one object, or in total)."""
        total = 0
        prefix = object_id.hex() if object_id else ""
        for path in self.root.glob("*/*.blk"):
            if path.parent.name != MANIFEST_DIR and path.name.startswith(prefix):
                total += path.stat().st_size - HEADER_SIZE
        return total

    def nodes(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if p.is_dir() and p.name != MANIFEST_DIR)

    # manifests

    def manifest_path(self, object_id: bytes) -> Path:
        return self.root / MANIFEST_DIR / f"{object_id.hex()}.manifest"

    def save_manifest(self, manifest: ObjectManifest):
        _atomic_write(self.manifest_path(manifest.object_id), manifest.to_text().encode())

    def load_manifest(self, object_id: bytes) -> ObjectManifest:
        try:
            text = self.manifest_path(object_id).read_text()
        except FileNotFoundError:
            raise BlockNotFound(f"no manifest for object {object_id.hex()}") from None
        return ObjectManifest.from_text(text)

    def manifests(self) -> list[ObjectManifest]:
        d = self.root / MANIFEST_DIR
        if not d.exists():
            return []
        return [ObjectManifest.from_text(p.read_text()) for p in sorted(d.glob("*.manifest"))]


def verify_coded(store: BlockStore, manifest: ObjectManifest) -> list[int]:
    """Indices of coded blocks that are missing, corrupt or from another code."""
    bad = []
    digest = manifest.code_digest
    for i, node in enumerate(manifest.coded):
        try:
            block = store.get_block(node, manifest.object_id, i)
        except (BlockNotFound, BlockCorruption):
            bad.append(i)
            continue
        if block.code_digest != digest or len(block.payload) != manifest.block_size:
            bad.append(i)
    return bad


def transition(store: BlockStore, manifest: ObjectManifest, to_state: ArchivalState) -> ObjectManifest:
    """Move ``manifest`` to ``to_state``; archiving drops replica 2 only once every coded block verifies."""
    to_state = ArchivalState(to_state)
    if (manifest.state, to_state) not in LEGAL_TRANSITIONS:
        raise TransitionError(f"illegal transition {manifest.state.value} -> {to_state.value}")
    if to_state == ArchivalState.ARCHIVED:
        bad = verify_coded(store, manifest)
        if bad:
            raise TransitionError(
                "archive refused: coded blocks " + ", ".join(str(i + 1) for i in bad) + " missing or invalid"
            )
    updated = replace(manifest, state=to_state)
    # the new state is durable before any replica disappears
    store.save_manifest(updated)
    if to_state == ArchivalState.ARCHIVED:
        for j, node in enumerate(manifest.replica2):
            if store.has_block(node, manifest.object_id, j, BlockRole.SOURCE, 2):
                store.delete_block(node, manifest.object_id, j, BlockRole.SOURCE, 2)
    return updated


@dataclass
class StoreSink:
    """Encode-engine sink that writes coded blocks into a BlockStore."""

    store: BlockStore
    object_id: bytes
    field: FieldSpec
    code_digest: bytes
    written: list[tuple[str, int]] = field(default_factory=list)

    def persist(self, node: str, index: int, data: bytes):
        self.store.put_block(node, Block(self.object_id, index, BlockRole.CODED, self.field,
                                         self.code_digest, data))
        self.written.append((node, index))

    def discard(self, node: str, index: int):
        try:
            self.store.delete_block(node, self.object_id, index)
        except BlockNotFound:
            pass
        if (node, index) in self.written:
            self.written.remove((node, index))
