"""Bit-exact wire codec: varints and the binary message frame.

Frame layout (all multi-byte integers are unsigned LEB128-style varints,
little-endian groups with high-bit continuation):

    magic 0xED | version 0x01 | topic_len varint | topic bytes
    | priority 1 byte | payload_len varint | payload bytes
    | crc32 of all preceding bytes, 4 bytes little-endian
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

MAGIC = 0xED
VERSION = 0x01
MAX_LEN = 2**32 - 1


class FrameError(Exception):
    """Base class for frame decode failures."""


class BadMagic(FrameError):
    pass


class BadVersion(FrameError):
    pass


class BadChecksum(FrameError):
    pass


class Truncated(FrameError):
    pass


class Oversize(FrameError):
    pass


@dataclass
class Message:
    """Unit of data distribution.

    origin and created_at travel in the transport envelope, not the frame;
    they default to empty values for messages built from raw bytes.
    """

    topic: str
    priority: int
    payload: bytes
    origin: str = ""
    created_at: int = 0

    def __post_init__(self):
        if not 0 <= self.priority <= 3:
            raise ValueError(f"priority must be in 0..3, got {self.priority}")


def encode_varint(value: int) -> bytes:
    if value < 0:
        raise ValueError("varint must be non-negative")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(buf: bytes, offset: int = 0) -> tuple[int, int]:
    """Returns (value, new_offset). Raises Truncated on short input."""
    result = 0
    shift = 0
    pos = offset
    while True:
        if pos >= len(buf):
            raise Truncated("varint runs past end of input")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise FrameError("varint too long")


def encode_frame(message: Message) -> bytes:
    topic_bytes = message.topic.encode("utf-8")
    if len(topic_bytes) > MAX_LEN or len(message.payload) > MAX_LEN:
        raise Oversize("topic or payload exceeds 2^32-1 bytes")
    body = bytearray([MAGIC, VERSION])
    body += encode_varint(len(topic_bytes))
    body += topic_bytes
    body.append(message.priority)
    body += encode_varint(len(message.payload))
    body += message.payload
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    body += struct.pack("<I", crc)
    return bytes(body)


def decode_frame(buf: bytes, offset: int = 0) -> tuple[Message, int]:
    """Decode one frame starting at offset. Returns (message, new_offset)."""
    if len(buf) - offset < 2:
        raise Truncated("input shorter than frame header")
    if buf[offset] != MAGIC:
        raise BadMagic(f"expected 0x{MAGIC:02X}, got 0x{buf[offset]:02X}")
    if buf[offset + 1] != VERSION:
        raise BadVersion(f"unsupported frame version 0x{buf[offset + 1]:02X}")
    pos = offset + 2
    topic_len, pos = decode_varint(buf, pos)
    if pos + topic_len > len(buf):
        raise Truncated("topic runs past end of input")
    topic_bytes = buf[pos:pos + topic_len]
    pos += topic_len
    if pos >= len(buf):
        raise Truncated("missing priority byte")
    priority = buf[pos]
    pos += 1
    payload_len, pos = decode_varint(buf, pos)
    if pos + payload_len > len(buf):
        raise Truncated("payload runs past end of input")
    payload = buf[pos:pos + payload_len]
    pos += payload_len
    if pos + 4 > len(buf):
        raise Truncated("missing checksum")
    expected = struct.unpack("<I", buf[pos:pos + 4])[0]
    actual = zlib.crc32(buf[offset:pos]) & 0xFFFFFFFF
    if expected != actual:
        raise BadChecksum(f"crc mismatch: frame says {expected:08x}, computed {actual:08x}")
    pos += 4
    if priority > 3:
        raise FrameError(f"priority byte {priority} out of range")
    return Message(topic=topic_bytes.decode("utf-8"), priority=priority, payload=payload), pos


# --- transport envelope (internal; wraps a frame with origin/identity) ---

KIND_DATA = 0
KIND_ACK = 1


@dataclass
class Envelope:
    """Transport wrapper carrying message identity for ack/dedup."""

    origin: str
    created_at: int
    counter: int
    kind: int = KIND_DATA
    reliable: bool = False
    frame: bytes = b""

    @property
    def msg_id(self) -> tuple[str, int]:
        return (self.origin, self.counter)


def encode_envelope(env: Envelope) -> bytes:
    origin_bytes = env.origin.encode("utf-8")
    out = bytearray()
    flags = env.kind | (0x80 if env.reliable else 0)
    out.append(flags)
    out += encode_varint(len(origin_bytes))
    out += origin_bytes
    out += encode_varint(env.created_at)
    out += encode_varint(env.counter)
    out += env.frame
    return bytes(out)


def decode_envelope(buf: bytes) -> Envelope:
    if not buf:
        raise Truncated("empty envelope")
    flags = buf[0]
    pos = 1
    origin_len, pos = decode_varint(buf, pos)
    if pos + origin_len > len(buf):
        raise Truncated("envelope origin runs past end")
    origin = buf[pos:pos + origin_len].decode("utf-8")
    pos += origin_len
    created_at, pos = decode_varint(buf, pos)
    counter, pos = decode_varint(buf, pos)
    return Envelope(
        origin=origin,
        created_at=created_at,
        counter=counter,
        kind=flags & 0x7F,
        reliable=bool(flags & 0x80),
        frame=buf[pos:],
    )
