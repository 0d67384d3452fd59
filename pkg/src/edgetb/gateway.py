"""Protocol-translation gateway: pluggable codecs over the canonical
in-memory message, with built-in binary frame and text line formats.

Text line format: topic "|" priority "|" base64(payload) "\\n", one message
per line; "|" and newline are forbidden in topics.
"""

from __future__ import annotations

import base64
import time

from .wire import FrameError, Message, decode_frame, encode_frame


class GatewayError(Exception):
    pass


class DuplicateId(GatewayError):
    pass


class UnknownCodec(GatewayError):
    pass


class Unrepresentable(GatewayError):
    pass


class TranslateError(GatewayError):
    def __init__(self, position: int, cause: Exception):
        super().__init__(f"decode failed at byte {position}: {cause}")
        self.position = position
        self.cause = cause


class BinV1:
    """The distrib binary frame format."""

    id = "bin.v1"

    def can_represent(self, msg: Message) -> bool:
        return True

    def encode(self, msg: Message) -> bytes:
        return encode_frame(msg)

    def decode_one(self, buf: bytes, offset: int) -> tuple[Message, int]:
        return decode_frame(buf, offset)


class TextV1:
    id = "text.v1"

    def can_represent(self, msg: Message) -> bool:
        return "|" not in msg.topic and "\n" not in msg.topic

    def encode(self, msg: Message) -> bytes:
        if not self.can_represent(msg):
            raise Unrepresentable(f"topic {msg.topic!r} contains '|' or newline")
        b64 = base64.b64encode(msg.payload).decode("ascii")
        return f"{msg.topic}|{msg.priority}|{b64}\n".encode("utf-8")

    def decode_one(self, buf: bytes, offset: int) -> tuple[Message, int]:
        end = buf.find(b"\n", offset)
        if end < 0:
            raise FrameError("missing newline terminator")
        line = buf[offset:end].decode("utf-8")
        parts = line.split("|")
        if len(parts) != 3:
            raise FrameError(f"expected 3 '|'-separated fields, got {len(parts)}")
        topic, prio_str, b64 = parts
        try:
            priority = int(prio_str)
            payload = base64.b64decode(b64, validate=True)
        except (ValueError, base64.binascii.Error) as exc:
            raise FrameError(str(exc)) from exc
        return Message(topic=topic, priority=priority, payload=payload), end + 1


class CodecRegistry:
    """Codecs addressable by id; bin.v1 and text.v1 are pre-registered."""

    def __init__(self):
        self._codecs = {}
        self.register(BinV1())
        self.register(TextV1())

    def register(self, codec):
        if codec.id in self._codecs:
            raise DuplicateId(codec.id)
        self._codecs[codec.id] = codec

    def get(self, codec_id: str):
        try:
            return self._codecs[codec_id]
        except KeyError:
            raise UnknownCodec(codec_id) from None

    def ids(self) -> list[str]:
        return sorted(self._codecs)

    def translate(self, data: bytes, from_id: str, to_id: str) -> bytes:
        """Decode a concatenated stream with `from`, re-encode each message
        with `to`, preserving order and count. Decode errors abort with the
        source byte position; nothing partial is emitted."""
        src = self.get(from_id)
        dst = self.get(to_id)
        out = bytearray()
        offset = 0
        while offset < len(data):
            try:
                msg, offset = src.decode_one(data, offset)
            except (FrameError, UnicodeDecodeError) as exc:
                raise TranslateError(offset, exc) from exc
            if not dst.can_represent(msg):
                raise Unrepresentable(
                    f"codec {to_id} cannot represent message on topic {msg.topic!r}")
            out += dst.encode(msg)
        return bytes(out)

    def translate_with_stats(self, data: bytes, from_id: str, to_id: str,
                             ) -> tuple[bytes, dict]:
        t0 = time.perf_counter()
        out = self.translate(data, from_id, to_id)
        elapsed = time.perf_counter() - t0
        count = self.count_messages(data, from_id)
        return out, {
            "messages": count,
            "bytes_in": len(data),
            "bytes_out": len(out),
            "seconds": elapsed,
            "msgs_per_second": count / elapsed if elapsed > 0 else float("inf"),
        }

    def count_messages(self, data: bytes, codec_id: str) -> int:
        codec = self.get(codec_id)
        offset = 0
        n = 0
        while offset < len(data):
            _, offset = codec.decode_one(data, offset)
            n += 1
        return n
