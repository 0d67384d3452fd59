import struct
import zlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgetb import wire
from edgetb.wire import (
    BadChecksum,
    BadMagic,
    BadVersion,
    Message,
    Truncated,
    decode_frame,
    decode_varint,
    encode_frame,
    encode_varint,
)

topics = st.text(min_size=0, max_size=64).filter(lambda s: "\x00" not in s)
messages = st.builds(
    Message,
    topic=topics,
    priority=st.integers(0, 3),
    payload=st.binary(max_size=512),
)


def test_varint_300():
    # 300 = 0b100101100 -> groups 0101100, 0000010 -> AC 02
    assert encode_varint(300) == bytes([0xAC, 0x02])
    assert decode_varint(bytes([0xAC, 0x02]))[0] == 300


def test_varint_small_values():
    for v in [0, 1, 127, 128, 16384]:
        value, pos = decode_varint(encode_varint(v))
        assert value == v


def test_empty_frame_layout():
    frame = encode_frame(Message(topic="", priority=0, payload=b""))
    head = bytes([0xED, 0x01, 0x00, 0x00, 0x00])
    crc = struct.pack("<I", zlib.crc32(head))
    assert frame == head + crc


def test_payload_300_varint_in_frame():
    frame = encode_frame(Message(topic="t", priority=0, payload=b"x" * 300))
    # magic, version, topic_len=1, 't', priority, then payload_len varint
    assert frame[5:7] == bytes([0xAC, 0x02])


@settings(max_examples=1000, deadline=None)
@given(messages)
def test_round_trip_identity(msg):
    decoded, consumed = decode_frame(encode_frame(msg))
    assert decoded.topic == msg.topic
    assert decoded.priority == msg.priority
    assert decoded.payload == msg.payload
    assert consumed == len(encode_frame(msg))


def test_flipped_byte_rejected():
    frame = bytearray(encode_frame(Message(topic="alerts", priority=1, payload=b"hello")))
    # flip one payload byte (payload starts after magic, version, topic_len,
    # 6 topic bytes, priority, payload_len = offset 11)
    frame[12] ^= 0xFF
    with pytest.raises(BadChecksum):
        decode_frame(bytes(frame))


def test_every_single_bit_flip_rejected():
    frame = encode_frame(Message(topic="t", priority=2, payload=b"payload"))
    for byte_i in range(len(frame)):
        for bit in range(8):
            mutated = bytearray(frame)
            mutated[byte_i] ^= 1 << bit
            with pytest.raises(wire.FrameError):
                decode_frame(bytes(mutated))


def test_empty_input_truncated():
    with pytest.raises(Truncated):
        decode_frame(b"")


def test_bad_magic_and_version():
    frame = bytearray(encode_frame(Message(topic="t", priority=0, payload=b"")))
    with pytest.raises(BadMagic):
        decode_frame(bytes([0x00]) + bytes(frame[1:]))
    bad_ver = bytearray(frame)
    bad_ver[1] = 0x02
    with pytest.raises((BadVersion, BadChecksum)):
        decode_frame(bytes(bad_ver))


def test_truncated_mid_payload():
    frame = encode_frame(Message(topic="topic", priority=0, payload=b"0123456789"))
    with pytest.raises(Truncated):
        decode_frame(frame[: len(frame) // 2])


@given(messages, st.integers(0, 2**32 - 1), st.integers(0, 2**20))
def test_envelope_round_trip(msg, created_at, counter):
    env = wire.Envelope(origin="node-a", created_at=created_at, counter=counter,
                        reliable=True, frame=encode_frame(msg))
    back = wire.decode_envelope(wire.encode_envelope(env))
    assert back.origin == "node-a"
    assert back.created_at == created_at
    assert back.counter == counter
    assert back.reliable
    assert back.frame == env.frame
