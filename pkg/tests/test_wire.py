import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hemopipe.core import Led, SensorFrame
from hemopipe.simulator import SimConfig, emit_frames
from hemopipe.core import SessionPlan, Label
from hemopipe.wire import (
    FRAME_SIZE,
    WireDecodeError,
    WireRangeError,
    decode_frame,
    decode_stream,
    encode_frame,
    encode_stream,
)


def checksum_oracle(body: bytes) -> int:
    # one's-complement addition done as a single big sum folded at the end
    total = sum(body[i] | (body[i + 1] << 8) for i in range(0, len(body), 2))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def test_spec_example_packet():
    frame = SensorFrame(0.0, y=256.0, z=1.0, led=Led.WHITE)
    pkt = encode_frame(frame, seq=0)
    assert pkt[:14] == bytes.fromhex("C06D01000000000000000001" "0100")
    assert checksum_oracle(pkt[:14]) == 0x6EC2
    assert struct.unpack("<H", pkt[14:])[0] == 0x6EC2
    back, seq = decode_frame(pkt)
    assert seq == 0 and back.y == 256.0 and back.z == 1.0 and back.led is Led.WHITE


u16 = st.integers(0, 0xFFFF)


@given(st.integers(0, 10**7), st.sampled_from([Led.WHITE, Led.NIR]), u16, u16, st.integers(0, 0xFFFF))
def test_round_trip(t_ms, led, a, b, seq):
    if led == Led.WHITE:
        f = SensorFrame(t_ms / 1000, y=float(a), z=float(b), led=led)
    else:
        f = SensorFrame(t_ms / 1000, ir1=float(a), ir2=float(b), led=led)
    pkt = encode_frame(f, seq)
    assert len(pkt) == FRAME_SIZE
    assert struct.unpack("<H", pkt[14:])[0] == checksum_oracle(pkt[:14])
    back, s = decode_frame(pkt)
    assert back == f and s == seq


@given(st.integers(0, 13), st.integers(1, 255))
def test_single_byte_corruption_rejected(pos, flip):
    pkt = bytearray(encode_frame(SensorFrame(1.5, ir1=1234.0, ir2=4321.0, led=Led.NIR), 7))
    pkt[pos] ^= flip
    with pytest.raises(WireDecodeError):
        decode_frame(bytes(pkt))


def test_range_errors():
    with pytest.raises(WireRangeError):
        encode_frame(SensorFrame(0.0, ir1=70000.0, led=Led.NIR), 0)
    with pytest.raises(WireRangeError):
        encode_frame(SensorFrame(-1.0, led=Led.NIR), 0)


def _frames(n):
    return [SensorFrame(i * 0.1, ir1=100.0 + i, ir2=200.0 + i, led=Led.NIR) for i in range(n)]


def test_gap_report():
    pkts = [encode_frame(f, i) for i, f in enumerate(_frames(10))]
    del pkts[5]
    frames, report = decode_stream(b"".join(pkts))
    assert len(frames) == 9
    assert report.to_json()["gaps"] == [{"after": 4, "missing": 1}]
    assert report.malformed == []


def test_resync_after_garbage_and_truncation():
    good = encode_stream(_frames(6))
    data = good[:32] + b"\x00\xc0\x11garbage" + good[32:] + good[:9]
    frames, report = decode_stream(data)
    assert len(frames) == 6
    assert report.gaps == []
    assert report.malformed == [(32, 10), (len(data) - 9, 9)]


def test_seeded_fuzz_never_emits_corrupt_frames():
    rng = np.random.default_rng(1234)
    cfg = SimConfig(plan=SessionPlan(((Label.REST, 20.0),)), noise_sigma=50.0, seed=1)
    src = emit_frames(cfg)
    clean = encode_stream(src)
    originals = {round(f.t * 1000): (f.led, round(f.y), round(f.z), round(f.ir1), round(f.ir2)) for f in src}
    for _ in range(200):
        buf = bytearray(clean)
        for p in rng.integers(0, len(buf), size=3):
            buf[p] = int(rng.integers(0, 256))
        frames, report = decode_stream(bytes(buf))
        assert len(frames) >= len(src) - 3 - 3
        for f in frames:
            key = round(f.t * 1000)
            led, y, z, i1, i2 = originals[key]
            assert f.led == led
            if led == Led.WHITE:
                assert (f.y, f.z) == (y, z)
            else:
                assert (f.ir1, f.ir2) == (i1, i2)
