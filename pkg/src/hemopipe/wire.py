"""16-byte radio frame codec.

Layout (little-endian)::

    magic C0 6D | version u8 | led u8 | seq u16 | t_ms u32 | ch_a u16 | ch_b u16 | checksum u16

White frames carry (Y, Z) in (ch_a, ch_b), NIR frames carry (IR1, IR2).  The
checksum is the end-around-carry (one's-complement) sum of the first seven
16-bit words.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .core import HemopipeError, Led, SensorFrame

MAGIC = b"\xc0\x6d"
VERSION = 1
FRAME_SIZE = 16
SEQ_MOD = 1 << 16

_BODY = struct.Struct("<2sBBHIHH")
_WORDS = struct.Struct("<7H")
_CHECK = struct.Struct("<H")
U16_MAX = 0xFFFF
U32_MAX = 0xFFFFFFFF


class WireRangeError(HemopipeError, ValueError):
    code = "wire-range"


class WireDecodeError(HemopipeError, ValueError):
    code = "wire-decode"


def ones_complement_sum(data: bytes) -> int:
    total = 0
    for word in struct.unpack(f"<{len(data) // 2}H", data):
        total += word
        total = (total & 0xFFFF) + (total >> 16)
    return total


def _to_u16(value: float, scale: float, name: str) -> int:
    v = round(value * scale)
    if not 0 <= v <= U16_MAX:
        raise WireRangeError(f"{name}={value!r} does not fit in u16 at scale {scale}")
    return v


def encode_frame(frame: SensorFrame, seq: int, scale: float = 1.0) -> bytes:
    """Pack one frame; channel counts are multiplied by ``scale`` and rounded."""
    if frame.led == Led.WHITE:
        a, b = _to_u16(frame.y, scale, "y"), _to_u16(frame.z, scale, "z")
    else:
        a, b = _to_u16(frame.ir1, scale, "ir1"), _to_u16(frame.ir2, scale, "ir2")
    t_ms = round(frame.t * 1000.0)
    if not 0 <= t_ms <= U32_MAX:
        raise WireRangeError(f"t={frame.t!r} does not fit in u32 milliseconds")
    body = _BODY.pack(MAGIC, VERSION, int(frame.led), seq % SEQ_MOD, t_ms, a, b)
    return body + _CHECK.pack(ones_complement_sum(body))


def decode_frame(packet: bytes, scale: float = 1.0) -> tuple[SensorFrame, int]:
    """Unpack one 16-byte packet into ``(frame, seq)``; raises on any defect."""
    if len(packet) != FRAME_SIZE:
        raise WireDecodeError(f"packet is {len(packet)} bytes, expected {FRAME_SIZE}")
    magic, version, led, seq, t_ms, a, b = _BODY.unpack_from(packet)
    if magic != MAGIC:
        raise WireDecodeError("bad magic")
    if version != VERSION:
        raise WireDecodeError(f"unsupported version {version}")
    if led not in (Led.WHITE, Led.NIR):
        raise WireDecodeError(f"bad led {led}")
    (check,) = _CHECK.unpack_from(packet, 14)
    if check != ones_complement_sum(packet[:14]):
        raise WireDecodeError("checksum mismatch")
    t = t_ms / 1000.0
    if led == Led.WHITE:
        frame = SensorFrame(t, y=a / scale, z=b / scale, led=Led.WHITE)
    else:
        frame = SensorFrame(t, ir1=a / scale, ir2=b / scale, led=Led.NIR)
    return frame, seq


def encode_stream(frames, start_seq: int = 0, scale: float = 1.0) -> bytes:
    return b"".join(encode_frame(f, start_seq + i, scale) for i, f in enumerate(frames))


@dataclass(frozen=True)
class Gap:
    after: int
    missing: int


@dataclass
class DecodeReport:
    frames: int = 0
    gaps: list[Gap] = field(default_factory=list)
    malformed: list[tuple[int, int]] = field(default_factory=list)  # (offset, length)

    @property
    def missing_total(self) -> int:
        return sum(g.missing for g in self.gaps)

    def to_json(self) -> dict:
        return {
            "frames": self.frames,
            "gaps": [{"after": g.after, "missing": g.missing} for g in self.gaps],
            "malformed": [{"offset": o, "length": n} for o, n in self.malformed],
        }


def decode_stream(data: bytes, scale: float = 1.0) -> tuple[list[SensorFrame], DecodeReport]:
    """Decode a byte stream, resynchronising on the magic after any damage.

    Frames failing validation are never emitted; skipped bytes are reported as
    malformed regions and jumps in sequence number as gaps.
    """
    frames: list[SensorFrame] = []
    report = DecodeReport()
    pos, n = 0, len(data)
    bad_start = None
    last_seq = None
    while pos < n:
        frame = None
        if data.startswith(MAGIC, pos) and pos + FRAME_SIZE <= n:
            try:
                frame, seq = decode_frame(data[pos:pos + FRAME_SIZE], scale)
            except WireDecodeError:
                frame = None
        if frame is None:
            if bad_start is None:
                bad_start = pos
            nxt = data.find(MAGIC, pos + 1)
            pos = n if nxt < 0 else nxt
            continue
        if bad_start is not None:
            report.malformed.append((bad_start, pos - bad_start))
            bad_start = None
        if last_seq is not None:
            missing = (seq - last_seq - 1) % SEQ_MOD
            if missing:
                report.gaps.append(Gap(last_seq, missing))
        last_seq = seq
        frames.append(frame)
        pos += FRAME_SIZE
    if bad_start is not None:
        report.malformed.append((bad_start, n - bad_start))
    report.frames = len(frames)
    return frames, report
