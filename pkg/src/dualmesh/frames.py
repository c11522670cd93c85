"""Wire formats for every frame carried on either radio.

BLE frames fit the 31-byte legacy advertising payload and start with a
one-byte type tag.  LoRa backbone frames have no tag; they start with the
4-byte inter-cluster header.  All integers are big-endian.

BLE layouts::

    Beacon   [tag][ver<<4|flags][node:2][key:2][battery][cluster:2][n][n x (id:2, lq)]
    Rreq     [tag][rreq_id][origin:2][origin_seq:2][dest:2][dest_seq:2][hops][cost:2][ttl]
    Rrep     [tag][origin:2][dest:2][dest_seq:2][hops][cost:2][lifetime][rreq_id][ttl]
    Data     [tag][src:2][dst:2][msg_seq:2][ttl][idx<<4|count][len][payload:len]

Data uses tag ``DATA`` for ordinary routing and ``DATA_TO_CH`` for fragments
being carried to the sender's cluster head for backbone escalation.

LoRa layout::

    [dest_ch:2][hop_limit<<4|flags][backbone_seq][src_ch:2][count][entries]

With the digest flag clear, each entry is a fragment written as
``[len][src:2][dst:2][msg_seq:2][ttl][idx<<4|count][payload:len]`` (the
BLE tag is implied and the length byte leads).  With the digest flag set,
each entry is a 2-byte member id.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Union

UNASSIGNED = 0x0000
BROADCAST = 0xFFFF

BLE_MAX_FRAME = 31
LORA_MAX_FRAME = 255
MAX_BEACON_NEIGHBORS = 4
MAX_FRAGMENT_PAYLOAD = 15
MAX_FRAGMENTS = 8
MAX_MESSAGE_PAYLOAD = MAX_FRAGMENT_PAYLOAD * MAX_FRAGMENTS
MAX_DIGEST_MEMBERS = 60
BEACON_VERSION = 1

# beacon flag bits (low nibble of the version byte)
FLAG_CH = 0x1
FLAG_DEMOTING = 0x2
DEPTH_SHIFT = 2  # bits 2-3: hops to the cluster head, 0..3

# inter-cluster header flag bits
HDR_FLAG_DIGEST = 0x1


class FrameType(IntEnum):
    BEACON = 0x01
    RREQ = 0x02
    RREP = 0x03
    DATA = 0x04
    DATA_TO_CH = 0x05


class FrameError(ValueError):
    """Base class for encode/decode failures."""


class UnknownFrameType(FrameError):
    pass


class TruncatedFrame(FrameError):
    pass


class InvalidFrame(FrameError):
    """Field out of range, bad length, trailing bytes or oversize frame."""


def _check_u(name: str, value: int, bits: int) -> None:
    if not isinstance(value, int) or not 0 <= value < (1 << bits):
        raise InvalidFrame(f"{name}={value!r} does not fit in {bits} bits")


@dataclass(frozen=True)
class BeaconNeighbor:
    node: int
    lq: int


@dataclass(frozen=True)
class Beacon:
    node: int
    advertised_key: int
    flags: int = 0
    battery_pct: int = 100
    cluster: int = UNASSIGNED
    neighbors: tuple[BeaconNeighbor, ...] = ()
    version: int = BEACON_VERSION

    @property
    def is_ch(self) -> bool:
        return bool(self.flags & FLAG_CH)

    @property
    def demoting(self) -> bool:
        return bool(self.flags & FLAG_DEMOTING)

    @property
    def depth(self) -> int:
        return (self.flags >> DEPTH_SHIFT) & 0x3


@dataclass(frozen=True)
class Rreq:
    rreq_id: int
    origin: int
    origin_seq: int
    dest: int
    dest_seq: int = 0
    hop_count: int = 0
    path_cost: int = 0
    ttl: int = 3


@dataclass(frozen=True)
class Rrep:
    origin: int
    dest: int
    dest_seq: int
    hop_count: int = 0
    path_cost: int = 0
    lifetime: int = 30
    rreq_id: int = 0
    ttl: int = 16


@dataclass(frozen=True)
class DataFragment:
    src: int
    dst: int
    msg_seq: int
    frag_index: int
    frag_count: int
    payload: bytes = b""
    ttl: int = 16
    to_ch: bool = False

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.src, self.msg_seq, self.frag_index)


@dataclass(frozen=True)
class InterClusterHeader:
    dest_ch: int
    hop_limit: int = 3
    flags: int = 0
    backbone_seq: int = 0

    @property
    def is_digest(self) -> bool:
        return bool(self.flags & HDR_FLAG_DIGEST)


@dataclass(frozen=True)
class LoraFrame:
    header: InterClusterHeader
    src_ch: int
    fragments: tuple[DataFragment, ...] = ()
    members: tuple[int, ...] = ()  # digest frames only

    @property
    def fragment_count(self) -> int:
        return len(self.fragments)


BleFrame = Union[Beacon, Rreq, Rrep, DataFragment]
Frame = Union[Beacon, Rreq, Rrep, DataFragment, LoraFrame]

_BEACON_HEAD = struct.Struct(">BBHHBHB")
_RREQ = struct.Struct(">BBHHHHBHB")
_RREP = struct.Struct(">BHHHBHBBB")
_DATA_HEAD = struct.Struct(">BHHHBBB")
_LORA_HEAD = struct.Struct(">HBBHB")
_FRAG_IN_LORA = struct.Struct(">BHHHBB")


# -- encoding ----------------------------------------------------------------


def _validate_fragment(f: DataFragment) -> None:
    for name in ("src", "dst", "msg_seq"):
        _check_u(name, getattr(f, name), 16)
    _check_u("ttl", f.ttl, 8)
    if not 1 <= f.frag_count <= MAX_FRAGMENTS:
        raise InvalidFrame(f"frag_count={f.frag_count} outside 1..{MAX_FRAGMENTS}")
    if not 0 <= f.frag_index < f.frag_count:
        raise InvalidFrame(f"frag_index={f.frag_index} not below frag_count={f.frag_count}")
    if len(f.payload) > MAX_FRAGMENT_PAYLOAD:
        raise InvalidFrame(f"fragment payload {len(f.payload)} B exceeds {MAX_FRAGMENT_PAYLOAD}")


def _encode_beacon(b: Beacon) -> bytes:
    _check_u("version", b.version, 4)
    _check_u("flags", b.flags, 4)
    _check_u("node", b.node, 16)
    _check_u("advertised_key", b.advertised_key, 16)
    _check_u("cluster", b.cluster, 16)
    if not 0 <= b.battery_pct <= 100:
        raise InvalidFrame(f"battery_pct={b.battery_pct} outside 0..100")
    if len(b.neighbors) > MAX_BEACON_NEIGHBORS:
        raise InvalidFrame(f"{len(b.neighbors)} neighbor entries, at most {MAX_BEACON_NEIGHBORS}")
    out = bytearray(
        _BEACON_HEAD.pack(
            FrameType.BEACON,
            (b.version << 4) | b.flags,
            b.node,
            b.advertised_key,
            b.battery_pct,
            b.cluster,
            len(b.neighbors),
        )
    )
    for n in b.neighbors:
        _check_u("neighbor id", n.node, 16)
        _check_u("neighbor lq", n.lq, 8)
        out += struct.pack(">HB", n.node, n.lq)
    return bytes(out)


def _encode_rreq(r: Rreq) -> bytes:
    for name, bits in (("rreq_id", 8), ("origin", 16), ("origin_seq", 16), ("dest", 16),
                       ("dest_seq", 16), ("hop_count", 8), ("path_cost", 16), ("ttl", 8)):
        _check_u(name, getattr(r, name), bits)
    return _RREQ.pack(FrameType.RREQ, r.rreq_id, r.origin, r.origin_seq, r.dest,
                      r.dest_seq, r.hop_count, r.path_cost, r.ttl)


def _encode_rrep(r: Rrep) -> bytes:
    for name, bits in (("origin", 16), ("dest", 16), ("dest_seq", 16), ("hop_count", 8),
                       ("path_cost", 16), ("lifetime", 8), ("rreq_id", 8), ("ttl", 8)):
        _check_u(name, getattr(r, name), bits)
    return _RREP.pack(FrameType.RREP, r.origin, r.dest, r.dest_seq, r.hop_count,
                      r.path_cost, r.lifetime, r.rreq_id, r.ttl)


def _encode_data(f: DataFragment) -> bytes:
    _validate_fragment(f)
    tag = FrameType.DATA_TO_CH if f.to_ch else FrameType.DATA
    return _DATA_HEAD.pack(tag, f.src, f.dst, f.msg_seq, f.ttl,
                           (f.frag_index << 4) | f.frag_count, len(f.payload)) + f.payload


def _encode_lora(frame: LoraFrame) -> bytes:
    h = frame.header
    _check_u("dest_ch", h.dest_ch, 16)
    _check_u("hop_limit", h.hop_limit, 4)
    _check_u("header flags", h.flags, 4)
    _check_u("backbone_seq", h.backbone_seq, 8)
    _check_u("src_ch", frame.src_ch, 16)
    if h.is_digest:
        if frame.fragments:
            raise InvalidFrame("digest frames carry member ids, not fragments")
        if len(frame.members) > MAX_DIGEST_MEMBERS:
            raise InvalidFrame(f"{len(frame.members)} digest members, at most {MAX_DIGEST_MEMBERS}")
        body = bytearray()
        for m in frame.members:
            _check_u("member", m, 16)
            body += m.to_bytes(2, "big")
        count = len(frame.members)
    else:
        if frame.members:
            raise InvalidFrame("member ids are only allowed in digest frames")
        if not 1 <= len(frame.fragments) <= MAX_FRAGMENTS:
            raise InvalidFrame(f"fragment_count={len(frame.fragments)} outside 1..{MAX_FRAGMENTS}")
        body = bytearray()
        for f in frame.fragments:
            _validate_fragment(f)
            if f.to_ch:
                raise InvalidFrame("escalation fragments are not carried on the backbone")
            body += _FRAG_IN_LORA.pack(len(f.payload), f.src, f.dst, f.msg_seq, f.ttl,
                                       (f.frag_index << 4) | f.frag_count)
            body += f.payload
        count = len(frame.fragments)
    out = _LORA_HEAD.pack(h.dest_ch, (h.hop_limit << 4) | h.flags, h.backbone_seq,
                          frame.src_ch, count) + bytes(body)
    if len(out) > LORA_MAX_FRAME:
        raise InvalidFrame(f"LoRa frame of {len(out)} B exceeds {LORA_MAX_FRAME}")
    return out


def encode_frame(frame: Frame) -> bytes:
    """Serialise a frame; raises ``InvalidFrame`` if any invariant is broken."""
    if isinstance(frame, Beacon):
        out = _encode_beacon(frame)
    elif isinstance(frame, Rreq):
        out = _encode_rreq(frame)
    elif isinstance(frame, Rrep):
        out = _encode_rrep(frame)
    elif isinstance(frame, DataFragment):
        out = _encode_data(frame)
    elif isinstance(frame, LoraFrame):
        return _encode_lora(frame)
    else:
        raise TypeError(f"not a frame: {type(frame).__name__}")
    if len(out) > BLE_MAX_FRAME:
        raise InvalidFrame(f"BLE frame of {len(out)} B exceeds {BLE_MAX_FRAME}")
    return out


# -- decoding ----------------------------------------------------------------


def _need(data: bytes, n: int, what: str) -> None:
    if len(data) < n:
        raise TruncatedFrame(f"{what}: need {n} bytes, have {len(data)}")


def _exact(data: bytes, n: int, what: str) -> None:
    _need(data, n, what)
    if len(data) > n:
        raise InvalidFrame(f"{what}: {len(data) - n} trailing bytes")


def _decode_beacon(data: bytes) -> Beacon:
    _need(data, _BEACON_HEAD.size, "beacon")
    _, vf, node, key, battery, cluster, n = _BEACON_HEAD.unpack_from(data)
    if n > MAX_BEACON_NEIGHBORS:
        raise InvalidFrame(f"beacon lists {n} neighbors, at most {MAX_BEACON_NEIGHBORS}")
    if battery > 100:
        raise InvalidFrame(f"battery_pct={battery} outside 0..100")
    _exact(data, _BEACON_HEAD.size + 3 * n, "beacon")
    neighbors = tuple(
        BeaconNeighbor(*struct.unpack_from(">HB", data, _BEACON_HEAD.size + 3 * i))
        for i in range(n)
    )
    return Beacon(node=node, advertised_key=key, flags=vf & 0xF, battery_pct=battery,
                  cluster=cluster, neighbors=neighbors, version=vf >> 4)


def _decode_data(data: bytes, to_ch: bool) -> DataFragment:
    _need(data, _DATA_HEAD.size, "data fragment")
    _, src, dst, seq, ttl, ic, length = _DATA_HEAD.unpack_from(data)
    if length > MAX_FRAGMENT_PAYLOAD:
        raise InvalidFrame(f"fragment payload length {length} exceeds {MAX_FRAGMENT_PAYLOAD}")
    _exact(data, _DATA_HEAD.size + length, "data fragment")
    frag = DataFragment(src=src, dst=dst, msg_seq=seq, frag_index=ic >> 4, frag_count=ic & 0xF,
                        payload=bytes(data[_DATA_HEAD.size:]), ttl=ttl, to_ch=to_ch)
    _validate_fragment(frag)
    return frag


def decode_frame(data: bytes) -> BleFrame:
    """Parse one BLE frame.  Never raises anything but ``FrameError`` subclasses."""
    data = bytes(data)
    if not data:
        raise TruncatedFrame("empty frame")
    if len(data) > BLE_MAX_FRAME:
        raise InvalidFrame(f"BLE frame of {len(data)} B exceeds {BLE_MAX_FRAME}")
    tag = data[0]
    if tag == FrameType.BEACON:
        return _decode_beacon(data)
    if tag == FrameType.RREQ:
        _exact(data, _RREQ.size, "rreq")
        return Rreq(*_RREQ.unpack(data)[1:])
    if tag == FrameType.RREP:
        _exact(data, _RREP.size, "rrep")
        return Rrep(*_RREP.unpack(data)[1:])
    if tag in (FrameType.DATA, FrameType.DATA_TO_CH):
        return _decode_data(data, to_ch=tag == FrameType.DATA_TO_CH)
    raise UnknownFrameType(f"unknown frame type tag 0x{tag:02x}")


def decode_lora_frame(data: bytes) -> LoraFrame:
    """Parse one backbone frame."""
    data = bytes(data)
    _need(data, _LORA_HEAD.size, "LoRa frame")
    if len(data) > LORA_MAX_FRAME:
        raise InvalidFrame(f"LoRa frame of {len(data)} B exceeds {LORA_MAX_FRAME}")
    dest_ch, hf, seq, src_ch, count = _LORA_HEAD.unpack_from(data)
    header = InterClusterHeader(dest_ch=dest_ch, hop_limit=hf >> 4, flags=hf & 0xF,
                                backbone_seq=seq)
    pos = _LORA_HEAD.size
    if header.is_digest:
        if count > MAX_DIGEST_MEMBERS:
            raise InvalidFrame(f"digest lists {count} members, at most {MAX_DIGEST_MEMBERS}")
        _exact(data, pos + 2 * count, "digest")
        members = tuple(int.from_bytes(data[pos + 2 * i:pos + 2 * i + 2], "big")
                        for i in range(count))
        return LoraFrame(header=header, src_ch=src_ch, members=members)
    if not 1 <= count <= MAX_FRAGMENTS:
        raise InvalidFrame(f"fragment_count={count} outside 1..{MAX_FRAGMENTS}")
    fragments = []
    for _ in range(count):
        _need(data, pos + _FRAG_IN_LORA.size, "aggregated fragment")
        length, src, dst, seq_, ttl, ic = _FRAG_IN_LORA.unpack_from(data, pos)
        pos += _FRAG_IN_LORA.size
        if length > MAX_FRAGMENT_PAYLOAD:
            raise InvalidFrame(f"fragment payload length {length} exceeds {MAX_FRAGMENT_PAYLOAD}")
        _need(data, pos + length, "aggregated fragment payload")
        frag = DataFragment(src=src, dst=dst, msg_seq=seq_, frag_index=ic >> 4,
                            frag_count=ic & 0xF, payload=data[pos:pos + length], ttl=ttl)
        _validate_fragment(frag)
        fragments.append(frag)
        pos += length
    if pos != len(data):
        raise InvalidFrame(f"LoRa frame: {len(data) - pos} trailing bytes")
    return LoraFrame(header=header, src_ch=src_ch, fragments=tuple(fragments))


def lora_frame_size(fragment_payload_lengths: list[int]) -> int:
    """Encoded size of a data frame carrying fragments of the given payload sizes."""
    return _LORA_HEAD.size + sum(_FRAG_IN_LORA.size + n for n in fragment_payload_lengths)


__all__ = [
    "BROADCAST", "UNASSIGNED", "Beacon", "BeaconNeighbor", "DataFragment", "FrameError",
    "FrameType", "InterClusterHeader", "InvalidFrame", "LoraFrame", "Rrep", "Rreq",
    "TruncatedFrame", "UnknownFrameType", "decode_frame", "decode_lora_frame",
    "encode_frame", "lora_frame_size",
]
