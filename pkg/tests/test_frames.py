import pytest
from hypothesis import given, settings, strategies as st

from dualmesh.frames import (BLE_MAX_FRAME, FLAG_CH, HDR_FLAG_DIGEST, LORA_MAX_FRAME,
                             MAX_FRAGMENTS, Beacon, BeaconNeighbor, DataFragment, FrameError,
                             InterClusterHeader, InvalidFrame, LoraFrame, Rrep, Rreq,
                             TruncatedFrame, UnknownFrameType, decode_frame, decode_lora_frame,
                             encode_frame, lora_frame_size)

u8 = st.integers(0, 0xFF)
u16 = st.integers(0, 0xFFFF)

beacons = st.builds(
    Beacon, node=u16, advertised_key=u16, flags=st.integers(0, 0xF),
    battery_pct=st.integers(0, 100), cluster=u16,
    neighbors=st.lists(st.builds(BeaconNeighbor, node=u16, lq=u8), max_size=4).map(tuple))
rreqs = st.builds(Rreq, rreq_id=u8, origin=u16, origin_seq=u16, dest=u16, dest_seq=u16,
                  hop_count=u8, path_cost=u16, ttl=u8)
rreps = st.builds(Rrep, origin=u16, dest=u16, dest_seq=u16, hop_count=u8, path_cost=u16,
                  lifetime=u8, rreq_id=u8, ttl=u8)


@st.composite
def fragments(draw, to_ch=st.booleans()):
    count = draw(st.integers(1, MAX_FRAGMENTS))
    return DataFragment(src=draw(u16), dst=draw(u16), msg_seq=draw(u16),
                        frag_index=draw(st.integers(0, count - 1)), frag_count=count,
                        payload=draw(st.binary(max_size=15)), ttl=draw(u8), to_ch=draw(to_ch))


@st.composite
def lora_frames(draw):
    header = InterClusterHeader(dest_ch=draw(u16), hop_limit=draw(st.integers(0, 15)),
                                backbone_seq=draw(u8))
    if draw(st.booleans()):
        header = InterClusterHeader(header.dest_ch, header.hop_limit, HDR_FLAG_DIGEST,
                                    header.backbone_seq)
        return LoraFrame(header, draw(u16), members=tuple(draw(st.lists(u16, max_size=60))))
    frags = draw(st.lists(fragments(to_ch=st.just(False)), min_size=1, max_size=MAX_FRAGMENTS))
    return LoraFrame(header, draw(u16), fragments=tuple(frags))


ble_frames = st.one_of(beacons, rreqs, rreps, fragments())


@settings(max_examples=500)
@given(ble_frames)
def test_ble_round_trip_and_size(frame):
    data = encode_frame(frame)
    assert len(data) <= BLE_MAX_FRAME
    assert decode_frame(data) == frame


@settings(max_examples=300)
@given(lora_frames())
def test_lora_round_trip(frame):
    data = encode_frame(frame)
    assert len(data) <= LORA_MAX_FRAME
    assert decode_lora_frame(data) == frame


@settings(max_examples=500)
@given(st.binary(max_size=31))
def test_random_bytes_never_crash_the_ble_decoder(data):
    try:
        frame = decode_frame(data)
    except FrameError:
        return
    assert encode_frame(frame) == data


@settings(max_examples=300)
@given(st.binary(max_size=255))
def test_random_bytes_never_crash_the_lora_decoder(data):
    try:
        decode_lora_frame(data)
    except FrameError:
        pass


def test_beacon_sizes():
    assert len(encode_frame(Beacon(node=1, advertised_key=1))) == 10
    full = Beacon(node=1, advertised_key=1, neighbors=tuple(BeaconNeighbor(i, 9) for i in range(4)))
    assert len(encode_frame(full)) == 22


def test_control_frame_sizes():
    assert len(encode_frame(Rreq(1, 2, 3, 4))) == 14
    assert len(encode_frame(Rrep(1, 2, 3))) == 13
    frag = DataFragment(1, 2, 3, 0, 1, payload=bytes(15))
    assert len(encode_frame(frag)) == 25


def test_lora_header_layout():
    frame = LoraFrame(InterClusterHeader(dest_ch=0x1234, hop_limit=2, backbone_seq=0x56), 0x0009,
                      fragments=(DataFragment(1, 2, 3, 0, 1, payload=b"x"),))
    data = encode_frame(frame)
    assert data[:4] == bytes([0x12, 0x34, 0x20, 0x56])
    assert len(data) == lora_frame_size([1])


def test_beacon_flags_survive():
    b = Beacon(node=7, advertised_key=7, flags=FLAG_CH, cluster=7)
    assert decode_frame(encode_frame(b)).is_ch


def test_decode_errors():
    with pytest.raises(TruncatedFrame):
        decode_frame(b"")
    with pytest.raises(UnknownFrameType):
        decode_frame(b"\x7f")
    with pytest.raises(FrameError):
        decode_frame(encode_frame(Rreq(1, 2, 3, 4))[:-1])
    with pytest.raises(TruncatedFrame):
        decode_lora_frame(b"\x00\x01")


@pytest.mark.parametrize("frame", [
    Beacon(node=1, advertised_key=1, battery_pct=101),
    Beacon(node=1, advertised_key=1, neighbors=tuple(BeaconNeighbor(i, 1) for i in range(5))),
    Rreq(1, 0x10000, 0, 0),
    DataFragment(1, 2, 3, frag_index=2, frag_count=2),
    DataFragment(1, 2, 3, 0, 1, payload=bytes(16)),
    LoraFrame(InterClusterHeader(1), 2),
])
def test_encode_rejects_invalid_frames(frame):
    with pytest.raises(InvalidFrame):
        encode_frame(frame)
