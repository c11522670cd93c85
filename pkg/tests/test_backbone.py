import pytest

from dualmesh.analytics import LoraPhyConfig
from dualmesh.backbone import (Backbone, ListenSchedule, NotClusterHead, aggregation_airtime_ratio,
                               in_listen_window)
from dualmesh.fragmentation import fragment_message
from dualmesh.frames import BROADCAST, DataFragment, InterClusterHeader, LoraFrame


def known_backbone(node=1, remote_ch=9, members=(40, 41)):
    bb = Backbone(node)
    bb.directory.learn(remote_ch, members, 0.0)
    return bb


def test_eight_fragments_fill_one_frame():
    bb = known_backbone()
    out = bb.enqueue_for_backbone(True, fragment_message(5, 40, 1, bytes(120)), 40, 0.0)
    assert len(out) == 1 and out[0].fragment_count == 8 and out[0].header.dest_ch == 9
    assert bb.flush_aggregate(0.0) is None


def test_unknown_destination_floods():
    bb = Backbone(1)
    bb.enqueue_for_backbone(True, fragment_message(5, 77, 1, bytes(10)), 77, 0.0)
    frame = bb.flush_aggregate(1.0)
    assert frame.header.dest_ch == BROADCAST


def test_non_head_cannot_enqueue():
    with pytest.raises(NotClusterHead):
        Backbone(1).enqueue_for_backbone(False, fragment_message(5, 40, 1, b"x"), 40, 0.0)


def test_flush_timer():
    bb = known_backbone()
    bb.enqueue_for_backbone(True, fragment_message(5, 40, 1, bytes(10)), 40, 0.0)
    assert bb.flush_deadline() == pytest.approx(0.2)
    assert bb.flush_aggregate(0.1) is None
    frame = bb.flush_aggregate(0.25)
    assert frame is not None and frame.fragment_count == 1
    assert Backbone(2).flush_aggregate(5.0) is None


def test_destination_change_flushes_previous_frame():
    bb = Backbone(1)
    bb.directory.learn(9, [40], 0.0)
    bb.directory.learn(8, [50], 0.0)
    bb.enqueue_for_backbone(True, fragment_message(5, 40, 1, b"a"), 40, 0.0)
    out = bb.enqueue_for_backbone(True, fragment_message(5, 50, 2, b"b"), 50, 0.0)
    assert [f.header.dest_ch for f in out] == [9]


def frame_for(dest_ch, hop_limit=2, seq=1, src_ch=9):
    return LoraFrame(InterClusterHeader(dest_ch, hop_limit, backbone_seq=seq), src_ch,
                     fragments=(DataFragment(5, 40, 1, 0, 1, b"x"),))


def test_frame_for_self_is_injected():
    inject, relay = Backbone(1).handle_lora_frame(frame_for(1), 0.0)
    assert len(inject) == 1 and relay is None


def test_frame_for_other_head_is_relayed_with_lower_hop_limit():
    inject, relay = Backbone(1).handle_lora_frame(frame_for(3, hop_limit=2), 0.0)
    assert inject == [] and relay.header.hop_limit == 1


def test_duplicate_backbone_frame_dropped():
    bb = Backbone(1)
    bb.handle_lora_frame(frame_for(1), 0.0)
    assert bb.handle_lora_frame(frame_for(1), 0.1) == ([], None)
    assert bb.counters["duplicate"] == 1


def test_listen_window_examples():
    s = ListenSchedule()
    assert in_listen_window(s, 1.0)
    assert not in_listen_window(s, 15.0)
    step = 0.01
    hits = sum(in_listen_window(s, i * step) for i in range(300_000))
    assert hits / 300_000 == pytest.approx(2 / 30, abs=1e-4)


def test_next_slot_respects_window():
    s = ListenSchedule()
    assert s.next_slot(0.5, 0.4) == (0.5, 1.6)
    assert s.next_slot(1.8, 0.4) == (30.0, 31.6)
    assert s.next_slot(0.0, 3.0) is None


def test_digest_and_directory():
    head = Backbone(4, settle_time=0.0)
    digest = head.emit_membership_digest(True, [3, 4, 2], 0.0)
    assert digest.members == (2, 3)
    assert head.emit_membership_digest(True, [3], 1.0) is None
    assert head.emit_membership_digest(False, [3], 100.0) is None
    other = Backbone(9)
    other.handle_lora_frame(digest, 0.0)
    assert other.directory.lookup(3, 1.0) == 4 and other.directory.lookup(2, 1.0) == 4
    assert other.resolve_dest_ch(3, 1.0) == 4


def test_aggregation_ratio_at_sf10():
    singles, aggregate, ratio = aggregation_airtime_ratio(LoraPhyConfig.for_sf(10))
    assert ratio == pytest.approx(singles / aggregate)
    assert ratio >= 2.0


@pytest.mark.parametrize("heads", [2, 3, 4, 5, 6])
def test_flood_relayed_at_most_once_per_head(heads):
    nodes = {i: Backbone(i) for i in range(1, heads + 1)}
    origin = nodes[1]
    origin.enqueue_for_backbone(True, fragment_message(5, 77, 1, b"x"), 77, 0.0)
    pending = [(1, origin.flush_aggregate(1.0))]
    relays = {i: 0 for i in nodes}
    injected = {i: 0 for i in nodes}
    while pending:
        sender, frame = pending.pop(0)
        for i, bb in nodes.items():
            if i == sender:
                continue
            inject, relay = bb.handle_lora_frame(frame, 1.0)
            injected[i] += len(inject)
            if relay is not None:
                relays[i] += 1
                pending.append((i, relay))
    assert all(count <= 1 for count in relays.values())
    assert relays[1] == 0
    assert all(injected[i] == 1 for i in nodes if i != 1)
