import random
from dataclasses import replace

from hypothesis import given, strategies as st

from dualmesh.blemesh import (MeshNode, Deliver, Drop, Escalate, RouteKind, SendBle, Status,
                              link_quality, path_cost, seq_newer)
from dualmesh.cluster import ElectionState, Role
from dualmesh.frames import BROADCAST, FLAG_CH, Beacon, BeaconNeighbor, DataFragment, Rrep, Rreq


def node(i, **kw):
    return MeshNode(i, rng=random.Random(i), **kw)


def hear(n, sender, now=0.0, rssi=-70, neighbors=(), **kw):
    b = Beacon(node=sender, advertised_key=sender,
               neighbors=tuple(BeaconNeighbor(x, 200) for x in neighbors), **kw)
    return n.process_beacon(b, rssi, now)


def test_link_quality_examples():
    assert link_quality(-110) == 0
    assert link_quality(-70) == 160
    assert link_quality(-40) == 255
    assert link_quality(-130) == 0


def test_path_cost_examples():
    assert path_cost([255]) == 1
    assert path_cost([255, 255]) == 2
    assert path_cost([160, 200]) == 152


def test_sequence_wraparound():
    assert seq_newer(1, 0xFFFF)
    assert not seq_newer(0xFFFF, 1)
    assert not seq_newer(5, 5)


def test_new_neighbour_and_refresh():
    n = node(1)
    hear(n, 2, now=0.0)
    e = n.neighbors[2]
    assert e.status is Status.PRESENT and e.lq == 160
    hear(n, 2, now=3.0, rssi=-60)
    assert e.last_seen == 3.0 and e.lq == 200


def test_two_hop_cache_from_advertised_list():
    n = node(1)
    hear(n, 2, neighbors=(9,))
    assert (9, 2) in n.two_hop
    assert n.resolve_route(9, 0.0).kind is RouteKind.TWO_HOP
    assert n.resolve_route(9, 0.0).next_hop == 2


def test_beacon_processing_is_idempotent():
    n = node(1)
    hear(n, 2, neighbors=(1, 5))
    snapshot = (dict(n.neighbors), dict(n.two_hop))
    assert hear(n, 2, neighbors=(1, 5)) is False
    assert (dict(n.neighbors), dict(n.two_hop)) == snapshot


def test_expiry_rules():
    n = node(1)
    hear(n, 2, now=0.0)
    hear(n, 3, now=0.0)
    hear(n, 3, now=12.0)
    n.expire_neighbors(7.0)
    assert n.neighbors[2].status is Status.STALE
    n.expire_neighbors(13.0)
    assert 2 not in n.neighbors and n.neighbors[3].status is Status.PRESENT


def test_direct_route_and_discovery():
    n = node(1)
    hear(n, 2)
    assert n.resolve_route(2, 0.0).kind is RouteKind.DIRECT
    assert n.resolve_route(7, 0.0).kind is RouteKind.START_DISCOVERY
    _, actions = n.originate(7, b"hello", 0.0)
    rreqs = [a.frame for a in actions if isinstance(a, SendBle) and isinstance(a.frame, Rreq)]
    assert len(rreqs) == 1 and rreqs[0].ttl == 3 and rreqs[0].dest == 7


def test_expanding_ring_then_escalation_at_head():
    n = node(9)
    n.originate(7, b"x", 0.0)
    ttls = []
    for t in (1.0, 3.0):
        ttls += [a.frame.ttl for a in n.discovery_tick(t) if isinstance(a, SendBle)]
    assert ttls == [6, 12]
    final = n.discovery_tick(7.0)
    assert any(isinstance(a, Escalate) for a in final)
    assert n.discovery_tick(8.0) == []


def test_rreq_reaching_destination_answers():
    dest = node(7)
    acts = dest.handle_rreq(Rreq(1, origin=1, origin_seq=1, dest=7, path_cost=96, ttl=3),
                            sender=2, rssi_dbm=-60, now=0.0)
    assert len(acts) == 1 and isinstance(acts[0].frame, Rrep) and acts[0].link_dest == 2
    assert dest.routes[1].path_cost == 96 + 56


def test_duplicate_rreq_with_higher_cost_dropped():
    n = node(5)
    r = Rreq(1, origin=1, origin_seq=1, dest=7, ttl=3)
    assert n.handle_rreq(r, 2, -60, 0.0)
    assert n.handle_rreq(r, 3, -90, 0.0) == []


def test_rreq_with_ttl_one_not_rebroadcast():
    n = node(5)
    assert n.handle_rreq(Rreq(1, origin=1, origin_seq=1, dest=7, ttl=1), 2, -60, 0.0) == []


def test_rrep_at_origin_releases_queue():
    n = node(1)
    hear(n, 2)
    n.originate(7, b"hello", 0.0)
    acts = n.handle_rrep(Rrep(origin=1, dest=7, dest_seq=4, path_cost=50, hop_count=1), 2, -70,
                         0.2)
    sends = [a for a in acts if isinstance(a, SendBle)]
    assert len(sends) == 1 and sends[0].link_dest == 2 and sends[0].frame.dst == 7
    assert n.routes[7].path_cost == 50 + 96


def test_better_rrep_replaces_route():
    n = node(1)
    hear(n, 2)
    hear(n, 3, rssi=-50)
    n.handle_rrep(Rrep(origin=1, dest=7, dest_seq=4, path_cost=200), 2, -70, 0.0)
    n.handle_rrep(Rrep(origin=1, dest=7, dest_seq=4, path_cost=10), 3, -50, 0.0)
    assert n.routes[7].next_hop == 3


def test_rrep_without_reverse_route_counted():
    n = node(5)
    assert n.handle_rrep(Rrep(origin=1, dest=7, dest_seq=4), 3, -60, 0.0) == []
    assert n.counters["rrep_no_reverse_route"] == 1


def test_data_for_self_is_delivered_once():
    n = node(7)
    frag = DataFragment(1, 7, 1, 0, 1, b"hi")
    assert n.forward_data(frag, 0.0) == [Deliver(1, 1, b"hi")]
    assert n.forward_data(frag, 0.1) == [Drop(frag.key, "duplicate")]


def test_ttl_zero_dropped():
    n = node(5)
    frag = DataFragment(1, 7, 1, 0, 1, b"hi", ttl=0)
    assert n.forward_data(frag, 0.0) == [Drop(frag.key, "ttl")]


def test_member_escalates_toward_its_head():
    n = node(2)
    n.election = ElectionState(node_id=2, own_key=2, role=Role.MEMBER, cluster=9, depth=1)
    hear(n, 9, flags=FLAG_CH, cluster=9)
    frag = DataFragment(4, 40, 1, 0, 1, b"x", to_ch=True)
    assert n.forward_data(frag, 0.0) == [SendBle(replace(frag, ttl=15), 9)]


def test_head_hands_escalated_fragment_to_backbone():
    n = node(9)
    frag = DataFragment(4, 40, 1, 0, 1, b"x", to_ch=True)
    assert n.forward_data(frag, 0.0) == [Escalate(replace(frag, ttl=15, to_ch=False), 40)]


def test_beacon_advertises_at_most_four_and_rotates():
    n = node(1)
    for i in range(2, 9):
        hear(n, i)
    seen = set()
    for t in range(4):
        b = n.make_beacon(float(t))
        assert len(b.neighbors) == 4
        seen |= {x.node for x in b.neighbors}
    assert seen == set(range(2, 9))


@given(st.lists(st.tuples(st.integers(1, 30), st.integers(-110, -40), st.floats(0, 50)),
                max_size=40))
def test_tables_stay_bounded(events):
    n = node(99)
    for sender, rssi, t in events:
        hear(n, sender, now=t, rssi=rssi, neighbors=(sender + 1, sender + 2))
        n.expire_neighbors(t)
    occ = n.occupancy()
    assert occ["neighbors"] <= 16 and occ["two_hop"] <= 64


def test_broadcast_sender_ignored():
    n = node(1)
    assert n.process_beacon(Beacon(node=BROADCAST, advertised_key=1), -60, 0.0) is False
    assert not n.neighbors
