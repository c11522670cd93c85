from hypothesis import given, strategies as st

from dualmesh.cluster import (MAX_CLUSTER_DEPTH, ElectionState, PeerView, Role,
                              apply_battery_policy, demoted_key, evaluate_role)


def test_highest_key_becomes_head():
    s = evaluate_role(ElectionState.initial(5), [PeerView(3, 3), PeerView(4, 4)])
    assert s.role is Role.CH and s.cluster == 5


def test_lower_node_joins_claiming_head():
    s = evaluate_role(ElectionState.initial(3), [PeerView(5, 5, is_ch=True, cluster=5)])
    assert s.role is Role.MEMBER and s.cluster == 5 and s.depth == 1


def test_isolated_node_is_singleton_head():
    s = evaluate_role(ElectionState.initial(9), [])
    assert s.is_ch and s.cluster == 9


def test_non_mutual_or_stale_neighbours_are_ignored():
    peers = [PeerView(8, 8, is_ch=True, cluster=8, mutual=False),
             PeerView(7, 7, is_ch=True, cluster=7, present=False)]
    assert evaluate_role(ElectionState.initial(2), peers).is_ch


def test_multi_hop_member_adopts_relayed_cluster():
    s = evaluate_role(ElectionState.initial(1), [PeerView(4, 4, cluster=9, depth=1)])
    assert s.role is Role.MEMBER and s.cluster == 9 and s.depth == 2


def test_depth_bound_makes_far_node_a_head():
    s = evaluate_role(ElectionState.initial(1),
                      [PeerView(4, 4, cluster=9, depth=MAX_CLUSTER_DEPTH)])
    assert s.is_ch


def test_low_battery_head_demotes_and_loses():
    head = ElectionState.initial(5)
    low = apply_battery_policy(head, 15)
    assert low.demoted and low.own_key < 3
    after = evaluate_role(low, [PeerView(3, 3, is_ch=True, cluster=3)])
    assert after.role is Role.MEMBER


def test_member_does_not_demote():
    member = ElectionState(node_id=3, own_key=3, role=Role.MEMBER, cluster=5)
    assert not apply_battery_policy(member, 15).demoted


def test_recovery_needs_hysteresis():
    low = apply_battery_policy(ElectionState.initial(5), 15)
    assert apply_battery_policy(low, 25).demoted
    back = apply_battery_policy(low, 35)
    assert not back.demoted and back.own_key == 5


def test_demoted_key_clamps():
    assert demoted_key(5) == 1
    assert demoted_key(0x9000) == 0x1000


@given(own=st.integers(1, 0xFFFE), others=st.lists(st.integers(1, 0xFFFE), max_size=6))
def test_demoted_node_never_beats_a_normal_neighbour(own, others):
    peers = [PeerView(n, n) for n in others if n != own]
    state = apply_battery_policy(ElectionState.initial(own), 10)
    if peers:
        assert not evaluate_role(state, peers).is_ch


@given(st.lists(st.tuples(st.integers(1, 50), st.booleans(), st.integers(0, 3)), max_size=6))
def test_role_invariant_holds(peers):
    views = [PeerView(n, n, is_ch=ch, cluster=n if ch else 0, depth=d) for n, ch, d in peers
             if n != 25]
    s = evaluate_role(ElectionState.initial(25), views)
    assert (s.role is Role.CH) == (s.cluster == 25)
    assert s.depth <= MAX_CLUSTER_DEPTH
