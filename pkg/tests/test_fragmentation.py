import random

import pytest
from hypothesis import given, strategies as st

from dualmesh.fragmentation import (FragmentationError, ReassemblyBuffers, ReassemblyConflict,
                                    fragment_message)
from dualmesh.frames import DataFragment


def test_full_message_splits_into_eight():
    frags = fragment_message(1, 2, 3, bytes(range(120)))
    assert len(frags) == 8
    assert all(len(f.payload) == 15 and f.frag_count == 8 for f in frags)


def test_short_message_is_one_fragment():
    assert len(fragment_message(1, 2, 3, bytes(15))) == 1


@pytest.mark.parametrize("size", [0, 121])
def test_payload_size_limits(size):
    with pytest.raises(FragmentationError):
        fragment_message(1, 2, 3, bytes(size))


def test_in_order_and_reverse_order():
    payload = bytes(range(120))
    for order in (slice(None), slice(None, None, -1)):
        buf = ReassemblyBuffers()
        results = [buf.add(f, 0.0) for f in fragment_message(1, 2, 3, payload)[order]]
        assert results[:-1] == [None] * 7
        assert results[-1] == payload


def test_duplicate_fragment_is_harmless():
    frags = fragment_message(1, 2, 3, bytes(range(60)))
    buf = ReassemblyBuffers()
    assert buf.add(frags[3], 0.0) is None
    assert buf.add(frags[3], 0.1) is None
    assert buf.pending() == {(1, 3): (3,)}
    out = [buf.add(f, 0.2) for f in frags[:3]]
    assert out == [None, None, bytes(range(60))]
    assert len(buf) == 0


@given(payload=st.binary(min_size=1, max_size=120), seed=st.integers(0, 2**32),
       dups=st.integers(0, 6))
def test_reassembly_identity_under_shuffle_and_duplicates(payload, seed, dups):
    rng = random.Random(seed)
    frags = fragment_message(9, 4, 77, payload)
    arrivals = frags + [rng.choice(frags) for _ in range(dups)]
    rng.shuffle(arrivals)
    buf = ReassemblyBuffers()
    done = [p for p in (buf.add(f, 0.0) for f in arrivals) if p is not None]
    assert done[0] == payload


def test_timeout_evicts_partial():
    frags = fragment_message(1, 2, 3, bytes(30))
    buf = ReassemblyBuffers(timeout=5.0)
    buf.add(frags[0], 0.0)
    assert buf.next_deadline() == 5.0
    buf.expire(5.0)
    assert len(buf) == 0
    assert buf.take_evicted() == [((1, 3), (0,))]
    assert buf.take_evicted() == []


def test_capacity_evicts_oldest():
    buf = ReassemblyBuffers(capacity=2)
    for seq, t in ((1, 0.0), (2, 1.0), (3, 2.0)):
        buf.add(fragment_message(1, 2, seq, bytes(30))[0], t)
    assert set(buf.pending()) == {(1, 2), (1, 3)}
    assert [k for k, _ in buf.take_evicted()] == [(1, 1)]


def test_conflicting_fragment_count():
    buf = ReassemblyBuffers()
    buf.add(DataFragment(1, 2, 3, 0, 2, b"a"), 0.0)
    with pytest.raises(ReassemblyConflict):
        buf.add(DataFragment(1, 2, 3, 1, 3, b"b"), 0.0)
