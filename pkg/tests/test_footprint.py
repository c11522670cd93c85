import pytest

from dualmesh.footprint import (CAPACITY, OVERHEAD_BYTES, RAM_BUDGET, STATE_BUDGET,
                                budget_table, max_footprint, state_footprint)
from dualmesh.frames import Beacon
from dualmesh.node import DualRadioNode


def test_budget_fits_at_every_cap():
    assert max_footprint() <= RAM_BUDGET


def test_max_footprint_is_sum_of_rows():
    assert max_footprint() == OVERHEAD_BYTES + sum(r.entry_bytes * r.capacity for r in STATE_BUDGET)
    assert sum(row[3] for row in budget_table()) == max_footprint()


def test_fresh_node_is_overhead_only():
    assert state_footprint(DualRadioNode(1)) == OVERHEAD_BYTES


def test_adding_a_neighbour_costs_one_entry():
    node = DualRadioNode(1)
    before = state_footprint(node)
    node.mesh.process_beacon(Beacon(node=2, advertised_key=2), -70, 0.0)
    entry = {r.name: r.entry_bytes for r in STATE_BUDGET}["neighbors"]
    assert state_footprint(node) - before == entry


def test_neighbor_table_is_capped():
    node = DualRadioNode(100)
    for i in range(1, 40):
        node.mesh.process_beacon(Beacon(node=i, advertised_key=i), -70, 0.0)
    assert len(node.mesh.neighbors) == CAPACITY["neighbors"]


def test_unknown_table_is_rejected():
    with pytest.raises(KeyError):
        state_footprint({"mystery": 1})
