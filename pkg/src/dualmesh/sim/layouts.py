"""Node placements used by the validation runs."""

from __future__ import annotations

import math

from .scenario import NodeSpec


def ring_clusters(clusters: int = 3, per_cluster: int = 10, radius: float = 250.0,
                  spacing: float = 2000.0) -> tuple[NodeSpec, ...]:
    """``clusters`` rings of ``per_cluster`` nodes, ring centres ``spacing`` apart.

    Centres sit on a regular polygon (a line for two clusters), so every ring
    is out of BLE reach of the others while the heads share LoRa range.
    Node ids run 1..N ring by ring.
    """
    if clusters < 1 or per_cluster < 1:
        raise ValueError("need at least one cluster of one node")
    if clusters == 1:
        centres = [(0.0, 0.0)]
    elif clusters == 2:
        centres = [(0.0, 0.0), (spacing, 0.0)]
    else:
        circum = spacing / (2 * math.sin(math.pi / clusters))
        centres = [(circum * math.cos(2 * math.pi * c / clusters),
                    circum * math.sin(2 * math.pi * c / clusters)) for c in range(clusters)]
    nodes = []
    for c, (cx, cy) in enumerate(centres):
        for k in range(per_cluster):
            a = 2 * math.pi * k / per_cluster
            nodes.append(NodeSpec(c * per_cluster + k + 1, cx + radius * math.cos(a),
                                  cy + radius * math.sin(a)))
    return tuple(nodes)
