"""Search-tree storage shared by the steering and planner modules."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .cbf import RobotState


@dataclass
class Node:
    """Tree node: pose, parent link, and path length from the root."""

    id: int
    state: RobotState
    parent: int | None
    cost: float

    @property
    def position(self) -> tuple[float, float]:
        return self.state.x1, self.state.x2


def planar_distance(a: RobotState, b: RobotState) -> float:
    return math.hypot(a.x1 - b.x1, a.x2 - b.x2)


class Tree:
    """Dual-list node store.

    ``nodes`` (indexed by id) is the all-node list used for rewiring and path
    extraction; ``tree_ids`` marks the subset eligible as steering anchors.
    A children index supports cost propagation when rewiring.
    """

    def __init__(self, root_state: RobotState):
        root = Node(0, root_state, None, 0.0)
        self.nodes: list[Node] = [root]
        self.tree_ids: list[int] = [0]
        self.children: dict[int, set[int]] = {0: set()}

    @property
    def root(self) -> Node:
        return self.nodes[0]

    def next_id(self) -> int:
        return len(self.nodes)

    def insert(self, node: Node) -> None:
        """Register a node created elsewhere; its id must be the next free one."""
        if node.id != len(self.nodes):
            raise ValueError(f"node id {node.id} out of sequence, expected {len(self.nodes)}")
        if node.parent is None or not 0 <= node.parent < len(self.nodes):
            raise ValueError(f"node {node.id} has invalid parent {node.parent}")
        self.nodes.append(node)
        self.children[node.id] = set()
        self.children[node.parent].add(node.id)

    def mark_anchor(self, node_id: int) -> None:
        self.tree_ids.append(node_id)

    def reparent(self, node_id: int, new_parent: int, new_cost: float) -> None:
        """Move a node under a new parent and propagate the cost change downward."""
        node = self.nodes[node_id]
        delta = new_cost - node.cost
        self.children[node.parent].discard(node_id)
        self.children[new_parent].add(node_id)
        node.parent = new_parent
        stack = [node_id]
        while stack:
            nid = stack.pop()
            self.nodes[nid].cost += delta
            stack.extend(sorted(self.children[nid]))

    def path_to_root(self, node_id: int) -> list[Node]:
        """Nodes from the root to ``node_id``, inclusive."""
        chain = []
        nid: int | None = node_id
        while nid is not None:
            node = self.nodes[nid]
            chain.append(node)
            nid = node.parent
        chain.reverse()
        return chain
