"""Small shared helpers."""

from __future__ import annotations


def node_sort_key(node):
    """Stable sort key over mixed node ids (graph ints, ancilla labels)."""
    if isinstance(node, bool):
        return (3, int(node), "")
    if isinstance(node, int):
        return (0, node, "")
    if isinstance(node, str):
        return (1, 0, node)
    return (2, 0, repr(node))
