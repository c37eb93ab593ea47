import bisect
import logging
from fractions import Fraction

from btree.models import Node
from utils.errors import InvalidInputError, InvalidStateError, InvariantViolation


class SplitMixin:
    """
    Mixin for BTree that owns node splitting and the per-type fringe registry.
    Both insertion algorithms split a node of 2m-1 keys the same way: the key
    at index m-1 moves up and two nodes of m-1 keys remain.
    """

    def _split(self, node):
        m = self.m
        median = node.keys[m - 1]
        parent = node.parent
        if parent is None:
            parent = Node(children=[node])
            node.parent = parent
            self.root = parent
            self.height += 1

        right = Node(node.keys[m:], node.children[m:], parent=parent)
        for child in right.children:
            child.parent = right
        node.keys = node.keys[:m - 1]
        node.children = node.children[:m]

        i = parent.children.index(node)
        parent.keys.insert(i, median)
        parent.children.insert(i + 1, right)

        if node.is_fringe:
            self._retype(node)
            self._retype(right)
        return parent

    def _retype(self, node):
        """Move a fringe node to the registry of its current type (None if untyped)."""
        k = len(node.keys) - self.m + 2
        if k < 1:
            k = None
        elif k > self.rule.dim:
            raise InvariantViolation(f"Fringe node holds {len(node.keys)} keys, above capacity")
        if node.kind == k:
            return

        if node.kind is not None:
            nodes = self._registry[node.kind]
            last = nodes.pop()
            if last is not node:
                nodes[node.slot] = last
                last.slot = node.slot
        node.kind = k
        node.slot = -1
        if k is not None:
            node.slot = len(self._registry[k])
            self._registry[k].append(node)

    def _descend(self, key):
        node = self.root
        while node.children:
            node = node.children[bisect.bisect(node.keys, key)]
        return node


class OptimisticInsertionMixin:
    """Insert in the fringe first, then split overflowing nodes bottom-up."""

    def _insert_optimistic(self, key):
        node = self._descend(key)
        bisect.insort(node.keys, key)
        if len(node.keys) < 2 * self.m - 1:
            self._retype(node)
            return

        parent = self._split(node)
        while len(parent.keys) == 2 * self.m - 1:
            parent = self._split(parent)


class PrudentInsertionMixin:
    """Split every saturated node met on the way down, then insert in the fringe."""

    def _insert_prudent(self, key):
        saturated = 2 * self.m - 1
        if len(self.root.keys) == saturated:
            self._split(self.root)

        node = self.root
        while node.children:
            i = bisect.bisect(node.keys, key)
            child = node.children[i]
            if len(child.keys) == saturated:
                self._split(child)
                if key > node.keys[i]:
                    child = node.children[i + 1]
            node = child

        bisect.insort(node.keys, key)
        self._retype(node)


class GapIndexMixin:
    """
    Coupled insertion: gaps are ranked type-major (every type-1 gap first,
    registry order within a type, left to right inside a node), so a rank
    drawn uniformly in [0, key_count + 1) selects a type exactly as the urn
    selects a color.
    """

    def locate_gap(self, rank):
        """
        Find the fringe node and local gap of a type-major rank.

        Returns:
            (node, local gap index, type)
        """
        if rank < 0:
            raise InvalidInputError(f"Gap rank must be nonnegative, got {rank}")
        for k, nodes in self._registry.items():
            width = self.m + k - 1
            block = len(nodes) * width
            if rank < block:
                return nodes[rank // width], rank % width, k
            rank -= block

        if self._has_untyped_fringe():
            raise InvalidStateError("Tree has an untyped fringe node; gaps are not ranked")
        raise InvalidInputError("Gap rank exceeds the number of gaps")

    def _gap_bounds(self, node, i):
        lo = node.keys[i - 1] if i > 0 else None
        hi = node.keys[i] if i < len(node.keys) else None

        child, parent = node, node.parent
        while parent is not None and (lo is None or hi is None):
            j = parent.children.index(child)
            if lo is None and j > 0:
                lo = parent.keys[j - 1]
            if hi is None and j < len(parent.keys):
                hi = parent.keys[j]
            child, parent = parent, parent.parent
        return lo, hi

    def insert_at_gap(self, rank):
        """
        Insert a fresh key into the gap of the given type-major rank.

        The key is an exact rational strictly between the gap's in-order
        neighbours, so ordinary search routes it back into the same gap.

        Returns:
            The type of the fringe node that received the key
        """
        node, i, k = self.locate_gap(rank)
        lo, hi = self._gap_bounds(node, i)
        if lo is None and hi is None:
            key = Fraction(0)
        elif lo is None:
            key = hi - 1
        elif hi is None:
            key = lo + 1
        else:
            key = Fraction(lo + hi, 2)

        logging.debug(f"Gap rank {rank} -> type {k}, key {key}")
        self.insert_key(key)
        return k
