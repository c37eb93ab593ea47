import logging

import numpy as np

from btree.insertion import (
    SplitMixin, OptimisticInsertionMixin, PrudentInsertionMixin, GapIndexMixin,
)
from btree.models import CompositionVector, Node, FRINGE
from btree.rules import make_rule, btree_start
from urn.models import Trajectory
from urn.simulator import gap_ranks, record_points, trajectory_rng
from utils.errors import InvalidInputError, InvalidStateError, InvariantViolation

KEY_RANGE = 2 ** 63


class BTree(SplitMixin, OptimisticInsertionMixin, PrudentInsertionMixin, GapIndexMixin):
    def __init__(self, m, algorithm="optimistic"):
        """
        Empty B-tree of parameter m.

        Args:
            m: B-tree parameter, at least 2
            algorithm: "optimistic" (nodes hold m-1..2m-2 keys) or
                "prudent" (m-1..2m-1 keys, saturated nodes split on the way down)
        """
        self.rule = make_rule(m, algorithm)
        self.m = m
        self.algorithm = algorithm
        self.root = Node()
        self.height = 0
        self.key_count = 0
        self._registry = {k: [] for k in range(1, self.rule.dim + 1)}

    @property
    def capacity(self):
        return 2 * self.m - 2 if self.algorithm == "optimistic" else 2 * self.m - 1

    @classmethod
    def warm_start(cls, m, algorithm="optimistic", rng=None):
        """Tree whose root holds m-1 keys: the first typed state, L = e_1.

        Without an rng the keys are 1..m-1, so no randomness is consumed.
        """
        tree = cls(m, algorithm)
        if rng is None:
            for key in range(1, m):
                tree.insert_key(key)
        else:
            for _ in range(m - 1):
                tree.insert_random(rng)
        return tree

    @classmethod
    def from_nested(cls, m, algorithm, layout):
        """
        Build a tree from nested ``(keys, [child layouts])`` tuples.

        Example:
            ((10, 20), [((5,), []), ((12, 15), []), ((22, 25, 30), [])])
        """
        tree = cls(m, algorithm)

        def build(spec, parent, depth):
            keys, children = spec
            node = Node(keys, parent=parent)
            tree.key_count += len(node.keys)
            for child in children:
                node.children.append(build(child, node, depth + 1))
            if not node.children:
                tree.height = max(tree.height, depth)
            return node

        tree.root = build(layout, None, 0)
        for node in tree._fringe_nodes():
            tree._retype(node)
        tree.check_invariants()
        return tree

    def contains(self, key):
        node = self.root
        while True:
            lo, hi = 0, len(node.keys)
            while lo < hi:
                mid = (lo + hi) // 2
                if node.keys[mid] < key:
                    lo = mid + 1
                else:
                    hi = mid
            if lo < len(node.keys) and node.keys[lo] == key:
                return True
            if not node.children:
                return False
            node = node.children[lo]

    def insert_key(self, key):
        """
        Insert one key with the tree's algorithm.

        Raises:
            InvalidInputError: if the key is already present
        """
        if self.contains(key):
            raise InvalidInputError(f"Key {key} is already in the tree")
        if self.algorithm == "optimistic":
            self._insert_optimistic(key)
        else:
            self._insert_prudent(key)
        self.key_count += 1
        return self

    def insert_random(self, rng):
        """Random permutation model: a uniform 64-bit key, re-drawn on collision."""
        key = int(rng.integers(KEY_RANGE, dtype=np.uint64))
        while self.contains(key):
            key = int(rng.integers(KEY_RANGE, dtype=np.uint64))
        return self.insert_key(key)

    def _fringe_nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.children:
                stack.extend(reversed(node.children))
            else:
                yield node

    def _has_untyped_fringe(self):
        # below the root every node holds at least m-1 keys, so only a root leaf can be untyped
        return self.height == 0 and self.root.kind is None

    def fringe_composition(self):
        """
        Count fringe nodes per type (type k holds m+k-2 keys).

        Raises:
            InvalidStateError: empty tree, or a root with fewer than m-1 keys
        """
        if self.key_count == 0:
            raise InvalidStateError("Empty tree has no fringe composition")
        if self._has_untyped_fringe():
            raise InvalidStateError(
                f"Root holds {len(self.root.keys)} keys, fewer than m-1 = {self.m - 1}")
        return CompositionVector(tuple(len(self._registry[k]) for k in self._registry), FRINGE)

    def gap_composition(self):
        return self.fringe_composition().to_gaps(self.rule)

    def iter_keys(self):
        def walk(node):
            if not node.children:
                yield from node.keys
                return
            for i, child in enumerate(node.children):
                yield from walk(child)
                if i < len(node.keys):
                    yield node.keys[i]

        yield from walk(self.root)

    def check_invariants(self):
        """Raise InvariantViolation on any depth, key-range or ordering breach."""
        depths = set()
        count = 0
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            count += len(node.keys)
            if node is self.root:
                if self.key_count and not 1 <= len(node.keys) <= self.capacity:
                    raise InvariantViolation(f"Root holds {len(node.keys)} keys")
            elif not self.m - 1 <= len(node.keys) <= self.capacity:
                raise InvariantViolation(
                    f"Node at depth {depth} holds {len(node.keys)} keys, "
                    f"outside [{self.m - 1}, {self.capacity}]")
            if node.children:
                if len(node.children) != len(node.keys) + 1:
                    raise InvariantViolation(
                        f"Node with {len(node.keys)} keys has {len(node.children)} children")
                for child in node.children:
                    if child.parent is not node:
                        raise InvariantViolation("Broken parent pointer")
                    stack.append((child, depth + 1))
            else:
                depths.add(depth)

        if len(depths) > 1:
            raise InvariantViolation(f"Fringe nodes at several depths: {sorted(depths)}")
        if count != self.key_count:
            raise InvariantViolation(f"Tree holds {count} keys, counter says {self.key_count}")

        previous = None
        for key in self.iter_keys():
            if previous is not None and not previous < key:
                raise InvariantViolation(f"Keys out of order: {previous} before {key}")
            previous = key

        for k, nodes in self._registry.items():
            for slot, node in enumerate(nodes):
                if node.kind != k or node.slot != slot or len(node.keys) != self.m + k - 2:
                    raise InvariantViolation(f"Registry of type {k} is stale")
        return True


def run_tree_trajectory(rule, n_steps, seed, stride=1, index=0, geometric=False):
    """
    Tree engine: warm-started B-tree fed with the urn's gap-rank stream.

    The result has the same format as ``run_trajectory`` and, for the same
    (seed, index), the same compositions.
    """
    tree = BTree.warm_start(rule.m, rule.algorithm)
    initial = btree_start(rule)
    k0 = initial.total
    points = record_points(n_steps, stride, geometric)
    rng = trajectory_rng(seed, index)

    records = [tree.gap_composition().counts]
    ranks = gap_ranks(rng, k0, 0, n_steps)
    next_point = 1
    for t, rank in enumerate(ranks, start=1):
        tree.insert_at_gap(int(rank))
        if next_point < len(points) and points[next_point] == t:
            records.append(tree.gap_composition().counts)
            next_point += 1

    logging.info(f"Tree engine: m={rule.m} {rule.algorithm}, {n_steps} insertions, height {tree.height}")
    return Trajectory(
        rule=rule,
        initial=initial,
        seed=seed,
        index=index,
        stride=stride,
        steps=points,
        compositions=np.array(records, dtype=np.int64),
    )
