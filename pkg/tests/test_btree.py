import numpy as np
import pytest

from btree.rules import make_rule, btree_start
from btree.tree import BTree, run_tree_trajectory
from urn.simulator import run_trajectory
from utils.errors import InvalidInputError, InvalidStateError

THREE_FRINGE_LAYOUT = ((10, 20), [((5,), []), ((12, 15), []), ((22, 25, 30), [])])


def test_optimistic_split_m3():
    tree = BTree(3, "optimistic")
    for key in range(1, 6):
        tree.insert_key(key)
    assert tree.root.keys == [3]
    assert [child.keys for child in tree.root.children] == [[1, 2], [4, 5]]
    assert tree.fringe_composition().counts == (2, 0, 0)
    assert tree.height == 1
    tree.check_invariants()


def test_prudent_split_m2():
    tree = BTree(2, "prudent")
    for key in (1, 2, 3, 4):
        tree.insert_key(key)
    assert tree.root.keys == [2]
    assert sorted(len(child.keys) for child in tree.root.children) == [1, 2]
    assert tree.fringe_composition().counts == (1, 1, 0)
    tree.check_invariants()


def test_single_key_tree():
    tree = BTree(2, "optimistic").insert_key(7)
    assert tree.fringe_composition().counts == (1, 0)
    assert tree.gap_composition().total == 2


def test_empty_and_untyped_trees():
    with pytest.raises(InvalidStateError):
        BTree(3).fringe_composition()
    tree = BTree(3).insert_key(1)
    with pytest.raises(InvalidStateError):
        tree.fringe_composition()
    with pytest.raises(InvalidStateError):
        tree.locate_gap(0)


def test_duplicate_key():
    tree = BTree(2).insert_key(1)
    with pytest.raises(InvalidInputError):
        tree.insert_key(1)


def test_tree_with_three_fringe_nodes():
    tree = BTree.from_nested(2, "prudent", THREE_FRINGE_LAYOUT)
    assert tree.key_count == 8
    assert tree.fringe_composition().counts == (1, 1, 1)
    assert tree.gap_composition().counts == (2, 3, 4)
    assert tree.gap_composition().total == 9
    assert list(tree.iter_keys()) == [5, 10, 12, 15, 20, 22, 25, 30]


@pytest.mark.parametrize("algorithm", ["optimistic", "prudent"])
@pytest.mark.parametrize("m", [2, 3, 5])
def test_random_insertions_keep_invariants(m, algorithm):
    rng = np.random.default_rng(11)
    tree = BTree.warm_start(m, algorithm, rng)
    for i in range(1500):
        tree.insert_random(rng)
        if i % 250 == 0:
            tree.check_invariants()
            assert tree.gap_composition().total == tree.key_count + 1
    tree.check_invariants()
    assert tree.gap_composition().total == tree.key_count + 1


def test_insert_at_gap_keeps_order():
    tree = BTree.warm_start(3)
    for rank in (0, 3, 1, 5, 0, 7, 2):
        k = tree.insert_at_gap(rank)
        assert 1 <= k <= 3
    tree.check_invariants()
    keys = list(tree.iter_keys())
    assert keys == sorted(keys)
    with pytest.raises(InvalidInputError):
        tree.locate_gap(tree.key_count + 1)


@pytest.mark.parametrize("algorithm", ["optimistic", "prudent"])
@pytest.mark.parametrize("m", [2, 3, 5])
def test_tree_and_urn_engines_agree(m, algorithm):
    rule = make_rule(m, algorithm)
    for seed in range(3):
        tree_run = run_tree_trajectory(rule, 2000, seed, stride=50)
        urn_run = run_trajectory(rule, btree_start(rule), 2000, seed, stride=50)
        np.testing.assert_array_equal(tree_run.steps, urn_run.steps)
        np.testing.assert_array_equal(tree_run.compositions, urn_run.compositions)


@pytest.mark.slow
@pytest.mark.parametrize("algorithm", ["optimistic", "prudent"])
@pytest.mark.parametrize("m", [2, 3, 5])
def test_tree_and_urn_engines_agree_long(m, algorithm):
    rule = make_rule(m, algorithm)
    for seed in range(10):
        tree_run = run_tree_trajectory(rule, 10_000, seed)
        urn_run = run_trajectory(rule, btree_start(rule), 10_000, seed)
        np.testing.assert_array_equal(tree_run.compositions, urn_run.compositions)


def test_recorded_compositions_do_not_walk_the_fringe(monkeypatch):
    def walk(self):
        raise AssertionError("fringe walk during a coupled run")

    rule = make_rule(3)
    expected = run_trajectory(rule, btree_start(rule), 500, seed=4)
    monkeypatch.setattr(BTree, "_fringe_nodes", walk)
    tree_run = run_tree_trajectory(rule, 500, seed=4)
    np.testing.assert_array_equal(tree_run.compositions, expected.compositions)
    assert BTree(3).insert_key(1)._has_untyped_fringe()


@pytest.mark.slow
@pytest.mark.parametrize("algorithm", ["optimistic", "prudent"])
@pytest.mark.parametrize("m", [2, 3, 5, 10])
def test_invariants_over_many_insertions(m, algorithm):
    rng = np.random.default_rng(m)
    tree = BTree.warm_start(m, algorithm, rng)
    for i in range(100_000):
        tree.insert_random(rng)
        assert tree.gap_composition().total == tree.key_count + 1
        if i % 5000 == 0:
            tree.check_invariants()
    tree.check_invariants()
