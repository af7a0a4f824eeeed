import pytest

from beeflow.behavior_tree import UnknownNode, leaf, parallel, sequence
from beeflow.executors import RandomExecutor
from beeflow.paths import (NotALeaf, Subpath, check_exclusivity, expand_paths, is_valid_subpath, prefix, raw_path,
                           same_prefix)
from conftest import make_tree


def test_raw_path_t1(t1):
    assert raw_path(t1, 'f7') == ['root', 'f1', 'branches', 'right', 'f5', 'f6', 'f7']
    assert raw_path(t1, 'f4') == ['root', 'f1', 'branches', 'finish', 'f3', 'f4']
    assert prefix(t1, 'f4') == ['root', 'f1', 'branches', 'finish', 'f3']
    assert prefix(t1, 'finish') == raw_path(t1, 'finish')
    with pytest.raises(UnknownNode):
        raw_path(t1, 'nope')


def test_expand_paths_t1(t1):
    assert expand_paths(t1, 'f7') == [['f1', 'f5', 'f6', 'f7']]
    paths = expand_paths(t1, 'f3')
    assert sorted(map(tuple, paths)) == sorted([
        ('f1', 'f2', 'f3'), ('f1', 'f2', 'f8', 'f3'), ('f1', 'f5', 'f3'),
        ('f1', 'f5', 'f6', 'f3'), ('f1', 'f5', 'f6', 'f7', 'f3')])
    assert len(expand_paths(t1, 'f4')) == 5


def test_expand_paths_greedy_over_cap(t1, caplog):
    weights = {'f5': 10.0, 'f6': 10.0, 'f7': 10.0}
    paths = expand_paths(t1, 'f3', cap=2, weights=weights)
    assert paths == [['f1', 'f5', 'f6', 'f7', 'f3']]
    assert 'expanding greedily' in caplog.text
    with pytest.raises(ValueError):
        expand_paths(t1, 'f3', cap=0)


@pytest.mark.parametrize('leaves, ok', [
    (['f1', 'f2', 'f8', 'f3'], True),
    (['f5', 'f6', 'f7'], True),
    (['f1', 'f4'], True),
    (['f3', 'f4'], True),
    (['f2', 'f5'], False),
    (['f8', 'f2'], False),
    (['f1', 'f1'], False),
    ([], False),
])
def test_is_valid_subpath(t1, leaves, ok):
    assert is_valid_subpath(t1, leaves) is ok


def test_is_valid_subpath_unknown_leaf(t1):
    with pytest.raises(UnknownNode):
        is_valid_subpath(t1, ['f1', 'f99'])


def test_same_prefix():
    tree = make_tree(sequence(leaf('x'), parallel(leaf('a'), leaf('b'), node_id='p'), node_id='r'))
    assert same_prefix(tree, 'a', 'b')
    assert not same_prefix(tree, 'x', 'a')
    with pytest.raises(NotALeaf):
        same_prefix(tree, 'a', 'p')


def test_every_expanded_path_is_a_valid_subpath(t1):
    for leaf_id in t1.leaves:
        for path in expand_paths(t1, leaf_id):
            assert is_valid_subpath(t1, path)


def test_exclusivity(t1):
    executor = RandomExecutor(fail_prob=0.3, min_duration=0.5, max_duration=1.5)
    assert check_exclusivity(t1, Subpath('sp1', ('f1', 'f2', 'f8', 'f3'), 't1'), executor, trials=20)
    assert not check_exclusivity(t1, ['f2', 'f5'], RandomExecutor(), trials=1)
