import numpy as np
import pytest

from beeflow.behavior_tree import validate
from beeflow.executors import RandomExecutor
from beeflow.partitioner import partition
from beeflow.paths import check_exclusivity, is_valid_subpath
from beeflow.shapes import SHAPES, bundled_path, random_workflow, shape_workflow
from beeflow.traces import default_profile


@pytest.mark.parametrize('name', sorted(SHAPES))
def test_shapes_are_valid(name):
    tree, profiles = shape_workflow(name, width=3)
    assert validate(tree) == []
    assert set(profiles) == set(tree.leaves)
    assert tree.tags['converted_from'] == 'dag'


def test_io_scale():
    _, small = shape_workflow('vid', 2, io_scale=1.0)
    _, big = shape_workflow('vid', 2, io_scale=4.0)
    assert big['split'].input_bytes == pytest.approx(4 * small['split'].input_bytes)
    assert big['split'].exec_delay_s == small['split'].exec_delay_s


def test_unknown_shape_and_file():
    with pytest.raises(KeyError):
        shape_workflow('nope')
    with pytest.raises(FileNotFoundError):
        bundled_path('missing.json')


def test_random_workflow_ids():
    tree = random_workflow(np.random.default_rng(0), max_nodes=15)
    assert validate(tree) == []
    assert sorted(tree.leaves, key=lambda s: int(s[1:])) == [f"f{i}" for i in range(1, len(tree.leaves) + 1)]


def check_random_partition(seed, trials=5):
    tree = random_workflow(np.random.default_rng(seed), max_nodes=20)
    assert validate(tree) == []
    profiles = {leaf_id: default_profile(leaf_id) for leaf_id in tree.leaves}
    result = partition(tree, profiles, {})
    covered = [leaf_id for sp in result.subpaths for leaf_id in sp.leaves]
    assert sorted(covered) == sorted(tree.leaves)
    executor = RandomExecutor(fail_prob=0.3, min_duration=0.5, max_duration=1.5)
    for sp in result.subpaths:
        assert is_valid_subpath(tree, sp.leaves)
        assert check_exclusivity(tree, sp, executor, trials=trials, rng_seed=seed)


@pytest.mark.parametrize('seed', range(20))
def test_subpath_leaves_never_overlap(seed):
    check_random_partition(seed)


@pytest.mark.slow
@pytest.mark.parametrize('seed', range(20, 200))
def test_subpath_leaves_never_overlap_full(seed):
    check_random_partition(seed, trials=50)
