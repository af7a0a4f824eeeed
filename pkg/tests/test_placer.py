import numpy as np
import pytest

from beeflow.partitioner import partition
from beeflow.paths import Subpath
from beeflow.placer import (PLACERS, ClusterFormatError, ClusterSpec, NodeSpec, NoFeasibleNode, PlacementPlan,
                            dump_plan, get_placer, leaf_functions, load_cluster, load_plan, peak_cpu, penalty,
                            placement_order, sort_key, try_place)
from beeflow.shapes import bundled_path, random_workflow
from beeflow.traces import FunctionProfile, align, estimate, load_traces


@pytest.fixture
def t1_setup(t1, t1_traces_path):
    estimated = estimate(load_traces(t1_traces_path), t1)
    result = partition(t1, estimated.profiles, estimated.loops)
    timelines = {'t1': align(t1, estimated.profiles, estimated.loops)}
    return [result], timelines, leaf_functions({'t1': t1})


def test_bundled_clusters():
    cluster = load_cluster(bundled_path('cluster_edge3.json'))
    assert cluster.node_ids == ['n0', 'n1', 'n2']
    assert ClusterSpec.from_dict(cluster.to_dict()) == cluster
    assert load_cluster(bundled_path('cluster_single.json')).node('n0').cpu_cores == 8.0


@pytest.mark.parametrize('doc', [
    {'nodes': []},
    {'nodes': [{'node_id': 'a', 'cpu_cores': 1, 'mem_bytes': 1, 'io_bw_Bps': 1}] * 2},
    {'nodes': [{'node_id': 'a', 'cpu_cores': 0, 'mem_bytes': 1, 'io_bw_Bps': 1}]},
    {'nodes': [{'node_id': 'a'}]},
])
def test_bad_clusters(doc):
    with pytest.raises(ClusterFormatError):
        ClusterSpec.from_dict(doc)


def test_penalty_counts_degree_squared(t1_setup):
    _, timelines, _ = t1_setup
    assert penalty({'t1': ['f1', 'f2', 'f8', 'f3']}, timelines) == pytest.approx(1.0)
    assert penalty({'t1': ['f5', 'f6', 'f7']}, timelines) == pytest.approx(0.75)
    # f2/f5 and f8/f6 move data at the same time: 4 intervals of 0.125 s at degree 2
    assert penalty({'t1': ['f1', 'f2', 'f8', 'f3', 'f5', 'f6', 'f7']}, timelines) == pytest.approx(2.75)
    assert penalty({'t1': ['f4']}, timelines) == 0.0
    assert penalty({}, timelines) == 0.0


def test_peak_cpu():
    assert peak_cpu([(0, 2, 1.0), (1, 3, 2.0), (3, 4, 4.0)]) == 4.0
    assert peak_cpu([(0, 2, 1.0), (1, 3, 2.0)]) == 3.0
    assert peak_cpu([(1, 1, 9.0)]) == 0.0


def test_placement_order(t1_setup):
    partitions, timelines, _ = t1_setup
    assert [sp.subpath_id for sp in placement_order(partitions, timelines)] == ['t1/sp1', 't1/sp2', 't1/sp3']


def test_contention_aware_t1(t1_setup):
    partitions, timelines, functions = t1_setup
    cluster = load_cluster(bundled_path('cluster_edge3.json'))
    plan = get_placer('contention-aware').place(partitions, timelines, cluster, functions)
    assert plan.assignments == {'t1/sp1': 'n0', 't1/sp2': 'n1', 't1/sp3': 'n2'}
    assert plan.per_node_cost == pytest.approx({'n0': 1.0, 'n1': 0.75, 'n2': 0.0})
    assert plan.total_cost == pytest.approx(1.75)
    assert plan.max_node_cost() == pytest.approx(1.0)


def test_colocate_all_pays_the_contention(t1_setup):
    partitions, timelines, functions = t1_setup
    cluster = load_cluster(bundled_path('cluster_edge3.json'))
    plan = get_placer('colocate-all').place(partitions, timelines, cluster, functions)
    assert set(plan.assignments.values()) == {'n0'}
    assert plan.total_cost == pytest.approx(2.75)


@pytest.mark.parametrize('name', sorted(PLACERS))
def test_every_placer_assigns_every_subpath(t1_setup, name):
    partitions, timelines, functions = t1_setup
    cluster = ClusterSpec.uniform(2)
    plan = get_placer(name, seed=4).place(partitions, timelines, cluster, functions)
    assert sorted(plan.assignments) == ['t1/sp1', 't1/sp2', 't1/sp3']
    assert set(plan.assignments.values()) <= {'n0', 'n1'}
    assert plan.total_cost == pytest.approx(sum(plan.per_node_cost.values()))


def test_random_placer_is_seeded(t1_setup):
    partitions, timelines, functions = t1_setup
    cluster = ClusterSpec.uniform(3)
    a = get_placer('random', seed=9).place(partitions, timelines, cluster, functions)
    b = get_placer('random', seed=9).place(partitions, timelines, cluster, functions)
    assert a.assignments == b.assignments


def test_cpu_feasibility(t1_setup):
    partitions, timelines, functions = t1_setup
    one_core = ClusterSpec((NodeSpec('n0', 1.0, 4 * 1024 ** 3, 125e6),))
    sp1, sp2, _ = partitions[0].subpaths
    loads = {'n0': {'t1': list(sp1.leaves)}}
    # f2 and f5 execute at the same time and each asks for a whole core
    assert not try_place('n0', sp2, loads, one_core, functions, timelines)
    assert try_place('n0', sp2, {'n0': {}}, one_core, functions, timelines)
    with pytest.raises(NoFeasibleNode):
        get_placer('contention-aware').place(partitions, timelines, one_core, functions)


def test_memory_feasibility(t1_setup):
    partitions, timelines, functions = t1_setup
    tiny = ClusterSpec((NodeSpec('n0', 8.0, 64 * 1024 * 1024, 125e6),))
    for name in PLACERS:
        with pytest.raises(NoFeasibleNode):
            get_placer(name).place(partitions, timelines, tiny, functions)


def test_unknown_placer():
    with pytest.raises(ValueError):
        get_placer('best-effort')


def test_plan_round_trip(tmp_path):
    plan = PlacementPlan({'w/sp1': 'n1', 'w/sp2': 'n0'}, {'n0': 1.5, 'n1': 0.0}, 1.5)
    again = load_plan(dump_plan(plan, tmp_path / 'plan.json'))
    assert again.assignments == plan.assignments
    assert again.total_cost == 1.5


def test_sort_key_weights_overlap_by_degree(t1_setup):
    partitions, timelines, _ = t1_setup
    sp1, sp2, sp3 = partitions[0].subpaths
    assert sort_key(sp1, timelines['t1']) == pytest.approx(0.5)
    assert sort_key(sp2, timelines['t1']) == pytest.approx(0.5)
    assert sort_key(sp3, timelines['t1']) == 0.0


def random_timeline(seed):
    rng = np.random.default_rng(seed)
    tree = random_workflow(rng, max_nodes=25)
    profiles = {leaf_id: FunctionProfile(leaf_id, rng.uniform(0.0, 0.5), rng.uniform(0.05, 0.5),
                                         rng.uniform(0.1, 2.0), rng.uniform(0.05, 0.5), 1e6, 1e6, 1.0)
                for leaf_id in tree.leaves}
    return rng, tree, align(tree, profiles)


def swept_penalty(timeline, leaves, eps=1e-3):
    """The same cost measured by sampling the degree every eps seconds."""
    periods = [p for leaf_id in leaves for p in timeline.io_periods(leaf_id)]
    if not periods:
        return 0.0
    t = np.arange(0.0, timeline.span(), eps) + eps / 2
    degree = sum(((t >= s) & (t < e)).astype(int) for s, e in periods)
    return float(eps * np.sum(degree ** 2))


def check_penalty_against_sweep(seed):
    rng, tree, timeline = random_timeline(seed)
    leaves = [leaf_id for leaf_id in tree.leaves if rng.random() < 0.7] or list(tree.leaves)
    exact = penalty({tree.workflow_id: leaves}, {tree.workflow_id: timeline})
    assert exact == pytest.approx(swept_penalty(timeline, leaves), rel=1e-2, abs=1e-2)


@pytest.mark.parametrize('seed', range(50))
def test_penalty_matches_a_sweep(seed):
    check_penalty_against_sweep(seed)


@pytest.mark.slow
@pytest.mark.parametrize('seed', range(50, 1000))
def test_penalty_matches_a_sweep_full(seed):
    check_penalty_against_sweep(seed)


@pytest.mark.parametrize('seed', range(50))
def test_colocating_never_costs_less_than_splitting(seed):
    rng, tree, timeline = random_timeline(seed)
    leaves = list(tree.leaves)
    in_a = rng.random(len(leaves)) < 0.5
    a = [leaf_id for leaf_id, flag in zip(leaves, in_a) if flag]
    b = [leaf_id for leaf_id, flag in zip(leaves, in_a) if not flag]
    timelines = {tree.workflow_id: timeline}
    together = penalty({tree.workflow_id: leaves}, timelines)
    apart = penalty({tree.workflow_id: a}, timelines) + penalty({tree.workflow_id: b}, timelines)
    assert together >= apart - 1e-9
