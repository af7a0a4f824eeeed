import numpy as np
import pytest

from beeflow.behavior_tree import PARALLEL, SEQUENCE, validate
from beeflow.converters import (CyclicInput, DagDef, EmptyDag, FsmDef, InvalidFsm, critical_path_length,
                                dag_from_dict, dag_to_bt, dag_to_dict, fsm_from_dict, fsm_initial_payload, fsm_to_bt,
                                initial_payload_for, load_dag, load_fsm, run_fsm)
from beeflow.executors import FixedExecutor, fsm_table
from beeflow.interpreter import SUCCESS, execute
from beeflow.shapes import bundled_path, random_dag, random_fsm
from beeflow.utils import InputFormatError


def leaf_times(tree):
    result = execute(tree, {}, FixedExecutor(duration=1.0))
    return {e.leaf_id: (e.start, e.end) for e in result.log if not e.skipped}


def test_diamond():
    tree = dag_to_bt(load_dag(bundled_path('diamond_dag.json')))
    assert validate(tree) == []
    assert tree.root.kind == SEQUENCE
    assert [c.kind for c in tree.root.children] == ['leaf', PARALLEL, 'leaf']
    assert list(tree.leaves) == ['a', 'b', 'c', 'd']
    assert tree.tags == {'converted_from': 'dag'}


def test_chain_is_one_flat_sequence():
    tree = dag_to_bt(DagDef(['x', 'y', 'z', 'w'], [('x', 'y'), ('y', 'z'), ('z', 'w')]))
    assert tree.root.kind == SEQUENCE
    assert [c.leaf_id for c in tree.root.children] == ['x', 'y', 'z', 'w']


def test_single_node_and_independent_nodes():
    assert dag_to_bt(DagDef(['solo'], [])).root.is_leaf
    tree = dag_to_bt(DagDef(['b', 'a'], []))
    assert tree.root.kind == PARALLEL
    assert list(tree.leaves) == ['a', 'b']


def test_bad_dags():
    with pytest.raises(CyclicInput):
        dag_to_bt(DagDef(['a', 'b', 'c'], [('a', 'b'), ('b', 'c'), ('c', 'a')]))
    with pytest.raises(EmptyDag):
        dag_to_bt(DagDef([], []))
    for doc in ({'nodes': ['a', 'a']}, {'nodes': ['a'], 'edges': [['a', 'a']]},
                {'nodes': ['a'], 'edges': [['a', 'b']]}, {'nodes': ['a', 'b'], 'edges': [['a', 'b'], ['a', 'b']]},
                {'edges': []}):
        with pytest.raises(InputFormatError):
            dag_from_dict(doc)


def test_dag_functions_are_kept():
    dag = dag_from_dict({'nodes': ['a', 'b'], 'edges': [['a', 'b']],
                         'functions': [{'id': 'a', 'mem_request_bytes': 42}]})
    tree = dag_to_bt(dag)
    assert tree.functions['a'].mem_request_bytes == 42
    assert tree.functions['b'].mem_request_bytes > 0


def test_critical_path_length():
    dag = load_dag(bundled_path('diamond_dag.json'))
    assert critical_path_length(dag) == 3.0
    assert critical_path_length(dag, {'b': 5.0}) == 7.0


@pytest.mark.parametrize('seed', range(100))
def test_random_dags_keep_every_edge(seed):
    dag = random_dag(np.random.default_rng(seed))
    tree = dag_to_bt(dag)
    assert validate(tree) == []
    assert sorted(tree.leaves) == sorted(dag.nodes)
    times = leaf_times(tree)
    for u, v in dag.edges:
        assert times[u][1] <= times[v][0]
    # unit durations and unlimited parallelism: the makespan is the critical path
    assert max(end for _, end in times.values()) == pytest.approx(critical_path_length(dag))


def test_three_state_fsm():
    fsm = load_fsm(bundled_path('three_state_fsm.json'))
    tree = fsm_to_bt(fsm)
    assert validate(tree) == []
    assert tree.tags == {'converted_from': 'fsm', 'initial_state': 'green'}
    assert initial_payload_for(tree) == {'SEL': 'green', 'END': False}
    assert {'guard_red', 'body_red', 'update_red'} <= set(tree.leaves)
    assert tree.leaves['guard_red'].synthetic
    assert not tree.leaves['body_red'].synthetic
    assert tree.function_of('body_green').executor_kind == 'fsm.body'


def test_run_fsm_with_chooser():
    fsm = load_fsm(bundled_path('three_state_fsm.json'))

    def stop_at_red(state, outcomes, rng):
        return 'shutdown' if state == 'red' else 'timer'

    assert run_fsm(fsm, choose=stop_at_red) == ['green', 'yellow', 'red']
    assert len(run_fsm(fsm, choose=lambda s, o, rng: 'timer', max_steps=10)) == 10


def body_states(result):
    return [e.leaf_id[len('body_'):] for e in result.log if not e.skipped and e.leaf_id.startswith('body_')]


@pytest.mark.parametrize('seed', range(10))
def test_converted_fsm_visits_the_same_states(seed):
    fsm = load_fsm(bundled_path('three_state_fsm.json'))
    tree = fsm_to_bt(fsm)
    result = execute(tree, initial_payload_for(tree), fsm_table(), rng_seed=seed, max_steps=5000)
    visited = body_states(result)
    assert visited == run_fsm(fsm, rng_seed=seed, max_steps=len(visited))
    if not result.truncated:
        assert result.payload['END'] is True
        assert run_fsm(fsm, rng_seed=seed, max_steps=len(visited) + 1) == visited


@pytest.mark.parametrize('seed', range(30))
def test_random_fsms_match_reference(seed):
    fsm = random_fsm(np.random.default_rng(seed))
    tree = fsm_to_bt(fsm)
    assert validate(tree) == []
    result = execute(tree, initial_payload_for(tree), fsm_table(), rng_seed=seed, max_steps=2000)
    visited = body_states(result)
    assert visited == run_fsm(fsm, rng_seed=seed, max_steps=len(visited))


def test_nested_machine_runs_inside_its_state():
    fsm = fsm_from_dict({
        'workflow_id': 'outer', 'states': ['work'], 'initial': 'work', 'body': {'work': 'wbody'},
        'transitions': [{'state': 'work', 'outcome': 'done', 'next': 'END'}],
        'children': {'work': [{'fsm_id': 'kid', 'states': ['c0'], 'initial': 'c0', 'body': {'c0': 'kbody'},
                               'transitions': [{'state': 'c0', 'outcome': 'done', 'next': 'END'}]}]}})
    tree = fsm_to_bt(fsm)
    assert validate(tree) == []
    assert 'kid.body_c0' in tree.leaves and 'kid.init' in tree.leaves
    result = execute(tree, initial_payload_for(tree), fsm_table())
    assert result.status == SUCCESS
    assert result.payload['END'] is True
    assert result.payload['END@kid'] is True
    ran = [e.leaf_id for e in result.log if not e.skipped]
    assert ran.index('body_work') < ran.index('kid.body_c0') < ran.index('update_work')


@pytest.mark.parametrize('doc', [
    {'states': [], 'initial': 'a', 'body': {}, 'transitions': []},
    {'states': ['a'], 'initial': 'b', 'body': {'a': 'f'}, 'transitions': [{'state': 'a', 'outcome': 'o', 'next': 'END'}]},
    {'states': ['a'], 'initial': 'a', 'body': {}, 'transitions': [{'state': 'a', 'outcome': 'o', 'next': 'END'}]},
    {'states': ['a'], 'initial': 'a', 'body': {'a': 'f'}, 'transitions': []},
    {'states': ['a'], 'initial': 'a', 'body': {'a': 'f'}, 'transitions': [{'state': 'a', 'outcome': 'o', 'next': 'zz'}]},
    {'states': ['END'], 'initial': 'END', 'body': {'END': 'f'}, 'transitions': [{'state': 'END', 'outcome': 'o', 'next': 'END'}]},
])
def test_invalid_fsms(doc):
    with pytest.raises(InvalidFsm):
        fsm_to_bt(fsm_from_dict(doc))


def test_malformed_fsm_documents():
    with pytest.raises(InputFormatError):
        fsm_from_dict({'states': ['a']})
    with pytest.raises(InvalidFsm):
        fsm_from_dict({'states': ['a'], 'initial': 'a', 'body': {'a': 'f'},
                       'transitions': [{'state': 'a', 'outcome': 'o', 'next': 'END'}] * 2})


def test_initial_payloads():
    fsm = load_fsm(bundled_path('three_state_fsm.json'))
    assert fsm_initial_payload(fsm) == initial_payload_for(fsm_to_bt(fsm))
    assert initial_payload_for(dag_to_bt(load_dag(bundled_path('diamond_dag.json')))) == {}


def test_dag_document():
    dag = load_dag(bundled_path('diamond_dag.json'))
    again = dag_from_dict(dag_to_dict(dag))
    assert list(again.nodes) == ['a', 'b', 'c', 'd']
    assert set(again.edges) == {('a', 'b'), ('a', 'c'), ('b', 'd'), ('c', 'd')}
