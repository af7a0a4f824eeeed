import json

import pytest

from beeflow.behavior_tree import TailSpec, decorator, fallback, leaf, load_workflow, parallel, sequence
from beeflow.config import BeeFlowConfig
from beeflow.converters import dag_to_bt, load_dag
from beeflow.paths import same_prefix
from beeflow.shapes import bundled_path, shape_workflow
from beeflow.traces import (FunctionProfile, MissingProfile, ParseError, TimestampOrderViolation, TraceRecord,
                            UnknownLeaf, align, default_profile, dump_traces, estimate, ingest, io_intervals,
                            load_traces, reach_probabilities, subtree_failure_prob)
from conftest import make_tree


def record(leaf_id, request_id='r0', start=0.0, status='success', iteration=0, workflow_id='wf',
           periods=(0.5, 0.25, 1.0, 0.25), nbytes=100):
    t = [start]
    for p in periods:
        t.append(t[-1] + p)
    return TraceRecord(workflow_id, request_id, leaf_id, *t, nbytes, nbytes, status, iteration)


def line(**overrides):
    doc = {'workflow_id': 'wf', 'request_id': 'r0', 'leaf_id': 'a', 't_init_start': 0, 't_input_start': 1,
           't_exec_start': 2, 't_output_start': 3, 't_end': 4, 'input_bytes': 10, 'output_bytes': 5,
           'status': 'success', 'decorator_iteration': 0}
    doc.update(overrides)
    return json.dumps(doc)


def test_ingest_skips_blank_lines():
    store = ingest([line(), '', '  ', line(request_id='r1')])
    assert len(store) == 2
    assert store.requests('wf') == {'r0', 'r1'}


@pytest.mark.parametrize('text, lineno', [
    ('{not json', 2),
    (line(status='meh'), 2),
    (line(t_end='late'), 2),
    (line(input_bytes=-1), 2),
    (line(decorator_iteration=-1), 2),
    ('[1, 2]', 2),
])
def test_parse_errors_carry_line_numbers(text, lineno):
    with pytest.raises(ParseError) as info:
        ingest([line(), text])
    assert info.value.line == lineno


def test_missing_field():
    doc = json.loads(line())
    del doc['leaf_id']
    with pytest.raises(ParseError, match='leaf_id'):
        ingest([json.dumps(doc)])


def test_timestamp_order():
    with pytest.raises(TimestampOrderViolation, match='t_exec_start'):
        ingest([line(t_exec_start=0.5)])


def test_dump_and_load(tmp_path):
    records = [record('a'), record('b', start=2.0, status='failure')]
    path = dump_traces(records, tmp_path / 'x.jsonl.gz')
    assert list(load_traces(path)) == records


def test_estimate_t1(t1, t1_traces_path):
    result = estimate(load_traces(t1_traces_path), t1)
    f1 = result.profiles['f1']
    assert (f1.init_delay_s, f1.input_delay_s, f1.exec_delay_s, f1.output_delay_s) == (0.5, 0.125, 1.0, 0.125)
    assert f1.input_bytes == 1048576
    assert f1.exec_prob == 1.0 and f1.samples == 2
    assert result.profiles['f4'].exec_prob == 0.0
    assert result.loops == {}


def test_estimate_defaults_scaled_by_reach(caplog):
    tree = make_tree(sequence(leaf('a'), fallback(leaf('b'), leaf('c'))))
    store = ingest([line(leaf_id='a'), line(leaf_id='b', status='failure')])
    profiles = estimate(store, tree).profiles
    assert profiles['b'].fail_prob == 1.0
    assert profiles['c'].defaulted
    assert profiles['c'].exec_prob == pytest.approx(1.0)
    assert 'default profiles' in caplog.text


def test_estimate_loops_mean_of_max_iteration():
    tree = make_tree(decorator(sequence(leaf('a'), leaf('b')), TailSpec.retry(5), node_id='d'))
    store = ingest([line(leaf_id='a', decorator_iteration=k) for k in (1, 2, 3)]
                   + [line(leaf_id='a', request_id='r1', decorator_iteration=1)])
    loops = estimate(store, tree).loops
    assert loops['d'].expected_iterations == pytest.approx(2.0)


def test_failure_probabilities():
    tree = make_tree(sequence(leaf('a'), fallback(leaf('b'), leaf('c'))))
    fail = {'a': 0.5, 'b': 0.5, 'c': 0.5}
    assert subtree_failure_prob(tree, tree.root, fail) == pytest.approx(1 - 0.5 * 0.75)
    reach = reach_probabilities(tree, fail)
    assert reach == pytest.approx({'a': 1.0, 'b': 0.5, 'c': 0.25})
    retry = make_tree(decorator(leaf('a'), TailSpec.retry(3)))
    assert subtree_failure_prob(retry, retry.root, {'a': 0.5}) == pytest.approx(0.125)


def test_align_t1(t1, t1_traces_path):
    result = estimate(load_traces(t1_traces_path), t1)
    timeline = align(t1, result.profiles, result.loops)
    assert timeline['f1'].init == (0.0, 0.5)
    assert timeline['f2'].init[0] == timeline['f5'].init[0] == 1.75
    assert timeline['f7'].output == (6.875, 7.0)
    assert timeline['f3'].init[0] == 7.0
    assert timeline['f4'].init == (8.75, 8.75)
    assert timeline.io_periods('f4') == []
    assert timeline.span() == 8.75


def test_align_scales_loops():
    tree = make_tree(decorator(leaf('a'), TailSpec.retry(3), node_id='d'))
    profile = FunctionProfile('a', 1.0, 0.0, 1.0, 0.0, 10.0, 10.0, 1.0)
    from beeflow.traces import LoopProfile
    timeline = align(tree, {'a': profile}, {'d': LoopProfile('d', 2.5)})
    assert timeline.span() == pytest.approx(5.0)
    assert timeline.io_bytes('a') == pytest.approx(50.0)


def test_align_missing_profile():
    with pytest.raises(MissingProfile):
        align(make_tree(sequence(leaf('a'))), {})


def test_unknown_leaf():
    tree = make_tree(sequence(leaf('a')))
    timeline = align(tree, {'a': FunctionProfile('a', 0, 1, 1, 1, 1, 1, 1.0)})
    with pytest.raises(UnknownLeaf):
        timeline['b']


def test_io_intervals_sweep():
    tree = make_tree(parallel(leaf('a'), sequence(leaf('w'), leaf('b'))))
    profiles = {'a': FunctionProfile('a', 0, 2, 0, 0, 1, 0, 1.0),
                'w': FunctionProfile('w', 1, 0, 0, 0, 0, 0, 1.0),
                'b': FunctionProfile('b', 0, 2, 0, 0, 1, 0, 1.0)}
    timeline = align(tree, profiles)
    assert io_intervals(timeline, ['a', 'b']) == [(0.0, 1.0, 1), (1.0, 2.0, 2), (2.0, 3.0, 1)]
    assert io_intervals(timeline, ['w']) == []


def prefix_pairs(tree):
    leaves = sorted(tree.leaves)
    return [(a, b) for i, a in enumerate(leaves) for b in leaves[i + 1:] if same_prefix(tree, a, b)]


@pytest.mark.parametrize('source', ['t1', 'diamond_dag', 'wc'])
def test_leaves_with_the_same_prefix_start_together(source):
    if source == 't1':
        tree = load_workflow(bundled_path('t1.json'))
        profiles = {leaf_id: default_profile(leaf_id) for leaf_id in tree.leaves}
    elif source == 'diamond_dag':
        tree = dag_to_bt(load_dag(bundled_path('diamond_dag.json')))
        profiles = {leaf_id: default_profile(leaf_id) for leaf_id in tree.leaves}
    else:
        tree, profiles = shape_workflow('wc', 3)
    pairs = prefix_pairs(tree)
    assert pairs
    timeline = align(tree, profiles)
    for a, b in pairs:
        assert timeline[a].init[0] == pytest.approx(timeline[b].init[0], abs=1e-12)
