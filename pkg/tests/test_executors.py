import numpy as np
import pytest

from beeflow.behavior_tree import FunctionSpec, leaf
from beeflow.dataplane import DataStore
from beeflow.executors import (FSM_BODY, LLM_KINDS, FixedExecutor, FsmBodyExecutor, FsmGuardExecutor,
                               FsmInitExecutor, FsmUpdateExecutor, LlmCodegenExecutor, ProfileExecutor,
                               RandomExecutor, ScriptedExecutor, default_table, llm_codegen_table)
from beeflow.interpreter import FAILURE, SUCCESS, execute
from beeflow.shapes import bundled_path
from beeflow.behavior_tree import load_workflow
from beeflow.traces import FunctionProfile


def rng():
    return np.random.default_rng(0)


def test_fixed_and_scripted():
    node = leaf('a', params={'duration': 2.5})
    assert FixedExecutor().invoke(node, None, {}, rng()) == (SUCCESS, {}, 2.5)
    scripted = ScriptedExecutor({'a': ['failure', 'success']})
    assert [scripted.invoke(node, None, {}, rng()).status for _ in range(3)] == [FAILURE, SUCCESS, SUCCESS]
    assert ScriptedExecutor({}).invoke(node, None, {}, rng()).status == SUCCESS


def test_random_executor_bounds():
    executor = RandomExecutor(fail_prob=1.0, min_duration=1.0, max_duration=2.0)
    outcome = executor.invoke(leaf('a'), None, {}, rng())
    assert outcome.status == FAILURE
    assert 1.0 <= outcome.duration <= 2.0


def test_profile_executor():
    profile = FunctionProfile('a', 0.5, 0.25, 1.0, 0.25, 10, 10, 1.0)
    outcome = ProfileExecutor({'a': profile}).invoke(leaf('a'), None, {}, rng())
    assert outcome.status == SUCCESS
    assert outcome.duration == pytest.approx(2.0)


def test_fsm_control_executors():
    guard = leaf('g', params={'state': 's1', 'sel_key': 'SEL'})
    assert FsmGuardExecutor().invoke(guard, None, {'SEL': 's1'}, rng()).status == SUCCESS
    assert FsmGuardExecutor().invoke(guard, None, {'SEL': 's2'}, rng()).status == FAILURE

    update = leaf('u', params={'transitions': {'ok': 's2', 'done': 'END'}})
    assert FsmUpdateExecutor().invoke(update, None, {'OUTCOME': 'ok'}, rng()).updates == {'SEL': 's2', 'END': False}
    assert FsmUpdateExecutor().invoke(update, None, {'OUTCOME': 'done'}, rng()).updates == {'END': True}
    assert FsmUpdateExecutor().invoke(update, None, {'OUTCOME': '??'}, rng()).status == FAILURE

    init = leaf('i', params={'initial': 'c0', 'sel_key': 'SEL@c', 'end_key': 'END@c'})
    assert FsmInitExecutor().invoke(init, None, {}, rng()).updates == {'SEL@c': 'c0', 'END@c': False}


def test_fsm_body_draws_one_integer_per_call():
    node = leaf('b', params={'outcomes': ['x', 'y', 'z']})
    outcome = FsmBodyExecutor().invoke(node, None, {}, np.random.default_rng(5))
    expected = ['x', 'y', 'z'][int(np.random.default_rng(5).integers(3))]
    assert outcome.updates == {'OUTCOME': expected}


def test_llm_generate_puts_program_in_store():
    store = DataStore('n0')
    executor = LlmCodegenExecutor(store)
    outcome = executor.invoke(leaf('g'), FunctionSpec('f1', executor_kind='llm.generate'), {'LLM': 'm'}, rng())
    assert outcome.updates['ATTEMPT'] == 1
    assert store.get(outcome.updates['PROGRAM']).startswith(b'# generated by m')


def test_llm_select_picks_best_score():
    executor = LlmCodegenExecutor(DataStore('n0'))
    payload = {'SCORE_a': 0.2, 'PROGRAM_a': 'n0/0', 'SCORE_b': 0.9, 'PROGRAM_b': 'n0/1'}
    outcome = executor.invoke(leaf('s'), FunctionSpec('f4', executor_kind='llm.select'), payload, rng())
    assert outcome.updates == {'PROGRAM': 'n0/1', 'SELECTED': 'b'}
    empty = executor.invoke(leaf('s'), FunctionSpec('f4', executor_kind='llm.select'), {}, rng())
    assert empty.status == FAILURE


def test_llm_update_context_always_fails():
    executor = LlmCodegenExecutor(DataStore('n0'))
    outcome = executor.invoke(leaf('u'), FunctionSpec('f6', executor_kind='llm.update_context'), {}, rng())
    assert outcome.status == FAILURE
    assert 'CONTEXT' in outcome.updates


def test_llm_unknown_kind():
    with pytest.raises(ValueError):
        LlmCodegenExecutor(DataStore('n0')).invoke(leaf('x'), FunctionSpec('x', executor_kind='llm.dance'), {}, rng())


def test_llm_tree_runs_end_to_end():
    tree = load_workflow(bundled_path('llm_codegen.json'))
    store = DataStore('local')
    result = execute(tree, {}, llm_codegen_table(store, fail_probs={k: 0.0 for k in LLM_KINDS}), rng_seed=1)
    assert result.status == SUCCESS
    assert result.payload['SELECTED'] in ('a', 'b')
    assert store.get(result.payload['PROGRAM'])
    assert 'update_context' not in [e.leaf_id for e in result.log if not e.skipped]


def test_llm_tree_payload_stays_small():
    tree = load_workflow(bundled_path('llm_codegen.json'))
    for seed in range(5):
        result = execute(tree, {}, llm_codegen_table(DataStore('local')), rng_seed=seed, payload_limit=4096)
        assert result.status in (SUCCESS, FAILURE)


def test_default_table():
    table = default_table(DataStore('n0'))
    assert isinstance(table.resolve('mock'), FixedExecutor)
    assert isinstance(table.resolve(FSM_BODY), FsmBodyExecutor)
    assert isinstance(table.resolve('llm.generate'), LlmCodegenExecutor)
    assert default_table().resolve('llm.generate') is not None
