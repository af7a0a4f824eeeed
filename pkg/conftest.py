import pytest

from beeflow.behavior_tree import FunctionSpec, WorkflowDef, fallback, leaf, load_workflow, parallel, sequence
from beeflow.shapes import bundled_path


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full-size property runs, deselect with -m "not slow"')


def make_tree(root, workflow_id='wf'):
    """WorkflowDef with a default FunctionSpec for every leaf of root."""
    ids = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            ids.append(node.function_id)
        stack.extend(node.children)
    return WorkflowDef(workflow_id, root, [FunctionSpec(f) for f in sorted(set(ids))])


@pytest.fixture
def t1():
    return load_workflow(bundled_path('t1.json'))


@pytest.fixture
def t1_traces_path():
    return bundled_path('t1_traces.jsonl')


@pytest.fixture
def small_tree():
    return make_tree(sequence(leaf('a'), fallback(leaf('b'), leaf('c'), node_id='fb'),
                              parallel(leaf('d'), leaf('e'), node_id='par'), node_id='root'))
