"""
Conversion of DAG and state-machine workflows into behavior trees.

DAGs are aligned to their critical path: sources run first as one parallel, then the sinks
of what remains run last, and every weakly connected piece in between is converted the
same way and run in parallel. State machines become a selector structure driven by a SEL
variable in the payload; those trees lose the machine's static structure and are meant for
backward compatibility only.
"""
import logging as log
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from beeflow.behavior_tree import (SEQUENCE, FunctionSpec, TailSpec, WorkflowDef, decorator, fallback,
                                   functions_from_list, leaf, parallel, sequence)
from beeflow.executors import FSM_BODY, FSM_GUARD, FSM_INIT, FSM_UPDATE
from beeflow.utils import DomainError, InputFormatError, natural_key, read_json

END = 'END'
SEL_KEY = 'SEL'
END_KEY = 'END'
OUTCOME_KEY = 'OUTCOME'

# guards, updates and inits are control steps with no schedulable cost
_CONTROL_FUNCTIONS = {
    FSM_GUARD: FunctionSpec(FSM_GUARD, mem_request_bytes=1, cpu_request_cores=0.001, executor_kind=FSM_GUARD),
    FSM_UPDATE: FunctionSpec(FSM_UPDATE, mem_request_bytes=1, cpu_request_cores=0.001, executor_kind=FSM_UPDATE),
    FSM_INIT: FunctionSpec(FSM_INIT, mem_request_bytes=1, cpu_request_cores=0.001, executor_kind=FSM_INIT),
}


class CyclicInput(DomainError):
    def __init__(self, cycle):
        super().__init__(f"graph is not acyclic, cycle: {' -> '.join(str(u) for u, _ in cycle)}")
        self.cycle = cycle

class EmptyDag(DomainError):
    pass

class InvalidFsm(DomainError):
    pass


@dataclass
class DagDef:
    nodes: list
    edges: list
    workflow_id: str = 'dag'
    functions: list = field(default_factory=list)

    def graph(self):
        g = nx.DiGraph()
        g.add_nodes_from(sorted(self.nodes, key=natural_key))
        g.add_edges_from(self.edges)
        return g


def dag_from_dict(doc):
    try:
        nodes = [str(n) for n in doc['nodes']]
        edges = [(str(u), str(v)) for u, v in doc.get('edges', [])]
    except (KeyError, TypeError, ValueError) as e:
        raise InputFormatError(f"malformed DAG document: {e}") from e
    known = set(nodes)
    if len(known) != len(nodes):
        raise InputFormatError("duplicate DAG node")
    if len(set(edges)) != len(edges):
        raise InputFormatError("duplicate DAG edge")
    for u, v in edges:
        if u == v:
            raise InputFormatError(f"self edge on {u}")
        if u not in known or v not in known:
            raise InputFormatError(f"edge ({u}, {v}) references an unknown node")
    functions = functions_from_list(doc.get('functions', []))
    return DagDef(nodes, edges, doc.get('workflow_id', 'dag'), functions)


def dag_to_dict(dag):
    doc = {'workflow_id': dag.workflow_id, 'nodes': list(dag.nodes), 'edges': [list(e) for e in dag.edges]}
    if dag.functions:
        doc['functions'] = [f.to_dict() for f in dag.functions]
    return doc


def load_dag(path):
    return dag_from_dict(read_json(path))


def _flat_sequence(parts):
    children = []
    for part in parts:
        if part.kind == SEQUENCE:
            children.extend(part.children)
        else:
            children.append(part)
    return children[0] if len(children) == 1 else sequence(*children)


def _parallel_of(parts):
    return parts[0] if len(parts) == 1 else parallel(*parts)


def _convert(g):
    sources = sorted((n for n in g if g.in_degree(n) == 0), key=natural_key)
    rest = g.subgraph(n for n in g if n not in set(sources))
    sinks = sorted((n for n in rest if rest.out_degree(n) == 0), key=natural_key)
    middle = rest.subgraph(n for n in rest if n not in set(sinks))

    parts = [_parallel_of([leaf(n) for n in sources])]
    if middle.number_of_nodes():
        components = sorted(nx.weakly_connected_components(middle), key=lambda c: natural_key(min(c, key=natural_key)))
        parts.append(_parallel_of([_convert(middle.subgraph(c)) for c in components]))
    if sinks:
        parts.append(_parallel_of([leaf(n) for n in sinks]))
    return _flat_sequence(parts)


def dag_to_bt(dag):
    """
    Converts an acyclic DAG into a behavior tree whose sequences enforce every edge.

    Raises:
        EmptyDag, CyclicInput
    """
    g = dag.graph()
    if g.number_of_nodes() == 0:
        raise EmptyDag(f"{dag.workflow_id} has no nodes")
    if not nx.is_directed_acyclic_graph(g):
        raise CyclicInput(nx.find_cycle(g))
    root = _convert(g)
    given = {f.function_id: f for f in dag.functions}
    functions = [given.get(n, FunctionSpec(n)) for n in g.nodes]
    tree = WorkflowDef(dag.workflow_id, root, functions, tags={'converted_from': 'dag'})
    log.debug(f"{dag.workflow_id}: converted {g.number_of_nodes()} DAG nodes into {len(tree.nodes)} tree nodes")
    return tree


def critical_path_length(dag, durations=None):
    """Longest weighted source-to-sink path; every node weighs durations.get(node, 1.0)."""
    g = dag.graph()
    if not nx.is_directed_acyclic_graph(g):
        raise CyclicInput(nx.find_cycle(g))
    durations = durations or {}
    finish = {}
    for n in nx.topological_sort(g):
        finish[n] = durations.get(n, 1.0) + max((finish[p] for p in g.predecessors(n)), default=0.0)
    return max(finish.values(), default=0.0)


# ---- state machines ----

@dataclass
class FsmDef:
    """
    Attributes:
        states (list): State ids, in conversion order.
        initial (str): Start state.
        body (dict): State -> FunctionId run while in that state.
        transitions (dict): (state, outcome label) -> next state or END.
        children (dict): State -> child FsmDefs that run in parallel after the state's body.
    """
    states: list
    initial: str
    body: dict
    transitions: dict
    children: dict = field(default_factory=dict)
    fsm_id: str = 'fsm'
    workflow_id: str = 'fsm'
    functions: list = field(default_factory=list)

    def outcomes(self, state):
        return [outcome for (s, outcome) in self.transitions if s == state]

    def validate(self):
        if not self.states:
            raise InvalidFsm(f"{self.fsm_id}: no states")
        if len(set(self.states)) != len(self.states):
            raise InvalidFsm(f"{self.fsm_id}: duplicate state")
        if END in self.states:
            raise InvalidFsm(f"{self.fsm_id}: {END} is reserved for termination")
        if self.initial not in self.states:
            raise InvalidFsm(f"{self.fsm_id}: initial state {self.initial!r} is not a state")
        for state in self.states:
            if state not in self.body:
                raise InvalidFsm(f"{self.fsm_id}: state {state!r} has no body")
            if not self.outcomes(state):
                raise InvalidFsm(f"{self.fsm_id}: state {state!r} has no transitions")
        for (state, outcome), target in self.transitions.items():
            if state not in self.states:
                raise InvalidFsm(f"{self.fsm_id}: transition from unknown state {state!r}")
            if target != END and target not in self.states:
                raise InvalidFsm(f"{self.fsm_id}: transition {state}/{outcome} targets unknown state {target!r}")
        for state, machines in self.children.items():
            if state not in self.states:
                raise InvalidFsm(f"{self.fsm_id}: children attached to unknown state {state!r}")
            for child in machines:
                child.validate()


def fsm_from_dict(doc, fsm_id=None):
    try:
        transitions = {}
        for row in doc['transitions']:
            key = (str(row['state']), str(row['outcome']))
            if key in transitions:
                raise InvalidFsm(f"duplicate transition {key}")
            transitions[key] = str(row['next'])
        children = {state: [fsm_from_dict(c, c.get('fsm_id', f"{state}.{i}")) for i, c in enumerate(machines)]
                    for state, machines in doc.get('children', {}).items()}
        functions = functions_from_list(doc.get('functions', []))
        return FsmDef([str(s) for s in doc['states']], str(doc['initial']),
                      {str(k): str(v) for k, v in doc['body'].items()}, transitions, children,
                      fsm_id or doc.get('fsm_id', 'fsm'), doc.get('workflow_id', 'fsm'), functions)
    except (KeyError, TypeError, AttributeError) as e:
        raise InputFormatError(f"malformed FSM document: {e}") from e


def fsm_to_dict(fsm):
    doc = {'workflow_id': fsm.workflow_id, 'fsm_id': fsm.fsm_id, 'states': list(fsm.states),
           'initial': fsm.initial, 'body': dict(fsm.body),
           'transitions': [{'state': s, 'outcome': o, 'next': t} for (s, o), t in fsm.transitions.items()]}
    if fsm.children:
        doc['children'] = {s: [fsm_to_dict(c) for c in machines] for s, machines in fsm.children.items()}
    if fsm.functions:
        doc['functions'] = [f.to_dict() for f in fsm.functions]
    return doc


def load_fsm(path):
    return fsm_from_dict(read_json(path))


def _keys(fsm_id, nested):
    if not nested:
        return SEL_KEY, END_KEY, OUTCOME_KEY
    return f"{SEL_KEY}@{fsm_id}", f"{END_KEY}@{fsm_id}", f"{OUTCOME_KEY}@{fsm_id}"


def _selector(fsm, functions, nested):
    sel_key, end_key, outcome_key = _keys(fsm.fsm_id, nested)
    prefix = f"{fsm.fsm_id}." if nested else ''
    branches = []
    for state in fsm.states:
        function_id = fsm.body[state]
        functions.setdefault(function_id, FunctionSpec(function_id, executor_kind=FSM_BODY))
        guard = leaf(f"{prefix}guard_{state}", FSM_GUARD, synthetic=True,
                     params={'state': state, 'sel_key': sel_key})
        body = leaf(f"{prefix}body_{state}", function_id,
                    params={'state': state, 'outcomes': fsm.outcomes(state), 'outcome_key': outcome_key})
        machines = fsm.children.get(state, [])
        if machines:
            inner = []
            for child in machines:
                child_sel, child_end, _ = _keys(child.fsm_id, True)
                init = leaf(f"{child.fsm_id}.init", FSM_INIT, synthetic=True,
                            params={'initial': child.initial, 'sel_key': child_sel, 'end_key': child_end})
                inner.append(sequence(init, _selector(child, functions, True)))
            body = sequence(body, parallel(*inner))
        update = leaf(f"{prefix}update_{state}", FSM_UPDATE, synthetic=True,
                      params={'transitions': {o: fsm.transitions[(state, o)] for o in fsm.outcomes(state)},
                              'sel_key': sel_key, 'end_key': end_key, 'outcome_key': outcome_key,
                              'end_marker': END})
        branches.append(sequence(guard, body, update))
    return decorator(fallback(*branches), TailSpec.loop_till_end(end_key))


def fsm_to_bt(fsm):
    """
    Converts a state machine into a selector-structured behavior tree.

    The tree loops until payload[END] is set. Each pass walks a fallback of per-state
    sequences [guard, body, update]: only the guard matching payload[SEL] lets its sequence
    through, the body reports an outcome label and the update moves SEL (or sets END) along
    the transition row. Child machines of a state run in parallel after its body, each with
    its own SEL@id / END@id / OUTCOME@id keys.

    Raises:
        InvalidFsm
    """
    fsm.validate()
    functions = {f.function_id: f for f in fsm.functions}
    functions.update(_CONTROL_FUNCTIONS)
    root = _selector(fsm, functions, False)
    return WorkflowDef(fsm.workflow_id, root, list(functions.values()),
                       tags={'converted_from': 'fsm', 'initial_state': fsm.initial})


def fsm_initial_payload(fsm):
    return {SEL_KEY: fsm.initial, END_KEY: False}


def initial_payload_for(tree):
    """Initial payload a workflow expects: SEL/END for converted state machines, empty otherwise."""
    if tree.tags.get('converted_from') == 'fsm':
        return {SEL_KEY: tree.tags['initial_state'], END_KEY: False}
    return {}


def run_fsm(fsm, rng_seed=0, max_steps=1000, choose=None):
    """
    Reference interpreter: the sequence of states whose body runs, stopping at END or after
    max_steps bodies. Outcomes are drawn uniformly with one rng.integers call per step
    unless `choose(state, outcomes, rng)` is given. Child machines are not run.
    """
    fsm.validate()
    rng = np.random.default_rng(rng_seed)
    state = fsm.initial
    visited = []
    while state != END and len(visited) < max_steps:
        visited.append(state)
        outcomes = fsm.outcomes(state)
        outcome = choose(state, outcomes, rng) if choose else outcomes[int(rng.integers(len(outcomes)))]
        state = fsm.transitions[(state, outcome)]
    return visited
