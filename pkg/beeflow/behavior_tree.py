"""
Behavior-tree workflow model: node types, the JSON workflow format and structural validation.

A workflow is a rooted tree. Leaves invoke serverless functions; the four composites
(sequence, fallback, parallel, decorator) define how their subtrees run. Trees are
immutable once built and can be shared read-only between threads.
"""
import dataclasses
from collections import namedtuple
from dataclasses import dataclass, field

from beeflow.utils import DomainError, InputFormatError, natural_key, read_json, write_json

FORMAT_VERSION = 1

LEAF = 'leaf'
SEQUENCE = 'sequence'
FALLBACK = 'fallback'
PARALLEL = 'parallel'
DECORATOR = 'decorator'
NODE_TYPES = (LEAF, SEQUENCE, FALLBACK, PARALLEL, DECORATOR)

_ID_PREFIX = {SEQUENCE: 'seq', FALLBACK: 'fb', PARALLEL: 'par', DECORATOR: 'dec'}


class WorkflowFormatError(InputFormatError):
    pass

class UnknownNode(DomainError):
    def __init__(self, node_id):
        super().__init__(f"unknown node {node_id!r}")
        self.node_id = node_id


@dataclass(frozen=True)
class AggSpec:
    """Aggregate of a parallel composite over the result vector of its children."""
    kind: str = 'all_succeed'
    m: int = None
    name: str = None

    ALL_SUCCEED = 'all_succeed'
    M_OUT_OF_N = 'm_out_of_n'
    NAMED = 'named'

    @classmethod
    def all_succeed(cls):
        return cls(cls.ALL_SUCCEED)

    @classmethod
    def m_out_of_n(cls, m):
        return cls(cls.M_OUT_OF_N, m=m)

    @classmethod
    def named(cls, name):
        return cls(cls.NAMED, name=name)

    def to_dict(self):
        doc = {'kind': self.kind}
        if self.kind == self.M_OUT_OF_N:
            doc['m'] = self.m
        if self.kind == self.NAMED:
            doc['name'] = self.name
        return doc


@dataclass(frozen=True)
class TailSpec:
    """Tail of a decorator: decides after every pass whether to re-enter the child."""
    kind: str = 'once'
    max_n: int = None
    flag_key: str = None
    name: str = None

    ONCE = 'once'
    NEGATE = 'negate'
    RETRY = 'retry'
    LOOP_TILL_END = 'loop_till_end'
    NAMED = 'named'

    @classmethod
    def once(cls):
        return cls(cls.ONCE)

    @classmethod
    def negate(cls):
        return cls(cls.NEGATE)

    @classmethod
    def retry(cls, max_n):
        return cls(cls.RETRY, max_n=max_n)

    @classmethod
    def loop_till_end(cls, flag_key='END'):
        return cls(cls.LOOP_TILL_END, flag_key=flag_key)

    @classmethod
    def named(cls, name):
        return cls(cls.NAMED, name=name)

    def to_dict(self):
        doc = {'kind': self.kind}
        if self.kind == self.RETRY:
            doc['max_n'] = self.max_n
        if self.kind == self.LOOP_TILL_END:
            doc['flag_key'] = self.flag_key
        if self.kind == self.NAMED:
            doc['name'] = self.name
        return doc


@dataclass(frozen=True)
class FunctionSpec:
    function_id: str
    mem_request_bytes: int = 128 * 1024 * 1024
    cpu_request_cores: float = 1.0
    executor_kind: str = 'mock'

    def to_dict(self):
        return {'id': self.function_id, 'mem_request_bytes': self.mem_request_bytes,
                'cpu_request_cores': self.cpu_request_cores, 'executor_kind': self.executor_kind}


@dataclass(frozen=True, eq=False)
class BtNode:
    """
    One node of a behavior tree.

    Attributes:
        node_id (str): Unique within the tree. Leaves default to their leaf_id.
        kind (str): One of NODE_TYPES.
        children (tuple): Ordered children. A decorator has exactly one.
        leaf_id, function_id (str): Set on leaves only.
        agg (AggSpec): Set on parallels only.
        tail (TailSpec): Set on decorators only.
        synthetic (bool): Control-only leaf (FSM guard/update) with no schedulable cost.
        params (dict): Free-form settings handed to the leaf's executor.
    """
    node_id: str
    kind: str
    children: tuple = ()
    leaf_id: str = None
    function_id: str = None
    agg: AggSpec = None
    tail: TailSpec = None
    synthetic: bool = False
    params: dict = field(default_factory=dict)

    @property
    def is_leaf(self):
        return self.kind == LEAF

    @property
    def child(self):
        return self.children[0] if self.children else None

    def __repr__(self):
        if self.is_leaf:
            return f"Leaf({self.leaf_id})"
        return f"{self.kind.capitalize()}({self.node_id})[{', '.join(map(repr, self.children))}]"


def leaf(leaf_id, function_id=None, *, synthetic=False, params=None, node_id=None):
    return BtNode(node_id or leaf_id, LEAF, leaf_id=leaf_id, function_id=function_id or leaf_id,
                  synthetic=synthetic, params=dict(params or {}))

def sequence(*children, node_id=None):
    return BtNode(node_id, SEQUENCE, tuple(children))

def fallback(*children, node_id=None):
    return BtNode(node_id, FALLBACK, tuple(children))

def parallel(*children, agg=None, node_id=None):
    return BtNode(node_id, PARALLEL, tuple(children), agg=agg or AggSpec.all_succeed())

def decorator(child, tail=None, node_id=None):
    return BtNode(node_id, DECORATOR, (child,) if child is not None else (), tail=tail or TailSpec.once())


def _assign_ids(root):
    """Gives every composite built without a node_id a deterministic preorder id."""
    counter = [0]

    def visit(node):
        node_id = node.node_id
        if node_id is None:
            node_id = f"{_ID_PREFIX.get(node.kind, node.kind)}{counter[0]}"
        counter[0] += 1
        children = tuple(visit(c) for c in node.children)
        if node_id == node.node_id and all(a is b for a, b in zip(children, node.children)):
            return node
        return dataclasses.replace(node, node_id=node_id, children=children)

    return visit(root)


class WorkflowDef:
    """
    A workflow: the tree plus its function table and lookup indexes.

    Attributes:
        workflow_id (str)
        root (BtNode)
        functions (dict): FunctionId -> FunctionSpec.
        leaves (dict): LeafId -> leaf BtNode, in depth-first order.
        nodes (dict): NodeId -> BtNode.
        tags (dict): Free-form annotations, e.g. converted_from.
    """

    def __init__(self, workflow_id, root, functions=(), tags=None):
        self.workflow_id = workflow_id
        self.root = _assign_ids(root)
        if isinstance(functions, dict):
            functions = functions.values()
        self.functions = {f.function_id: f for f in sorted(functions, key=lambda f: natural_key(f.function_id))}
        self.tags = dict(tags or {})

        self.nodes = {}
        self.leaves = {}
        self._parent = {}
        self._index_in_parent = {}
        stack = [(self.root, None, 0)]
        while stack:
            node, parent, position = stack.pop()
            if node.node_id in self.nodes:
                continue
            self.nodes[node.node_id] = node
            self._parent[node.node_id] = parent
            self._index_in_parent[node.node_id] = position
            if node.is_leaf and node.leaf_id not in self.leaves:
                self.leaves[node.leaf_id] = node
            for i in reversed(range(len(node.children))):
                stack.append((node.children[i], node, i))
        self._leaf_sets = {}

    def __repr__(self):
        return f"WorkflowDef({self.workflow_id!r}, {self.root!r})"

    def node(self, node_id):
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def parent(self, node_id):
        self.node(node_id)
        return self._parent[node_id]

    def prev_sibling(self, node_id):
        parent = self.parent(node_id)
        position = self._index_in_parent[node_id]
        if parent is None or position == 0:
            return None
        return parent.children[position - 1]

    def ancestors(self, node_id):
        """Ancestors of a node, nearest first."""
        chain = []
        parent = self.parent(node_id)
        while parent is not None:
            chain.append(parent)
            parent = self._parent[parent.node_id]
        return chain

    def is_ancestor(self, candidate_id, node_id):
        return any(a.node_id == candidate_id for a in self.ancestors(node_id))

    def leaf_ids(self, node_id=None):
        """Leaf ids of a subtree in depth-first order."""
        start = self.root if node_id is None else self.node(node_id)
        found = []
        stack = [start]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                found.append(node.leaf_id)
            stack.extend(reversed(node.children))
        return found

    def leaf_set(self, node_id):
        if node_id not in self._leaf_sets:
            self._leaf_sets[node_id] = frozenset(self.leaf_ids(node_id))
        return self._leaf_sets[node_id]

    def leaf_rank(self):
        """LeafId -> position in natural id order."""
        return {leaf_id: i for i, leaf_id in enumerate(sorted(self.leaves, key=natural_key))}

    def scheduled_leaves(self):
        return [leaf_id for leaf_id, node in self.leaves.items() if not node.synthetic]

    def function_of(self, leaf_id):
        return self.functions[self.leaves[leaf_id].function_id]


Violation = namedtuple('Violation', ['node_id', 'code', 'message'])


def validate(tree):
    """
    Lists every structural problem of a workflow.

    Args:
        tree (WorkflowDef): The workflow to check.

    Returns:
        list[Violation]: Empty for a valid tree. Violations are reported in depth-first order.
    """
    violations = []
    seen_nodes, seen_leaves = set(), set()

    for spec in tree.functions.values():
        if not spec.mem_request_bytes or spec.mem_request_bytes <= 0:
            violations.append(Violation(spec.function_id, 'function_request',
                                        f"function {spec.function_id} needs mem_request_bytes > 0"))
        if not spec.cpu_request_cores or spec.cpu_request_cores <= 0:
            violations.append(Violation(spec.function_id, 'function_request',
                                        f"function {spec.function_id} needs cpu_request_cores > 0"))

    stack = [tree.root]
    while stack:
        node = stack.pop()
        stack.extend(reversed(node.children))
        nid = node.node_id
        if nid in seen_nodes:
            violations.append(Violation(nid, 'duplicate_node', f"node id {nid} used more than once"))
        seen_nodes.add(nid)

        if node.kind not in NODE_TYPES:
            violations.append(Violation(nid, 'node_type', f"unknown node type {node.kind!r}"))
            continue

        if node.is_leaf:
            if not node.leaf_id:
                violations.append(Violation(nid, 'leaf_id', "leaf without leaf_id"))
            elif node.leaf_id in seen_leaves:
                violations.append(Violation(nid, 'duplicate_leaf', f"leaf id {node.leaf_id} used more than once"))
            seen_leaves.add(node.leaf_id)
            if node.function_id not in tree.functions:
                violations.append(Violation(nid, 'dangling_function',
                                            f"leaf {node.leaf_id} refers to unknown function {node.function_id!r}"))
            if node.children:
                violations.append(Violation(nid, 'leaf_children', "leaf with children"))
            continue

        if node.kind == DECORATOR:
            if len(node.children) != 1:
                violations.append(Violation(nid, 'decorator_arity',
                                            f"decorator needs exactly one child, has {len(node.children)}"))
            violations.extend(_check_tail(nid, node.tail))
        elif not node.children:
            violations.append(Violation(nid, 'empty_composite', f"{node.kind} without children"))

        if node.kind == PARALLEL:
            violations.extend(_check_agg(nid, node.agg, len(node.children)))

    return violations


def _check_agg(nid, agg, n):
    if agg is None or agg.kind == AggSpec.ALL_SUCCEED:
        return []
    if agg.kind == AggSpec.M_OUT_OF_N:
        if not isinstance(agg.m, int) or agg.m < 1:
            return [Violation(nid, 'agg_m', f"m_out_of_n needs m >= 1, got {agg.m}")]
        if agg.m > n:
            return [Violation(nid, 'agg_m', f"m_out_of_n m={agg.m} exceeds {n} children")]
        return []
    if agg.kind == AggSpec.NAMED:
        return [] if agg.name else [Violation(nid, 'agg_name', "named agg without a name")]
    return [Violation(nid, 'agg_kind', f"unknown agg kind {agg.kind!r}")]


def _check_tail(nid, tail):
    if tail is None or tail.kind in (TailSpec.ONCE, TailSpec.NEGATE):
        return []
    if tail.kind == TailSpec.RETRY:
        if not isinstance(tail.max_n, int) or tail.max_n < 1:
            return [Violation(nid, 'tail_retry', f"retry needs max_n >= 1, got {tail.max_n}")]
        return []
    if tail.kind == TailSpec.LOOP_TILL_END:
        return [] if tail.flag_key else [Violation(nid, 'tail_flag', "loop_till_end needs a flag_key")]
    if tail.kind == TailSpec.NAMED:
        return [] if tail.name else [Violation(nid, 'tail_name', "named tail without a name")]
    return [Violation(nid, 'tail_kind', f"unknown tail kind {tail.kind!r}")]


# ---- JSON workflow format ----

def _require(doc, key, where):
    if not isinstance(doc, dict) or key not in doc:
        raise WorkflowFormatError(f"{where}: missing field {key!r}")
    return doc[key]


def _node_from_dict(doc, where):
    kind = _require(doc, 'type', where)
    if kind not in NODE_TYPES:
        raise WorkflowFormatError(f"{where}: unknown node type {kind!r}")
    node_id = doc.get('id')

    if kind == LEAF:
        leaf_id = _require(doc, 'leaf_id', where)
        return BtNode(node_id or leaf_id, LEAF, leaf_id=leaf_id,
                      function_id=doc.get('function_id', leaf_id),
                      synthetic=bool(doc.get('synthetic', False)),
                      params=dict(doc.get('params') or {}))

    if kind == DECORATOR:
        if 'child' in doc:
            raw_children = [] if doc['child'] is None else [doc['child']]
        else:
            raw_children = doc.get('children', [])
    else:
        raw_children = _require(doc, 'children', where)
    if not isinstance(raw_children, list):
        raise WorkflowFormatError(f"{where}: children must be a list")
    children = tuple(_node_from_dict(c, f"{where}/{i}") for i, c in enumerate(raw_children))

    agg = tail = None
    if kind == PARALLEL:
        raw = doc.get('agg', {'kind': AggSpec.ALL_SUCCEED})
        agg = AggSpec(_require(raw, 'kind', f"{where}.agg"), m=raw.get('m'), name=raw.get('name'))
    if kind == DECORATOR:
        raw = doc.get('tail', {'kind': TailSpec.ONCE})
        tail = TailSpec(_require(raw, 'kind', f"{where}.tail"), max_n=raw.get('max_n'),
                        flag_key=raw.get('flag_key'), name=raw.get('name'))
    return BtNode(node_id, kind, children, agg=agg, tail=tail)


def _node_to_dict(node):
    if node.is_leaf:
        doc = {'type': LEAF, 'leaf_id': node.leaf_id, 'function_id': node.function_id}
        if node.node_id != node.leaf_id:
            doc['id'] = node.node_id
        if node.synthetic:
            doc['synthetic'] = True
        if node.params:
            doc['params'] = node.params
        return doc
    doc = {'type': node.kind, 'id': node.node_id}
    if node.kind == DECORATOR:
        doc['child'] = _node_to_dict(node.child) if node.children else None
        doc['tail'] = node.tail.to_dict()
    else:
        doc['children'] = [_node_to_dict(c) for c in node.children]
    if node.kind == PARALLEL:
        doc['agg'] = node.agg.to_dict()
    return doc


def functions_from_list(raw_functions):
    functions = []
    for i, raw in enumerate(raw_functions):
        where = f"functions[{i}]"
        functions.append(FunctionSpec(_require(raw, 'id', where),
                                      mem_request_bytes=raw.get('mem_request_bytes', FunctionSpec.mem_request_bytes),
                                      cpu_request_cores=raw.get('cpu_request_cores', FunctionSpec.cpu_request_cores),
                                      executor_kind=raw.get('executor_kind', FunctionSpec.executor_kind)))
    return functions


def workflow_from_dict(doc):
    """
    Builds a workflow from its JSON document.

    Raises:
        WorkflowFormatError: On a wrong format version or a missing/ill-typed field.
    """
    if not isinstance(doc, dict):
        raise WorkflowFormatError("workflow document must be a JSON object")
    version = doc.get('format', FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise WorkflowFormatError(f"unsupported workflow format {version!r}")
    functions = functions_from_list(doc.get('functions', []))
    root = _node_from_dict(_require(doc, 'root', 'workflow'), 'root')
    return WorkflowDef(_require(doc, 'workflow_id', 'workflow'), root, functions, tags=doc.get('tags'))


def workflow_to_dict(tree):
    doc = {'format': FORMAT_VERSION, 'workflow_id': tree.workflow_id,
           'functions': [f.to_dict() for f in tree.functions.values()],
           'root': _node_to_dict(tree.root)}
    if tree.tags:
        doc['tags'] = tree.tags
    return doc


def load_workflow(path):
    return workflow_from_dict(read_json(path))


def dump_workflow(tree, path):
    return write_json(workflow_to_dict(tree), path)
