"""
Raw paths, paths, prefixes and subpaths of a behavior tree.

raw_path(node) is the chain of nodes a node must wait for: the elder sibling when the
parent is a sequence or fallback, the parent otherwise. A path expands every composite on
that chain which is not an ancestor of the node into the leaves of one walk through its
subtree. Any order-preserving subset of a path is a subpath, and the leaves of a subpath
can never be active at the same time.
"""
import itertools
import logging as log
from collections import namedtuple

from beeflow.behavior_tree import FALLBACK, SEQUENCE, UnknownNode
from beeflow.interpreter import execute
from beeflow.utils import DomainError, ids_key

DEFAULT_EXPAND_CAP = 4096

Subpath = namedtuple('Subpath', ['subpath_id', 'leaves', 'workflow_id'])


class NotALeaf(DomainError):
    def __init__(self, node_id):
        super().__init__(f"node {node_id!r} is not a leaf")
        self.node_id = node_id


def raw_path(tree, node_id):
    """
    Returns the raw path of a node as a list of NodeIds, root side first.

    Raises:
        UnknownNode
    """
    node = tree.node(node_id)
    chain = []
    while True:
        chain.append(node.node_id)
        parent = tree.parent(node.node_id)
        if parent is None:
            break
        prev = tree.prev_sibling(node.node_id)
        node = prev if prev is not None and parent.kind in (SEQUENCE, FALLBACK) else parent
    chain.reverse()
    return chain


def prefix(tree, node_id):
    raw = raw_path(tree, node_id)
    return raw[:-1] if tree.node(node_id).is_leaf else raw


def _leaf_node_id(tree, leaf_id):
    try:
        return tree.leaves[leaf_id].node_id
    except KeyError:
        raise UnknownNode(leaf_id) from None


def same_prefix(tree, leaf_a, leaf_b):
    """
    True iff two leaves have element-wise identical prefixes. Structural equality only:
    prefixes that merely happen to reduce to the same functions compare unequal.

    Raises:
        UnknownNode, NotALeaf
    """
    ids = []
    for leaf_id in (leaf_a, leaf_b):
        node = tree.leaves.get(leaf_id) or tree.node(leaf_id)
        if not node.is_leaf:
            raise NotALeaf(leaf_id)
        ids.append(node.node_id)
    return prefix(tree, ids[0]) == prefix(tree, ids[1])


def _elements(tree, node_id, top=None):
    """Raw-path members of node_id below `top` (exclusive) that are not its ancestors."""
    raw = raw_path(tree, node_id)
    if top is not None:
        raw = raw[raw.index(top) + 1:]
    ancestors = {a.node_id for a in tree.ancestors(node_id)}
    return [e for e in raw if e not in ancestors]


class _Expander:
    """Memoized expansion of composites into leaf walks, for one tree."""

    def __init__(self, tree, weights=None):
        self.tree = tree
        self.weights = weights or {}
        self._counts = {}
        self._options = {}
        self._best = {}

    def choices_count(self, element):
        node = self.tree.nodes[element]
        if node.is_leaf:
            return 1
        if element not in self._counts:
            total = 0
            for leaf_id in self.tree.leaf_ids(element):
                n = 1
                for e in _elements(self.tree, self.tree.leaves[leaf_id].node_id, element):
                    n *= self.choices_count(e)
                total += n
            self._counts[element] = total
        return self._counts[element]

    def options(self, element):
        node = self.tree.nodes[element]
        if node.is_leaf:
            return [(node.leaf_id,)]
        if element not in self._options:
            found = {}
            for leaf_id in self.tree.leaf_ids(element):
                parts = [self.options(e) for e in _elements(self.tree, self.tree.leaves[leaf_id].node_id, element)]
                for combo in itertools.product(*parts):
                    found.setdefault(_flatten(combo), None)
            self._options[element] = list(found)
        return self._options[element]

    def best(self, element):
        """The single heaviest walk through an element; ties go to the smaller leaf ids."""
        node = self.tree.nodes[element]
        if node.is_leaf:
            return (node.leaf_id,)
        if element not in self._best:
            candidates = []
            for leaf_id in self.tree.leaf_ids(element):
                elements = _elements(self.tree, self.tree.leaves[leaf_id].node_id, element)
                candidates.append(_flatten(self.best(e) for e in elements))
            self._best[element] = min(candidates, key=lambda p: (-self.weight(p), ids_key(p)))
        return self._best[element]

    def weight(self, path):
        return sum(self.weights.get(leaf_id, 1.0) for leaf_id in path)


def _flatten(parts):
    seen = {}
    for part in parts:
        for leaf_id in part:
            seen.setdefault(leaf_id, None)
    return tuple(seen)


def expand_paths(tree, node_id, cap=DEFAULT_EXPAND_CAP, weights=None):
    """
    Enumerates the distinct paths of a node.

    Every composite on the node's raw path that is not one of its ancestors is expanded into
    a walk to any leaf of its subtree, recursively, and the choices are combined. When more
    than `cap` combinations exist, a single greedy path is returned instead: each composite
    takes its walk with the largest total weight (expected I/O), ties to smaller leaf ids.

    Args:
        tree (WorkflowDef)
        node_id (str): Any node of the tree.
        cap (int): Maximum number of paths to enumerate.
        weights (dict, optional): LeafId -> weight for the greedy fallback; 1.0 by default.

    Returns:
        list[list[str]]: Paths as LeafId lists, in raw-path order.

    Raises:
        UnknownNode
    """
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    tree.node(node_id)
    expander = _Expander(tree, weights)
    elements = _elements(tree, node_id)

    total = 1
    for e in elements:
        total *= expander.choices_count(e)
    if total > cap:
        log.warning(f"{tree.workflow_id}: {total} paths to {node_id} exceed cap {cap}, expanding greedily")
        return [list(_flatten(expander.best(e) for e in elements))]

    found = {}
    for combo in itertools.product(*(expander.options(e) for e in elements)):
        found.setdefault(_flatten(combo), None)
    return [list(p) for p in found]


def _embeds(tree, run, top):
    """True iff `run` (leaves inside top's subtree) is an ordered subset of a walk to its last leaf."""
    last_node = tree.leaves[run[-1]].node_id
    elements = _elements(tree, last_node, top)
    rest = run[:-1]
    i = 0
    for e in elements[:-1]:
        node = tree.nodes[e]
        if node.is_leaf:
            if i < len(rest) and rest[i] == node.leaf_id:
                i += 1
            continue
        members = tree.leaf_set(e)
        j = i
        while j < len(rest) and rest[j] in members:
            j += 1
        if j > i:
            if not _embeds(tree, rest[i:j], e):
                return False
            i = j
    return i == len(rest)


def is_valid_subpath(tree, leaves):
    """
    True iff the leaves, in the given order, form an order-preserving subset of some path.

    Raises:
        UnknownNode: If a leaf id is not in the tree.
    """
    leaves = list(leaves)
    for leaf_id in leaves:
        _leaf_node_id(tree, leaf_id)
    if not leaves or len(set(leaves)) != len(leaves):
        return False
    return _embeds(tree, leaves, None)


def check_exclusivity(tree, subpath, executor, trials, rng_seed=0, initial=None, max_steps=10000):
    """
    Runs the tree `trials` times (seeds rng_seed, rng_seed+1, ...) and checks that no two
    leaves of the subpath are ever active at the same logical time.

    Args:
        subpath (Subpath | list[str]): The leaves to check.
        executor (LeafExecutor | ExecutorTable): Should randomize durations.

    Returns:
        bool
    """
    members = set(subpath.leaves if isinstance(subpath, Subpath) else subpath)
    for trial in range(trials):
        result = execute(tree, dict(initial or {}), executor, rng_seed + trial, max_steps=max_steps)
        intervals = sorted((e.start, e.end, e.leaf_id) for e in result.log
                           if not e.skipped and e.leaf_id in members and e.end > e.start)
        busy_until = float('-inf')
        for start, end, leaf_id in intervals:
            if start < busy_until:
                log.info(f"{tree.workflow_id}: leaf {leaf_id} overlaps at t={start} in trial {trial}")
                return False
            busy_until = max(busy_until, end)
    return True
