"""
Iterative-removal partitioning of a workflow into subpaths.

Each phase lays the remaining tree out on the expected-case clock, enumerates the paths of
the remaining leaves, promotes the best one under the active policy as the next subpath and
removes its leaves. Removing leaves never reorders the rest, so every subpath stays a
subpath of the original tree.
"""
import dataclasses
import logging as log
from dataclasses import dataclass

import numpy as np

from beeflow.behavior_tree import WorkflowDef
from beeflow.config import BeeFlowConfig
from beeflow.paths import Subpath, expand_paths, is_valid_subpath
from beeflow.traces import UnknownLeaf, align, io_intervals
from beeflow.utils import DomainError, natural_key, overlap_length, read_json, write_json


class EmptyTree(DomainError):
    pass

class PolicyNotRegistered(DomainError):
    def __init__(self, name):
        super().__init__(f"partition policy {name!r} is not registered")
        self.name = name


@dataclass
class PartitionContext:
    """What a policy may look at while scoring the candidates of one phase."""
    timeline: object
    residual_leaves: list
    rank: dict
    profiles: dict = None
    functions: dict = None
    _peak: list = None

    @property
    def peak_intervals(self):
        # 只有真正发生争用（度数 >= 2）时才有“峰值”区间
        if self._peak is None:
            intervals = io_intervals(self.timeline, self.residual_leaves)
            top = max((iv.degree for iv in intervals), default=0)
            self._peak = [iv for iv in intervals if iv.degree == top] if top >= 2 else []
        return self._peak

    def exec_prob(self, leaf_id):
        if self.profiles and leaf_id in self.profiles:
            return self.profiles[leaf_id].exec_prob
        entry = self.timeline[leaf_id]
        return 1.0 if entry.output[1] > entry.init[0] else 0.0

    def order_key(self, leaf_ids):
        """Larger for lexicographically smaller id sequences; a prefix beats its extensions."""
        return tuple(-self.rank[leaf_id] for leaf_id in leaf_ids) + (1,)


class PartitionPolicy:
    def __init__(self, name):
        self.name = name

    def score(self, candidate, context) -> tuple:
        """
        Scores a candidate path; the largest score is promoted.
        Scores of different candidates must differ, the final element is usually
        context.order_key(candidate).
        """
        raise NotImplementedError


class IoContentionAwarePolicy(PartitionPolicy):
    """
    Promotes the path that covers the most of the peak-contention I/O, then the one
    carrying the most expected I/O bytes.

    Score, compared left to right:
        peak overlap: seconds of the candidate's I/O inside the maximum-degree intervals.
        contention core: the ids of the candidate leaves that touch those intervals; among
            disjoint groups covering the same peak, the group of smaller ids goes first.
        expected I/O bytes.
        leaves the model says never run (exec_prob 0) count against the candidate.
        length, then id order.

    The contention-core and idle terms extend a plain peak-overlap-then-bytes score. They are
    the tie-break that gives T1 the partition [f1 f2 f8 f3], [f5 f6 f7], [f4]. Without them
    the T1 candidates tie and fall through to length, which promotes [f1 f5 f6 f7 f3 f4]
    first and leaves [f2 f8].
    """

    def score(self, candidate, context):
        peak = context.peak_intervals
        overlaps = []
        for leaf_id in candidate:
            overlaps.append(sum(overlap_length(s, e, iv.start, iv.end)
                                for s, e in context.timeline.io_periods(leaf_id) for iv in peak))
        core = sorted(context.rank[leaf_id] for leaf_id, ov in zip(candidate, overlaps) if ov > 0)
        io_bytes = sum(context.timeline.io_bytes(leaf_id) for leaf_id in candidate)
        idle = sum(1 for leaf_id in candidate if context.exec_prob(leaf_id) <= 0)
        return (round(sum(overlaps), 9), tuple(-r for r in core) + (1,), round(io_bytes, 6),
                -idle, len(candidate), context.order_key(candidate))


class LongestPathPolicy(PartitionPolicy):
    def score(self, candidate, context):
        smallest = min(context.rank[leaf_id] for leaf_id in candidate)
        return (len(candidate), -smallest, context.order_key(candidate))


class ResourceSimilarityPolicy(PartitionPolicy):
    """Among equally long paths, promotes the one whose functions request the most similar memory."""

    def score(self, candidate, context):
        if context.functions:
            requests = np.array([context.functions[leaf_id].mem_request_bytes for leaf_id in candidate], dtype=float)
            spread = float(requests.std() / requests.mean()) if requests.mean() > 0 else 0.0
        else:
            spread = 0.0
        return (len(candidate), -round(spread, 9), context.order_key(candidate))


class LowNondeterminismPolicy(PartitionPolicy):
    """Promotes paths whose least likely leaf is still likely to run, then longer ones."""

    def score(self, candidate, context):
        certainty = min(context.exec_prob(leaf_id) for leaf_id in candidate)
        return (round(certainty, 9), len(candidate), context.order_key(candidate))


POLICIES = {
    'io-contention': IoContentionAwarePolicy,
    'longest-path': LongestPathPolicy,
    'resource-similarity': ResourceSimilarityPolicy,
    'low-nondeterminism': LowNondeterminismPolicy,
}

def register_policy(name):
    def wrap(cls):
        POLICIES[name] = cls
        return cls
    return wrap


def get_policy(policy):
    if isinstance(policy, PartitionPolicy):
        return policy
    if policy not in POLICIES:
        raise PolicyNotRegistered(policy)
    return POLICIES[policy](policy)


def score_candidate(candidate, timeline, policy, residual_leaves=None, profiles=None, rank=None, functions=None):
    """
    Scores one candidate path against an expected timeline.

    Args:
        candidate (list[str]): Leaf ids in path order.
        timeline (ExpectedTimeline): Timeline of the (residual) tree.
        policy (str | PartitionPolicy)
        residual_leaves (list[str], optional): Leaves whose I/O defines the peak; all timeline leaves by default.
        profiles (dict, optional): Profiles, for exec_prob.
        rank (dict, optional): LeafId -> rank for tie-breaks; natural id order by default.

    Raises:
        UnknownLeaf, PolicyNotRegistered
    """
    for leaf_id in candidate:
        if leaf_id not in timeline:
            raise UnknownLeaf(leaf_id)
    leaves = list(residual_leaves if residual_leaves is not None else timeline.leaves())
    if rank is None:
        rank = {leaf_id: i for i, leaf_id in enumerate(sorted(timeline.leaves(), key=natural_key))}
    context = PartitionContext(timeline, leaves, rank, profiles, functions)
    return get_policy(policy).score(list(candidate), context)


def residual_tree(tree, removed):
    """
    The tree without the `removed` leaves. Composites left without children go too,
    recursively. Returns None when nothing remains.
    """
    removed = set(removed)

    def prune(node):
        if node.is_leaf:
            return None if node.leaf_id in removed else node
        kept = [k for k in (prune(c) for c in node.children) if k is not None]
        if not kept:
            return None
        if len(kept) == len(node.children) and all(a is b for a, b in zip(kept, node.children)):
            return node
        return dataclasses.replace(node, children=tuple(kept))

    root = prune(tree.root)
    if root is None:
        return None
    return WorkflowDef(tree.workflow_id, root, tree.functions, tags=tree.tags)


@dataclass(frozen=True)
class PartitionResult:
    workflow_id: str
    subpaths: tuple
    residual_phases: int

    def to_dict(self):
        return {'workflow_id': self.workflow_id,
                'subpaths': [{'subpath_id': sp.subpath_id, 'leaves': list(sp.leaves)} for sp in self.subpaths]}

    @classmethod
    def from_dict(cls, doc):
        subpaths = tuple(Subpath(sp['subpath_id'], tuple(sp['leaves']), doc['workflow_id'])
                         for sp in doc['subpaths'])
        return cls(doc['workflow_id'], subpaths, doc.get('residual_phases', len(subpaths)))

    def leaf_owner(self):
        return {leaf_id: sp.subpath_id for sp in self.subpaths for leaf_id in sp.leaves}


def load_partition(path):
    return PartitionResult.from_dict(read_json(path))


def dump_partition(result, path):
    return write_json(result.to_dict(), path)


def _anchor(tree, leaf_id, synthetic):
    """Nearest schedulable leaf of a synthetic one: later siblings first, then earlier, then one level up."""
    node = tree.leaves[leaf_id]
    while True:
        parent = tree.parent(node.node_id)
        if parent is None:
            return None
        position = next(i for i, c in enumerate(parent.children) if c is node)
        for sibling in parent.children[position + 1:]:
            for candidate in tree.leaf_ids(sibling.node_id):
                if candidate not in synthetic:
                    return candidate
        for sibling in reversed(parent.children[:position]):
            for candidate in reversed(tree.leaf_ids(sibling.node_id)):
                if candidate not in synthetic:
                    return candidate
        node = parent


def _attach_synthetic(tree, subpaths, synthetic):
    subpaths = [list(sp.leaves) for sp in subpaths]
    orphans = []
    for leaf_id in tree.leaf_ids():
        if leaf_id not in synthetic:
            continue
        anchor = _anchor(tree, leaf_id, synthetic)
        home = next((sp for sp in subpaths if anchor in sp), None)
        placed = False
        if home is not None:
            at = home.index(anchor)
            for position in [at, at + 1, *range(len(home) + 1)]:
                trial = home[:position] + [leaf_id] + home[position:]
                if is_valid_subpath(tree, trial):
                    home[:] = trial
                    placed = True
                    break
        if not placed:
            log.warning(f"{tree.workflow_id}: synthetic leaf {leaf_id} kept in a subpath of its own")
            orphans.append([leaf_id])
    return subpaths + orphans


def partition(tree, profiles, loops, policy='io-contention', config=None):
    """
    Partitions a workflow into subpaths.

    Args:
        tree (WorkflowDef): A valid workflow.
        profiles (dict): LeafId -> FunctionProfile (see traces.estimate).
        loops (dict): Decorator NodeId -> LoopProfile.
        policy (str | PartitionPolicy): Promotion policy.
        config (BeeFlowConfig, optional): Supplies the path-expansion cap.

    Returns:
        PartitionResult: Subpaths in generation order. Synthetic leaves are attached to the
        subpath of their neighbouring schedulable leaf.

    Raises:
        EmptyTree, PolicyNotRegistered
    """
    config = config or BeeFlowConfig()
    policy = get_policy(policy)
    synthetic = {leaf_id for leaf_id, node in tree.leaves.items() if node.synthetic}
    if len(synthetic) == len(tree.leaves):
        raise EmptyTree(f"{tree.workflow_id} has no schedulable leaves")

    rank = tree.leaf_rank()
    removed = set(synthetic)
    chosen = []
    phases = 0
    while True:
        residual = residual_tree(tree, removed)
        if residual is None:
            break
        phases += 1
        timeline = align(residual, profiles, loops)
        leaves_left = list(residual.leaves)
        context = PartitionContext(timeline, leaves_left, rank, profiles,
                                   {l: tree.function_of(l) for l in leaves_left})
        weights = {leaf_id: timeline.io_bytes(leaf_id) for leaf_id in leaves_left}
        candidates = {}
        for leaf_id in leaves_left:
            for path in expand_paths(residual, residual.leaves[leaf_id].node_id, config.expand_cap, weights):
                candidates.setdefault(tuple(path), None)
        best = max(candidates, key=lambda c: policy.score(c, context))
        log.info(f"{tree.workflow_id} phase {phases}: promoted {list(best)} out of {len(candidates)} candidates")
        chosen.append(best)
        removed.update(best)

    leaves = _attach_synthetic(tree, [Subpath(None, c, tree.workflow_id) for c in chosen], synthetic) \
        if synthetic else [list(c) for c in chosen]
    subpaths = tuple(Subpath(f"{tree.workflow_id}/sp{i + 1}", tuple(sp), tree.workflow_id)
                     for i, sp in enumerate(leaves))
    return PartitionResult(tree.workflow_id, subpaths, phases)
