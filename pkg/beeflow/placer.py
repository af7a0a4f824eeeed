"""
Contention-aware placement of subpaths onto cluster nodes.

The cost of a node is, per workflow, the sum over its aligned I/O intervals of
length x degree^2: colocating overlapping I/O costs more than the sum of its parts.
Subpaths are placed greedily, those adding most to their workflow's contention first,
each on the feasible node that ends up cheapest.
"""
import logging as log
from dataclasses import dataclass, field

import numpy as np

from beeflow.behavior_tree import UnknownNode
from beeflow.traces import io_intervals
from beeflow.utils import DomainError, InputFormatError, natural_key, overlap_length, read_json, write_json


class NoFeasibleNode(DomainError):
    def __init__(self, subpath_id):
        super().__init__(f"no node can host subpath {subpath_id}")
        self.subpath_id = subpath_id

class ClusterFormatError(InputFormatError):
    pass


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    cpu_cores: float
    mem_bytes: int
    io_bw_Bps: float


@dataclass(frozen=True)
class ClusterSpec:
    nodes: tuple

    def __post_init__(self):
        ids = [n.node_id for n in self.nodes]
        if not ids:
            raise ClusterFormatError("cluster needs at least one node")
        if len(set(ids)) != len(ids):
            raise ClusterFormatError(f"duplicate node ids in cluster: {ids}")
        for n in self.nodes:
            if not (n.cpu_cores > 0 and n.mem_bytes > 0 and n.io_bw_Bps > 0):
                raise ClusterFormatError(f"node {n.node_id}: capacities must be > 0")

    def node(self, node_id):
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise UnknownNode(node_id)

    @property
    def node_ids(self):
        return [n.node_id for n in self.nodes]

    def to_dict(self):
        return {'nodes': [{'node_id': n.node_id, 'cpu_cores': n.cpu_cores, 'mem_bytes': n.mem_bytes,
                           'io_bw_Bps': n.io_bw_Bps} for n in self.nodes]}

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(tuple(NodeSpec(str(n['node_id']), n['cpu_cores'], n['mem_bytes'], n['io_bw_Bps'])
                             for n in doc['nodes']))
        except (KeyError, TypeError) as e:
            raise ClusterFormatError(f"malformed cluster document: {e}") from e

    @classmethod
    def uniform(cls, count, cpu_cores=4.0, mem_bytes=4 * 1024 ** 3, io_bw_Bps=125e6, prefix='n'):
        return cls(tuple(NodeSpec(f"{prefix}{i}", cpu_cores, mem_bytes, io_bw_Bps) for i in range(count)))


def load_cluster(path):
    return ClusterSpec.from_dict(read_json(path))


@dataclass
class PlacementPlan:
    assignments: dict
    per_node_cost: dict
    total_cost: float
    order: list = field(default_factory=list)

    def to_dict(self):
        return {'assignments': dict(self.assignments), 'per_node_cost': dict(self.per_node_cost),
                'total_cost': self.total_cost}

    @classmethod
    def from_dict(cls, doc):
        return cls(dict(doc['assignments']), dict(doc['per_node_cost']), doc['total_cost'],
                   list(doc['assignments']))

    def max_node_cost(self):
        return max(self.per_node_cost.values(), default=0.0)


def load_plan(path):
    return PlacementPlan.from_dict(read_json(path))


def dump_plan(plan, path):
    return write_json(plan.to_dict(), path)


def leaf_functions(workflows):
    """workflow_id -> {leaf_id -> FunctionSpec}, the `functions` argument of try_place/place."""
    return {wf_id: {leaf_id: tree.function_of(leaf_id) for leaf_id in tree.leaves}
            for wf_id, tree in workflows.items()}


def penalty(node_load, timelines):
    """
    Cost of one node.

    Args:
        node_load (dict): workflow_id -> leaf ids of that workflow on the node.
        timelines (dict): workflow_id -> ExpectedTimeline.

    Returns:
        float: sum over workflows of sum(interval length * degree^2).

    Raises:
        UnknownLeaf
    """
    cost = 0.0
    for wf_id, leaves in node_load.items():
        if leaves:
            cost += sum((iv.end - iv.start) * iv.degree ** 2 for iv in io_intervals(timelines[wf_id], leaves))
    return cost


def peak_cpu(periods):
    """Largest sum of cpu requests of overlapping [start, end) periods."""
    periods = [p for p in periods if p[1] > p[0]]
    if not periods:
        return 0.0
    starts = np.array([p[0] for p in periods])
    ends = np.array([p[1] for p in periods])
    cpu = np.array([p[2] for p in periods])
    active = (starts[None, :] <= starts[:, None]) & (ends[None, :] > starts[:, None])
    return float((active * cpu[None, :]).sum(axis=1).max())


def try_place(node_id, subpath, loads, cluster, functions, timelines):
    """
    Whether a node can take a subpath on top of what it already hosts.

    Memory is the plain sum of mem requests of every leaf on the node. CPU is the largest
    sum of cpu requests over overlapping expected exec periods, all workflows aligned at t=0.

    Args:
        node_id (str)
        subpath (Subpath)
        loads (dict): node_id -> {workflow_id -> leaf ids} placed so far.
        cluster (ClusterSpec)
        functions (dict): workflow_id -> {leaf_id -> FunctionSpec}.
        timelines (dict): workflow_id -> ExpectedTimeline.

    Raises:
        UnknownNode
    """
    node = cluster.node(node_id)
    hosted = [(wf, leaf_id) for wf, leaves in loads.get(node_id, {}).items() for leaf_id in leaves]
    hosted += [(subpath.workflow_id, leaf_id) for leaf_id in subpath.leaves]

    mem = sum(functions[wf][leaf_id].mem_request_bytes for wf, leaf_id in hosted)
    if mem > node.mem_bytes:
        return False
    periods = [(*timelines[wf].exec_period(leaf_id), functions[wf][leaf_id].cpu_request_cores)
               for wf, leaf_id in hosted]
    return peak_cpu(periods) <= node.cpu_cores + 1e-9


def sort_key(subpath, timeline):
    """
    Contribution of a subpath to its workflow's contention: its I/O time weighted by how many
    other I/O periods of the whole workflow overlap it.

    Raises:
        UnknownLeaf
    """
    intervals = io_intervals(timeline, timeline.leaves())
    contribution = 0.0
    for leaf_id in subpath.leaves:
        for s, e in timeline.io_periods(leaf_id):
            contribution += sum(overlap_length(s, e, iv.start, iv.end) * (iv.degree - 1) for iv in intervals)
    return contribution


def placement_order(partitions, timelines):
    """All subpaths, most contention first; ties to more I/O bytes, then subpath id."""
    ranked = []
    for result in partitions:
        timeline = timelines[result.workflow_id]
        for sp in result.subpaths:
            io_bytes = sum(timeline.io_bytes(leaf_id) for leaf_id in sp.leaves)
            ranked.append(((-round(sort_key(sp, timeline), 9), -round(io_bytes, 6), natural_key(sp.subpath_id)), sp))
    return [sp for _, sp in sorted(ranked, key=lambda x: x[0])]


def _with_subpath(node_load, subpath):
    load = {wf: list(leaves) for wf, leaves in node_load.items()}
    load.setdefault(subpath.workflow_id, []).extend(subpath.leaves)
    return load


class Placer:
    def __init__(self, name):
        self.name = name

    def place(self, partitions, timelines, cluster, functions) -> PlacementPlan:
        raise NotImplementedError

    def _plan(self, assignments, loads, timelines, order):
        per_node = {node_id: penalty(load, timelines) for node_id, load in loads.items()}
        return PlacementPlan(assignments, per_node, sum(per_node.values()), order)

    def _first_feasible(self, candidates, sp, loads, cluster, functions, timelines):
        for node_id in candidates:
            if try_place(node_id, sp, loads, cluster, functions, timelines):
                return node_id
        return None


class ContentionAwarePlacer(Placer):
    """
    Greedy: for each subpath, in placement_order, the feasible node minimizing
    current cost + delta cost; ties to the cheaper node, then the lower node id.
    """

    def __init__(self, name='contention-aware'):
        super().__init__(name)

    def place(self, partitions, timelines, cluster, functions):
        loads = {node_id: {} for node_id in cluster.node_ids}
        costs = {node_id: 0.0 for node_id in cluster.node_ids}
        assignments, order = {}, []
        for sp in placement_order(partitions, timelines):
            best = None
            for node_id in cluster.node_ids:
                if not try_place(node_id, sp, loads, cluster, functions, timelines):
                    continue
                new_load = _with_subpath(loads[node_id], sp)
                delta = penalty(new_load, timelines) - costs[node_id]
                key = (round(costs[node_id] + delta, 9), round(costs[node_id], 9), natural_key(node_id))
                if best is None or key < best[0]:
                    best = (key, node_id, new_load)
            if best is None:
                raise NoFeasibleNode(sp.subpath_id)
            _, node_id, new_load = best
            loads[node_id] = new_load
            costs[node_id] = penalty(new_load, timelines)
            assignments[sp.subpath_id] = node_id
            order.append(sp.subpath_id)
            log.debug(f"{sp.subpath_id} -> {node_id} (node cost {costs[node_id]:.3f})")
        plan = self._plan(assignments, loads, timelines, order)
        log.info(f"placed {len(assignments)} subpaths on {len(cluster.nodes)} nodes, total cost {plan.total_cost:.3f}")
        return plan


class RoundRobinPlacer(Placer):
    """Subpaths in generation order, nodes in turn, skipping nodes that cannot take the subpath."""

    def __init__(self, name='round-robin'):
        super().__init__(name)

    def place(self, partitions, timelines, cluster, functions):
        ids = cluster.node_ids
        loads = {node_id: {} for node_id in ids}
        assignments, order = {}, []
        turn = 0
        for result in partitions:
            for sp in result.subpaths:
                rotation = ids[turn % len(ids):] + ids[:turn % len(ids)]
                node_id = self._first_feasible(rotation, sp, loads, cluster, functions, timelines)
                if node_id is None:
                    raise NoFeasibleNode(sp.subpath_id)
                loads[node_id] = _with_subpath(loads[node_id], sp)
                assignments[sp.subpath_id] = node_id
                order.append(sp.subpath_id)
                turn = ids.index(node_id) + 1
        return self._plan(assignments, loads, timelines, order)


class RandomPlacer(Placer):
    def __init__(self, name='random', seed=0):
        super().__init__(name)
        self.seed = seed

    def place(self, partitions, timelines, cluster, functions):
        rng = np.random.default_rng(self.seed)
        loads = {node_id: {} for node_id in cluster.node_ids}
        assignments, order = {}, []
        for result in partitions:
            for sp in result.subpaths:
                feasible = [n for n in cluster.node_ids if try_place(n, sp, loads, cluster, functions, timelines)]
                if not feasible:
                    raise NoFeasibleNode(sp.subpath_id)
                node_id = feasible[int(rng.integers(len(feasible)))]
                loads[node_id] = _with_subpath(loads[node_id], sp)
                assignments[sp.subpath_id] = node_id
                order.append(sp.subpath_id)
        return self._plan(assignments, loads, timelines, order)


class ColocateAllPlacer(Placer):
    """
    Eager colocation: every subpath of a workflow on one node, workflows spread over the
    nodes in turn. A workflow that fits no single node is spread subpath by subpath.
    """

    def __init__(self, name='colocate-all'):
        super().__init__(name)

    def place(self, partitions, timelines, cluster, functions):
        ids = cluster.node_ids
        loads = {node_id: {} for node_id in ids}
        assignments, order = {}, []
        for k, result in enumerate(partitions):
            rotation = ids[k % len(ids):] + ids[:k % len(ids)]
            home = None
            for node_id in rotation:
                trial = dict(loads)
                fits = True
                for sp in result.subpaths:
                    if not try_place(node_id, sp, trial, cluster, functions, timelines):
                        fits = False
                        break
                    trial[node_id] = _with_subpath(trial[node_id], sp)
                if fits:
                    home = node_id
                    break
            if home is None:
                log.warning(f"{result.workflow_id} fits on no single node, spreading its subpaths")
            for sp in result.subpaths:
                node_id = home or self._first_feasible(rotation, sp, loads, cluster, functions, timelines)
                if node_id is None:
                    raise NoFeasibleNode(sp.subpath_id)
                loads[node_id] = _with_subpath(loads[node_id], sp)
                assignments[sp.subpath_id] = node_id
                order.append(sp.subpath_id)
        return self._plan(assignments, loads, timelines, order)


PLACERS = {
    'contention-aware': ContentionAwarePlacer,
    'round-robin': RoundRobinPlacer,
    'random': RandomPlacer,
    'colocate-all': ColocateAllPlacer,
}


def get_placer(name, seed=0):
    if name == 'random':
        return RandomPlacer(seed=seed)
    if name not in PLACERS:
        raise ValueError(f"Unknown placement policy: {name}")
    return PLACERS[name](name)


def place(partitions, timelines, cluster, functions):
    """
    Contention-aware placement of every subpath of every workflow.

    Args:
        partitions (list[PartitionResult])
        timelines (dict): workflow_id -> ExpectedTimeline of the full workflow.
        cluster (ClusterSpec)
        functions (dict): workflow_id -> {leaf_id -> FunctionSpec}, see leaf_functions.

    Returns:
        PlacementPlan

    Raises:
        NoFeasibleNode: A subpath fits on no node.
    """
    if not partitions:
        raise ValueError("place needs at least one partition")
    return ContentionAwarePlacer().place(partitions, timelines, cluster, functions)
