"""
Runtime traces, per-leaf profiles and expected-timeline alignment.

Every invocation of a function goes through four periods: initialization, input
fetching, execution and output putting. Traces record when each period started; the
profiles estimated from them drive the expected-case timeline that partitioning and
placement use to find where I/O periods pile up.
"""
import json
import logging as log
from collections import defaultdict, namedtuple
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from beeflow.behavior_tree import DECORATOR, FALLBACK, LEAF, PARALLEL, SEQUENCE, AggSpec, TailSpec
from beeflow.config import BeeFlowConfig
from beeflow.utils import DomainError, InputFormatError, open_text

SKIPPED = 'skipped'
TRACE_STATUSES = ('success', 'failure', SKIPPED)
TIME_FIELDS = ('t_init_start', 't_input_start', 't_exec_start', 't_output_start', 't_end')

TraceRecord = namedtuple('TraceRecord', ['workflow_id', 'request_id', 'leaf_id', *TIME_FIELDS,
                                         'input_bytes', 'output_bytes', 'status', 'decorator_iteration'])


class ParseError(InputFormatError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line

class TimestampOrderViolation(InputFormatError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line

class MissingProfile(DomainError):
    def __init__(self, leaf_id):
        super().__init__(f"no profile for leaf {leaf_id!r}")
        self.leaf_id = leaf_id

class UnknownLeaf(DomainError):
    def __init__(self, leaf_id):
        super().__init__(f"leaf {leaf_id!r} is not in the timeline")
        self.leaf_id = leaf_id


class TraceStore:
    """Trace records indexed by (workflow, leaf). Append-only while ingesting."""

    def __init__(self, records=()):
        self.records = []
        self._by_leaf = defaultdict(list)
        self._requests = defaultdict(set)
        for record in records:
            self.add(record)

    def add(self, record):
        self.records.append(record)
        self._by_leaf[(record.workflow_id, record.leaf_id)].append(record)
        self._requests[record.workflow_id].add(record.request_id)

    def records_for(self, workflow_id, leaf_id):
        return self._by_leaf.get((workflow_id, leaf_id), [])

    def requests(self, workflow_id):
        return self._requests.get(workflow_id, set())

    def workflows(self):
        return sorted(self._requests)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def _parse_record(line_no, text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(line_no, f"invalid JSON at column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ParseError(line_no, "record must be a JSON object")

    values = {}
    for key in ('workflow_id', 'request_id', 'leaf_id'):
        if key not in doc:
            raise ParseError(line_no, f"missing field {key!r}")
        values[key] = str(doc[key])
    for key in (*TIME_FIELDS, 'input_bytes', 'output_bytes'):
        value = doc.get(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(line_no, f"field {key!r} must be a number, got {value!r}")
        values[key] = float(value)
    status = doc.get('status')
    if status not in TRACE_STATUSES:
        raise ParseError(line_no, f"status must be one of {TRACE_STATUSES}, got {status!r}")
    values['status'] = status
    iteration = doc.get('decorator_iteration', 0)
    if isinstance(iteration, bool) or not isinstance(iteration, int) or iteration < 0:
        raise ParseError(line_no, f"decorator_iteration must be a count, got {iteration!r}")
    values['decorator_iteration'] = iteration

    if values['input_bytes'] < 0 or values['output_bytes'] < 0:
        raise ParseError(line_no, "byte counts must be >= 0")
    times = [values[k] for k in TIME_FIELDS]
    for (a, ta), (b, tb) in zip(zip(TIME_FIELDS, times), zip(TIME_FIELDS[1:], times[1:])):
        if tb < ta:
            raise TimestampOrderViolation(line_no, f"{b}={tb} is before {a}={ta}")
    return TraceRecord(**values)


def ingest(trace_stream):
    """
    Parses JSON Lines trace records.

    Args:
        trace_stream (iterable of str): Lines of a trace file. Blank lines are skipped.

    Returns:
        TraceStore

    Raises:
        ParseError: Malformed line, with its 1-based line number.
        TimestampOrderViolation: Period start times out of order.
    """
    store = TraceStore()
    for line_no, line in enumerate(trace_stream, start=1):
        if not line.strip():
            continue
        store.add(_parse_record(line_no, line))
    return store


def load_traces(*paths):
    store = TraceStore()
    for path in paths:
        if not Path(path).exists():
            raise InputFormatError(f"trace file not found: {path}")
        with open_text(path) as f:
            for record in ingest(f):
                store.add(record)
    log.info(f"loaded {len(store)} trace records from {len(paths)} file(s)")
    return store


def dump_traces(records, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open_text(path, 'wt') as f:
        for record in records:
            f.write(json.dumps(record._asdict(), sort_keys=True) + '\n')
    return path


# ---- profiles ----

@dataclass(frozen=True)
class FunctionProfile:
    leaf_id: str
    init_delay_s: float
    input_delay_s: float
    exec_delay_s: float
    output_delay_s: float
    input_bytes: float
    output_bytes: float
    exec_prob: float
    samples: int = 0
    fail_prob: float = 0.0
    defaulted: bool = False

    @property
    def total_delay_s(self):
        return self.init_delay_s + self.input_delay_s + self.exec_delay_s + self.output_delay_s

    @property
    def io_bytes(self):
        return self.input_bytes + self.output_bytes


LoopProfile = namedtuple('LoopProfile', ['node_id', 'expected_iterations'])
EstimateResult = namedtuple('EstimateResult', ['profiles', 'loops'])


def default_profile(leaf_id, config=None):
    c = config or BeeFlowConfig()
    return FunctionProfile(leaf_id, c.default_init_delay_s, c.default_input_delay_s, c.default_exec_delay_s,
                           c.default_output_delay_s, c.default_input_bytes, c.default_output_bytes,
                           c.default_exec_prob, 0, c.default_fail_prob, True)


def zero_profile(leaf_id):
    return FunctionProfile(leaf_id, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)


def subtree_failure_prob(tree, node, fail):
    """
    Failure probability of a subtree assuming independent leaves.

    Args:
        fail (dict): LeafId -> failure probability of one invocation.
    """
    if node.kind == LEAF:
        return fail.get(node.leaf_id, 0.0)
    probs = [subtree_failure_prob(tree, c, fail) for c in node.children]
    if node.kind == SEQUENCE:
        return 1.0 - float(np.prod([1.0 - p for p in probs]))
    if node.kind == FALLBACK:
        return float(np.prod(probs))
    if node.kind == PARALLEL:
        agg = node.agg or AggSpec.all_succeed()
        if agg.kind == AggSpec.M_OUT_OF_N:
            # 成功个数的分布（各分支独立），失败 = 成功数 < m
            dist = np.zeros(len(probs) + 1)
            dist[0] = 1.0
            for p in probs:
                dist[1:] = dist[1:] * p + dist[:-1] * (1.0 - p)
                dist[0] *= p
            return float(dist[:agg.m].sum())
        if agg.kind == AggSpec.NAMED:
            return 0.0
        return 1.0 - float(np.prod([1.0 - p for p in probs]))
    if node.kind == DECORATOR:
        p = probs[0] if probs else 0.0
        tail = node.tail or TailSpec.once()
        if tail.kind == TailSpec.NEGATE:
            return 1.0 - p
        if tail.kind == TailSpec.RETRY:
            return p ** tail.max_n
        return p
    return 0.0


def reach_probabilities(tree, fail):
    """
    Probability that each leaf is attempted in a run: a fallback child is reached only when
    every elder sibling failed, a sequence child only when every elder sibling succeeded.
    """
    reach = {}

    def visit(node, r):
        if node.kind == LEAF:
            reach[node.leaf_id] = r
            return
        for child in node.children:
            visit(child, r)
            if node.kind == SEQUENCE:
                r *= 1.0 - subtree_failure_prob(tree, child, fail)
            elif node.kind == FALLBACK:
                r *= subtree_failure_prob(tree, child, fail)

    visit(tree.root, 1.0)
    return reach


def innermost_decorators(tree):
    """LeafId -> node_id of the closest decorator above it (leaves outside decorators are absent)."""
    owner = {}

    def visit(node, dec):
        if node.kind == LEAF:
            if dec is not None:
                owner[node.leaf_id] = dec
            return
        if node.kind == DECORATOR:
            dec = node.node_id
        for child in node.children:
            visit(child, dec)

    visit(tree.root, None)
    return owner


def estimate(store, tree, config=None):
    """
    Estimates per-leaf profiles and per-decorator loop counts from traces.

    Means are taken over non-skipped records. exec_prob is the share of observed requests
    of the workflow in which the leaf ran. Leaves with no records get the configured default
    profile (flagged defaulted), with exec_prob scaled by how likely the tree structure lets
    them run at all.

    Args:
        store (TraceStore)
        tree (WorkflowDef)
        config (BeeFlowConfig, optional): Source of the defaults.

    Returns:
        EstimateResult: (profiles: LeafId -> FunctionProfile, loops: NodeId -> LoopProfile)
    """
    config = config or BeeFlowConfig()
    wf = tree.workflow_id
    n_requests = len(store.requests(wf))
    profiles = {}
    missing = []

    for leaf_id, node in tree.leaves.items():
        if node.synthetic:
            profiles[leaf_id] = zero_profile(leaf_id)
            continue
        records = store.records_for(wf, leaf_id)
        if not records:
            missing.append(leaf_id)
            profiles[leaf_id] = default_profile(leaf_id, config)
            continue
        executed = [r for r in records if r.status != SKIPPED]
        base = default_profile(leaf_id, config)
        if executed:
            t = np.array([[getattr(r, k) for k in TIME_FIELDS] for r in executed])
            periods = np.diff(t, axis=1).mean(axis=0)
            base = replace(base, init_delay_s=float(periods[0]), input_delay_s=float(periods[1]),
                           exec_delay_s=float(periods[2]), output_delay_s=float(periods[3]),
                           input_bytes=float(np.mean([r.input_bytes for r in executed])),
                           output_bytes=float(np.mean([r.output_bytes for r in executed])),
                           fail_prob=sum(r.status == 'failure' for r in executed) / len(executed))
        ran_in = len({r.request_id for r in executed})
        profiles[leaf_id] = replace(base, exec_prob=min(1.0, ran_in / n_requests),
                                    samples=len(executed), defaulted=False)

    if missing:
        log.warning(f"{wf}: no traces for {len(missing)} leaves, using default profiles: {missing}")
        reach = reach_probabilities(tree, {k: p.fail_prob for k, p in profiles.items()})
        for leaf_id in missing:
            profiles[leaf_id] = replace(profiles[leaf_id], exec_prob=config.default_exec_prob * reach[leaf_id])

    owner = innermost_decorators(tree)
    per_request = defaultdict(dict)
    for leaf_id, dec in owner.items():
        for r in store.records_for(wf, leaf_id):
            if r.status != SKIPPED:
                seen = per_request[dec].get(r.request_id, 0)
                per_request[dec][r.request_id] = max(seen, r.decorator_iteration)
    loops = {}
    for node_id, node in tree.nodes.items():
        if node.kind != DECORATOR:
            continue
        counts = [c for c in per_request.get(node_id, {}).values() if c >= 1]
        expected = float(np.mean(counts)) if counts else config.default_expected_iterations
        loops[node_id] = LoopProfile(node_id, max(1.0, expected))
    return EstimateResult(profiles, loops)


# ---- expected timeline ----

TimelineEntry = namedtuple('TimelineEntry', ['leaf_id', 'init', 'input', 'exec', 'output',
                                             'input_bytes', 'output_bytes'])
IoInterval = namedtuple('IoInterval', ['start', 'end', 'degree'])


class ExpectedTimeline:
    """Expected [start, end) of each period of each leaf, in seconds from workflow start."""

    def __init__(self, workflow_id, entries):
        self.workflow_id = workflow_id
        self.entries = dict(entries)

    def __getitem__(self, leaf_id):
        try:
            return self.entries[leaf_id]
        except KeyError:
            raise UnknownLeaf(leaf_id) from None

    def __contains__(self, leaf_id):
        return leaf_id in self.entries

    def leaves(self):
        return list(self.entries)

    def span(self):
        return max((e.output[1] for e in self.entries.values()), default=0.0)

    def io_periods(self, leaf_id):
        entry = self[leaf_id]
        return [p for p in (entry.input, entry.output) if p[1] > p[0]]

    def exec_period(self, leaf_id):
        return self[leaf_id].exec

    def io_bytes(self, leaf_id):
        entry = self[leaf_id]
        return entry.input_bytes + entry.output_bytes


def align(tree, profiles, loops=None):
    """
    Lays the tree out on the expected-case clock.

    A leaf's periods are its profile delays scaled by exec_prob and by the expected iterations
    of every decorator above it. Sequence and fallback children follow each other, parallel
    children all start with the parallel, composites add no time.

    Raises:
        MissingProfile
    """
    loops = loops or {}
    entries = {}

    def lay(node, t, scale):
        if node.kind == LEAF:
            profile = profiles.get(node.leaf_id)
            if profile is None:
                raise MissingProfile(node.leaf_id)
            factor = profile.exec_prob * scale
            bounds = [t]
            for delay in (profile.init_delay_s, profile.input_delay_s, profile.exec_delay_s, profile.output_delay_s):
                bounds.append(bounds[-1] + factor * delay)
            entries[node.leaf_id] = TimelineEntry(node.leaf_id, (bounds[0], bounds[1]), (bounds[1], bounds[2]),
                                                  (bounds[2], bounds[3]), (bounds[3], bounds[4]),
                                                  factor * profile.input_bytes, factor * profile.output_bytes)
            return bounds[4]
        if node.kind == PARALLEL:
            return max(lay(child, t, scale) for child in node.children)
        if node.kind == DECORATOR:
            loop = loops.get(node.node_id)
            return lay(node.child, t, scale * (loop.expected_iterations if loop else 1.0))
        for child in node.children:
            t = lay(child, t, scale)
        return t

    lay(tree.root, 0.0, 1.0)
    return ExpectedTimeline(tree.workflow_id, entries)


def io_intervals(timeline, leaf_subset):
    """
    Sweeps the input and output periods of a set of leaves.

    Returns:
        list[IoInterval]: Maximal intervals with the number of covering I/O periods, in time
        order. Gaps where nothing transfers are left out.

    Example:
        A input [0,2), B input [1,3) -> [(0,1,1), (1,2,2), (2,3,1)]
    """
    periods = []
    for leaf_id in leaf_subset:
        periods.extend(timeline.io_periods(leaf_id))
    if not periods:
        return []
    starts = np.array([p[0] for p in periods])
    ends = np.array([p[1] for p in periods])
    points = np.unique(np.concatenate([starts, ends]))
    lefts, rights = points[:-1], points[1:]
    degrees = ((starts[None, :] <= lefts[:, None]) & (ends[None, :] > lefts[:, None])).sum(axis=1)

    intervals = []
    for left, right, degree in zip(lefts, rights, degrees):
        if degree == 0:
            continue
        if intervals and intervals[-1].end == left and intervals[-1].degree == degree:
            intervals[-1] = IoInterval(intervals[-1].start, float(right), int(degree))
        else:
            intervals.append(IoInterval(float(left), float(right), int(degree)))
    return intervals
