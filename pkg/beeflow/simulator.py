"""
Discrete-event simulation of placed workflows on a cluster.

Each workflow has one closed-loop client that sends the next request when the previous one
returns. Requests are interpreted by the same TreeWalker as the synchronous interpreter;
every leaf then goes through its four periods on the node its subpath was placed on:
a one-off cold initialization per (leaf, node), an input fetch, execution on FIFO-queued
cores and an output put. Fetches and puts share the node's I/O bandwidth equally among the
transfers active at any instant. A fetch is free when everything the leaf reads was produced
on its own node.
"""
import heapq
import itertools
import logging as log
import math
from collections import deque, namedtuple
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np
import pandas as pd

from beeflow.behavior_tree import TailSpec, load_workflow
from beeflow.config import BeeFlowConfig, MiB
from beeflow.converters import initial_payload_for
from beeflow.dataplane import DataStore
from beeflow.executors import FSM_BODY, FSM_KINDS, LLM_KINDS, FsmBodyExecutor, LlmCodegenExecutor, fsm_table
from beeflow.interpreter import (FAILURE, REENTER, SUCCESS, EnterComposite, ExecStatus, Fork, InvokeLeaf,
                                 LeafOutcome, Return, Skip, TreeWalker, eval_tail)
from beeflow.partitioner import load_partition, partition
from beeflow.placer import get_placer, leaf_functions, load_cluster, load_plan
from beeflow.traces import SKIPPED, TraceRecord, TraceStore, align, estimate, load_traces
from beeflow.utils import DomainError, InputFormatError, read_json, window_index

SINGLE = 'single'
CORUN = 'co-run'
MODES = (SINGLE, CORUN)
PERIODS = ('init', 'input', 'exec', 'output')
GANTT_COLUMNS = ['workflow_id', 'request_id', 'leaf_id', 'node_id', 'period', 'start_s', 'end_s']
_EPS_BYTES = 1e-6


class UnplacedLeaf(DomainError):
    def __init__(self, workflow_id, leaf_id):
        super().__init__(f"leaf {leaf_id} of {workflow_id} is not placed on any node")
        self.workflow_id = workflow_id
        self.leaf_id = leaf_id

class InvalidScenario(DomainError):
    pass

class IoError(InputFormatError):
    pass


@dataclass
class Scenario:
    workflows: list
    profiles: dict
    loops: dict
    partitions: dict
    plan: object
    cluster: object
    mode: str = SINGLE
    requests_per_workflow: int = 1
    rng_seed: int = 0
    composite_overhead_s: float = 0.0
    jitter: float = 0.0
    payload_limit: int = MiB
    name: str = 'scenario'

    def leaf_placement(self):
        """(workflow_id, leaf_id) -> node_id."""
        placement = {}
        for tree in self.workflows:
            result = self.partitions.get(tree.workflow_id)
            owner = result.leaf_owner() if result else {}
            for leaf_id in tree.leaves:
                node_id = self.plan.assignments.get(owner.get(leaf_id))
                if node_id is None:
                    raise UnplacedLeaf(tree.workflow_id, leaf_id)
                placement[(tree.workflow_id, leaf_id)] = node_id
        return placement

    def check(self):
        if self.mode not in MODES:
            raise InvalidScenario(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.requests_per_workflow < 1:
            raise InvalidScenario("requests_per_workflow must be >= 1")
        if not self.workflows:
            raise InvalidScenario("scenario has no workflows")
        node_ids = set(self.cluster.node_ids)
        for subpath_id, node_id in self.plan.assignments.items():
            if node_id not in node_ids:
                raise InvalidScenario(f"subpath {subpath_id} placed on unknown node {node_id}")
        placement = self.leaf_placement()
        for tree in self.workflows:
            for leaf_id in tree.leaves:
                if leaf_id not in self.profiles.get(tree.workflow_id, {}):
                    raise InvalidScenario(f"no profile for leaf {leaf_id} of {tree.workflow_id}")
                cores = tree.function_of(leaf_id).cpu_request_cores
                node = self.cluster.node(placement[(tree.workflow_id, leaf_id)])
                if cores > node.cpu_cores:
                    raise InvalidScenario(f"leaf {leaf_id} needs {cores} cores, node {node.node_id} has {node.cpu_cores}")
        return placement


RequestResult = namedtuple('RequestResult', ['workflow_id', 'request_id', 'latency_s', 'status'])
GanttEntry = namedtuple('GanttEntry', ['workflow_id', 'request_id', 'leaf_id', 'node_id', 'ready_s',
                                       'init', 'input', 'exec', 'output', 'input_bytes', 'output_bytes',
                                       'input_local', 'status', 'iteration'])
SkipRecord = namedtuple('SkipRecord', ['workflow_id', 'request_id', 'leaf_id', 'time_s'])
TxSegment = namedtuple('TxSegment', ['node_id', 'start', 'end', 'bytes', 'active'])
CoreSample = namedtuple('CoreSample', ['node_id', 'time', 'cores_in_use'])
NodeTxPoint = namedtuple('NodeTxPoint', ['node_id', 'window_start_s', 'bytes_per_s'])


@dataclass(frozen=True)
class SimReport:
    per_request: tuple
    gantt: tuple
    node_tx: tuple
    skipped: tuple = ()
    tx_segments: tuple = ()
    core_samples: tuple = ()
    node_ids: tuple = ()
    span_s: float = 0.0
    window_s: float = 5.0

    def transmitted_bytes(self):
        """node_id -> bytes moved by that node's I/O."""
        totals = {node_id: 0.0 for node_id in self.node_ids}
        for seg in self.tx_segments:
            totals[seg.node_id] += seg.bytes
        return totals

    def charged_bytes(self):
        """node_id -> bytes the leaves on that node fetched remotely or put."""
        totals = {node_id: 0.0 for node_id in self.node_ids}
        for e in self.gantt:
            totals[e.node_id] += (0.0 if e.input_local else e.input_bytes) + e.output_bytes
        return totals


# ---- event engine ----

class EventLoop:
    def __init__(self):
        self.now = 0.0
        self._queue = []
        self._seq = itertools.count()

    def at(self, time, fn, *args):
        heapq.heappush(self._queue, (time, next(self._seq), fn, args))

    def after(self, delay, fn, *args):
        self.at(self.now + delay, fn, *args)

    def run(self):
        while self._queue:
            time, _, fn, args = heapq.heappop(self._queue)
            self.now = time
            fn(*args)


class CorePool:
    """Cores of one node. Requests are granted strictly first come, first served."""

    def __init__(self, node, loop, samples):
        self.node = node
        self.loop = loop
        self.samples = samples
        self.in_use = 0.0
        self.waiting = deque()

    def acquire(self, cores, granted):
        if not self.waiting and self.in_use + cores <= self.node.cpu_cores + 1e-9:
            self._grant(cores, granted)
        else:
            self.waiting.append((cores, granted))

    def release(self, cores):
        self.in_use -= cores
        self.samples.append(CoreSample(self.node.node_id, self.loop.now, self.in_use))
        while self.waiting and self.in_use + self.waiting[0][0] <= self.node.cpu_cores + 1e-9:
            self._grant(*self.waiting.popleft())

    def _grant(self, cores, granted):
        self.in_use += cores
        self.samples.append(CoreSample(self.node.node_id, self.loop.now, self.in_use))
        self.loop.at(self.loop.now, granted)


class IoChannel:
    """Processor-sharing I/O of one node: n active transfers each get io_bw / n."""

    def __init__(self, node, loop, segments):
        self.node = node
        self.loop = loop
        self.segments = segments
        self.active = {}
        self.last = 0.0
        self.version = 0
        self._ids = itertools.count()

    def transfer(self, nbytes, done):
        if nbytes <= 0:
            self.loop.at(self.loop.now, done)
            return
        self._advance()
        self.active[next(self._ids)] = [float(nbytes), done]
        self._reschedule()

    def _advance(self, finishing=()):
        now = self.loop.now
        if self.active and (now > self.last or finishing):
            share = self.node.io_bw_Bps / len(self.active) * (now - self.last)
            moved = 0.0
            for tid, t in self.active.items():
                step = t[0] if tid in finishing or t[0] - share <= _EPS_BYTES else share
                t[0] -= step
                moved += step
            self.segments.append(TxSegment(self.node.node_id, self.last, now, moved, len(self.active)))
        self.last = now

    def _reschedule(self):
        self.version += 1
        if self.active:
            rate = self.node.io_bw_Bps / len(self.active)
            remaining = min(t[0] for t in self.active.values())
            due = frozenset(tid for tid, t in self.active.items() if t[0] <= remaining + _EPS_BYTES)
            self.loop.after(remaining / rate, self._complete, self.version, due)

    def _complete(self, version, due):
        if version != self.version:
            return
        # remaining / rate may be below the float spacing at now; due transfers close anyway
        self._advance(due)
        for tid in sorted(tid for tid, t in self.active.items() if t[0] <= _EPS_BYTES):
            done = self.active.pop(tid)[1]
            self.loop.at(self.loop.now, done)
        self._reschedule()


class SampledTails:
    """
    Decorator tails during simulation. Loops whose flag key is absent from the payload run a
    sampled number of passes (geometric with the profiled mean); everything else keeps its
    declared semantics.
    """

    def __init__(self, loops, rng):
        self.loops = loops
        self.rng = rng
        self.targets = {}

    def decide(self, node, result, payload, iteration):
        tail = node.tail
        if tail.kind == TailSpec.LOOP_TILL_END and tail.flag_key not in payload:
            if iteration == 1:
                loop = self.loops.get(node.node_id)
                mean = loop.expected_iterations if loop else 1.0
                self.targets[node.node_id] = int(self.rng.geometric(1.0 / mean)) if mean > 1.0 else 1
            return REENTER if iteration < self.targets[node.node_id] else Return(result)
        return eval_tail(tail, result, payload, iteration)


class _Process:
    """Drives one walker generator (a request, or one branch of a parallel) in virtual time."""

    def __init__(self, sim, request, gen, producers, on_exit):
        self.sim = sim
        self.request = request
        self.gen = gen
        self.producers = producers
        self.on_exit = on_exit

    def step(self, reply=None):
        while True:
            try:
                msg = self.gen.send(reply)
            except StopIteration as stop:
                self.on_exit(stop.value, self.producers)
                return
            reply = None
            if isinstance(msg, InvokeLeaf):
                self.sim.run_leaf(self, msg)
                return
            if isinstance(msg, Fork):
                self._fork(msg.branches)
                return
            if isinstance(msg, Skip):
                self.sim.record_skips(self.request, msg.leaf_ids)
            elif isinstance(msg, EnterComposite) and self.sim.scenario.composite_overhead_s > 0:
                self.sim.loop.after(self.sim.scenario.composite_overhead_s, self.step, None)
                return

    def _fork(self, branches):
        results = [None] * len(branches)
        produced = [frozenset()] * len(branches)
        pending = [len(branches)]

        def joined(i, result, producers):
            results[i] = result
            produced[i] = producers
            pending[0] -= 1
            if pending[0] == 0:
                self.producers = frozenset().union(*produced)
                self.step(results)

        for i, gen in enumerate(branches):
            _Process(self.sim, self.request, gen, self.producers, partial(joined, i)).step()


_Request = namedtuple('_Request', ['tree', 'request_id', 'start'])


class Simulator:
    def __init__(self, scenario):
        self.scenario = scenario
        self.placement = scenario.check()
        self.loop = EventLoop()
        self.rng = np.random.default_rng(scenario.rng_seed)
        self.segments, self.samples = [], []
        self.cores = {n.node_id: CorePool(n, self.loop, self.samples) for n in scenario.cluster.nodes}
        self.io = {n.node_id: IoChannel(n, self.loop, self.segments) for n in scenario.cluster.nodes}
        self.stores = {n.node_id: DataStore(n.node_id) for n in scenario.cluster.nodes}
        self.warm = set()
        self.per_request, self.gantt, self.skipped = [], [], []
        self._semantic = fsm_table()
        self._semantic.register(FSM_BODY, FsmBodyExecutor())
        self._llm = {node_id: LlmCodegenExecutor(store) for node_id, store in self.stores.items()}

    def run(self):
        workflows = self.scenario.workflows
        if self.scenario.mode == CORUN:
            for tree in workflows:
                self._client(tree, 0, None)
        else:
            self._client(workflows[0], 0, partial(self._next_single, 1))
        self.loop.run()
        for store in self.stores.values():
            store.close()

        report = SimReport(tuple(self.per_request), tuple(self.gantt), (), tuple(self.skipped),
                           tuple(self.segments), tuple(self.samples), tuple(self.scenario.cluster.node_ids),
                           self.loop.now)
        log.info(f"{self.scenario.name}: {len(self.per_request)} requests, {len(self.gantt)} leaf runs, "
                 f"span {self.loop.now:.3f}s")
        return report

    def _next_single(self, k):
        if k < len(self.scenario.workflows):
            self._client(self.scenario.workflows[k], 0, partial(self._next_single, k + 1))

    def _client(self, tree, k, finished):
        if k >= self.scenario.requests_per_workflow:
            if finished:
                finished()
            return
        request = _Request(tree, f"{tree.workflow_id}/r{k}", self.loop.now)
        walker = TreeWalker(tree, tails=SampledTails(self.scenario.loops.get(tree.workflow_id, {}), self.rng),
                            payload_limit=self.scenario.payload_limit)

        def done(result, producers):
            status, _ = result
            self.per_request.append(RequestResult(tree.workflow_id, request.request_id,
                                                  self.loop.now - request.start, status.value))
            self._client(tree, k + 1, finished)

        _Process(self, request, walker.walk(tree.root, initial_payload_for(tree)), frozenset(), done).step()

    def record_skips(self, request, leaf_ids):
        for leaf_id in leaf_ids:
            self.skipped.append(SkipRecord(request.tree.workflow_id, request.request_id, leaf_id, self.loop.now))

    def _jitter(self, value):
        j = self.scenario.jitter
        if j <= 0 or value <= 0:
            return value
        return value * (1.0 + j * (2.0 * self.rng.random() - 1.0))

    def _outcome(self, tree, leaf, node_id, payload):
        function = tree.functions[leaf.function_id]
        kind = function.executor_kind
        if kind in FSM_KINDS or kind == FSM_BODY:
            outcome = self._semantic.resolve(kind).invoke(leaf, function, payload, self.rng)
            return outcome.status, outcome.updates
        if kind in LLM_KINDS:
            outcome = self._llm[node_id].invoke(leaf, function, payload, self.rng)
            return outcome.status, outcome.updates
        fail_prob = self.scenario.profiles[tree.workflow_id][leaf.leaf_id].fail_prob
        failed = fail_prob > 0 and self.rng.random() < fail_prob
        return (FAILURE if failed else SUCCESS), {}

    def run_leaf(self, proc, msg):
        tree, request = proc.request.tree, proc.request
        leaf = msg.leaf
        wf = tree.workflow_id
        node_id = self.placement[(wf, leaf.leaf_id)]
        profile = self.scenario.profiles[wf][leaf.leaf_id]
        function = tree.functions[leaf.function_id]

        if leaf.synthetic:
            status, updates = self._outcome(tree, leaf, node_id, msg.payload)
            self.loop.at(self.loop.now, proc.step, _leaf_outcome(status, updates))
            return

        ready = self.loop.now
        stamps = {}
        cold = (wf, leaf.leaf_id, node_id) not in self.warm
        self.warm.add((wf, leaf.leaf_id, node_id))
        init_delay = self._jitter(profile.init_delay_s) if cold else 0.0
        local = bool(proc.producers) and proc.producers == {node_id}
        input_bytes = self._jitter(profile.input_bytes)
        output_bytes = self._jitter(profile.output_bytes)
        exec_delay = self._jitter(profile.exec_delay_s)
        cores = function.cpu_request_cores

        def start_input():
            stamps['init'] = (ready, self.loop.now)
            stamps['input_start'] = self.loop.now
            if local:
                input_done()
            else:
                self.io[node_id].transfer(input_bytes, input_done)

        def input_done():
            stamps['input'] = (stamps['input_start'], self.loop.now)
            self.cores[node_id].acquire(cores, exec_start)

        def exec_start():
            stamps['exec_start'] = self.loop.now
            self.loop.after(exec_delay, exec_done)

        def exec_done():
            stamps['exec'] = (stamps['exec_start'], self.loop.now)
            self.cores[node_id].release(cores)
            stamps['output_start'] = self.loop.now
            self.io[node_id].transfer(output_bytes, output_done)

        def output_done():
            stamps['output'] = (stamps['output_start'], self.loop.now)
            status, updates = self._outcome(tree, leaf, node_id, msg.payload)
            self.gantt.append(GanttEntry(wf, request.request_id, leaf.leaf_id, node_id, ready,
                                         stamps['init'], stamps['input'], stamps['exec'], stamps['output'],
                                         input_bytes, output_bytes, local, status.value, msg.iteration))
            proc.producers = frozenset([node_id])
            proc.step(_leaf_outcome(status, updates))

        self.loop.after(init_delay, start_input)


def _leaf_outcome(status, updates):
    return LeafOutcome(ExecStatus(status), updates, 0.0)


def simulate(scenario, window_s=5.0):
    """
    Runs a scenario to completion.

    Returns:
        SimReport: per-request latencies, Gantt entries, node transmission series and the
        event logs behind them. Identical scenarios give identical reports.

    Raises:
        UnplacedLeaf, InvalidScenario
    """
    report = Simulator(scenario).run()
    return SimReport(report.per_request, report.gantt, tuple(node_tx_series(report, window_s)), report.skipped,
                     report.tx_segments, report.core_samples, report.node_ids, report.span_s, window_s)


def node_tx_series(report, window_s=5.0):
    """
    Average transmission speed of every node over consecutive windows.

    Bytes of each transfer segment are spread uniformly over the segment's duration, summed
    per window and divided by window_s. Windows cover the whole simulated span.

    Returns:
        list[NodeTxPoint]
    """
    if window_s <= 0:
        raise ValueError(f"window_s must be > 0, got {window_s}")
    windows = max(1, math.ceil(report.span_s / window_s - 1e-12))
    totals = {node_id: np.zeros(windows) for node_id in report.node_ids}
    segments = list(report.tx_segments)
    firsts = np.minimum(window_index([seg.start for seg in segments], window_s), windows - 1)
    lasts = np.minimum(window_index([seg.end for seg in segments], window_s), windows - 1)
    for seg, first, last in zip(segments, firsts, lasts):
        duration = seg.end - seg.start
        if duration <= 0:
            totals[seg.node_id][first] += seg.bytes
            continue
        for w in range(int(first), int(last) + 1):
            lo, hi = w * window_s, (w + 1) * window_s
            if w == windows - 1:
                hi = max(hi, seg.end)
            share = max(0.0, min(seg.end, hi) - max(seg.start, lo)) / duration
            totals[seg.node_id][w] += seg.bytes * share
    points = []
    for node_id in report.node_ids:
        for w, moved in enumerate(totals[node_id]):
            points.append(NodeTxPoint(node_id, w * window_s, float(moved / window_s)))
    return points


def check_caps(report, cluster):
    """
    Bandwidth and core caps over the event log.

    Returns:
        list[str]: One message per violation, empty when both caps always hold.
    """
    problems = []
    for seg in report.tx_segments:
        duration = seg.end - seg.start
        bw = cluster.node(seg.node_id).io_bw_Bps
        # one ulp of time at seg.end is the resolution of the clock
        slack = _EPS_BYTES * seg.active + 4 * bw * math.ulp(seg.end)
        if seg.bytes > bw * duration * (1 + 1e-9) + slack:
            rate = seg.bytes / duration if duration > 0 else math.inf
            problems.append(f"{seg.node_id}: {rate:.1f} B/s during [{seg.start}, {seg.end})")
    for sample in report.core_samples:
        if sample.cores_in_use > cluster.node(sample.node_id).cpu_cores + 1e-9:
            problems.append(f"{sample.node_id}: {sample.cores_in_use} cores in use at {sample.time}")
    return problems


def gantt_frame(report):
    rows = []
    for e in report.gantt:
        for period in PERIODS:
            start, end = getattr(e, period)
            rows.append((e.workflow_id, e.request_id, e.leaf_id, e.node_id, period, start, end))
    return pd.DataFrame(rows, columns=GANTT_COLUMNS)


def export_gantt(report, path):
    """
    Writes the Gantt chart as CSV, one row per period of every leaf run.

    Raises:
        IoError
    """
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        gantt_frame(report).to_csv(path, index=False)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return Path(path)


def read_gantt(path):
    return pd.read_csv(path, dtype={'workflow_id': str, 'request_id': str, 'leaf_id': str, 'node_id': str,
                                    'period': str})


def node_tx_frame(report):
    return pd.DataFrame(list(report.node_tx), columns=['node_id', 'window_start_s', 'bytes_per_s'])


def latency_summary(report):
    """min / median / p95 / max latency per workflow."""
    frame = pd.DataFrame(list(report.per_request), columns=RequestResult._fields)
    if frame.empty:
        return pd.DataFrame(columns=['workflow_id', 'requests', 'min_s', 'median_s', 'p95_s', 'max_s'])
    grouped = frame.groupby('workflow_id', sort=True)['latency_s']
    return pd.DataFrame({'requests': grouped.count(), 'min_s': grouped.min(), 'median_s': grouped.median(),
                         'p95_s': grouped.quantile(0.95), 'max_s': grouped.max()}).reset_index()


def report_to_dict(report):
    return {
        'per_request': [r._asdict() for r in report.per_request],
        'span_s': report.span_s,
        'window_s': report.window_s,
        'transmitted_bytes': report.transmitted_bytes(),
        'leaf_runs': len(report.gantt),
        'skipped_leaves': len(report.skipped),
    }


def report_to_traces(report):
    """Trace records of every leaf run and skip in a report, for re-estimation."""
    records = []
    for e in report.gantt:
        records.append(TraceRecord(e.workflow_id, e.request_id, e.leaf_id, e.init[0], e.input[0], e.exec[0],
                                   e.output[0], e.output[1], e.input_bytes, e.output_bytes, e.status, e.iteration))
    for s in report.skipped:
        records.append(TraceRecord(s.workflow_id, s.request_id, s.leaf_id, s.time_s, s.time_s, s.time_s,
                                   s.time_s, s.time_s, 0.0, 0.0, SKIPPED, 0))
    return records


# ---- scenario assembly ----

def build_scenario(workflows, cluster, store=None, policy='io-contention', placer='contention-aware',
                   mode=SINGLE, requests_per_workflow=1, rng_seed=0, composite_overhead_s=0.0, jitter=0.0,
                   config=None, profiles=None, loops=None, partitions=None, plan=None, name='scenario'):
    """
    Runs the planning half of the pipeline (estimate, partition, place) for whatever the
    caller did not supply, and bundles the result into a Scenario.
    """
    config = config or BeeFlowConfig()
    store = store if store is not None else TraceStore()
    profiles = dict(profiles or {})
    loops = dict(loops or {})
    partitions = dict(partitions or {})
    for tree in workflows:
        if tree.workflow_id not in profiles:
            estimated = estimate(store, tree, config)
            profiles[tree.workflow_id] = estimated.profiles
            loops.setdefault(tree.workflow_id, estimated.loops)
        loops.setdefault(tree.workflow_id, {})
        if tree.workflow_id not in partitions:
            partitions[tree.workflow_id] = partition(tree, profiles[tree.workflow_id], loops[tree.workflow_id],
                                                     policy, config)
    if plan is None:
        timelines = {t.workflow_id: align(t, profiles[t.workflow_id], loops[t.workflow_id]) for t in workflows}
        functions = leaf_functions({t.workflow_id: t for t in workflows})
        plan = get_placer(placer, rng_seed).place([partitions[t.workflow_id] for t in workflows],
                                                  timelines, cluster, functions)
    return Scenario(list(workflows), profiles, loops, partitions, plan, cluster, mode, requests_per_workflow,
                    rng_seed, composite_overhead_s, jitter, config.payload_limit_bytes, name)


def load_scenario(path, config=None, mode=None, rng_seed=None, policy=None, extra_traces=None):
    """
    Loads a scenario file. Workflow, trace, partition, cluster and plan paths are relative
    to the scenario file; partitions and the plan are computed when not given.

    Raises:
        InputFormatError: Missing or malformed files.
    """
    config = config or BeeFlowConfig()
    path = Path(path)
    doc = read_json(path)
    base = path.parent
    try:
        entries = doc['workflows']
        cluster = load_cluster(base / doc['cluster'])
    except (KeyError, TypeError) as e:
        raise InputFormatError(f"{path}: malformed scenario ({e})") from e

    workflows, trace_files, partitions = [], [], {}
    for entry in entries:
        tree = load_workflow(base / entry['workflow'])
        workflows.append(tree)
        if entry.get('traces'):
            trace_files.append(base / entry['traces'])
        if entry.get('partition'):
            partitions[tree.workflow_id] = load_partition(base / entry['partition'])
    store = load_traces(*trace_files) if trace_files else TraceStore()
    for record in extra_traces or ():
        store.add(record)
    plan = load_plan(base / doc['plan']) if doc.get('plan') else None

    return build_scenario(workflows, cluster, store,
                          policy=policy or doc.get('policy', config.policy),
                          mode=mode or doc.get('mode', config.mode),
                          requests_per_workflow=int(doc.get('requests_per_workflow', 1)),
                          rng_seed=rng_seed if rng_seed is not None else int(doc.get('seed', config.seed)),
                          composite_overhead_s=float(doc.get('composite_overhead_s', 0.0)),
                          jitter=float(doc.get('jitter', 0.0)),
                          config=config, partitions=partitions, plan=plan, name=doc.get('name', path.stem))
