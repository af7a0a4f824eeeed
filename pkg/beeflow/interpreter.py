"""
Composite semantics of behavior trees and the synchronous interpreter.

The control flow of every composite lives in one generator, TreeWalker.walk. It yields
requests (invoke this leaf, fork these branches, these leaves were skipped) and is driven
either by the logical-clock Interpreter below or by the cluster simulator, so both see
exactly the same sequence/fallback/parallel/decorator behaviour.
"""
import logging as log
from collections import namedtuple
from enum import Enum

import numpy as np

from beeflow.behavior_tree import (DECORATOR, FALLBACK, LEAF, PARALLEL, SEQUENCE, AggSpec,
                                   TailSpec)
from beeflow.config import MiB
from beeflow.dataplane import check_payload
from beeflow.utils import DomainError


class ExecStatus(str, Enum):
    SUCCESS = 'success'
    FAILURE = 'failure'

    def inverted(self):
        return ExecStatus.FAILURE if self is ExecStatus.SUCCESS else ExecStatus.SUCCESS

SUCCESS = ExecStatus.SUCCESS
FAILURE = ExecStatus.FAILURE


class UnresolvedExecutor(DomainError):
    def __init__(self, function_id, executor_kind=None):
        super().__init__(f"no executor for function {function_id!r} (kind {executor_kind!r})")
        self.function_id = function_id

class AggUndefined(DomainError):
    def __init__(self, name):
        super().__init__(f"agg {name!r} is not registered")
        self.name = name

class TailUndefined(DomainError):
    def __init__(self, name):
        super().__init__(f"tail {name!r} is not registered")
        self.name = name

class PayloadLimitExceeded(DomainError):
    def __init__(self, leaf_id, size, limit):
        super().__init__(f"payload after leaf {leaf_id} is {size} bytes, limit {limit}")
        self.leaf_id = leaf_id
        self.size = size
        self.limit = limit


# ---- agg / tail ----

TailDecision = namedtuple('TailDecision', ['reenter', 'status'])
REENTER = TailDecision(True, None)

def Return(status):
    return TailDecision(False, ExecStatus(status))


AGG_REGISTRY = {}
TAIL_REGISTRY = {}

def register_agg(name):
    """Registers fn(results) -> ExecStatus under a name usable as AggSpec.named(name)."""
    def wrap(fn):
        AGG_REGISTRY[name] = fn
        return fn
    return wrap

def register_tail(name):
    """Registers fn(result, payload, iteration) -> TailDecision for TailSpec.named(name)."""
    def wrap(fn):
        TAIL_REGISTRY[name] = fn
        return fn
    return wrap


@register_agg('any_succeed')
def _any_succeed(results):
    return SUCCESS if SUCCESS in results else FAILURE

@register_agg('always_succeed')
def _always_succeed(results):
    return SUCCESS

@register_tail('force_success')
def _force_success(result, payload, iteration):
    return Return(SUCCESS)

@register_tail('force_failure')
def _force_failure(result, payload, iteration):
    return Return(FAILURE)


def eval_agg(spec, results):
    """
    Aggregates the result vector of a parallel composite.

    Args:
        spec (AggSpec): The parallel's agg.
        results (list[ExecStatus]): One result per child, in child order.

    Returns:
        ExecStatus

    Raises:
        AggUndefined: If a named agg is not registered.
    """
    if not results:
        raise ValueError("eval_agg needs at least one result")
    spec = spec or AggSpec.all_succeed()
    if spec.kind == AggSpec.ALL_SUCCEED:
        return SUCCESS if all(r == SUCCESS for r in results) else FAILURE
    if spec.kind == AggSpec.M_OUT_OF_N:
        return SUCCESS if sum(r == SUCCESS for r in results) >= spec.m else FAILURE
    if spec.kind == AggSpec.NAMED:
        if spec.name not in AGG_REGISTRY:
            raise AggUndefined(spec.name)
        return ExecStatus(AGG_REGISTRY[spec.name](list(results)))
    raise AggUndefined(spec.kind)


def eval_tail(spec, subtree_result, payload, iteration):
    """
    Decides whether a decorator re-enters its child.

    Args:
        spec (TailSpec): The decorator's tail.
        subtree_result (ExecStatus): Result of the pass that just finished.
        payload (dict): Payload after that pass.
        iteration (int): 1-based number of that pass.

    Returns:
        TailDecision: REENTER, or Return(status).
    """
    if iteration < 1:
        raise ValueError(f"iteration must be >= 1, got {iteration}")
    spec = spec or TailSpec.once()
    subtree_result = ExecStatus(subtree_result)
    if spec.kind == TailSpec.ONCE:
        return Return(subtree_result)
    if spec.kind == TailSpec.NEGATE:
        return Return(subtree_result.inverted())
    if spec.kind == TailSpec.RETRY:
        if subtree_result == FAILURE and iteration < spec.max_n:
            return REENTER
        return Return(subtree_result)
    if spec.kind == TailSpec.LOOP_TILL_END:
        return Return(subtree_result) if payload.get(spec.flag_key) else REENTER
    if spec.kind == TailSpec.NAMED:
        if spec.name not in TAIL_REGISTRY:
            raise TailUndefined(spec.name)
        return TAIL_REGISTRY[spec.name](subtree_result, payload, iteration)
    raise TailUndefined(spec.kind)


class DeclaredTails:
    """Applies each decorator's own TailSpec."""

    def decide(self, node, result, payload, iteration):
        return eval_tail(node.tail, result, payload, iteration)


# ---- executors ----

LeafOutcome = namedtuple('LeafOutcome', ['status', 'updates', 'duration'])


class LeafExecutor:
    def __init__(self, name):
        """
        Initialize the LeafExecutor with a specific name
        """
        self.name = name

    def invoke(self, leaf, function, payload, rng) -> LeafOutcome:
        """
        Runs one leaf. Returns its status, the payload keys it writes and its duration
        in logical seconds. rng is the numpy Generator of the current execution.
        """
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class ExecutorTable:
    """
    Maps executor_kind -> LeafExecutor. The '*' entry, when present, serves every kind
    that has no entry of its own.
    """
    WILDCARD = '*'

    def __init__(self, executors=None):
        self.executors = dict(executors or {})

    @classmethod
    def single(cls, executor):
        return cls({cls.WILDCARD: executor})

    def register(self, kind, executor):
        self.executors[kind] = executor
        return self

    def resolve(self, executor_kind):
        return self.executors.get(executor_kind, self.executors.get(self.WILDCARD))

    def resolve_function(self, function):
        executor = self.resolve(function.executor_kind)
        if executor is None:
            raise UnresolvedExecutor(function.function_id, function.executor_kind)
        return executor


def as_table(executor):
    return executor if isinstance(executor, ExecutorTable) else ExecutorTable.single(executor)


# ---- the walker ----

InvokeLeaf = namedtuple('InvokeLeaf', ['leaf', 'payload', 'iteration'])
Fork = namedtuple('Fork', ['node', 'branches'])
Skip = namedtuple('Skip', ['leaf_ids'])
EnterComposite = namedtuple('EnterComposite', ['node'])


class TreeWalker:
    """
    Generator-based evaluation of the composites.

    walk() yields:
        InvokeLeaf: the driver runs the leaf and sends back a LeafOutcome.
        Fork: the driver runs every branch generator and sends back their (status, payload)
            results in branch order.
        Skip: leaves not attempted in this pass; the driver logs them, sends back None.
        EnterComposite: a composite starts a pass; the driver may charge overhead, sends None.
    and finally returns (ExecStatus, payload).
    """

    def __init__(self, tree, tails=None, payload_limit=MiB):
        self.tree = tree
        self.tails = tails or DeclaredTails()
        self.payload_limit = payload_limit

    def _skipped(self, nodes):
        return [leaf_id for n in nodes for leaf_id in self.tree.leaf_ids(n.node_id)]

    def walk(self, node=None, payload=None, iteration=0):
        node = node or self.tree.root
        payload = {} if payload is None else payload

        if node.kind == LEAF:
            outcome = yield InvokeLeaf(node, payload, iteration)
            merged = dict(payload)
            merged.update(outcome.updates or {})
            if self.payload_limit is not None:
                check = check_payload(merged, self.payload_limit)
                if not check.ok:
                    raise PayloadLimitExceeded(node.leaf_id, check.size, check.limit)
            return ExecStatus(outcome.status), merged

        yield EnterComposite(node)

        if node.kind == SEQUENCE or node.kind == FALLBACK:
            stop_on = FAILURE if node.kind == SEQUENCE else SUCCESS
            status = SUCCESS if node.kind == SEQUENCE else FAILURE
            for i, child in enumerate(node.children):
                status, payload = yield from self.walk(child, payload, iteration)
                if status == stop_on:
                    rest = self._skipped(node.children[i + 1:])
                    if rest:
                        yield Skip(rest)
                    break
            return status, payload

        if node.kind == PARALLEL:
            snapshot = payload
            branches = [self.walk(child, dict(snapshot), iteration) for child in node.children]
            results = yield Fork(node, branches)
            merged = dict(snapshot)
            # 按 child 顺序合并各分支改动过的 key，后面的覆盖前面的
            for _, child_payload in results:
                for key, value in child_payload.items():
                    if key not in snapshot or snapshot[key] != value:
                        merged[key] = value
            return eval_agg(node.agg, [status for status, _ in results]), merged

        if node.kind == DECORATOR:
            n = 1
            while True:
                status, payload = yield from self.walk(node.child, payload, n)
                decision = self.tails.decide(node, status, payload, n)
                if not decision.reenter:
                    return decision.status, payload
                n += 1

        raise ValueError(f"cannot walk node type {node.kind!r}")


# ---- synchronous interpreter ----

LogEntry = namedtuple('LogEntry', ['index', 'leaf_id', 'function_id', 'status', 'skipped',
                                   'start', 'end', 'iteration'])
ExecutionResult = namedtuple('ExecutionResult', ['status', 'payload', 'log', 'truncated'])


class _BudgetExhausted(Exception):
    pass


class Interpreter:
    """
    Runs a workflow on a logical clock. Leaves take the duration their executor reports,
    composites take no time, parallel branches all start when the parallel starts and the
    parallel ends when its slowest branch ends. Branches are driven left to right, so logs
    are deterministic for a given seed.
    """

    def __init__(self, tree, executor, rng_seed=0, payload_limit=MiB, max_steps=None):
        self.tree = tree
        self.executors = as_table(executor)
        self.rng_seed = rng_seed
        self.walker = TreeWalker(tree, payload_limit=payload_limit)
        self.max_steps = max_steps

    def run(self, initial=None):
        for function_id in sorted({n.function_id for n in self.tree.leaves.values()}):
            if function_id in self.tree.functions:
                self.executors.resolve_function(self.tree.functions[function_id])
        self._rng = np.random.default_rng(self.rng_seed)
        self._log = []
        self._steps = 0
        self._last_payload = dict(initial or {})
        try:
            (status, payload), _ = self._drive(self.walker.walk(self.tree.root, dict(initial or {})), 0.0)
        except _BudgetExhausted:
            log.debug(f"{self.tree.workflow_id}: step budget {self.max_steps} exhausted")
            return ExecutionResult(FAILURE, self._last_payload, self._log, True)
        return ExecutionResult(status, payload, self._log, False)

    def _append(self, leaf_node, status, skipped, start, end, iteration):
        self._log.append(LogEntry(len(self._log), leaf_node.leaf_id, leaf_node.function_id,
                                  status, skipped, start, end, iteration))

    def _drive(self, gen, clock):
        reply = None
        while True:
            try:
                request = gen.send(reply)
            except StopIteration as stop:
                return stop.value, clock
            reply = None

            if isinstance(request, InvokeLeaf):
                self._steps += 1
                if self.max_steps is not None and self._steps > self.max_steps:
                    raise _BudgetExhausted()
                node = request.leaf
                function = self.tree.functions[node.function_id]
                executor = self.executors.resolve_function(function)
                outcome = executor.invoke(node, function, dict(request.payload), self._rng)
                outcome = LeafOutcome(ExecStatus(outcome.status), outcome.updates or {}, float(outcome.duration))
                self._append(node, outcome.status, False, clock, clock + outcome.duration, request.iteration)
                clock += outcome.duration
                self._last_payload = {**request.payload, **outcome.updates}
                reply = outcome
            elif isinstance(request, Fork):
                results, ends = [], []
                for branch in request.branches:
                    result, end = self._drive(branch, clock)
                    results.append(result)
                    ends.append(end)
                clock = max(ends)
                reply = results
            elif isinstance(request, Skip):
                for leaf_id in request.leaf_ids:
                    self._append(self.tree.leaves[leaf_id], None, True, clock, clock, 0)


def execute(tree, initial, executor, rng_seed=0, payload_limit=MiB, max_steps=None):
    """
    Interprets a workflow once.

    Args:
        tree (WorkflowDef): A valid workflow.
        initial (dict): Initial payload.
        executor (LeafExecutor | ExecutorTable): Resolves every function's executor_kind.
        rng_seed (int): Seed of the numpy Generator handed to executors.
        payload_limit (int): Serialized payload limit in bytes, None to disable.
        max_steps (int): Leaf-invocation budget; exhausting it returns truncated=True.

    Returns:
        ExecutionResult: (status, payload, log, truncated).

    Raises:
        UnresolvedExecutor, AggUndefined, TailUndefined, PayloadLimitExceeded
    """
    return Interpreter(tree, executor, rng_seed, payload_limit, max_steps).run(initial)
