"""
Mock leaf executors.

Real deployments hand leaves to serverless functions; everything here is in-process and
driven by the numpy Generator of the current execution so runs replay exactly.
"""
import logging as log

from beeflow.interpreter import FAILURE, SUCCESS, ExecStatus, ExecutorTable, LeafExecutor, LeafOutcome

FSM_GUARD = 'fsm.guard'
FSM_UPDATE = 'fsm.update'
FSM_INIT = 'fsm.init'
FSM_BODY = 'fsm.body'
FSM_KINDS = (FSM_GUARD, FSM_UPDATE, FSM_INIT)


class FixedExecutor(LeafExecutor):
    """Every leaf returns the same status after a fixed duration (leaf params may override it)."""

    def __init__(self, name='fixed', status=SUCCESS, duration=1.0):
        super().__init__(name)
        self.status = ExecStatus(status)
        self.duration = duration

    def invoke(self, leaf, function, payload, rng):
        return LeafOutcome(self.status, {}, float(leaf.params.get('duration', self.duration)))


class ScriptedExecutor(LeafExecutor):
    """
    Replays per-leaf status scripts: the k-th invocation of a leaf returns script[leaf][k],
    and the last entry repeats once the script runs out. Counters live on the instance,
    so use a fresh executor per execution.

    Example:
        ScriptedExecutor({'f': ['failure', 'failure', 'success']})
    """

    def __init__(self, script, name='scripted', default=SUCCESS, duration=1.0):
        super().__init__(name)
        self.script = {k: [ExecStatus(s) for s in v] for k, v in script.items()}
        self.default = ExecStatus(default)
        self.duration = duration
        self.calls = {}

    def invoke(self, leaf, function, payload, rng):
        k = self.calls.get(leaf.leaf_id, 0)
        self.calls[leaf.leaf_id] = k + 1
        statuses = self.script.get(leaf.leaf_id)
        status = statuses[min(k, len(statuses) - 1)] if statuses else self.default
        return LeafOutcome(status, {}, float(leaf.params.get('duration', self.duration)))


class RandomExecutor(LeafExecutor):
    """Fails with probability fail_prob; duration uniform in [min_duration, max_duration]."""

    def __init__(self, name='random', fail_prob=0.0, min_duration=0.5, max_duration=1.5):
        super().__init__(name)
        self.fail_prob = fail_prob
        self.min_duration = min_duration
        self.max_duration = max_duration

    def invoke(self, leaf, function, payload, rng):
        failed = rng.random() < self.fail_prob
        duration = rng.uniform(self.min_duration, self.max_duration)
        return LeafOutcome(FAILURE if failed else SUCCESS, {}, float(duration))


class ProfileExecutor(LeafExecutor):
    """Duration is the profile's four periods, failure drawn with the profile's fail_prob."""

    def __init__(self, profiles, name='profile'):
        super().__init__(name)
        self.profiles = profiles

    def invoke(self, leaf, function, payload, rng):
        profile = self.profiles[leaf.leaf_id]
        failed = profile.fail_prob > 0 and rng.random() < profile.fail_prob
        return LeafOutcome(FAILURE if failed else SUCCESS, {}, profile.total_delay_s)


# ---- selector structure of converted state machines ----

class FsmGuardExecutor(LeafExecutor):
    """Succeeds iff the selector variable names this guard's state."""

    def __init__(self, name=FSM_GUARD):
        super().__init__(name)

    def invoke(self, leaf, function, payload, rng):
        ok = payload.get(leaf.params.get('sel_key', 'SEL')) == leaf.params['state']
        return LeafOutcome(SUCCESS if ok else FAILURE, {}, 0.0)


class FsmUpdateExecutor(LeafExecutor):
    """Moves the selector along the transition row picked by the body's OUTCOME."""

    def __init__(self, name=FSM_UPDATE):
        super().__init__(name)

    def invoke(self, leaf, function, payload, rng):
        params = leaf.params
        sel_key, end_key = params.get('sel_key', 'SEL'), params.get('end_key', 'END')
        outcome = payload.get(params.get('outcome_key', 'OUTCOME'))
        transitions = params['transitions']
        if outcome not in transitions:
            log.warning(f"{leaf.leaf_id}: no transition for outcome {outcome!r}")
            return LeafOutcome(FAILURE, {}, 0.0)
        target = transitions[outcome]
        if target == params.get('end_marker', 'END'):
            return LeafOutcome(SUCCESS, {end_key: True}, 0.0)
        return LeafOutcome(SUCCESS, {sel_key: target, end_key: False}, 0.0)


class FsmInitExecutor(LeafExecutor):
    """Points a child state machine at its initial state."""

    def __init__(self, name=FSM_INIT):
        super().__init__(name)

    def invoke(self, leaf, function, payload, rng):
        params = leaf.params
        return LeafOutcome(SUCCESS, {params.get('sel_key', 'SEL'): params['initial'],
                                     params.get('end_key', 'END'): False}, 0.0)


class FsmBodyExecutor(LeafExecutor):
    """
    Mock state body: succeeds and reports one of the state's outcome labels, drawn
    uniformly with one rng.integers call per invocation.
    """

    def __init__(self, name=FSM_BODY, duration=1.0):
        super().__init__(name)
        self.duration = duration

    def invoke(self, leaf, function, payload, rng):
        outcomes = leaf.params.get('outcomes') or []
        if not outcomes:
            return LeafOutcome(SUCCESS, {}, self.duration)
        choice = outcomes[int(rng.integers(len(outcomes)))]
        return LeafOutcome(SUCCESS, {leaf.params.get('outcome_key', 'OUTCOME'): choice},
                           float(leaf.params.get('duration', self.duration)))


def fsm_table(body=None):
    """Executor table for converted state machines; body leaves use `body` (FsmBodyExecutor by default)."""
    table = ExecutorTable({FSM_GUARD: FsmGuardExecutor(), FSM_UPDATE: FsmUpdateExecutor(),
                           FSM_INIT: FsmInitExecutor()})
    table.register(ExecutorTable.WILDCARD, body or FsmBodyExecutor())
    return table


# ---- LLM-based program generation (mocked) ----

LLM_KINDS = ('llm.set_llm', 'llm.generate', 'llm.dry_run', 'llm.test_run', 'llm.select',
             'llm.actual_run', 'llm.update_context', 'llm.flat')


class LlmCodegenExecutor(LeafExecutor):
    """
    Stand-in for the LLM program-generation functions. Generated programs go to the data
    store and only their DataIds travel in the payload.

    Args:
        store (DataStore): Where generated programs are put.
        fail_probs (dict): executor_kind -> failure probability for the runs that can fail.
    """
    DEFAULT_FAIL_PROBS = {'llm.dry_run': 0.3, 'llm.test_run': 0.3, 'llm.actual_run': 0.2}

    def __init__(self, store, name='llm-codegen', fail_probs=None):
        super().__init__(name)
        self.store = store
        self.fail_probs = dict(self.DEFAULT_FAIL_PROBS, **(fail_probs or {}))

    def _fails(self, kind, rng):
        return rng.random() < self.fail_probs.get(kind, 0.0)

    def invoke(self, leaf, function, payload, rng):
        kind = function.executor_kind
        params = leaf.params
        duration = float(params.get('duration', 1.0))
        updates = {}
        status = SUCCESS

        if kind == 'llm.set_llm':
            updates['LLM'] = params.get('model', 'llm')
        elif kind == 'llm.generate':
            attempt = int(payload.get('ATTEMPT', 0)) + 1
            code = f"# generated by {payload.get('LLM')} attempt {attempt}\n"
            if payload.get('CONTEXT'):
                code += f"# context: {payload['CONTEXT']}\n"
            updates['PROGRAM'] = self.store.put(code.encode('utf-8'))
            updates['ATTEMPT'] = attempt
        elif kind in ('llm.dry_run', 'llm.actual_run'):
            if 'PROGRAM' not in payload or self._fails(kind, rng):
                status = FAILURE
        elif kind == 'llm.test_run':
            if 'PROGRAM' not in payload or self._fails(kind, rng):
                status = FAILURE
            else:
                updates['SCORE'] = round(float(rng.random()), 6)
        elif kind == 'llm.flat':
            # 把分支结果换成带分支名的 key，合并时两个分支互不覆盖
            branch = params['branch']
            if 'PROGRAM' in payload and 'SCORE' in payload:
                updates[f'PROGRAM_{branch}'] = payload['PROGRAM']
                updates[f'SCORE_{branch}'] = payload['SCORE']
            else:
                status = FAILURE
        elif kind == 'llm.select':
            scored = sorted((payload[k], k[len('SCORE_'):]) for k in payload if k.startswith('SCORE_'))
            if scored:
                best = scored[-1][1]
                updates['PROGRAM'] = payload[f'PROGRAM_{best}']
                updates['SELECTED'] = best
            else:
                status = FAILURE
        elif kind == 'llm.update_context':
            updates['CONTEXT'] = f"run failed after attempt {payload.get('ATTEMPT', 0)}"
            status = FAILURE
        else:
            raise ValueError(f"Unknown executor kind: {kind}")

        return LeafOutcome(status, updates, duration)


def llm_codegen_table(store, fail_probs=None):
    executor = LlmCodegenExecutor(store, fail_probs=fail_probs)
    return ExecutorTable({kind: executor for kind in LLM_KINDS})


def default_table(store=None):
    """Executors for everything bundled: state machines, LLM codegen, and `mock` leaves."""
    table = fsm_table(body=FixedExecutor())
    table.register('mock', FixedExecutor())
    table.register(FSM_BODY, FsmBodyExecutor())
    if store is not None:
        for kind in LLM_KINDS:
            table.register(kind, LlmCodegenExecutor(store))
    return table
