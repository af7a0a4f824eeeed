"""
Placement-policy comparison harness.

Every (scenario, placer) pair is partitioned, placed and simulated with fixed seeds; the
resulting table and a verdict against the acceptance thresholds are written as
comparison.csv and verdict.json. Results are merged by key so running the grid in a
process pool gives the same files as running it serially.
"""
import logging as log
import math
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from beeflow.config import BeeFlowConfig
from beeflow.partitioner import partition
from beeflow.placer import ClusterSpec, get_placer, leaf_functions, penalty
from beeflow.shapes import SHAPES, shape_workflow
from beeflow.simulator import CORUN, build_scenario, simulate
from beeflow.traces import align
from beeflow.utils import write_json

BENCH_PLACERS = ('contention-aware', 'round-robin', 'random', 'colocate-all')
ROW_FIELDS = ['scenario', 'policy', 'median_latency_s', 'max_node_cost', 'total_penalty', 'tx_ratio']
ComparisonRow = namedtuple('ComparisonRow', ROW_FIELDS)

# thresholds of the verdict
MIN_WIN_SHARE = 0.9
MAX_COST_RATIO = 1.10
MAX_TX_RATIO_SHARE = 0.5

# placement study instance sizes
MIN_STUDY_NODES, MAX_STUDY_NODES = 3, 9
MIN_STUDY_SUBPATHS, MAX_STUDY_SUBPATHS = 6, 24


@dataclass
class BenchScenario:
    """
    Attributes:
        workflows (list): (WorkflowDef, profiles) pairs.
        io_heavy (bool): The transmission-balance check applies to this scenario.
    """
    name: str
    workflows: list
    cluster: ClusterSpec
    mode: str = CORUN
    requests_per_workflow: int = 2
    seed: int = 0
    io_heavy: bool = False
    loops: dict = field(default_factory=dict)


def default_suite(width=2, requests_per_workflow=2):
    """The bundled comparison scenarios, scaled for a desk run."""
    def shapes(names, io_scale=1.0):
        return [shape_workflow(name, width, io_scale) for name in names]

    return [
        BenchScenario('shapes-corun', shapes(sorted(SHAPES)), ClusterSpec.uniform(3), CORUN, requests_per_workflow),
        BenchScenario('io-heavy', shapes(['vid', 'cyc'], io_scale=4.0), ClusterSpec.uniform(3, io_bw_Bps=50e6),
                      CORUN, requests_per_workflow, io_heavy=True),
        BenchScenario('single-node', shapes(['wc', 'fp']), ClusterSpec.uniform(1, cpu_cores=8), CORUN,
                      requests_per_workflow),
    ]


def tx_ratio(transmitted):
    """max / min bytes moved per node; inf when some node moved nothing but another did."""
    values = list(transmitted.values())
    if not values or max(values) <= 0:
        return 1.0
    low = min(values)
    return math.inf if low <= 0 else max(values) / low


def run_one(scenario, placer, config=None):
    trees = [tree for tree, _ in scenario.workflows]
    sim_scenario = build_scenario(
        trees, scenario.cluster, policy='io-contention', placer=placer, mode=scenario.mode,
        requests_per_workflow=scenario.requests_per_workflow, rng_seed=scenario.seed, config=config,
        profiles={tree.workflow_id: profiles for tree, profiles in scenario.workflows},
        loops={tree.workflow_id: scenario.loops.get(tree.workflow_id, {}) for tree in trees},
        name=f"{scenario.name}/{placer}")
    report = simulate(sim_scenario)
    latencies = [r.latency_s for r in report.per_request]
    plan = sim_scenario.plan
    return ComparisonRow(scenario.name, placer, float(np.median(latencies)), plan.max_node_cost(),
                         plan.total_cost, tx_ratio(report.transmitted_bytes()))


def _run_job(job):
    scenario, placer, config = job
    return run_one(scenario, placer, config)


def run_comparison(scenarios, placers=BENCH_PLACERS, workers=1, config=None, progress=True):
    """
    Places and simulates every scenario under every placer.

    Returns:
        pandas.DataFrame: One ComparisonRow per (scenario, placer), in scenario then placer order.
    """
    jobs = [(s, p, config) for s in scenarios for p in placers]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(tqdm(pool.map(_run_job, jobs), total=len(jobs), disable=not progress, desc='bench'))
    else:
        rows = [_run_job(job) for job in tqdm(jobs, disable=not progress, desc='bench')]
    scenario_rank = {s.name: i for i, s in enumerate(scenarios)}
    placer_rank = {p: i for i, p in enumerate(placers)}
    rows.sort(key=lambda r: (scenario_rank[r.scenario], placer_rank[r.policy]))
    return pd.DataFrame(rows, columns=ROW_FIELDS)


def cross_subpath_overlap(plan, partitions, timelines):
    """
    I/O overlap between different subpaths in a plan: its total cost above the cost every
    subpath would have on a node of its own.
    """
    alone = sum(penalty({r.workflow_id: list(sp.leaves)}, timelines) for r in partitions for sp in r.subpaths)
    return plan.total_cost - alone


def study_instance(rng, config, names):
    """Random shapes added until the subpath count reaches a target between 6 and 24."""
    target = int(rng.integers(MIN_STUDY_SUBPATHS, MAX_STUDY_SUBPATHS + 1))
    workflows, profiles, partitions = {}, {}, []
    total = 0
    for i in range(100):
        if total >= target:
            break
        name = str(rng.choice(names))
        tree, prof = shape_workflow(name, int(rng.integers(2, 4)), float(rng.uniform(0.5, 4.0)),
                                    workflow_id=f"{name}{i}")
        result = partition(tree, prof, {}, 'io-contention', config)
        if total + len(result.subpaths) > MAX_STUDY_SUBPATHS:
            continue
        workflows[tree.workflow_id] = tree
        profiles[tree.workflow_id] = prof
        partitions.append(result)
        total += len(result.subpaths)
    if total < MIN_STUDY_SUBPATHS:
        log.warning(f"placement study instance stopped at {total} subpaths")
    return workflows, profiles, partitions


def placement_quality_study(instances=100, seed=0, progress=False):
    """
    Contention-aware against round-robin and colocate-all on seeded random instances:
    benchmark shapes with random I/O scales, 6 to 24 subpaths in all, on 3 to 9 nodes.

    Returns:
        dict: instances, wins (contention-aware max node cost <= round-robin's), worst cost
        ratio, overlap_instances (colocate-all put overlapping I/O of different subpaths on
        one node) and colocate_largest (of those, how often colocate-all had strictly the
        largest total penalty).
    """
    config = BeeFlowConfig()
    names = sorted(SHAPES)
    wins, worst, overlapping, colocate_largest = 0, 0.0, 0, 0
    for k in tqdm(range(instances), disable=not progress, desc='placement study'):
        rng = np.random.default_rng(seed + k)
        workflows, profiles, partitions = study_instance(rng, config, names)
        cluster = ClusterSpec.uniform(int(rng.integers(MIN_STUDY_NODES, MAX_STUDY_NODES + 1)),
                                      cpu_cores=16, mem_bytes=16 * 1024 ** 3)
        timelines = {w: align(t, profiles[w]) for w, t in workflows.items()}
        functions = leaf_functions(workflows)
        plans = {name: get_placer(name, seed + k).place(partitions, timelines, cluster, functions)
                 for name in ('contention-aware', 'round-robin', 'colocate-all')}

        aware, rr = plans['contention-aware'].max_node_cost(), plans['round-robin'].max_node_cost()
        if aware <= rr + 1e-9:
            wins += 1
        if rr > 0:
            worst = max(worst, aware / rr)
        colocate = plans['colocate-all']
        if cross_subpath_overlap(colocate, partitions, timelines) > 1e-9:
            overlapping += 1
            others = max(plans['contention-aware'].total_cost, plans['round-robin'].total_cost)
            if others < colocate.total_cost - 1e-9:
                colocate_largest += 1
    return {'instances': instances, 'wins': wins, 'worst_cost_ratio': worst,
            'overlap_instances': overlapping, 'colocate_largest': colocate_largest}


def scenario_overlaps(scenario, config=None):
    """Whether colocate-all puts overlapping I/O of different subpaths on one node of a multi-node cluster."""
    if len(scenario.cluster.nodes) < 2:
        return False
    trees = [tree for tree, _ in scenario.workflows]
    built = build_scenario(trees, scenario.cluster, policy='io-contention', placer='colocate-all', config=config,
                           profiles={tree.workflow_id: profiles for tree, profiles in scenario.workflows},
                           loops={tree.workflow_id: scenario.loops.get(tree.workflow_id, {}) for tree in trees})
    timelines = {t.workflow_id: align(t, built.profiles[t.workflow_id], built.loops[t.workflow_id]) for t in trees}
    partitions = [built.partitions[t.workflow_id] for t in trees]
    return cross_subpath_overlap(built.plan, partitions, timelines) > 1e-9


def verdict(table, study=None, io_heavy=('io-heavy',), overlapping=None):
    """
    Checks a comparison table (and optionally a placement study) against the acceptance thresholds.

    colocate-all must have strictly the largest total penalty in the scenarios named by
    overlapping, and no smaller one anywhere. Without overlapping, a scenario counts as
    overlapping when some policy got a lower penalty than colocate-all.
    """
    checks = {}
    for name, rows in table.groupby('scenario', sort=False):
        by_policy = rows.set_index('policy')
        scenario_checks = {}
        if {'contention-aware', 'round-robin'} <= set(by_policy.index):
            scenario_checks['cost_not_worse_than_round_robin'] = bool(
                by_policy.loc['contention-aware', 'max_node_cost']
                <= by_policy.loc['round-robin', 'max_node_cost'] * MAX_COST_RATIO + 1e-9)
        if 'colocate-all' in by_policy.index:
            colocate = by_policy.loc['colocate-all', 'total_penalty']
            rest = by_policy.drop(index='colocate-all')['total_penalty']
            overlap = name in overlapping if overlapping is not None else bool((rest < colocate - 1e-9).any())
            if overlap:
                scenario_checks['colocate_all_largest_penalty'] = bool((rest < colocate - 1e-9).all())
            else:
                scenario_checks['colocate_all_largest_penalty'] = bool((rest <= colocate + 1e-9).all())
            if name in io_heavy and 'contention-aware' in by_policy.index:
                aware = by_policy.loc['contention-aware', 'tx_ratio']
                scenario_checks['tx_balance'] = bool(aware <= MAX_TX_RATIO_SHARE * by_policy.loc['colocate-all',
                                                                                              'tx_ratio'])
        checks[name] = scenario_checks
    result = {'scenarios': checks}
    if study is not None:
        result['placement_study'] = dict(study, passed=bool(
            study['wins'] >= MIN_WIN_SHARE * study['instances'] and study['worst_cost_ratio'] <= MAX_COST_RATIO
            and study['colocate_largest'] == study.get('overlap_instances', study['instances'])))
    result['passed'] = all(all(c.values()) for c in checks.values()) and \
        result.get('placement_study', {}).get('passed', True)
    return result


def _json_safe(value):
    if isinstance(value, float) and math.isinf(value):
        return 'inf'
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    return value


def run_suite(out_dir, suite='default', workers=1, instances=100, seed=0, wandb_project=None, config=None):
    """Runs a named suite and writes comparison.csv and verdict.json to out_dir."""
    if suite != 'default':
        raise ValueError(f"Unknown suite: {suite}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenarios = default_suite()
    table = run_comparison(scenarios, workers=workers, config=config)
    study = placement_quality_study(instances, seed, progress=True) if instances else None
    overlapping = [s.name for s in scenarios if scenario_overlaps(s, config)]
    result = verdict(table, study, io_heavy=[s.name for s in scenarios if s.io_heavy], overlapping=overlapping)

    table.to_csv(out_dir / 'comparison.csv', index=False)
    write_json(_json_safe(result), out_dir / 'verdict.json')
    log.info(f"bench verdict: {'passed' if result['passed'] else 'FAILED'}")

    if wandb_project:
        import wandb
        run = wandb.init(project=wandb_project, name=f"bench-{suite}")
        wandb.log({'comparison': wandb.Table(dataframe=table.replace([math.inf], -1.0)),
                   'passed': result['passed']})
        run.finish()
    return table, result
