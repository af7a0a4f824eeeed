"""
beeflow command line.

    beeflow validate WORKFLOW
    beeflow convert --from {dag,fsm} IN OUT
    beeflow partition WORKFLOW [--traces T ...] [--policy P] --out FILE
    beeflow place PARTITION ... --workflows W ... --cluster C [--traces T ...] --out FILE
    beeflow simulate SCENARIO --out DIR [--mode M] [--seed N] [--plot]
    beeflow refresh SCENARIO --traces T ... --out DIR
    beeflow bench [--suite default] --out DIR [--workers N]

Exit codes: 0 success, 1 the input is well-formed but cannot be handled, 2 usage or parse error.
"""
import argparse
import dataclasses
import logging as log
import sys
from dataclasses import dataclass, field
from pathlib import Path

from beeflow.behavior_tree import dump_workflow, load_workflow, validate
from beeflow.config import load_config
from beeflow.converters import dag_to_bt, fsm_to_bt, load_dag, load_fsm
from beeflow.partitioner import POLICIES, dump_partition, load_partition, partition
from beeflow.placer import PLACERS, dump_plan, get_placer, leaf_functions, load_cluster
from beeflow.simulator import (MODES, build_scenario, export_gantt, latency_summary, load_scenario,
                               node_tx_frame, report_to_dict, report_to_traces, simulate)
from beeflow.traces import TraceStore, align, dump_traces, estimate, load_traces
from beeflow.utils import DomainError, InputFormatError, setup_logging, write_json

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


@dataclass
class RunManifest:
    """What a run read and wrote, saved next to its outputs."""
    command: str
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    policy: str = None
    mode: str = None
    seed: int = None

    def write(self, out_dir):
        return write_json(dataclasses.asdict(self), Path(out_dir) / 'manifest.json')


def _store(paths):
    return load_traces(*paths) if paths else TraceStore()


def cmd_validate(args, config):
    tree = load_workflow(args.workflow)
    violations = validate(tree)
    for v in violations:
        print(f"{v.node_id}: {v.code}: {v.message}")
    if violations:
        return EXIT_DOMAIN
    print(f"{tree.workflow_id}: valid ({len(tree.leaves)} leaves, {len(tree.nodes)} nodes)")
    return EXIT_OK


def cmd_convert(args, config):
    tree = dag_to_bt(load_dag(args.input)) if args.source == 'dag' else fsm_to_bt(load_fsm(args.input))
    violations = validate(tree)
    if violations:
        raise DomainError(f"converted tree is invalid: {violations}")
    dump_workflow(tree, args.output)
    log.info(f"wrote {tree.workflow_id} ({len(tree.nodes)} nodes) to {args.output}")
    return EXIT_OK


def _require_valid(tree):
    violations = validate(tree)
    if violations:
        raise DomainError(f"{tree.workflow_id} is invalid: " + '; '.join(f"{v.node_id} {v.code}" for v in violations))
    return tree


def cmd_partition(args, config):
    tree = _require_valid(load_workflow(args.workflow))
    estimated = estimate(_store(args.traces), tree, config)
    result = partition(tree, estimated.profiles, estimated.loops, args.policy or config.policy, config)
    dump_partition(result, args.out)
    for sp in result.subpaths:
        print(f"{sp.subpath_id}: {' '.join(sp.leaves)}")
    return EXIT_OK


def cmd_place(args, config):
    store = _store(args.traces)
    trees = {}
    for path in args.workflows:
        tree = _require_valid(load_workflow(path))
        trees[tree.workflow_id] = tree
    partitions = [load_partition(p) for p in args.partitions]
    timelines = {}
    for result in partitions:
        if result.workflow_id not in trees:
            raise DomainError(f"no workflow file given for partition of {result.workflow_id}")
        estimated = estimate(store, trees[result.workflow_id], config)
        timelines[result.workflow_id] = align(trees[result.workflow_id], estimated.profiles, estimated.loops)
    plan = get_placer(args.placer, args.seed if args.seed is not None else config.seed).place(
        partitions, timelines, load_cluster(args.cluster), leaf_functions(trees))
    dump_plan(plan, args.out)
    for node_id, cost in plan.per_node_cost.items():
        print(f"{node_id}: {cost:.6f}")
    return EXIT_OK


def _write_report(report, out_dir, plot=False):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(report_to_dict(report), out_dir / 'report.json')
    export_gantt(report, out_dir / 'gantt.csv')
    node_tx_frame(report).to_csv(out_dir / 'node_tx.csv', index=False)
    outputs = ['report.json', 'gantt.csv', 'node_tx.csv']
    if plot:
        from beeflow.plotting import plot_gantt, plot_node_tx
        plot_gantt(report, out_dir / 'gantt.png')
        plot_node_tx(report, out_dir / 'node_tx.png')
        outputs += ['gantt.png', 'node_tx.png']
    return outputs


def cmd_simulate(args, config):
    scenario = load_scenario(args.scenario, config, mode=args.mode, rng_seed=args.seed)
    if args.requests:
        scenario = dataclasses.replace(scenario, requests_per_workflow=args.requests)
    report = simulate(scenario, config.tx_window_s)
    outputs = _write_report(report, args.out, args.plot)
    dump_plan(scenario.plan, Path(args.out) / 'plan.json')
    print(latency_summary(report).to_string(index=False))
    RunManifest('simulate', {'scenario': str(args.scenario)}, outputs + ['plan.json'], None,
                scenario.mode, scenario.rng_seed).write(args.out)
    return EXIT_OK


def cmd_refresh(args, config):
    """One batch iteration: simulate, emit traces, re-estimate, re-partition, re-place."""
    extra = load_traces(*args.traces)
    scenario = load_scenario(args.scenario, config, rng_seed=args.seed, extra_traces=extra)
    report = simulate(scenario, config.tx_window_s)

    store = TraceStore(extra)
    for record in report_to_traces(report):
        store.add(record)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_traces(report_to_traces(report), out_dir / 'traces.jsonl')

    policy = args.policy or config.policy
    refreshed = build_scenario(scenario.workflows, scenario.cluster, store, policy=policy,
                               requests_per_workflow=scenario.requests_per_workflow,
                               rng_seed=scenario.rng_seed, config=config, name=scenario.name)
    outputs = ['traces.jsonl', 'plan.json']
    for tree in refreshed.workflows:
        name = f"partition_{tree.workflow_id}.json"
        dump_partition(refreshed.partitions[tree.workflow_id], out_dir / name)
        outputs.append(name)
    dump_plan(refreshed.plan, out_dir / 'plan.json')
    changed = sorted(k for k, v in refreshed.plan.assignments.items() if scenario.plan.assignments.get(k) != v)
    log.info(f"refresh moved {len(changed)} subpaths: {changed}")
    RunManifest('refresh', {'scenario': str(args.scenario), 'traces': [str(t) for t in args.traces]},
                outputs, policy, scenario.mode, scenario.rng_seed).write(out_dir)
    return EXIT_OK


def cmd_bench(args, config):
    from beeflow.bench import run_suite
    table, result = run_suite(args.out, args.suite, args.workers, args.instances,
                              args.seed if args.seed is not None else config.seed, args.wandb_project, config)
    print(table.to_string(index=False))
    RunManifest('bench', {'suite': args.suite}, ['comparison.csv', 'verdict.json'],
                seed=args.seed).write(args.out)
    return EXIT_OK if result['passed'] else EXIT_DOMAIN


def build_parser():
    parser = argparse.ArgumentParser(prog='beeflow', description='Partition, place and simulate behavior-tree workflows.')
    parser.add_argument('--log-level', default='INFO', help='logging level (default INFO)')
    parser.add_argument('--log-file', default=None, help='also write log lines to this file')
    parser.add_argument('--config', default=None, help='JSON defaults file (default $BEEFLOW_CONFIG)')
    parser.add_argument('--payload-limit', type=int, default=None, help='serialized payload limit in bytes')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('validate', help='check a workflow file')
    p.add_argument('workflow')
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser('convert', help='convert a DAG or state machine into a workflow')
    p.add_argument('--from', dest='source', choices=['dag', 'fsm'], required=True)
    p.add_argument('input')
    p.add_argument('output')
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser('partition', help='partition a workflow into subpaths')
    p.add_argument('workflow')
    p.add_argument('--traces', nargs='*', default=[])
    p.add_argument('--policy', choices=sorted(POLICIES), default=None)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser('place', help='place partitioned workflows on a cluster')
    p.add_argument('partitions', nargs='+')
    p.add_argument('--workflows', nargs='+', required=True)
    p.add_argument('--cluster', required=True)
    p.add_argument('--traces', nargs='*', default=[])
    p.add_argument('--placer', choices=sorted(PLACERS), default='contention-aware')
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_place)

    p = sub.add_parser('simulate', help='simulate a scenario')
    p.add_argument('scenario')
    p.add_argument('--out', required=True)
    p.add_argument('--mode', choices=MODES, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--requests', type=int, default=None, help='override requests per workflow')
    p.add_argument('--plot', action='store_true', help='also draw gantt.png and node_tx.png')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('refresh', help='re-partition and re-place from simulated traces')
    p.add_argument('scenario')
    p.add_argument('--traces', nargs='+', required=True)
    p.add_argument('--policy', choices=sorted(POLICIES), default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_refresh)

    p = sub.add_parser('bench', help='compare placement policies')
    p.add_argument('--suite', default='default')
    p.add_argument('--out', required=True)
    p.add_argument('--workers', type=int, default=1)
    p.add_argument('--instances', type=int, default=100, help='random instances of the placement study')
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--wandb-project', default=None, help='also log the comparison to this wandb project')
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.log_file)
    try:
        config = load_config(args.config).replace(payload_limit_bytes=args.payload_limit)
        return args.func(args, config)
    except InputFormatError as e:
        log.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as e:
        log.error(f"{type(e).__name__}: {e}")
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
