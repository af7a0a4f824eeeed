"""
Bundled workflows, scaled-down benchmark shapes and random generators.

The benchmark shapes are structural skeletons of eight well-known serverless and scientific
workflows (Cyc, Epi, Gen, Soy, Vid, IR, FP, WC) with synthetic profiles: a handful of
fan-out/fan-in stages whose I/O sizes follow the role of each stage.
"""
from importlib import resources
from pathlib import Path

from beeflow.behavior_tree import AggSpec, FunctionSpec, TailSpec, WorkflowDef, decorator, fallback, leaf, parallel, sequence
from beeflow.converters import DagDef, FsmDef, dag_to_bt
from beeflow.traces import FunctionProfile

MB = 1_000_000


def bundled_path(name):
    """Path of a file shipped in beeflow/data."""
    path = Path(str(resources.files('beeflow') / 'data' / name))
    if not path.exists():
        raise FileNotFoundError(f"no bundled file named {name!r}")
    return path


# stage name -> (exec seconds, input MB, output MB)
_ROLES = {
    'split': (0.5, 8, 8), 'map': (1.5, 2, 2), 'reduce': (1.0, 4, 1), 'merge': (0.5, 4, 4),
    'heavy': (2.0, 6, 6), 'light': (0.3, 0.5, 0.5), 'sink': (0.3, 1, 0.2),
}


def _fan(prefix, n):
    return [f"{prefix}{i}" for i in range(n)]


def _cyc(width):
    sgt = _fan('sgt', 2)
    seis, peak = _fan('seis', width), _fan('peak', width)
    edges = [(s, x) for s in sgt for x in seis] + list(zip(seis, peak))
    edges += [(x, 'zip_seis') for x in seis] + [(p, 'zip_peak') for p in peak]
    roles = {**{n: 'heavy' for n in sgt}, **{n: 'map' for n in seis}, **{n: 'light' for n in peak},
             'zip_seis': 'merge', 'zip_peak': 'sink'}
    return edges, roles


def _epi(width):
    edges, roles = [], {'split': 'split', 'merge': 'merge', 'index': 'reduce', 'pileup': 'sink'}
    for i in range(width):
        chain = [f"filter{i}", f"sol2sanger{i}", f"fast2bfq{i}", f"map{i}"]
        edges += [('split', chain[0])] + list(zip(chain, chain[1:])) + [(chain[-1], 'merge')]
        roles.update({chain[0]: 'light', chain[1]: 'light', chain[2]: 'light', chain[3]: 'heavy'})
    edges += [('merge', 'index'), ('index', 'pileup')]
    return edges, roles


def _gen(width):
    ind = _fan('individuals', width)
    edges = [(i, 'merge') for i in ind]
    edges += [('merge', f"overlap{k}") for k in range(2)] + [('sifting', f"overlap{k}") for k in range(2)]
    edges += [('merge', f"frequency{k}") for k in range(2)] + [('sifting', f"frequency{k}") for k in range(2)]
    roles = {**{n: 'heavy' for n in ind}, 'merge': 'merge', 'sifting': 'light',
             **{f"overlap{k}": 'reduce' for k in range(2)}, **{f"frequency{k}": 'reduce' for k in range(2)}}
    return edges, roles


def _soy(width):
    edges, roles = [], {'genotype': 'merge', 'combine': 'sink'}
    for i in range(width):
        chain = [f"align{i}", f"sort{i}", f"dedup{i}", f"haplotype{i}"]
        edges += list(zip(chain, chain[1:])) + [(chain[-1], 'genotype')]
        roles.update({chain[0]: 'heavy', chain[1]: 'map', chain[2]: 'light', chain[3]: 'heavy'})
    for k in range(2):
        edges += [('genotype', f"filter{k}"), (f"filter{k}", 'combine')]
        roles[f"filter{k}"] = 'light'
    return edges, roles


def _vid(width):
    parts = _fan('transcode', width)
    edges = [('split', p) for p in parts] + [(p, 'merge') for p in parts] + [('merge', 'upload')]
    return edges, {'split': 'split', **{p: 'heavy' for p in parts}, 'merge': 'merge', 'upload': 'sink'}


def _ir(width):
    chain = ['extract', 'resize', 'predict', 'render']
    return list(zip(chain, chain[1:])), {'extract': 'split', 'resize': 'map', 'predict': 'heavy', 'render': 'sink'}


def _fp(width):
    steps = ['convert', 'compress', 'checksum']
    edges = [('start', s) for s in steps] + [(s, 'upload') for s in steps]
    return edges, {'start': 'split', 'convert': 'map', 'compress': 'heavy', 'checksum': 'light', 'upload': 'sink'}


def _wc(width):
    maps, reduces = _fan('count', width), _fan('reduce', 2)
    edges = [('start', m) for m in maps] + [(m, r) for m in maps for r in reduces] + [(r, 'merge') for r in reduces]
    return edges, {'start': 'split', **{m: 'map' for m in maps}, **{r: 'reduce' for r in reduces}, 'merge': 'sink'}


SHAPES = {'cyc': _cyc, 'epi': _epi, 'gen': _gen, 'soy': _soy, 'vid': _vid, 'ir': _ir, 'fp': _fp, 'wc': _wc}


def shape_workflow(name, width=3, io_scale=1.0, workflow_id=None, init_delay_s=0.5, io_bw_Bps=125e6):
    """
    Builds one benchmark shape.

    Returns:
        tuple[WorkflowDef, dict]: The converted tree and LeafId -> FunctionProfile. Expected
        input/output delays assume the whole io_bw_Bps is available.
    """
    if name not in SHAPES:
        raise KeyError(f"unknown shape {name!r}, expected one of {sorted(SHAPES)}")
    edges, roles = SHAPES[name](width)
    nodes = sorted(roles)
    tree = dag_to_bt(DagDef(nodes, edges, workflow_id or name))
    profiles = {}
    for n in nodes:
        exec_s, in_mb, out_mb = _ROLES[roles[n]]
        in_b, out_b = in_mb * MB * io_scale, out_mb * MB * io_scale
        profiles[n] = FunctionProfile(n, init_delay_s, in_b / io_bw_Bps, exec_s, out_b / io_bw_Bps, in_b, out_b, 1.0)
    return tree, profiles


# ---- random generators ----

def random_workflow(rng, max_nodes=25, max_depth=6, workflow_id='random', p_decorator=0.1):
    """
    A random valid tree with at most max_nodes nodes. Parallels use AllSucceed or a random
    m-out-of-n, decorators Retry or Once. Leaf ids are f1, f2, ... in creation order.
    """
    budget = [max_nodes]
    counter = [0]

    def new_leaf():
        counter[0] += 1
        budget[0] -= 1
        return leaf(f"f{counter[0]}")

    def build(depth):
        if depth >= max_depth or budget[0] < 3 or rng.random() < 0.3:
            return new_leaf()
        budget[0] -= 1
        if rng.random() < p_decorator:
            tail = TailSpec.retry(int(rng.integers(2, 4))) if rng.random() < 0.5 else TailSpec.once()
            return decorator(build(depth + 1), tail)
        kind = rng.choice(['sequence', 'fallback', 'parallel'])
        n = int(rng.integers(2, 5))
        children = []
        for _ in range(n):
            if budget[0] <= 0:
                break
            children.append(build(depth + 1))
        if not children:
            children.append(new_leaf())
        if kind == 'sequence':
            return sequence(*children)
        if kind == 'fallback':
            return fallback(*children)
        agg = AggSpec.m_out_of_n(int(rng.integers(1, len(children) + 1))) if rng.random() < 0.3 else None
        return parallel(*children, agg=agg)

    root = build(0)
    if root.is_leaf:
        root = sequence(root, new_leaf())
    functions = [FunctionSpec(f"f{i}") for i in range(1, counter[0] + 1)]
    return WorkflowDef(workflow_id, root, functions)


def random_dag(rng, max_nodes=12, edge_prob=0.3, workflow_id='dag'):
    """Edges only go from lower to higher index, so the graph is acyclic."""
    n = int(rng.integers(1, max_nodes + 1))
    nodes = [f"v{i}" for i in range(n)]
    edges = [(nodes[i], nodes[j]) for i in range(n) for j in range(i + 1, n) if rng.random() < edge_prob]
    return DagDef(nodes, edges, workflow_id)


def random_fsm(rng, max_states=8, max_outcomes=3, workflow_id='fsm', end_prob=0.15):
    n = int(rng.integers(1, max_states + 1))
    states = [f"s{i}" for i in range(n)]
    transitions = {}
    for s in states:
        for k in range(int(rng.integers(1, max_outcomes + 1))):
            target = 'END' if rng.random() < end_prob else states[int(rng.integers(n))]
            transitions[(s, f"o{k}")] = target
    return FsmDef(states, states[int(rng.integers(n))], {s: f"body_{s}" for s in states}, transitions,
                  workflow_id=workflow_id)

