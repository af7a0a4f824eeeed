"""Gantt and transmission-speed figures of a simulation report."""
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt

from beeflow.simulator import PERIODS, gantt_frame, node_tx_frame

PERIOD_COLORS = {'init': '#bbbbbb', 'input': '#4c72b0', 'exec': '#55a868', 'output': '#c44e52'}


def plot_gantt(report, path, title=None):
    """One row per (request, leaf), the four periods as coloured bars."""
    frame = gantt_frame(report)
    rows = list(dict.fromkeys(zip(frame['request_id'], frame['leaf_id'], frame['node_id'])))
    fig, ax = plt.subplots(figsize=(10, max(2.0, 0.25 * len(rows) + 1)))
    for y, (request_id, leaf_id, node_id) in enumerate(rows):
        mine = frame[(frame['request_id'] == request_id) & (frame['leaf_id'] == leaf_id)]
        for period in PERIODS:
            spans = mine[mine['period'] == period]
            ax.broken_barh(list(zip(spans['start_s'], spans['end_s'] - spans['start_s'])), (y - 0.4, 0.8),
                           facecolors=PERIOD_COLORS[period])
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels([f"{r} {leaf}@{node}" for r, leaf, node in rows], fontsize=6)
    ax.invert_yaxis()
    ax.set_xlabel('simulated time (s)')
    ax.legend(handles=[plt.Rectangle((0, 0), 1, 1, color=c) for c in PERIOD_COLORS.values()],
              labels=list(PERIOD_COLORS), loc='lower right', fontsize=7)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_node_tx(report, path, title=None):
    frame = node_tx_frame(report)
    fig, ax = plt.subplots(figsize=(8, 3))
    for node_id, series in frame.groupby('node_id', sort=False):
        ax.step(series['window_start_s'], series['bytes_per_s'] / 1e6, where='post', label=node_id)
    ax.set_xlabel('simulated time (s)')
    ax.set_ylabel(f"MB/s ({report.window_s:g} s average)")
    ax.legend(fontsize=7)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
