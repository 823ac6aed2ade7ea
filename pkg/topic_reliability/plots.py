"""
SVG figures. Rendering is byte-stable: fixed hash salt and no date metadata.
"""

import logging
from pathlib import Path

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams['svg.hashsalt'] = 'topic-reliability'
plt.rcParams['svg.fonttype'] = 'none'

SVG_METADATA = {'Date': None}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format='svg', metadata=SVG_METADATA)
    plt.close(fig)
    return path


def cosine_histogram(full, matched, path, cutoff=0.7, title=None):
    """Overlaid histograms of best-available and matched cosines."""
    fig, ax = plt.subplots(figsize=(6, 4))
    bins = [i / 40 for i in range(41)]
    ax.hist(full, bins=bins, alpha=0.5, label='best available')
    ax.hist(matched, bins=bins, alpha=0.5, label='matched')
    ax.axvline(cutoff, color='black', linestyle='--', linewidth=1)
    ax.set_xlabel('cosine similarity to reference topic')
    ax.set_ylabel('count')
    ax.set_xlim(0, 1)
    if title:
        ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def sensitivity_plot(rows, path):
    """One line per (mode, metric) across the removal schedule."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    modes = sorted({row['mode'] for row in rows})
    for ax, mode in zip(axes, modes):
        metrics = sorted({row['metric'] for row in rows if row['mode'] == mode})
        for metric in metrics:
            points = sorted(
                (row['n_removed'], row['value'])
                for row in rows
                if row['mode'] == mode and row['metric'] == metric and row['value'] is not None
            )
            if points:
                xs, ys = zip(*points)
                ax.plot(range(len(xs)), ys, marker='o', label=metric)
                ax.set_xticks(range(len(xs)), [str(x) for x in xs])
        ax.set_title(f"{mode} seed")
        ax.set_xlabel('words removed')
        ax.set_ylim(-0.05, 1.05)
    axes[0].set_ylabel('reliability')
    axes[-1].legend(fontsize='small')
    return _save(fig, path)


def word_weight_boxplot(summaries, path):
    """Box plot of each term's downstream weight across replications."""
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.boxplot([list(s.weights) for s in summaries])
    ax.set_xticks(range(1, len(summaries) + 1), [s.term for s in summaries])
    ax.axhline(0.0, color='grey', linewidth=0.8)
    ax.set_ylabel('word weight')
    return _save(fig, path)
