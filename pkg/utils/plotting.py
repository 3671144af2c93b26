"""
Plain SVG figures for reports: training curves, confusion heatmap and
resampling drift bars. Output is byte-stable across runs.
"""

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from utils.data_processing import LABEL_LEVELS  # noqa: E402

FIGURE_PARAMS = {
    'svg.hashsalt': 'sev-forge',
    'svg.fonttype': 'none',
    'font.size': 9,
    'font.family': 'sans-serif',
    'axes.grid': True,
    'grid.alpha': 0.3,
    'figure.figsize': (7.0, 3.0),
}


def _save(fig, path):
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)


def plot_curves(history, path, title):
    """Loss and accuracy per epoch, train vs validation"""
    with plt.rc_context(FIGURE_PARAMS):
        fig, (loss_ax, acc_ax) = plt.subplots(1, 2)
        epochs = history.column('epoch')
        loss_ax.plot(epochs, history.column('train_loss'), label='train')
        loss_ax.plot(epochs, history.column('val_loss'), label='validation')
        loss_ax.set_xlabel('epoch')
        loss_ax.set_ylabel('loss')
        loss_ax.legend()
        acc_ax.plot(epochs, [100.0 * v for v in history.column('train_acc')], label='train')
        acc_ax.plot(epochs, [100.0 * v for v in history.column('val_acc')], label='validation')
        acc_ax.set_xlabel('epoch')
        acc_ax.set_ylabel('accuracy (%)')
        acc_ax.legend()
        fig.suptitle(title)
        fig.tight_layout()
        _save(fig, path)


def plot_confusion(cm, path, title):
    with plt.rc_context(FIGURE_PARAMS):
        fig, ax = plt.subplots(figsize=(3.6, 3.2))
        ax.grid(False)
        ax.imshow(cm, cmap='Blues')
        ticks = np.arange(len(LABEL_LEVELS))
        ax.set_xticks(ticks, labels=LABEL_LEVELS)
        ax.set_yticks(ticks, labels=LABEL_LEVELS)
        ax.set_xlabel('predicted')
        ax.set_ylabel('true')
        threshold = cm.max() / 2.0 if cm.size else 0
        for i in ticks:
            for j in ticks:
                ax.text(j, i, str(int(cm[i, j])), ha='center', va='center',
                        color='white' if cm[i, j] > threshold else 'black')
        ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def plot_drift(drift, path):
    """Per-field total variation by class"""
    with plt.rc_context(FIGURE_PARAMS):
        names = [row['field'] for row in drift['fields']]
        fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(names) + 2.0), 3.2))
        x = np.arange(len(names))
        width = 0.8 / len(LABEL_LEVELS)
        for c, level in enumerate(LABEL_LEVELS):
            values = [row['per_class'][level] or 0.0 for row in drift['fields']]
            ax.bar(x + (c - 1) * width, values, width, label=level)
        ax.set_xticks(x, labels=names, rotation=45, ha='right')
        ax.set_ylabel('total variation')
        ax.legend()
        fig.tight_layout()
        _save(fig, path)
