"""
Visualization Module

This module draws the convergence plots of a study:
1. Error norms against the mesh size on log-log axes
2. Reference slope lines O(h^p) anchored at the finest level

Plots are written as SVG so they can be diffed and embedded in reports.
"""

import logging
import os

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

ERROR_LABELS = {
    'err_energy': 'energy norm',
    'err_M': 'M-norm (multiplier)',
    'err_L2': 'L2 surface',
    'err_L2_tan': 'L2 tangential',
    'err_H1': 'H1 surface',
}


def reference_line(hs, anchor_h, anchor_error, order, offset=0.5):
    """
    Values of C h^order through a point shifted down by a factor.

    Args:
        hs (array-like): Mesh sizes
        anchor_h (float): Mesh size of the anchor point
        anchor_error (float): Error at the anchor point
        order (float): Slope
        offset (float): Multiplier so the guide sits below the data

    Returns:
        np.ndarray: Guide values at hs
    """
    hs = np.asarray(hs, dtype=float)
    return offset * anchor_error * (hs / anchor_h) ** order


def plot_convergence(table, path, columns=('err_energy',), orders=(),
                     title=None):
    """
    Create and save a log-log convergence plot.

    Args:
        table (pd.DataFrame): Per-level results with an 'h' column
        path (str): Output file (SVG)
        columns (tuple): Error columns to draw; missing or all-NaN columns
            are skipped
        orders (tuple): Reference slopes drawn as dashed lines
        title (str): Plot title

    Returns:
        str or None: The written path, None when nothing could be drawn
    """
    if table.empty:
        logger.warning("No levels to plot")
        return None
    hs = table['h'].to_numpy(dtype=float)
    fig, ax = plt.subplots(figsize=(7, 5))
    anchor = None

    for name in columns:
        if name not in table.columns:
            continue
        errors = table[name].to_numpy(dtype=float)
        mask = np.isfinite(errors) & (errors > 0)
        if not mask.any():
            continue
        ax.loglog(hs[mask], errors[mask], marker='o',
                  label=ERROR_LABELS.get(name, name))
        if anchor is None:
            finest = np.nonzero(mask)[0][-1]
            anchor = (hs[finest], errors[finest])

    if anchor is None:
        plt.close(fig)
        logger.warning("No finite positive errors to plot")
        return None

    for order in orders:
        ax.loglog(hs, reference_line(hs, anchor[0], anchor[1], order),
                  linestyle='--', color='gray', linewidth=1)
        ax.annotate(f'O(h^{order:g})',
                    xy=(hs[0], reference_line(hs[:1], *anchor, order)[0]),
                    fontsize=8, color='gray')

    ax.invert_xaxis()
    ax.set_xlabel('h')
    ax.set_ylabel('error')
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(True, which='both', linestyle=':')

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    plt.tight_layout()
    plt.savefig(path, format='svg')
    plt.close(fig)
    logger.info(f"Convergence plot saved to: {path}")
    return path
