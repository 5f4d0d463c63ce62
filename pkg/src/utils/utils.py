"""
Convergence Order Helpers

This module provides the utilities used to read convergence orders off a
sequence of refinement levels:
- Local experimental orders of convergence (EOC) between consecutive levels
- EOC columns for a results table
- The order over the last two levels, used for acceptance windows

All functions accept lists, numpy arrays and pandas Series.
"""

import numpy as np
import pandas as pd

EOC_UNDEFINED = float('nan')


def eoc(errors, hs):
    """
    Local orders log(e_{i-1} / e_i) / log(h_{i-1} / h_i).

    The first level has no predecessor and gets no entry, so the result is
    one shorter than the input. Pairs containing a zero, negative or
    non-finite error have no defined order and yield NaN.

    Args:
        errors (Union[list, np.ndarray, pd.Series]): Errors per level
        hs (Union[list, np.ndarray, pd.Series]): Mesh sizes per level

    Returns:
        list: Local orders, NaN where undefined

    Raises:
        ValueError: If the lengths differ, fewer than two levels are given,
            or a mesh size is not positive
    """
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    if e.shape != h.shape:
        raise ValueError(
            f"errors and hs must have the same length, got {len(e)} and "
            f"{len(h)}"
        )
    if len(e) < 2:
        raise ValueError("At least two levels are needed for an order")
    if np.any(h <= 0.0):
        raise ValueError(f"Mesh sizes must be positive, got {h.tolist()}")

    orders = []
    for i in range(1, len(e)):
        pair = e[i - 1:i + 1]
        if not np.all(np.isfinite(pair)) or np.any(pair <= 0.0) \
                or h[i - 1] == h[i]:
            orders.append(EOC_UNDEFINED)
            continue
        orders.append(float(np.log(pair[0] / pair[1])
                            / np.log(h[i - 1] / h[i])))
    return orders


def eoc_column(errors, hs):
    """
    EOC aligned with the levels: NaN for the first level.

    Args:
        errors: Errors per level
        hs: Mesh sizes per level

    Returns:
        np.ndarray: Same length as the inputs
    """
    errors = np.asarray(errors, dtype=float)
    if len(errors) < 2:
        return np.full(len(errors), EOC_UNDEFINED)
    return np.array([EOC_UNDEFINED] + eoc(errors, hs))


def add_eoc_columns(table, columns, h_column='h', prefix='eoc_'):
    """
    Append an EOC column for every error column of a per-level table.

    Args:
        table (pd.DataFrame): One row per level, sorted by level
        columns (list): Error columns
        h_column (str): Mesh-size column
        prefix (str): Name prefix of the new columns

    Returns:
        pd.DataFrame: Copy with the added columns
    """
    out = table.copy()
    for name in columns:
        out[prefix + name] = eoc_column(out[name], out[h_column])
    return out


def last_order(errors, hs):
    """
    Order over the last two levels, NaN when undefined or unavailable.
    """
    if len(errors) < 2:
        return EOC_UNDEFINED
    return eoc(list(errors)[-2:], list(hs)[-2:])[0]
