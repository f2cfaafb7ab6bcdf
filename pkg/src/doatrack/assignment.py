"""Minimum-cost bipartite assignment (Munkres), shared by association and OSPA.

Backed by scipy's Jonker-Volgenant solver; tests pin it against exhaustive
permutation enumeration.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment


def min_cost_assignment(cost: np.ndarray):
    """Optimal row-to-column pairing of a (possibly rectangular) cost matrix.

    Returns (pairs, total_cost) with pairs a list of (row, col). Every row or
    column beyond the smaller dimension is left unassigned.
    """
    cost = np.atleast_2d(np.asarray(cost, dtype=float))
    if cost.size == 0:
        return [], 0.0
    rows, cols = linear_sum_assignment(cost)
    total = float(cost[rows, cols].sum())
    return list(zip(rows.tolist(), cols.tolist())), total


def gated_assignment(cost: np.ndarray, gate: float):
    """Assignment where pairs costing more than `gate` are inadmissible.

    Rectangular matrices are padded with sentinel costs just above the gate;
    pairs landing on a sentinel or above the gate are dropped.
    """
    cost = np.atleast_2d(np.asarray(cost, dtype=float))
    n_rows, n_cols = cost.shape
    if n_rows == 0 or n_cols == 0:
        return []
    size = max(n_rows, n_cols)
    sentinel = gate + 1.0
    padded = np.full((size, size), sentinel)
    padded[:n_rows, :n_cols] = np.minimum(cost, sentinel)
    pairs, _ = min_cost_assignment(padded)
    return [
        (r, c) for r, c in pairs
        if r < n_rows and c < n_cols and cost[r, c] <= gate
    ]
