"""
Dense two-phase simplex with Bland's rule, for the small feasibility and
fitting problems of the structure checker.

Usage:

    result = solve_lp(
        c=[1.0, 1.0],
        A_ub=[[-1.0, -2.0]], b_ub=[-4.0],
        bounds=[(0.0, None), (0.0, None)],
    )
    result.status     # LPStatus.Optimal
    result.x          # array([0., 2.])
    result.objective  # 2.0
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from habitat_rd.enums import (
    LPStatus,
)

LOGGER = logging.getLogger(__name__)

PIVOT_TOL = 1e-9
COST_TOL = 1e-10

Bound = Tuple[Optional[float], Optional[float]]


@dataclass(frozen=True, eq=False)
class LPResult:
    status: LPStatus
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.status == LPStatus.Optimal


class _Tableau:
    """
    Standard-form tableau: rows are constraints, the last row holds reduced
    costs with -objective in its last column.
    """
    def __init__(self, table: np.ndarray, basis: List[int]):
        self.table = table
        self.basis = basis
        self.pivots = 0

    def pivot(self, row: int, col: int):
        table = self.table
        table[row] /= table[row, col]
        factors = table[:, col].copy()
        factors[row] = 0.0
        table -= np.outer(factors, table[row])
        self.basis[row] = col
        self.pivots += 1

    def entering(self, allowed: int) -> int:
        costs = self.table[-1, :allowed]
        candidates = np.nonzero(costs < -COST_TOL)[0]
        return int(candidates[0]) if candidates.size else -1

    def leaving(self, col: int) -> int:
        column = self.table[:-1, col]
        rhs = self.table[:-1, -1]
        positive = column > PIVOT_TOL
        if not np.any(positive):
            return -1
        ratios = np.full(column.shape, np.inf)
        ratios[positive] = rhs[positive] / column[positive]
        best = np.min(ratios)
        ties = np.nonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))[0]
        # Bland: among tied rows leave the smallest basic index.
        return int(min(ties, key=lambda r: self.basis[r]))

    def iterate(self, allowed: int, limit: int) -> LPStatus:
        while self.pivots < limit:
            col = self.entering(allowed)
            if col < 0:
                return LPStatus.Optimal
            row = self.leaving(col)
            if row < 0:
                return LPStatus.Unbounded
            self.pivot(row, col)
        return LPStatus.IterationLimit


def _standardize(c, A_ub, b_ub, A_eq, b_eq, bounds: Sequence[Bound]):
    """
    Rewrites every variable as non-negative: shifted lower bounds, split free
    variables, finite upper bounds as extra inequality rows. Returns the
    standard-form data and a map back to the original variables.
    """
    n = len(c)
    offset = np.zeros(n)
    extra_rows, extra_rhs = [], []

    new_index = 0
    mapping = []
    for i, (low, high) in enumerate(bounds):
        low = -np.inf if low is None else float(low)
        high = np.inf if high is None else float(high)
        if np.isfinite(low):
            offset[i] = low
            mapping.append([(new_index, 1.0)])
            if np.isfinite(high):
                extra_rows.append({new_index: 1.0})
                extra_rhs.append(high - low)
            new_index += 1
        else:
            mapping.append([(new_index, 1.0), (new_index + 1, -1.0)])
            if np.isfinite(high):
                extra_rows.append({new_index: 1.0, new_index + 1: -1.0})
                extra_rhs.append(high)
            new_index += 2
    n_std = new_index
    transform = np.zeros((n, n_std))
    for i, entries in enumerate(mapping):
        for j, sign in entries:
            transform[i, j] = sign

    def convert(matrix, rhs):
        matrix = np.asarray(matrix, dtype=float).reshape(-1, n)
        rhs = np.asarray(rhs, dtype=float).reshape(-1)
        return matrix @ transform, rhs - matrix @ offset

    A_ub_std, b_ub_std = convert(
        A_ub if A_ub is not None else np.zeros((0, n)),
        b_ub if b_ub is not None else np.zeros(0),
    )
    if extra_rows:
        bound_rows = np.zeros((len(extra_rows), n_std))
        for r, entries in enumerate(extra_rows):
            for j, value in entries.items():
                bound_rows[r, j] = value
        A_ub_std = np.vstack([A_ub_std, bound_rows])
        b_ub_std = np.concatenate([b_ub_std, extra_rhs])

    A_eq_std, b_eq_std = convert(
        A_eq if A_eq is not None else np.zeros((0, n)),
        b_eq if b_eq is not None else np.zeros(0),
    )
    c = np.asarray(c, dtype=float)
    return c @ transform, A_ub_std, b_ub_std, A_eq_std, b_eq_std, transform, offset


def solve_lp(c: Sequence[float],
             A_ub=None,
             b_ub=None,
             A_eq=None,
             b_eq=None,
             bounds: Optional[Sequence[Bound]] = None,
             max_pivots: Optional[int] = None) -> LPResult:
    """
    Minimizes c @ x subject to A_ub @ x <= b_ub, A_eq @ x == b_eq and
    per-variable bounds (default (0, None); None means unbounded).
    """
    n = len(c)
    bounds = list(bounds) if bounds is not None else [(0.0, None)] * n
    (c_std, A_ub_std, b_ub_std, A_eq_std, b_eq_std,
     back, offset) = _standardize(c, A_ub, b_ub, A_eq, b_eq, bounds)

    m_ub, n_std = A_ub_std.shape
    m_eq = A_eq_std.shape[0]
    m = m_ub + m_eq

    # [x | slacks | artificials | rhs]
    A = np.zeros((m, n_std + m_ub))
    A[:m_ub, :n_std] = A_ub_std
    A[:m_ub, n_std:] = np.eye(m_ub)
    A[m_ub:, :n_std] = A_eq_std
    rhs = np.concatenate([b_ub_std, b_eq_std])

    flip = rhs < 0.0
    A[flip] *= -1.0
    rhs[flip] *= -1.0

    # Rows whose slack is still +1 can start basic; the rest need artificials.
    needs_artificial = np.ones(m, dtype=bool)
    needs_artificial[:m_ub] = flip[:m_ub]
    artificial_rows = np.nonzero(needs_artificial)[0]
    n_real = n_std + m_ub
    n_art = len(artificial_rows)

    table = np.zeros((m + 1, n_real + n_art + 1))
    table[:m, :n_real] = A
    table[:m, -1] = rhs
    basis = [0] * m
    for r in range(m_ub):
        if not flip[r]:
            basis[r] = n_std + r
    for a, r in enumerate(artificial_rows):
        table[r, n_real + a] = 1.0
        basis[r] = n_real + a

    limit = max_pivots or 50 * (m + n_real + n_art + 10)
    tableau = _Tableau(table, basis)

    if n_art:
        table[-1, n_real:n_real + n_art] = 1.0
        for r in artificial_rows:
            table[-1] -= table[r]
        status = tableau.iterate(n_real + n_art, limit)
        if status != LPStatus.Optimal:
            LOGGER.debug('Phase one stopped: %s', status.value)
            return LPResult(status)
        scale = max(1.0, float(np.max(np.abs(rhs))) if m else 1.0)
        if -table[-1, -1] > 1e-9 * scale:
            return LPResult(LPStatus.Infeasible)
        tableau = _drive_out_artificials(tableau, n_real)

    table = tableau.table
    table[-1] = 0.0
    table[-1, :n_std] = c_std
    for r, col in enumerate(tableau.basis):
        cost = c_std[col] if col < n_std else 0.0
        if cost != 0.0:
            table[-1] -= cost * table[r]

    status = tableau.iterate(n_real, limit)
    if status != LPStatus.Optimal:
        LOGGER.debug('Phase two stopped: %s', status.value)
        return LPResult(status)

    x_std = np.zeros(table.shape[1] - 1)
    for r, col in enumerate(tableau.basis):
        x_std[col] = table[r, -1]
    x = back @ x_std[:n_std] + offset
    objective = float(np.dot(c, x))
    LOGGER.debug(
        'LP optimal after %d pivots (%d rows, %d columns): %.6g',
        tableau.pivots, m, n_real, objective,
    )
    return LPResult(LPStatus.Optimal, x, objective)


def _drive_out_artificials(tableau: _Tableau, n_real: int) -> _Tableau:
    """Pivots zero-level artificials out of the basis and drops their columns."""
    table = tableau.table
    keep_rows = []
    for r, col in enumerate(tableau.basis):
        if col < n_real:
            keep_rows.append(r)
            continue
        candidates = np.nonzero(np.abs(table[r, :n_real]) > PIVOT_TOL)[0]
        if candidates.size:
            tableau.pivot(r, int(candidates[0]))
            keep_rows.append(r)
        # else the row is redundant

    rows = keep_rows + [table.shape[0] - 1]
    cols = list(range(n_real)) + [table.shape[1] - 1]
    reduced = _Tableau(
        table[np.ix_(rows, cols)].copy(),
        [tableau.basis[r] for r in keep_rows],
    )
    reduced.pivots = tableau.pivots
    return reduced
