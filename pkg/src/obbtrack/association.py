"""Linear assignment with an explicit forbidden mask.

``solve_lap`` returns, among all matchings that avoid forbidden pairs, one
of maximum cardinality and, among those, minimum total cost. Forbidden
pairs are handled by giving every row a private "unmatched" column whose
price exceeds any achievable saving, so gating never leaks through a
sentinel cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Assignment", "CostMatrix", "solve_lap", "gate_by_riou", "max_weight_matching"]


@dataclass(frozen=True)
class CostMatrix:
    values: np.ndarray
    forbidden: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            values = values.reshape(values.shape[0] if values.size else 0, -1) if values.ndim else np.zeros((0, 0))
        forbidden = (
            np.zeros(values.shape, dtype=bool) if self.forbidden is None else np.asarray(self.forbidden, dtype=bool)
        )
        if forbidden.shape != values.shape:
            raise ValueError("forbidden mask must match the cost matrix shape")
        if not np.all(np.isfinite(values[~forbidden])):
            raise ValueError("allowed costs must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "forbidden", forbidden)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass
class Assignment:
    matches: list[tuple[int, int]] = field(default_factory=list)
    unmatched_rows: list[int] = field(default_factory=list)
    unmatched_cols: list[int] = field(default_factory=list)

    def total(self, costs) -> float:
        values = costs.values if isinstance(costs, CostMatrix) else np.asarray(costs, dtype=float)
        return float(sum(values[r, c] for r, c in self.matches))


def _shortest_augmenting_path(cost: np.ndarray) -> np.ndarray:
    """Row-to-column assignment for an ``n x m`` matrix with ``n <= m``.

    Every row is assigned; ``cost`` may hold ``inf`` as long as each row has
    a finite option. Dual potentials keep reduced costs non-negative so each
    augmentation is a Dijkstra search (the Jonker-Volgenant scheme).
    """
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    col_owner = np.zeros(m + 1, dtype=int)  # 1-based row matched to column j, 0 = free
    way = np.zeros(m + 1, dtype=int)
    padded = np.full((n + 1, m + 1), np.inf)
    padded[1:, 1:] = cost
    for i in range(1, n + 1):
        col_owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = col_owner[j0]
            free = ~used
            free[0] = False
            reduced = padded[i0] - u[i0] - v
            better = free & (reduced < minv)
            minv[better] = reduced[better]
            way[better] = j0
            candidates = np.where(free, minv, np.inf)
            j1 = int(np.argmin(candidates))
            delta = candidates[j1]
            if not np.isfinite(delta):
                raise ArithmeticError("no finite augmenting path")
            u[col_owner[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if col_owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            col_owner[j0] = col_owner[j1]
            j0 = j1
    row_to_col = np.full(n, -1, dtype=int)
    for j in range(1, m + 1):
        if col_owner[j]:
            row_to_col[col_owner[j] - 1] = j - 1
    return row_to_col


def solve_lap(costs) -> Assignment:
    """Maximum-cardinality, minimum-cost matching avoiding forbidden pairs."""
    if not isinstance(costs, CostMatrix):
        costs = CostMatrix(costs)
    n_rows, n_cols = costs.shape
    if n_rows == 0 or n_cols == 0:
        return Assignment([], list(range(n_rows)), list(range(n_cols)))

    transposed = n_rows > n_cols
    values, forbidden = costs.values, costs.forbidden
    if transposed:
        values, forbidden = values.T, forbidden.T
    n, m = values.shape

    allowed = ~forbidden
    if not allowed.any():
        return Assignment([], list(range(n_rows)), list(range(n_cols)))
    lo, hi = values[allowed].min(), values[allowed].max()
    # leaving a row unmatched must cost more than any rearrangement can save
    penalty = (hi - lo + 1.0) * (n + 1) + abs(hi) + abs(lo)

    work = np.full((n, m + n), np.inf)
    work[:, :m] = np.where(allowed, values, np.inf)
    work[np.arange(n), m + np.arange(n)] = penalty
    row_to_col = _shortest_augmenting_path(work)

    matches = []
    for r, c in enumerate(row_to_col):
        if c < m:
            matches.append((c, r) if transposed else (r, c))
    matches.sort()
    matched_rows = {r for r, _ in matches}
    matched_cols = {c for _, c in matches}
    return Assignment(
        matches,
        [r for r in range(n_rows) if r not in matched_rows],
        [c for c in range(n_cols) if c not in matched_cols],
    )


def gate_by_riou(similarity, threshold: float) -> CostMatrix:
    sim = np.asarray(similarity, dtype=float)
    if sim.ndim != 2:
        sim = sim.reshape(0, 0) if sim.size == 0 else np.atleast_2d(sim)
    return CostMatrix(1.0 - sim, sim < threshold)


def max_weight_matching(weights, allowed=None) -> list[tuple[int, int]]:
    """Matching maximizing the summed non-negative weight over allowed pairs.

    Unlike :func:`solve_lap` this does not favour cardinality: a single
    heavy pair beats two light ones.
    """
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        return []
    mask = np.ones(w.shape, dtype=bool) if allowed is None else np.asarray(allowed, dtype=bool)
    w = np.where(mask, w, 0.0)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    # with non-negative weights a full assignment attains the maximum
    result = solve_lap(CostMatrix(-w))
    return [(r, c) for r, c in result.matches if mask[r, c] and w[r, c] > 0]
