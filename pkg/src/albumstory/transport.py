"""Exact solver for the linear transportation problem.

Desk-scale instances (roughly 10 images x 35 sentences) make an exact
network-simplex-class method cheap, so no entropic approximation is used.
Pivot selection is fully deterministic: the entering cell is the
lexicographically first (i, j) with negative reduced cost (Bland's rule,
which also rules out cycling on degenerate bases), and ties for the leaving
cell break toward the lowest (i, j).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

_FEASIBILITY_TOL = 1e-9
_MAX_PIVOTS = 100_000


@dataclass(frozen=True)
class TransportProblem:
    """Cost matrix plus source/sink masses. Masses must balance."""

    cost: np.ndarray  # (n, m), all entries >= 0
    p: np.ndarray  # (n,) source masses
    q: np.ndarray  # (m,) sink masses

    def __post_init__(self) -> None:
        cost = np.asarray(self.cost, dtype=float)
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if cost.ndim != 2 or cost.shape != (p.size, q.size):
            raise ValueError(
                f"cost shape {cost.shape} does not match marginals "
                f"({p.size}, {q.size})"
            )
        if p.size < 1 or q.size < 1:
            raise ValueError("need at least one source and one sink")
        if (cost < 0).any():
            raise ValueError("costs must be non-negative")
        if (p < 0).any() or (q < 0).any():
            raise ValueError("masses must be non-negative")
        if abs(p.sum() - q.sum()) > _FEASIBILITY_TOL:
            raise ValueError(
                f"infeasible masses: sum(p)={p.sum()!r} != sum(q)={q.sum()!r}"
            )
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape


@dataclass(frozen=True)
class TransportPlan:
    gamma: np.ndarray
    total_cost: float


def uniform_problem(cost: np.ndarray) -> TransportProblem:
    """Transportation problem with uniform marginals 1/N and 1/M."""
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    return TransportProblem(cost=cost, p=np.full(n, 1.0 / n), q=np.full(m, 1.0 / m))


def solve_transport(problem: TransportProblem) -> TransportPlan:
    """Exact optimum of the transportation problem.

    Classic primal transportation simplex on the basis tree: northwest-corner
    start, dual (u, v) sweep, Bland-style lexicographic pivoting.
    """
    cost, p, q = problem.cost, problem.p, problem.q
    n, m = problem.shape

    gamma, basis = _northwest_corner(p, q)
    basis_set = set(basis)

    # Reduced-cost cutoff scales with the instance so tiny cost matrices are
    # not declared optimal prematurely.
    tol = 1e-12 * max(1.0, float(cost.max()))

    for _ in range(_MAX_PIVOTS):
        u, v = _duals(cost, basis, n, m)
        entering = _entering_cell(cost, u, v, basis_set, tol)
        if entering is None:
            break
        cycle = _cycle(basis, entering, n, m)
        # Alternate signs around the cycle; entering cell gets +theta.
        minus = cycle[1::2]
        theta = min(gamma[c] for c in minus)
        leaving = min(c for c in minus if gamma[c] <= theta)
        for cell in cycle[0::2]:
            gamma[cell] += theta
        for cell in minus:
            gamma[cell] -= theta
        gamma[leaving] = 0.0
        basis_set.remove(leaving)
        basis_set.add(entering)
        basis = sorted(basis_set)
    else:
        raise RuntimeError("transport simplex failed to terminate")

    np.clip(gamma, 0.0, None, out=gamma)
    total = float((gamma * cost).sum())
    return TransportPlan(gamma=gamma, total_cost=total)


def plan_feasibility_error(plan: TransportPlan, problem: TransportProblem) -> float:
    """Largest deviation of the plan's marginals from the problem's masses."""
    row_err = np.abs(plan.gamma.sum(axis=1) - problem.p).max()
    col_err = np.abs(plan.gamma.sum(axis=0) - problem.q).max()
    return float(max(row_err, col_err))


def _northwest_corner(
    p: np.ndarray, q: np.ndarray
) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Initial basic feasible solution with exactly n + m - 1 basic cells
    (zero-flow cells are kept so degenerate bases still span)."""
    n, m = p.size, q.size
    remaining_p = p.astype(float).copy()
    remaining_q = q.astype(float).copy()
    gamma = np.zeros((n, m))
    basis: list[tuple[int, int]] = []
    i = j = 0
    while True:
        moved = min(remaining_p[i], remaining_q[j])
        gamma[i, j] = moved
        basis.append((i, j))
        remaining_p[i] -= moved
        remaining_q[j] -= moved
        if i == n - 1 and j == m - 1:
            break
        if remaining_p[i] <= remaining_q[j] and i < n - 1:
            i += 1
        else:
            j += 1
    return gamma, basis


def _duals(
    cost: np.ndarray, basis: Sequence[tuple[int, int]], n: int, m: int
) -> tuple[np.ndarray, np.ndarray]:
    """Solve u_i + v_j = cost_ij over the basis tree, anchored at u_0 = 0."""
    row_adj: list[list[int]] = [[] for _ in range(n)]
    col_adj: list[list[int]] = [[] for _ in range(m)]
    for i, j in basis:
        row_adj[i].append(j)
        col_adj[j].append(i)
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    u[0] = 0.0
    stack: list[tuple[str, int]] = [("row", 0)]
    while stack:
        kind, idx = stack.pop()
        if kind == "row":
            for j in row_adj[idx]:
                if np.isnan(v[j]):
                    v[j] = cost[idx, j] - u[idx]
                    stack.append(("col", j))
        else:
            for i in col_adj[idx]:
                if np.isnan(u[i]):
                    u[i] = cost[i, idx] - v[idx]
                    stack.append(("row", i))
    if np.isnan(u).any() or np.isnan(v).any():
        raise RuntimeError("basis does not span the bipartite node set")
    return u, v


def _entering_cell(
    cost: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
    basis_set: set[tuple[int, int]],
    tol: float,
) -> Optional[tuple[int, int]]:
    reduced = cost - u[:, None] - v[None, :]
    candidates = np.argwhere(reduced < -tol)
    for i, j in candidates:  # argwhere is already in lexicographic order
        if (int(i), int(j)) not in basis_set:
            return int(i), int(j)
    return None


def _cycle(
    basis: Sequence[tuple[int, int]], entering: tuple[int, int], n: int, m: int
) -> list[tuple[int, int]]:
    """Unique alternating cycle created by adding the entering cell to the
    basis tree, as a cell list starting with the entering cell."""
    row_adj: list[list[int]] = [[] for _ in range(n)]
    col_adj: list[list[int]] = [[] for _ in range(m)]
    for i, j in basis:
        row_adj[i].append(j)
        col_adj[j].append(i)

    start_row, target_col = entering
    # BFS from the entering cell's row node to its column node.
    parent: dict[tuple[str, int], tuple[str, int]] = {}
    frontier: list[tuple[str, int]] = [("row", start_row)]
    seen = {("row", start_row)}
    while frontier:
        nxt: list[tuple[str, int]] = []
        for node in frontier:
            kind, idx = node
            neighbors = (
                [("col", j) for j in row_adj[idx]]
                if kind == "row"
                else [("row", i) for i in col_adj[idx]]
            )
            for nb in neighbors:
                if nb in seen:
                    continue
                seen.add(nb)
                parent[nb] = node
                if nb == ("col", target_col):
                    nxt = []
                    frontier = []
                    break
                nxt.append(nb)
            else:
                continue
            break
        else:
            frontier = nxt
            continue
        break
    if ("col", target_col) not in parent and ("col", target_col) != ("row", start_row):
        raise RuntimeError("entering cell does not close a cycle")

    # Node path row(start) ... col(target); consecutive nodes name basis cells.
    path = [("col", target_col)]
    while path[-1] != ("row", start_row):
        path.append(parent[path[-1]])
    path.reverse()
    cells = [entering]
    for a, b in zip(path, path[1:]):
        (ka, ia), (kb, ib) = a, b
        cells.append((ia, ib) if ka == "row" else (ib, ia))
    return cells
