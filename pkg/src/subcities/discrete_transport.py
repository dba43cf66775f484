"""Exact discrete transport: optimal couplings, costs, and dual potentials.

The solver is a successive-shortest-paths min-cost flow on the bipartite
transportation graph. Masses are rescaled to integer units (configurable
denominator) so flows are exact integers and marginals are met exactly in
quantized units; the quantization residual is reported on the plan. Node
potentials maintained by the algorithm provide an optimality certificate:
they are dual-feasible everywhere and complementary-slack on the support.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegeneratePlan,
    EmptyCloud,
    NoConvergence,
    SubcitiesError,
    UnbalancedMasses,
)
from .measures import WeightedPointCloud

DEFAULT_DENOMINATOR = 10**9
_COST_MATRIX_GUARD = 10**8  # no full pairwise matrix above 1e4 x 1e4 points


def _pairwise_cost(xs: np.ndarray, ys: np.ndarray, p: float) -> np.ndarray:
    if xs.shape[0] * ys.shape[0] > _COST_MATRIX_GUARD:
        raise SubcitiesError("instance exceeds the pairwise cost matrix guard")
    d = np.linalg.norm(xs[:, None, :] - ys[None, :, :], axis=2)
    return d**p


def quantize_to_units(weights: np.ndarray, denominator: int) -> np.ndarray:
    """Largest-remainder rounding to integer units summing to ``denominator``."""
    w = np.asarray(weights, dtype=float)
    units = np.floor(w * denominator).astype(np.int64)
    short = int(denominator - units.sum())
    if short > 0:
        frac = w * denominator - units
        order = np.lexsort((np.arange(len(w)), -frac))
        units[order[:short]] += 1
    return units


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """An optimal coupling between two weighted point clouds."""

    source: WeightedPointCloud
    target: WeightedPointCloud
    flow_i: np.ndarray
    flow_j: np.ndarray
    flow_mass: np.ndarray
    cost_exponent: float
    total_cost: float
    quantization_residual: float
    dual_psi: np.ndarray
    dual_psi_c: np.ndarray

    @property
    def flows(self) -> list[tuple[int, int, float]]:
        return [
            (int(i), int(j), float(m))
            for i, j, m in zip(self.flow_i, self.flow_j, self.flow_mass)
        ]

    def marginal_residuals(self) -> tuple[float, float]:
        rows = np.zeros(len(self.source))
        cols = np.zeros(len(self.target))
        np.add.at(rows, self.flow_i, self.flow_mass)
        np.add.at(cols, self.flow_j, self.flow_mass)
        return (
            float(np.abs(rows - self.source.weights).max()),
            float(np.abs(cols - self.target.weights).max()),
        )

    def dump_csv(self, path) -> None:
        lines = ["i,j,mass"]
        lines += [f"{i},{j},{m!r}" for i, j, m in self.flows]
        from pathlib import Path

        Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True, eq=False)
class PotentialPair:
    """Kantorovich potentials on source and target points."""

    psi: np.ndarray
    psi_c: np.ndarray


def _ssp(cost: np.ndarray, supply: np.ndarray, demand: np.ndarray):
    """Successive shortest paths on the uncapacitated bipartite graph.

    Returns flows {(i, j): units} plus potentials (psi, psi_c) satisfying
    psi_i + psi_c_j <= c_ij with equality on every flow-carrying pair.
    """
    n, m = cost.shape
    phi_s = np.zeros(n)
    phi_t = np.zeros(m)
    rem_s = supply.astype(np.int64).copy()
    rem_t = demand.astype(np.int64).copy()
    back: list[dict] = [dict() for _ in range(m)]  # back[j]: {i: units}
    total_rem = int(rem_s.sum())
    rounds = 0
    while total_rem > 0:
        rounds += 1
        if rounds > 50 * (n + m) + 1000:
            raise NoConvergence("augmentation guard tripped in transport solve")
        dist = np.full(n + m, np.inf)
        dist[:n][rem_s > 0] = 0.0
        done = np.zeros(n + m, dtype=bool)
        pred = np.full(n + m, -1, dtype=np.int64)
        heap = [(0.0, int(i)) for i in np.nonzero(rem_s > 0)[0]]
        heapq.heapify(heap)
        t_star = -1
        while heap:
            d, u = heapq.heappop(heap)
            if done[u] or d > dist[u]:
                continue
            done[u] = True
            if u >= n and rem_t[u - n] > 0:
                t_star = u - n
                break
            if u < n:
                rc = cost[u] + (phi_s[u] - phi_t)
                nd = d + np.maximum(rc, 0.0)
                better = nd < dist[n:]
                for j in np.nonzero(better)[0]:
                    dist[n + j] = nd[j]
                    pred[n + j] = u
                    heapq.heappush(heap, (float(nd[j]), int(n + j)))
            else:
                j = u - n
                if back[j]:
                    ii = np.fromiter(back[j].keys(), np.int64)
                    rc = phi_t[j] - phi_s[ii] - cost[ii, j]
                    nd = d + np.maximum(rc, 0.0)
                    better = nd < dist[ii]
                    for t in np.nonzero(better)[0]:
                        i = int(ii[t])
                        dist[i] = nd[t]
                        pred[i] = u
                        heapq.heappush(heap, (float(nd[t]), i))
        if t_star < 0:
            raise NoConvergence("no augmenting path found in transport solve")
        # potential update keeps reduced costs nonnegative
        upd = np.minimum(dist, dist[n + t_star])
        fin = np.isfinite(upd)
        phi_s[fin[:n]] += upd[:n][fin[:n]]
        phi_t[fin[n:]] += upd[n:][fin[n:]]
        # trace augmenting path, find bottleneck, apply
        path = []
        u = n + t_star
        while pred[u] >= 0:
            path.append((int(pred[u]), int(u)))
            u = int(pred[u])
        start = u
        delta = min(int(rem_s[start]), int(rem_t[t_star]))
        for a, b in path:
            if a >= n:  # backward edge: flow (b, a - n) is reduced
                delta = min(delta, back[a - n][b])
        for a, b in path:
            if b >= n:
                back[b - n][a] = back[b - n].get(a, 0) + delta
            else:
                j = a - n
                back[j][b] -= delta
                if back[j][b] == 0:
                    del back[j][b]
        rem_s[start] -= delta
        rem_t[t_star] -= delta
        total_rem -= delta
    flows = {(i, j): units for j in range(m) for i, units in back[j].items()}
    return flows, -phi_s, phi_t


def solve_discrete_transport(
    source: WeightedPointCloud,
    target: WeightedPointCloud,
    p: float,
    denominator: int = DEFAULT_DENOMINATOR,
) -> TransportPlan:
    """Exactly optimal coupling for the finite transportation linear program.

    The returned ``total_cost`` equals W_p^p of the two clouds. Degenerate
    shapes (a single source or a single target) have a forced plan and are
    resolved directly without quantization.
    """
    if len(source) == 0 or len(target) == 0:
        raise EmptyCloud("transport needs nonempty point clouds")
    if p < 1:
        raise ValueError("cost exponent p must be >= 1")
    if abs(source.weights.sum() - target.weights.sum()) > 1e-8:
        raise UnbalancedMasses("source and target masses differ")

    n, m = len(source), len(target)
    cost = _pairwise_cost(source.points, target.points, p)

    if m == 1 or n == 1:
        if m == 1:
            fi = np.arange(n)
            fj = np.zeros(n, dtype=np.int64)
            fmass = source.weights.copy()
            psi_c = np.array([float(cost[:, 0].min())])
            psi = cost[:, 0] - psi_c[0]
        else:
            fi = np.zeros(m, dtype=np.int64)
            fj = np.arange(m)
            fmass = target.weights.copy()
            psi = np.zeros(1)
            psi_c = cost[0, :].copy()
        total = float(cost[fi, fj] @ fmass)
        return TransportPlan(
            source, target, fi, fj, fmass, p, total, 0.0, psi, psi_c
        )

    supply = quantize_to_units(source.weights, denominator)
    demand = quantize_to_units(target.weights, denominator)
    q_res = max(
        float(np.abs(supply / denominator - source.weights).max()),
        float(np.abs(demand / denominator - target.weights).max()),
    )
    flows, psi, psi_c = _ssp(cost, supply, demand)
    keys = sorted(flows.keys())
    fi = np.array([k[0] for k in keys], dtype=np.int64)
    fj = np.array([k[1] for k in keys], dtype=np.int64)
    fmass = np.array([flows[k] for k in keys], dtype=float) / denominator
    total = float(cost[fi, fj] @ fmass)
    return TransportPlan(source, target, fi, fj, fmass, p, total, q_res, psi, psi_c)


def c_transform(points: np.ndarray, values: np.ndarray, opposite_points: np.ndarray, p: float) -> np.ndarray:
    """chi^c(y) = min over x of |x - y|^p - chi(x), exactly on the point set."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    opposite_points = np.atleast_2d(np.asarray(opposite_points, dtype=float))
    values = np.asarray(values, dtype=float)
    if len(points) == 0 or len(opposite_points) == 0:
        raise EmptyCloud("c-transform needs nonempty point sets")
    cost = _pairwise_cost(opposite_points, points, p)
    return (cost - values[None, :]).min(axis=1)


def _flow_components(n: int, m: int, fi, fj):
    """Connected components of the bipartite support graph.

    Returns (comp_src, comp_tgt, n_components); isolated nodes (possible only
    for zero-weight inputs, which clouds forbid) get their own component.
    """
    adj_s: list[list[int]] = [[] for _ in range(n)]
    adj_t: list[list[int]] = [[] for _ in range(m)]
    for i, j in zip(fi, fj):
        adj_s[int(i)].append(int(j))
        adj_t[int(j)].append(int(i))
    comp_s = np.full(n, -1, dtype=int)
    comp_t = np.full(m, -1, dtype=int)
    comp = 0
    for root in range(n):
        if comp_s[root] >= 0:
            continue
        stack = [("s", root)]
        comp_s[root] = comp
        while stack:
            side, u = stack.pop()
            if side == "s":
                for j in adj_s[u]:
                    if comp_t[j] < 0:
                        comp_t[j] = comp
                        stack.append(("t", j))
            else:
                for i in adj_t[u]:
                    if comp_s[i] < 0:
                        comp_s[i] = comp
                        stack.append(("s", i))
        comp += 1
    for j in range(m):
        if comp_t[j] < 0:
            comp_t[j] = comp
            comp += 1
    return comp_s, comp_t, comp


def recover_potentials(plan: TransportPlan, feasibility_tol: float = 1e-9) -> PotentialPair:
    """Dual potentials for an optimal plan, rebuilt from its support graph.

    Complementary slackness pins the potentials along every flow edge, so a
    breadth-first sweep fixes them up to one constant per connected component
    of the support graph. Components are normalized to min-zero over their
    sources; if those shifts break cross-component feasibility the offsets
    are re-solved as a difference-constraint system, and a final global shift
    restores min-zero over the support.
    """
    n, m = len(plan.source), len(plan.target)
    cost = _pairwise_cost(plan.source.points, plan.target.points, plan.cost_exponent)
    fi, fj = plan.flow_i, plan.flow_j
    adj_s: list[list[int]] = [[] for _ in range(n)]
    adj_t: list[list[int]] = [[] for _ in range(m)]
    for i, j in zip(fi, fj):
        adj_s[int(i)].append(int(j))
        adj_t[int(j)].append(int(i))
    psi = np.full(n, np.nan)
    psi_c = np.full(m, np.nan)
    comp_s, comp_t, n_comp = _flow_components(n, m, fi, fj)
    for root in range(n):
        if not np.isnan(psi[root]):
            continue
        psi[root] = 0.0
        stack = [("s", root)]
        while stack:
            side, u = stack.pop()
            if side == "s":
                for j in adj_s[u]:
                    if np.isnan(psi_c[j]):
                        psi_c[j] = cost[u, j] - psi[u]
                        stack.append(("t", j))
            else:
                for i in adj_t[u]:
                    if np.isnan(psi[i]):
                        psi[i] = cost[i, u] - psi_c[u]
                        stack.append(("s", i))
    if np.isnan(psi).any() or np.isnan(psi_c).any():
        raise DegeneratePlan("plan support does not cover all points")
    # per-component min-zero over sources
    for c in range(n_comp):
        mask = comp_s == c
        if mask.any():
            shift = psi[mask].min()
            psi[mask] -= shift
            psi_c[comp_t == c] += shift
    violation = (psi[:, None] + psi_c[None, :] - cost).max()
    if violation > feasibility_tol and n_comp > 1:
        # difference constraints delta_B - delta_A <= slack(A, B), solved by
        # Bellman-Ford from a virtual root; a feasible assignment exists
        # because the LP dual does.
        slack_mat = np.full((n_comp, n_comp), np.inf)
        gap = cost - psi[:, None] - psi_c[None, :]
        for a in range(n_comp):
            rows = comp_s == a
            if not rows.any():
                continue
            for b in range(n_comp):
                cols = comp_t == b
                if a == b or not cols.any():
                    continue
                slack_mat[a, b] = gap[np.ix_(rows, cols)].min()
        delta = np.zeros(n_comp)
        for _ in range(n_comp):
            changed = False
            for a in range(n_comp):
                reach = delta[a] + slack_mat[a]
                lower = reach < delta - 1e-15
                if lower.any():
                    delta[lower] = reach[lower]
                    changed = True
            if not changed:
                break
        else:
            raise DegeneratePlan("cross-component feasibility repair failed")
        psi -= delta[comp_s]
        psi_c += delta[comp_t]
        shift = psi.min()
        psi -= shift
        psi_c += shift
    return PotentialPair(psi=psi, psi_c=psi_c)


def wasserstein(source: WeightedPointCloud, target: WeightedPointCloud, p: float) -> float:
    """W_p distance: the p-th root of the optimal transport cost."""
    plan = solve_discrete_transport(source, target, p)
    return plan.total_cost ** (1.0 / p)
