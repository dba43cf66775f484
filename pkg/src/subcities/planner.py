"""Global planning: how many service poles, their masses, and their layout.

On all of R^n the problem collapses to choosing atom masses minimizing the
summed per-atom energy; atoms are then placed as disjoint balls. On a
bounded domain no closed structure is available, so an alternating
heuristic is provided: exact density re-solves against barycenter/median
position moves and local mass exchanges, accepting only improvements.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditionNotSatisfied, InvalidK, NotProbability, SubcitiesError
from .functionals import ConcentrationFamily, FunctionFamily, eval_F, eval_G
from .measures import (
    INTERNAL_PROB_TOL,
    AtomicMeasure,
    Domain,
    Grid,
    GridDensity,
    WeightedPointCloud,
    normalize,
    to_point_cloud,
)
from .semidiscrete import (
    SubcityProfile,
    _generic_radial,
    _solve_weights_best,
    _Workspace,
    density_from_weights,
    induced_transport_cost,
    radial_power_integral,
    radius_of_mass,
    unit_ball_volume,
)
from .subcity import EnergyCurve, check_atomization_condition, subadditivity_threshold

_DISJOINT_GAP = 1.0 + 1e-6  # atom spacing in units of 2 * max radius


@dataclass(frozen=True, eq=False)
class PlanSolution:
    """A full (density, atoms) pair with its objective accounting."""

    mu: GridDensity
    nu: AtomicMeasure
    profiles: list[SubcityProfile]
    objective: dict
    metadata: dict = field(default_factory=dict)


def _simplex_projection(x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u - css / (np.arange(len(x)) + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(x - theta, 0.0)


def _sum_energy(curve: EnergyCurve, masses: np.ndarray) -> float:
    masses = np.asarray(masses, dtype=float)
    pos = masses[masses > 0]
    return float(np.sum(curve.energy(pos))) if len(pos) else 0.0


def _projected_descent(curve: EnergyCurve, x0: np.ndarray, iters: int = 200) -> np.ndarray:
    x = _simplex_projection(np.asarray(x0, dtype=float))
    val = _sum_energy(curve, x)
    step = 0.1
    for _ in range(iters):
        grad = np.asarray(curve.denergy(np.maximum(x, 1e-9)), dtype=float)
        moved = False
        t = step
        for _ in range(30):
            x_try = _simplex_projection(x - t * grad)
            v_try = _sum_energy(curve, x_try)
            if v_try < val - 1e-15:
                x, val = x_try, v_try
                step = min(t * 2.0, 1.0)
                moved = True
                break
            t *= 0.5
        if not moved:
            break
    return x


def _grid_search(curve: EnergyCurve, k: int, res: int = 200):
    """Exhaustive search on the 1/res mass lattice (k <= 3)."""
    table = np.asarray(curve.energy(np.arange(res + 1) / res), dtype=float)
    table[0] = 0.0
    best_val, best = np.inf, None
    if k == 1:
        return np.array([1.0]), float(table[res])
    if k == 2:
        for i in range(res // 2, res + 1):
            v = table[i] + table[res - i]
            if v < best_val:
                best_val, best = v, (i, res - i)
    else:
        for i in range(res + 1):
            for j in range(i, (res - i) // 2 + 1):
                l = res - i - j
                if l < j:
                    continue
                v = table[i] + table[j] + table[l]
                if v < best_val:
                    best_val, best = v, (i, j, l)
    masses = np.array(sorted(best, reverse=True), dtype=float) / res
    return masses, float(best_val)


def optimize_masses(curve: EnergyCurve, k: int, seed: int = 0, n_starts: int = 20):
    """Best mass split found for exactly k atoms (zeros allowed on the simplex).

    Combines the equal split, projected-gradient descent from the equal split
    and from seeded random starts, and (for k <= 3) an exhaustive 1/200
    lattice search. Returns (masses sorted descending, summed energy).
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidK(f"k must be a positive integer, got {k!r}")
    candidates = [np.full(k, 1.0 / k)]
    rng = np.random.default_rng(seed)
    starts = [np.full(k, 1.0 / k)] + [rng.dirichlet(np.ones(k)) for _ in range(n_starts)]
    for x0 in starts:
        candidates.append(_projected_descent(curve, x0))
    if k <= 3:
        candidates.append(_grid_search(curve, k)[0])
    best_val, best = np.inf, None
    for cand in candidates:
        v = _sum_energy(curve, cand)
        if v < best_val - 1e-15 or best is None:
            best_val, best = v, cand
    masses = np.sort(np.asarray(best, dtype=float))[::-1]
    return masses, float(best_val)


def solve_atomic_problem(
    f: FunctionFamily,
    g: ConcentrationFamily,
    p: float,
    n: int,
    k_max: int,
    seed: int = 0,
    curve: EnergyCurve | None = None,
):
    """Enumerate atom counts and mass splits minimizing the summed energy.

    The enumeration is capped by 1 + floor(2/m0) when the concavity
    threshold m0 is positive (merging sub-m0/2 atoms never helps); if the
    atomization condition fails, a warning is issued and k_max is used as
    the cap. Ties between counts go to the smaller k.
    """
    if k_max < 1:
        raise InvalidK("k_max must be >= 1")
    if curve is None:
        curve = EnergyCurve.build(f, g, p, n)
    report = check_atomization_condition(f, g, p, n)
    m0 = subadditivity_threshold(curve)
    if not report.satisfied:
        warnings.warn(
            "atomization condition not satisfied; capping the atom count "
            f"at k_max={k_max}",
            ConditionNotSatisfied,
        )
    k_hi = min(k_max, 1 + int(np.floor(2.0 / m0))) if m0 > 0 else k_max
    best = None
    for k in range(1, k_hi + 1):
        masses, value = optimize_masses(curve, k, seed=seed)
        if best is None or value < best[2] - 1e-12 * (1.0 + abs(best[2])):
            best = (k, masses, value)
    k_star, masses, value = best
    masses = masses[masses > 1e-12]
    return len(masses), masses, float(value)


def _ball_transport_cost(f: FunctionFamily, p: float, n: int, R: float) -> float:
    """Closed-form transport term of one ball: int k(R^p - r^p) r^p n w_n r^(n-1) dr."""
    if R <= 0:
        return 0.0
    nwn = n * unit_ball_volume(n)
    if f.is_power_shaped:
        return nwn * f.kappa * radial_power_integral(f.alpha, n + p, p, R)
    return nwn * _generic_radial(lambda r: f.k(R**p - r**p) * r**p, n, R)


def _layout_points(k: int, n: int, spacing: float, layout: str, origin) -> np.ndarray:
    pts = np.zeros((k, n))
    if layout == "grid" and n >= 2:
        side = int(np.ceil(np.sqrt(k)))
        for i in range(k):
            pts[i, 0] = (i % side) * spacing
            pts[i, 1] = (i // side) * spacing
    else:
        pts[:, 0] = np.arange(k) * spacing
    if origin is not None:
        pts += np.asarray(origin, dtype=float)
    return pts


def assemble_rn_solution(
    masses,
    f: FunctionFamily,
    g: ConcentrationFamily,
    p: float,
    n: int,
    layout: str = "line",
    resolution=None,
    margin: float = 0.35,
    origin=None,
    transport_oracle: str = "auto",
) -> PlanSolution:
    """Materialize the unconstrained solution as disjoint balls.

    Atoms are spaced so every pairwise gap exceeds twice the uniform radius
    bound, which makes the per-ball profile construction exact. The
    transport term is reported both in closed form and through the discrete
    oracle (exact LP when affordable, certified induced plan otherwise).
    """
    masses = np.asarray(masses, dtype=float)
    if np.any(masses <= 0):
        raise NotProbability("assemble_rn_solution needs strictly positive masses")
    if abs(masses.sum() - 1.0) > 1e-8:
        raise NotProbability("masses must sum to 1")
    k = len(masses)
    radii = np.array([radius_of_mass(f, p, n, m) for m in masses])
    r_bar = radius_of_mass(f, p, n, 1.0)
    spacing = 2.0 * r_bar * _DISJOINT_GAP
    pts = _layout_points(k, n, spacing, layout, origin)
    pad = r_bar * (1.0 + margin)
    lo = pts.min(axis=0) - pad
    hi = pts.max(axis=0) + pad
    domain = Domain.box(list(zip(lo, hi)))
    if resolution is None:
        per_rbar = 48 if n == 1 else 16
        resolution = tuple(
            max(8, int(np.ceil((hi[a] - lo[a]) / r_bar * per_rbar))) for a in range(n)
        )
    elif np.isscalar(resolution):
        resolution = (int(resolution),) * n
    grid = Grid(domain, tuple(resolution))
    atoms = AtomicMeasure(pts, masses)
    weights = radii**p
    density = density_from_weights(atoms, weights, f, p, grid)
    transport_closed = float(sum(_ball_transport_cost(f, p, n, R) for R in radii))
    f_term = eval_F(f, density)
    g_term = eval_G(g, atoms)
    oracle_cost, oracle_route = _oracle_transport(
        atoms, weights, f, p, grid, density, transport_oracle
    )
    objective = {
        "transport": transport_closed,
        "F": f_term,
        "G": g_term,
        "total": transport_closed + f_term + g_term,
        "transport_oracle": oracle_cost,
        "oracle_route": oracle_route,
    }
    profiles = [
        SubcityProfile(center=tuple(pt), mass=float(m), radius=float(R), weight=float(R**p))
        for pt, m, R in zip(pts, masses, radii)
    ]
    metadata = {"mode": "rn-assembly", "layout": layout, "heuristic": False}
    return PlanSolution(mu=density, nu=atoms, profiles=profiles, objective=objective, metadata=metadata)


def _oracle_transport(atoms, weights, f, p, grid, density, mode):
    """Discrete-oracle transport cost: exact LP when affordable, else the
    induced plan whose optimality is certified by the weight duals."""
    if mode == "off":
        return None, "off"
    n_support = int((density.values > 0).sum())
    use_lp = mode == "lp" or (
        mode == "auto" and (len(atoms) == 1 or n_support**2 * len(atoms) <= 400_000)
    )
    if use_lp:
        from .discrete_transport import solve_discrete_transport

        cloud = to_point_cloud(normalize(density), tol=INTERNAL_PROB_TOL)
        nu_cloud = WeightedPointCloud(atoms.points, atoms.masses / atoms.masses.sum())
        plan = solve_discrete_transport(cloud, nu_cloud, p)
        return plan.total_cost, "lp"
    return induced_transport_cost(atoms, weights, f, p, grid), "induced"


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values)
    cum = np.cumsum(weights[order])
    cut = 0.5 * cum[-1]
    return float(values[order][np.searchsorted(cum, cut)])


def _position_candidates(ws, weights_c, p: float) -> np.ndarray:
    """Barycenter (p=2, default) or per-coordinate median (p=1) of each cell."""
    s, winner, u, cm = ws.stats(weights_c)
    active = s > 0
    pts = ws.atoms.points.copy()
    for i in range(ws.m):
        mask = active & (winner == i)
        if not mask.any() or cm[i] <= 0:
            continue
        w = u[mask] * ws.vol
        cells = ws.centers[mask]
        if p == 1.0:
            pts[i] = [_weighted_median(cells[:, a], w) for a in range(cells.shape[1])]
        else:
            pts[i] = (cells * w[:, None]).sum(axis=0) / w.sum()
    return pts


def solve_bounded(
    omega: Domain,
    f: FunctionFamily,
    g: ConcentrationFamily,
    p: float,
    init: AtomicMeasure,
    rounds: int = 12,
    resolution=64,
    tol: float | None = None,
    max_iter: int = 500,
) -> PlanSolution:
    """Alternating heuristic for a bounded domain.

    Each accepted step re-solves the density exactly for the current atoms
    and is kept only if the full objective decreases, so the objective
    sequence is monotone nonincreasing. Position moves use the transport
    barycenter of each atom's cell (median per coordinate when p = 1);
    masses are re-balanced by local exchanges between nearest atoms. The
    paper-free parts are labeled heuristic in the metadata.
    """
    if not init.is_probability():
        raise NotProbability("initial atoms must form a probability")
    if np.isscalar(resolution):
        resolution = (int(resolution),) * omega.dim
    grid = Grid(omega, tuple(resolution))
    base_tol = tol if tol is not None else 1e-7

    def evaluate(atoms: AtomicMeasure):
        c, residual = _solve_weights_best(atoms, f, p, grid, base_tol, max_iter)
        t_term = induced_transport_cost(atoms, c, f, p, grid)
        density = density_from_weights(atoms, c, f, p, grid)
        f_term = eval_F(f, density)
        g_term = eval_G(g, atoms)
        return {
            "atoms": atoms,
            "c": c,
            "residual": residual,
            "density": density,
            "transport": t_term,
            "F": f_term,
            "G": g_term,
            "total": t_term + f_term + g_term,
        }

    def try_evaluate(atoms: AtomicMeasure):
        try:
            return evaluate(atoms)
        except SubcitiesError:
            return None

    def _exchange_candidates(atoms: AtomicMeasure):
        if len(atoms) < 2:
            return
        d = np.linalg.norm(atoms.points[:, None] - atoms.points[None, :], axis=2)
        np.fill_diagonal(d, np.inf)
        for i in range(len(atoms)):
            j = int(d[i].argmin())
            for frac in (0.25, 0.0625):
                delta = frac * min(atoms.masses[i], atoms.masses[j])
                yield _transfer(atoms, i, j, delta)
                yield _transfer(atoms, j, i, delta)
            small, big = (i, j) if atoms.masses[i] <= atoms.masses[j] else (j, i)
            yield _transfer(atoms, small, big, None)

    state = evaluate(init)
    history = [state["total"]]
    for _ in range(rounds):
        improved = False
        # position moves: full barycenter/median step, then a halved step
        ws = _Workspace(state["atoms"], f, p, grid)
        target_pts = _position_candidates(ws, state["c"], p)
        for blend in (1.0, 0.5):
            cand_pts = (1.0 - blend) * state["atoms"].points + blend * target_pts
            try:
                cand = AtomicMeasure(cand_pts, state["atoms"].masses)
            except ValueError:
                continue
            trial = try_evaluate(cand)
            if trial is not None and trial["total"] < state["total"] - 1e-12:
                state = trial
                improved = True
                break
        # mass exchanges, rescanning after every accepted move
        for _ in range(24):
            for cand in _exchange_candidates(state["atoms"]):
                if cand is None:
                    continue
                trial = try_evaluate(cand)
                if trial is not None and trial["total"] < state["total"] - 1e-12:
                    state = trial
                    improved = True
                    break
            else:
                break
        history.append(state["total"])
        if not improved:
            break
        if abs(history[-2] - history[-1]) <= 1e-8 * (1.0 + abs(history[-1])):
            break

    r_bar = radius_of_mass(f, p, omega.dim, 1.0)
    s, winner, u, cm = _Workspace(state["atoms"], f, p, grid).stats(state["c"])
    profiles = [
        SubcityProfile(
            center=tuple(pt),
            mass=float(cm[i]),
            radius=float(max(state["c"][i], 0.0) ** (1.0 / p)),
            weight=float(state["c"][i]),
        )
        for i, pt in enumerate(state["atoms"].points)
    ]
    objective = {
        "transport": state["transport"],
        "F": state["F"],
        "G": state["G"],
        "total": state["total"],
    }
    metadata = {
        "mode": "bounded-alternation",
        "heuristic": True,
        "rounds_used": len(history) - 1,
        "objective_history": history,
        "mass_residual": state["residual"],
        "radius_bound": r_bar,
        "clipped": bool(
            np.any(
                [
                    pr.radius > r_bar * (1 + 1e-9)
                    or np.any(np.asarray(pr.center) - pr.radius < omega.lower)
                    or np.any(np.asarray(pr.center) + pr.radius > omega.lower + omega.widths)
                    for pr in profiles
                ]
            )
        ),
    }
    return PlanSolution(
        mu=state["density"],
        nu=state["atoms"],
        profiles=profiles,
        objective=objective,
        metadata=metadata,
    )


def _transfer(atoms: AtomicMeasure, src: int, dst: int, delta: float | None):
    """Move delta mass (None: all of it) from atom src to atom dst."""
    masses = atoms.masses.copy()
    if delta is None or delta >= masses[src] - 1e-15:
        keep = np.ones(len(masses), dtype=bool)
        keep[src] = False
        masses[dst] += masses[src]
        if keep.sum() == 0:
            return None
        try:
            return AtomicMeasure(atoms.points[keep], masses[keep])
        except ValueError:
            return None
    if delta <= 0:
        return None
    masses[src] -= delta
    masses[dst] += delta
    try:
        return AtomicMeasure(atoms.points, masses)
    except ValueError:
        return None
