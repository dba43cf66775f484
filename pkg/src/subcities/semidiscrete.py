"""Resident-density subproblem for a fixed atomic service measure.

Given atoms with masses, the optimal density is a truncated radial profile
around each atom pinned by one weight per atom: u(x) = k(max_i(c_i - |x-x_i|^p) v 0).
Weights are solved so each atom's cell carries exactly its mass, by damped
Newton on the concave dual with a boundary-coupled Jacobian, falling back
to per-coordinate bisection sweeps.

Hard cell assignment on a grid makes the per-atom mass map piecewise smooth
with jumps of order (boundary density) * (cell volume), so that is the
attainable mass-balance floor on generic asymmetric instances; symmetric
and single-atom instances solve to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    AtomOutsideDomain,
    GridTooCoarse,
    MassOutOfRange,
    NoConvergence,
    NonpositiveMass,
    NotProbability,
)
from .functionals import FunctionFamily, eval_F
from .measures import (
    INTERNAL_PROB_TOL,
    AtomicMeasure,
    Grid,
    GridDensity,
    WeightedPointCloud,
    normalize,
    to_point_cloud,
)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)

# concavity of the dual means the Newton direction is always an ascent
# direction; this counter records any observed violation
solver_stats = {"ascent_failures": 0}


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def _gl(a: float, b: float, fn) -> float:
    x = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
    return 0.5 * (b - a) * float(np.dot(_GL_WEIGHTS, fn(x)))


@lru_cache(maxsize=4096)
def _scaled_power_integral(beta: float, s: float, p: float) -> float:
    """J = int_0^1 (1 - z^p)^beta z^(s-1) dz by Gauss-Legendre.

    For non-integer beta the integrand has an algebraic endpoint singularity
    at z=1; substituting 1-z = w^m with integer m >= 4/(1+beta) makes the
    transformed integrand smooth enough for the 64-point rule.
    """
    if abs(beta - round(beta)) < 1e-12 and round(beta) >= 0:
        return _gl(0.0, 1.0, lambda z: (1.0 - z**p) ** beta * z ** (s - 1.0))
    m = max(1, math.ceil(4.0 / (1.0 + beta)))

    def fn(w):
        t = w**m
        z = 1.0 - t
        one_minus_zp = -np.expm1(p * np.log1p(-t))
        good = one_minus_zp > 0.0
        safe = np.where(good, one_minus_zp, 1.0)
        return np.where(good, safe**beta * z ** (s - 1.0), 0.0) * m * w ** (m - 1.0)

    return _gl(0.0, 1.0, fn)


def radial_power_integral(beta: float, s: float, p: float, R: float) -> float:
    """int_0^R (R^p - r^p)^beta r^(s-1) dr."""
    if R <= 0.0:
        return 0.0
    return R ** (s + p * beta) * _scaled_power_integral(float(beta), float(s), float(p))


def _generic_radial(fn, s: float, R: float) -> float:
    """Panel Gauss-Legendre of fn(R^p - r^p)-style integrands times r^(s-1).

    ``fn`` receives r directly. Panels shrink geometrically toward r = R
    where catalogue-free integrands may lose smoothness.
    """
    if R <= 0.0:
        return 0.0
    cuts = [0.0, 0.5 * R]
    frac = 0.5
    for _ in range(10):
        frac *= 0.5
        cuts.append((1.0 - frac) * R)
    cuts.append(R)
    return sum(
        _gl(a, b, lambda r: fn(r) * r ** (s - 1.0))
        for a, b in zip(cuts[:-1], cuts[1:])
    )


def mass_of_radius(f: FunctionFamily, p: float, n: int, R: float) -> float:
    """Mass of one ball-supported profile: int_0^R k(R^p - r^p) n w_n r^(n-1) dr."""
    if R <= 0.0:
        return 0.0
    nwn = n * unit_ball_volume(n)
    if f.is_power_shaped:
        return f.kappa * nwn * radial_power_integral(f.alpha, n, p, R)
    return nwn * _generic_radial(lambda r: f.k(R**p - r**p), n, R)


def kprime_radial_integral(f: FunctionFamily, p: float, n: int, R: float) -> float:
    """int_0^R k'(R^p - r^p) n w_n r^(n-1) dr (denominator of the energy curvature)."""
    if R <= 0.0:
        return 0.0
    nwn = n * unit_ball_volume(n)
    if f.is_power_shaped:
        return f.kappa * f.alpha * nwn * radial_power_integral(f.alpha - 1.0, n, p, R)
    return nwn * _generic_radial(lambda r: f.k_prime(R**p - r**p), n, R)


def radius_of_mass(f: FunctionFamily, p: float, n: int, m: float) -> float:
    """Invert the mass-radius relation by bisection on the monotone integral."""
    if m <= 0.0:
        raise NonpositiveMass("radius_of_mass needs m > 0")
    if m > 1.0 + 1e-12:
        raise MassOutOfRange("radius_of_mass is restricted to masses <= 1")
    # quadratic-f closed form seeds the bracket for every family
    hi = (m * (n + p) / (unit_ball_volume(n) * p)) ** (1.0 / (n + p))
    for _ in range(200):
        if mass_of_radius(f, p, n, hi) >= m:
            break
        hi *= 2.0
    else:
        raise NoConvergence("mass-radius bracket expansion failed")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = mass_of_radius(f, p, n, mid)
        if abs(val - m) <= 1e-13:
            return mid
        if val < m:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True, eq=False)
class DualWeights:
    """Per-atom constants pinning the optimal density formula."""

    c: np.ndarray
    atoms: AtomicMeasure
    residual: float = float("nan")

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).copy()
        c.flags.writeable = False
        object.__setattr__(self, "c", c)


@dataclass(frozen=True)
class SubcityProfile:
    """One atom with its ball-supported resident profile."""

    center: tuple[float, ...]
    mass: float
    radius: float
    weight: float  # R(mass)^p


class _Workspace:
    """Shared per-grid arrays for the weight solve and mass accounting."""

    def __init__(self, atoms: AtomicMeasure, f: FunctionFamily, p: float, grid: Grid):
        if atoms.dim != grid.domain.dim:
            raise ValueError("atom dimension does not match the grid")
        inside = grid.domain.contains(atoms.points)
        if not inside.all():
            raise AtomOutsideDomain(f"atoms outside domain: {np.nonzero(~inside)[0].tolist()}")
        self.f = f
        self.p = p
        self.grid = grid
        self.atoms = atoms
        self.centers = grid.cell_centers()
        self.vol = grid.cell_volume
        self.m = len(atoms)
        self.dist = np.linalg.norm(
            self.centers[:, None, :] - atoms.points[None, :, :], axis=2
        )
        self.dist_p = self.dist**p
        self._idx = np.arange(len(self.centers))

    def stats(self, c: np.ndarray):
        scores = c[None, :] - self.dist_p
        winner = scores.argmax(axis=1)  # first max: lowest atom index wins ties
        s = scores[self._idx, winner]
        active = s > 0
        u = self.f.k(s)
        cell_mass = np.bincount(
            winner, weights=u * self.vol * active, minlength=self.m
        )
        return s, winner, u, cell_mass

    def dual_value(self, c: np.ndarray, s: np.ndarray) -> float:
        return float(c @ self.atoms.masses) - float(
            self.f.conjugate(np.maximum(s, 0.0)).sum() * self.vol
        )

    def full_jacobian(self, c: np.ndarray) -> np.ndarray:
        """Mass sensitivity: diagonal response plus cell-boundary coupling."""
        scores = c[None, :] - self.dist_p
        winner = scores.argmax(axis=1)
        s = scores[self._idx, winner]
        active = s > 0
        J = np.zeros((self.m, self.m))
        np.add.at(J, (winner, winner), self.f.k_prime(s) * self.vol * active)
        if self.m == 1:
            return J
        scores[self._idx, winner] = -np.inf
        runner = scores.argmax(axis=1)
        gap = s - scores[self._idx, runner]
        p = self.p
        h = self.grid.cell_diameter
        d1 = self.dist[self._idx, winner]
        d2 = self.dist[self._idx, runner]
        pre = active & (gap <= p * (d1 ** (p - 1.0) + d2 ** (p - 1.0)) * h)
        ii = np.nonzero(pre)[0]
        if len(ii) == 0:
            return J
        a, b = winner[ii], runner[ii]

        def _grad(rows, cols):
            d = self.dist[rows, cols][:, None]
            vec = self.centers[rows] - self.atoms.points[cols]
            scale = np.where(d > 0, d ** (p - 2.0), 0.0)
            return p * scale * vec

        grad_gap = np.linalg.norm(_grad(ii, b) - _grad(ii, a), axis=1)
        tau = np.maximum(grad_gap * h, 1e-14)
        on = gap[ii] <= tau
        if not on.any():
            return J
        coupling = self.f.k(s[ii][on]) * self.vol / tau[on]
        aa, bb = a[on], b[on]
        np.add.at(J, (aa, bb), -coupling)
        np.add.at(J, (bb, aa), -coupling)
        np.add.at(J, (aa, aa), coupling)
        np.add.at(J, (bb, bb), coupling)
        return J


def density_from_weights(
    atoms: AtomicMeasure, c, f: FunctionFamily, p: float, grid: Grid
) -> GridDensity:
    """Materialize u(x) = k(max_i(c_i - |x - x_i|^p) v 0) at the cell centers."""
    weights = c.c if isinstance(c, DualWeights) else np.asarray(c, dtype=float)
    ws = _Workspace(atoms, f, p, grid)
    s, _, u, _ = ws.stats(weights)
    values = np.where(s > 0, u, 0.0).reshape(grid.resolution)
    return GridDensity(grid, values)


def cell_masses(
    atoms: AtomicMeasure, c, f: FunctionFamily, p: float, grid: Grid
) -> np.ndarray:
    """Midpoint-rule mass of each atom's cell; ties go to the lowest index."""
    weights = c.c if isinstance(c, DualWeights) else np.asarray(c, dtype=float)
    ws = _Workspace(atoms, f, p, grid)
    return ws.stats(weights)[3]


def _coordinate_sweep(ws: _Workspace, c: np.ndarray, targets: np.ndarray, iters: int = 48):
    """Gauss-Seidel pass: bisect each weight to its own mass balance."""
    c = c.copy()
    for i in range(ws.m):
        lo, hi = 0.0, max(c[i], 1e-6)
        for _ in range(80):
            trial = c.copy()
            trial[i] = hi
            if ws.stats(trial)[3][i] >= targets[i]:
                break
            hi *= 2.0
        else:
            raise GridTooCoarse(
                f"atom {i} cannot reach its target mass on this grid"
            )
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            trial = c.copy()
            trial[i] = mid
            if ws.stats(trial)[3][i] < targets[i]:
                lo = mid
            else:
                hi = mid
        c[i] = hi
    return c


def _level_polish(ws: _Workspace, c: np.ndarray, total: float):
    """Uniform shift balancing total mass; smooth and always solvable."""
    def mass_at(delta):
        return float(ws.stats(c + delta)[3].sum())

    lo, hi = -1.0, 1.0
    for _ in range(80):
        if mass_at(lo) <= total:
            break
        lo *= 2.0
    for _ in range(80):
        if mass_at(hi) >= total:
            break
        hi *= 2.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if mass_at(mid) < total:
            lo = mid
        else:
            hi = mid
    return c + 0.5 * (lo + hi)


def solve_weights(
    atoms: AtomicMeasure,
    f: FunctionFamily,
    p: float,
    grid: Grid,
    tol: float = 1e-7,
    max_iter: int = 500,
) -> DualWeights:
    """Solve the per-atom weights so cell masses match atom masses.

    Damped Newton ascends the concave dual (gradient: atom masses minus cell
    masses); the Jacobian couples neighboring cells through their shared
    boundary layer. A per-coordinate bisection sweep plus a total-mass level
    polish takes over if Newton stalls. Raises NoConvergence with the best
    residual when the requested tolerance is out of reach for the grid.
    """
    if not atoms.is_probability():
        raise NotProbability("solve_weights needs a probability atomic measure")
    c, residual = _solve_weights_best(atoms, f, p, grid, tol, max_iter)
    if residual > tol:
        raise NoConvergence(
            f"mass balance reached {residual:.3e} > tol {tol:.3e}; "
            "refine the grid or relax the tolerance",
            residual=residual,
        )
    return DualWeights(c=c, atoms=atoms, residual=residual)


def _solve_weights_best(
    atoms: AtomicMeasure,
    f: FunctionFamily,
    p: float,
    grid: Grid,
    tol: float,
    max_iter: int = 500,
):
    """Best-effort weight solve; returns (c, residual) without raising."""
    ws = _Workspace(atoms, f, p, grid)
    targets = atoms.masses
    radii = np.array([radius_of_mass(f, p, grid.domain.dim, m) for m in targets])
    c = radii**p
    s, winner, u, cm = ws.stats(c)
    # grant every starving atom its cheapest winnable cell; atoms may steal
    # from each other, so iterate and give up only if that cycles
    for _ in range(2 * ws.m + 2):
        lacking = [i for i in range(ws.m) if targets[i] > 0 and cm[i] <= 0]
        if not lacking:
            break
        for i in lacking:
            others = np.delete(np.arange(ws.m), i)
            if len(others):
                best_other = (c[None, others] - ws.dist_p[:, others]).max(axis=1)
            else:
                best_other = np.zeros(len(ws.dist_p))
            need = ws.dist_p[:, i] + np.maximum(best_other, 0.0)
            req = need.min()
            c[i] = req + 1e-9 * (1.0 + abs(req))
        s, winner, u, cm = ws.stats(c)
    else:
        raise GridTooCoarse(
            "grid cannot give every atom a supporting cell; refine the grid"
        )
    best_c = c.copy()
    best_res = float(np.abs(cm - targets).max())
    phi = ws.dual_value(c, s)
    newton_budget = max_iter
    it = 0
    stalled = False
    while it < newton_budget and best_res > tol:
        it += 1
        r = cm - targets
        J = ws.full_jacobian(c)
        scale = max(float(np.trace(J)) / ws.m, 1e-12)
        try:
            step = np.linalg.solve(J + 1e-10 * scale * np.eye(ws.m), -r)
        except np.linalg.LinAlgError:
            step = -r / np.maximum(np.diag(J), 1e-12)
        slope = float(-r @ step)
        if slope <= 0:
            solver_stats["ascent_failures"] += 1
            step = -r
            slope = float(r @ r)
        lam = 1.0
        accepted = False
        phi_prev = phi
        while lam > 1e-13:
            c_try = c + lam * step
            s2, _, _, cm2 = ws.stats(c_try)
            phi2 = ws.dual_value(c_try, s2)
            support_ok = ((cm2 > 0) | (targets <= 0)).all()
            if support_ok and phi2 >= phi + 1e-4 * lam * slope - 1e-13 * (1.0 + abs(phi)):
                c, s, cm, phi = c_try, s2, cm2, phi2
                accepted = True
                break
            lam *= 0.5
        res = float(np.abs(cm - targets).max())
        if res < best_res:
            best_res, best_c = res, c.copy()
        if not accepted or (
            it > 10 and res > tol and phi <= phi_prev + 1e-15 * (1.0 + abs(phi_prev))
        ):
            stalled = True
            break
    if best_res > tol:
        # fallback: monotone per-coordinate bisection plus level re-balance
        sweeps = 12 if stalled or it >= newton_budget else 4
        c = best_c.copy()
        for _ in range(sweeps):
            c = _coordinate_sweep(ws, c, targets)
            c = _level_polish(ws, c, float(targets.sum()))
            res = float(np.abs(ws.stats(c)[3] - targets).max())
            if res < best_res:
                best_res, best_c = res, c.copy()
            if best_res <= tol:
                break
    return best_c, best_res


def induced_transport_cost(
    atoms: AtomicMeasure, c, f: FunctionFamily, p: float, grid: Grid
) -> float:
    """Transport cost of the plan sending each supported cell to its own atom.

    At solved weights this plan is optimal for the discretized pair: the pair
    (-(max score v 0), c) is dual-feasible with equality on the support.
    """
    weights = c.c if isinstance(c, DualWeights) else np.asarray(c, dtype=float)
    ws = _Workspace(atoms, f, p, grid)
    s, winner, u, _ = ws.stats(weights)
    active = s > 0
    return float((u * ws.vol * ws.dist_p[ws._idx, winner])[active].sum())


def min_Fp_nu(
    nu: AtomicMeasure,
    f: FunctionFamily,
    p: float,
    grid: Grid,
    tol: float = 1e-7,
    max_iter: int = 500,
    transport_oracle: str = "auto",
):
    """Minimize transport-plus-spread cost over densities at fixed atoms.

    Returns the optimal density and a value breakdown. The transport term is
    evaluated through the discrete oracle (exact LP) when the instance is
    small enough, otherwise through the certified induced plan; the route
    taken is recorded in the breakdown.
    """
    weights = solve_weights(nu, f, p, grid, tol=tol, max_iter=max_iter)
    density = density_from_weights(nu, weights, f, p, grid)
    f_term = eval_F(f, density)
    n_support = int((density.values > 0).sum())
    use_lp = transport_oracle == "lp" or (
        transport_oracle == "auto"
        and (len(nu) == 1 or n_support * n_support * len(nu) <= 400_000)
    )
    if use_lp:
        from .discrete_transport import solve_discrete_transport

        cloud = to_point_cloud(normalize(density), tol=INTERNAL_PROB_TOL)
        nu_cloud = WeightedPointCloud(nu.points, nu.masses / nu.total_mass)
        plan = solve_discrete_transport(cloud, nu_cloud, p)
        transport = plan.total_cost
        route = "lp"
    else:
        transport = induced_transport_cost(nu, weights, f, p, grid)
        route = "induced"
    s = (weights.c[None, :] - _Workspace(nu, f, p, grid).dist_p).max(axis=1)
    dual = float(weights.c @ nu.masses) - float(
        f.conjugate(np.maximum(s, 0.0)).sum() * grid.cell_volume
    )
    breakdown = {
        "transport": transport,
        "F": f_term,
        "total": transport + f_term,
        "dual_objective": dual,
        "mass_residual": weights.residual,
        "transport_route": route,
    }
    return density, breakdown
