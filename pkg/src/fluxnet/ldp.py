"""Rate function and fluctuation-relation diagnostics.

The rate function on the conserved-flux complement is the Legendre
transform of g restricted to the finite region of the section.  Interior
flux values are handled by a damped Newton iteration on the strictly
concave dual problem; flux values outside the gradient image fall back to
a supremum over the finite-region boundary, where the rate function is a
ruled surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .cgf import (
    DomainGeometry,
    domain_margin,
    g_gradient,
    lambda_pm,
    section_boundary,
    section_inf_boundary,
    sinf_margin,
)
from .errors import ConvergenceError, NumericalError, RiccatiError, SpecificationError
from .network import LinearModel, commuting_lift
from .solvers import riccati_extrapolated, riccati_maximal, steady_covariance

__all__ = [
    "RateResult",
    "GapScan",
    "ConservedDirection",
    "rate_function",
    "fr_defect",
    "condition_R_scan",
    "entropy_production",
    "conserved_direction",
    "conserved_rate",
]

#: Armijo constant and shrink factor of the backtracking line search
ARMIJO = 1e-4
SHRINK = 0.5

#: iteration budget of the damped Newton ascent
MAX_NEWTON = 200


@dataclass(eq=False)
class RateResult:
    """Value of the rate function at one flux vector.

    ``interior`` records whether the maximizing tilt is a stationary point
    inside the finite region (the proven regime of the local theorem); when
    false, the value is the supremum over the region's boundary and is
    flagged ``conjectural_global``.  ``anomaly`` is the fluctuation-relation
    defect ``I(phi) - I(-phi) - <theta^{-1}, phi>`` when requested.
    """

    phi: np.ndarray
    I_value: float
    xi_star: np.ndarray
    interior: bool
    in_F0: bool
    grad_residual: float
    iterations: int
    conjectural_global: bool
    anomaly: float | None = None


def _g_riccati_fast(model: LinearModel, xi: np.ndarray) -> float:
    sol = riccati_maximal(model, xi)
    t_x = float(np.trace(model.Q.T @ sol.X @ model.Q))
    t_lift = float(np.sum(2.0 * model.gamma * model.theta * xi))
    return -0.5 * (t_x - t_lift)


def _feasible(model: LinearModel, geometry: DomainGeometry,
              xi: np.ndarray) -> bool:
    if domain_margin(model, xi) <= 0.0:
        return False
    try:
        return sinf_margin(model, geometry, xi) > 0.0
    except (RiccatiError, NumericalError):
        return False


def _f0_margin(model: LinearModel, geometry: DomainGeometry,
               xi_star: np.ndarray) -> float:
    """Feasibility margin for membership of the gradient image in the
    symmetric sub-family where the local fluctuation relation is proven.

    Looks for a conserved-direction shift placing both the tilt and its
    mirror inside the finite region.  Exact for a one-dimensional lineality
    space, coordinate ascent otherwise.
    """
    mirror = geometry.project(model.theta_inv) - xi_star
    c_ones = float(np.mean(model.theta_inv))
    if geometry.dim_L == 1:
        lam = lambda_pm(model, xi_star)
        lam_m = lambda_pm(model, mirror)
        lo = max(lam.minus, c_ones - lam_m.plus)
        hi = min(lam.plus, c_ones - lam_m.minus)
        return hi - lo

    lifts = geometry.L_lifts
    rep = commuting_lift(model, (geometry.L_basis.T @ geometry.L_basis) @ model.theta_inv)
    M = steady_covariance(model).M
    w, U = np.linalg.eigh(M)
    Minv = (U / w) @ U.T
    sol = riccati_maximal(model, xi_star)
    dual = riccati_maximal(model, model.theta_inv - xi_star)
    sol_m = riccati_maximal(model, mirror)
    dual_m = riccati_maximal(model, model.theta_inv - mirror)

    def margin(coeffs: np.ndarray) -> float:
        shift = sum(c * lift for c, lift in zip(coeffs, lifts))
        shift_m = rep - shift
        return min(
            float(np.linalg.eigvalsh(dual.X - shift)[0]),
            float(np.linalg.eigvalsh(sol.X + Minv + shift)[0]),
            float(np.linalg.eigvalsh(dual_m.X - shift_m)[0]),
            float(np.linalg.eigvalsh(sol_m.X + Minv + shift_m)[0]),
        )

    scale = max(1.0, float(np.abs(np.linalg.eigvalsh(dual.X)).max()))
    coeffs = np.zeros(geometry.dim_L)
    for _ in range(4):
        for j in range(geometry.dim_L):
            def along(c: float) -> float:
                trial = coeffs.copy()
                trial[j] = c
                return -margin(trial)

            res = scipy.optimize.minimize_scalar(
                along, bounds=(-4.0 * scale, 4.0 * scale), method="bounded",
                options={"xatol": 1e-9 * scale})
            coeffs[j] = float(res.x)
    return margin(coeffs)


def _g_riccati_robust(model: LinearModel, xi: np.ndarray,
                      inward: np.ndarray) -> float:
    try:
        sol = riccati_maximal(model, xi)
    except RiccatiError:
        sol = riccati_extrapolated(model, xi, inward)
    t_x = float(np.trace(model.Q.T @ sol.X @ model.Q))
    t_lift = float(np.sum(2.0 * model.gamma * model.theta * xi))
    return -0.5 * (t_x - t_lift)


def _dir_from_angles(angles: np.ndarray, k: int) -> np.ndarray:
    if k == 1:
        return np.array([1.0 if angles[0] < np.pi / 2 else -1.0])
    if k == 2:
        return np.array([np.cos(angles[0]), np.sin(angles[0])])
    az, pol = angles
    return np.array([np.cos(pol),
                     np.sin(pol) * np.cos(az),
                     np.sin(pol) * np.sin(az)])


class _BoundaryTable:
    """Sampled boundary of the finite region: rays from the origin.

    Radii are found by bisection with bracket hints chained from the
    previous ray, and the Riccati value of g is stored per sample.  Built
    lazily on first use and cached on the geometry; the per-ray cost then
    amortizes over every boundary-regime flux evaluation.
    """

    COUNT_2D = 384
    COUNT_3D = 512

    def __init__(self, model: LinearModel, geometry: DomainGeometry):
        k = geometry.section_dim
        if k == 2:
            self.angles = [np.array([a]) for a in
                           np.linspace(0.0, 2.0 * np.pi, self.COUNT_2D,
                                       endpoint=False)]
        elif k == 3:
            self.angles = _fibonacci_angles(self.COUNT_3D)
        else:
            self.angles = [np.array([0.0]), np.array([np.pi])]
        self.xi = np.empty((len(self.angles), model.d))
        self.g = np.empty(len(self.angles))
        self.radius = np.empty(len(self.angles))
        hint = None
        for idx, angles in enumerate(self.angles):
            xi, r, g_val = _boundary_point(model, geometry, angles, hint)
            self.xi[idx] = xi
            self.radius[idx] = r
            self.g[idx] = g_val
            hint = r if k == 2 else None


def _boundary_point(model: LinearModel, geometry: DomainGeometry,
                    angles: np.ndarray, hint: float | None = None,
                    tol: float = 1e-7) -> tuple[np.ndarray, float, float]:
    u = geometry.from_frame(_dir_from_angles(angles, geometry.section_dim))
    r = section_inf_boundary(model, geometry, u, tol=tol, bracket_hint=hint)
    xi = r * u
    return xi, r, _g_riccati_robust(model, xi, inward=-u)


def _boundary_table(model: LinearModel,
                    geometry: DomainGeometry) -> _BoundaryTable:
    table = geometry._radial.get("sinf_table")
    if table is None:
        table = _BoundaryTable(model, geometry)
        geometry._radial["sinf_table"] = table
    return table


def _boundary_supremum(model: LinearModel, geometry: DomainGeometry,
                       phi: np.ndarray) -> tuple[float, np.ndarray]:
    """Supremum of the Legendre objective over the finite-region boundary."""
    k = geometry.section_dim
    table = _boundary_table(model, geometry)
    values = table.xi @ phi - table.g
    best = int(np.argmax(values))

    def objective(angles: np.ndarray, hint: float) -> tuple[float, np.ndarray]:
        xi, r, g_val = _boundary_point(model, geometry, angles, hint)
        return float(xi @ phi) - g_val, xi

    if k == 1:
        return float(values[best]), table.xi[best]

    if k == 2:
        a0 = table.angles[best][0]
        span = 2.0 * np.pi / len(table.angles)
        res = scipy.optimize.minimize_scalar(
            lambda a: -objective(np.array([a]), table.radius[best])[0],
            bounds=(a0 - span, a0 + span),
            method="bounded", options={"xatol": 1e-7})
        value, xi = objective(np.array([float(res.x)]), table.radius[best])
        if values[best] > value:
            return float(values[best]), table.xi[best]
        return value, xi

    res = scipy.optimize.minimize(
        lambda a: -objective(a, table.radius[best])[0],
        table.angles[best], method="Nelder-Mead",
        options={"xatol": 1e-7, "fatol": 1e-12, "maxiter": 200})
    value, xi = objective(res.x, table.radius[best])
    if values[best] > value:
        return float(values[best]), table.xi[best]
    return value, xi


def _fibonacci_angles(count: int) -> list[np.ndarray]:
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    angles = []
    for j in range(count):
        z = 1.0 - 2.0 * (j + 0.5) / count
        angles.append(np.array([(2.0 * np.pi * j / golden) % (2.0 * np.pi),
                                np.arccos(z)]))
    return angles


def rate_function(model: LinearModel, geometry: DomainGeometry,
                  phi: np.ndarray, with_anomaly: bool = True,
                  gtol: float = 1e-8) -> RateResult:
    """Rate function of the conserved-flux complement at one flux vector.

    Maximizes the concave Legendre objective over the finite region by
    damped Newton with backtracking, every step checked against domain and
    finite-region membership.  If the stationary point is not attainable
    inside, the supremum over the region boundary is returned with
    ``interior=False``.

    Raises
    ------
    SpecificationError
        If ``phi`` has a component along the lineality space.
    ConvergenceError
        If the iteration budget is exhausted away from any boundary.
    """
    phi = np.asarray(phi, dtype=float)
    if np.linalg.norm(phi - geometry.project(phi)) > 1e-8 * (1.0 + np.linalg.norm(phi)):
        raise SpecificationError("flux vector must be orthogonal to the lineality space")
    res = _maximize(model, geometry, phi, gtol)
    if with_anomaly:
        res_m = _maximize(model, geometry, -phi, gtol)
        res.anomaly = res.I_value - res_m.I_value - float(model.theta_inv @ phi)
    return res


def _maximize(model: LinearModel, geometry: DomainGeometry,
              phi: np.ndarray, gtol: float) -> RateResult:
    k = geometry.section_dim
    phi_c = geometry.to_frame(phi)
    c = np.zeros(k)
    f_c = float(c @ phi_c) - _g_riccati_fast(model, geometry.from_frame(c))
    tol = gtol * (1.0 + np.linalg.norm(phi))
    stall_tol = max(100.0 * tol, 1e-7 * (1.0 + np.linalg.norm(phi)))
    noise = 1e-13 * (1.0 + abs(f_c))
    h = 1e-5

    def grad_at(coords: np.ndarray) -> np.ndarray:
        return phi_c - geometry.frame @ g_gradient(model, geometry.from_frame(coords))

    def safe_grad(coords: np.ndarray) -> np.ndarray | None:
        try:
            return grad_at(coords)
        except (RiccatiError, NumericalError):
            return None

    grad = grad_at(c)
    boundary = False
    converged = False
    iterations = 0
    for iterations in range(1, MAX_NEWTON + 1):
        if np.linalg.norm(grad) <= tol:
            converged = True
            break
        delta = grad
        columns = []
        for j in range(k):
            step = np.zeros(k)
            step[j] = h
            gp, gm = safe_grad(c + step), safe_grad(c - step)
            if gp is not None and gm is not None:
                columns.append((gp - gm) / (2.0 * h))
            elif gp is not None:
                columns.append((gp - grad) / h)
            elif gm is not None:
                columns.append((grad - gm) / h)
            else:
                columns = []
                break
        if columns:
            H = np.array(columns).T
            H = 0.5 * (H + H.T)
            try:
                candidate = np.linalg.solve(H, -grad)
                if candidate @ grad > 0.0:
                    delta = candidate
            except np.linalg.LinAlgError:
                pass
        t = 1.0
        moved = False
        for _ in range(40):
            trial = c + t * delta
            if _feasible(model, geometry, geometry.from_frame(trial)):
                f_trial = float(trial @ phi_c) - _g_riccati_fast(
                    model, geometry.from_frame(trial))
                if f_trial >= f_c + ARMIJO * t * float(delta @ grad) - noise:
                    c, f_c = trial, f_trial
                    grad = grad_at(c)
                    moved = True
                    break
            t *= SHRINK
        if not moved:
            if np.linalg.norm(grad) <= stall_tol:
                # stationary to floating precision: interior optimum
                converged = True
            else:
                # step pinned at the feasibility boundary with ascent left
                boundary = True
            break
    if not converged and not boundary:
        raise ConvergenceError(
            f"rate-function ascent did not converge (best value {f_c:.6e}, "
            f"gradient residual {np.linalg.norm(grad):.2e})")

    if boundary:
        value, xi_star = _boundary_supremum(model, geometry, phi)
        value = max(value, f_c)
        return RateResult(phi=phi, I_value=value, xi_star=xi_star,
                          interior=False, in_F0=False,
                          grad_residual=float(np.linalg.norm(grad)),
                          iterations=iterations, conjectural_global=True)

    xi_star = geometry.from_frame(c)
    in_f0 = _f0_margin(model, geometry, xi_star) > 0.0
    return RateResult(phi=phi, I_value=f_c, xi_star=xi_star, interior=True,
                      in_F0=in_f0, grad_residual=float(np.linalg.norm(grad)),
                      iterations=iterations, conjectural_global=False)


def fr_defect(model: LinearModel, geometry: DomainGeometry,
              phi: np.ndarray) -> float:
    """Fluctuation-relation defect ``I(-phi) - I(phi) + <theta^{-1}, phi>``.

    Zero exactly where the universal relation holds.
    """
    phi = np.asarray(phi, dtype=float)
    plus = _maximize(model, geometry, phi, gtol=1e-9)
    minus = _maximize(model, geometry, -phi, gtol=1e-9)
    return minus.I_value - plus.I_value + float(model.theta_inv @ phi)


@dataclass(eq=False)
class GapScan:
    """Spectral gap of the extremal eigenvalue functionals on the section
    boundary, sampled over quasi-uniform directions."""

    directions: np.ndarray      # (count, k) unit vectors in frame coordinates
    polar: np.ndarray           # (count, ...) figure-convention coordinates
    xi_boundary: np.ndarray     # (count, d) boundary tilts
    radius: np.ndarray          # (count,) section radii
    Lambda_minus: np.ndarray
    Lambda_plus: np.ndarray
    gap: np.ndarray
    min_gap: float
    condition_R: bool


def _scan_directions(k: int, n_dirs: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions plus figure-convention coordinates for each."""
    if k == 1:
        dirs = np.array([[1.0], [-1.0]])
        polar = np.array([[0.0], [np.pi]])
        return dirs, polar
    if k == 2:
        angles = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
        dirs = np.column_stack([np.cos(angles), np.sin(angles)])
        return dirs, angles[:, None]
    angles = _fibonacci_angles(n_dirs)
    dirs = np.array([_dir_from_angles(a, 3) for a in angles])
    polar = np.array([
        [az, pol, pol / np.pi * np.cos(az), pol / np.pi * np.sin(az)]
        for az, pol in angles])
    return dirs, polar


def condition_R_scan(model: LinearModel, geometry: DomainGeometry,
                     n_dirs: int = 64) -> GapScan:
    """Sample the section boundary and evaluate the spectral gap there.

    The sufficient condition for the global LDP holds iff the minimal gap
    over the boundary is positive.  Boundary tilts are reached by
    ray-shooting from the projected symmetry center; the Riccati solutions
    there are obtained by inward extrapolation.
    """
    if n_dirs < 8:
        raise SpecificationError("need at least 8 scan directions")
    k = geometry.section_dim
    dirs, polar = _scan_directions(k, n_dirs)
    xi_b = np.empty((len(dirs), model.d))
    radii = np.empty(len(dirs))
    lam_m = np.empty(len(dirs))
    lam_p = np.empty(len(dirs))
    for idx, dc in enumerate(dirs):
        u = geometry.from_frame(dc)
        r = section_boundary(model, geometry, u)
        xi = geometry.center + r * u
        lam = lambda_pm(model, xi, inward=-u)
        xi_b[idx] = xi
        radii[idx] = r
        lam_m[idx] = lam.minus
        lam_p[idx] = lam.plus
    gap = lam_p - lam_m
    min_gap = float(gap.min())
    return GapScan(directions=dirs, polar=polar, xi_boundary=xi_b,
                   radius=radii, Lambda_minus=lam_m, Lambda_plus=lam_p,
                   gap=gap, min_gap=min_gap, condition_R=min_gap > 0.0)


@dataclass(frozen=True, eq=False)
class EntropyProduction:
    """Mean entropy production rate and the stationary mean flux vector."""

    ep: float
    mean_flux: np.ndarray


def entropy_production(model: LinearModel) -> EntropyProduction:
    """Stationary entropy production rate ``-<theta^{-1}, grad g(0)>``.

    The gradient of g at zero is the stationary mean heat-flux vector; it
    is orthogonal to the conserved directions, so no net energy accumulates.
    """
    mean_flux = g_gradient(model, np.zeros(model.d))
    ep = -float(model.theta_inv @ mean_flux)
    return EntropyProduction(ep=ep, mean_flux=mean_flux)


@dataclass(frozen=True, eq=False)
class ConservedDirection:
    """Conserved tilt with its nonnegative lift and boundary-term rate slope."""

    xi: np.ndarray
    xi_tilde: np.ndarray
    shift: float
    N: np.ndarray
    rate_slope: float


def conserved_direction(model: LinearModel, xi: np.ndarray) -> ConservedDirection:
    """Rate data for a conserved-direction flux component.

    The lift with vanishing flux density is shifted along the all-ones
    direction until nonnegative (which loses no generality for the stated
    rate), and the slope is the reciprocal of the largest eigenvalue of the
    covariance-weighted lift.

    Raises
    ------
    SpecificationError
        If the tilt is not in the lineality space.
    """
    xi = np.asarray(xi, dtype=float)
    S = commuting_lift(model, xi)
    w = np.linalg.eigvalsh(S)
    shift = max(0.0, -float(w[0]))
    S_plus = S + shift * np.eye(model.dim)
    w, U = np.linalg.eigh(S_plus)
    root = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T
    M = steady_covariance(model).M
    N = root @ M @ root
    N = 0.5 * (N + N.T)
    top = float(np.linalg.eigvalsh(N)[-1])
    if top <= 0.0:
        raise NumericalError("degenerate conserved form; no rate slope")
    return ConservedDirection(xi=xi, xi_tilde=S_plus, shift=shift, N=N,
                              rate_slope=1.0 / top)


def conserved_rate(model: LinearModel, xi: np.ndarray, q: float) -> float:
    """Large-deviation rate ``|q| / max sp(N)`` of a conserved flux component."""
    return conserved_direction(model, xi).rate_slope * abs(float(q))
