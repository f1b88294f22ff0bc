"""Limiting cumulant generating function of the steady-state heat fluxes.

The central object is the convex function ``g`` on tilt space, available by
three independent routes (frequency integral, spectrum of the doubled
matrix, Riccati trace formula), together with the geometry of its essential
domain: the lineality space of conserved directions, the compact section
transverse to it, and the smaller region where the long-time limit of the
finite-horizon generating functions is actually finite.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize

from .errors import (
    ConvergenceError,
    DomainError,
    NumericalError,
    RiccatiError,
    SpecificationError,
)
from .network import LinearModel, TiltLift, canonical_lift, commuting_lift
from .solvers import (
    RiccatiSolution,
    hamiltonian,
    integrate_frequency,
    riccati_extrapolated,
    riccati_maximal,
    steady_covariance,
)

__all__ = [
    "DomainGeometry",
    "CGFResult",
    "LambdaPair",
    "E_matrix",
    "E_matrix_from_lift",
    "in_domain_D",
    "domain_margin",
    "lineality_space",
    "g_value",
    "g_gradient",
    "g_hessian_quadform",
    "lambda_pm",
    "gap_pair",
    "section_boundary",
    "sinf_margin",
    "in_Sinf",
    "section_inf_boundary",
]

#: number of coarse grid points on the transformed frequency half-axis
DOMAIN_GRID = 129

#: singular values below this fraction of the largest count as zero when
#: extracting the lineality space
LINEALITY_RTOL = 1e-9

#: three-way agreement tolerance for the cross-validated value of g
G_AGREE_TOL = 1e-6


def _resolvent_Q(model: LinearModel, omegas: np.ndarray) -> np.ndarray:
    """Batched solves (A + i omega)^{-1} Q, shape (m, 2n, d)."""
    m = len(omegas)
    eye = np.eye(model.dim)
    stack = model.A[None, :, :] + 1j * omegas[:, None, None] * eye[None, :, :]
    return np.linalg.solve(stack, np.broadcast_to(model.Q, (m, *model.Q.shape)))


def _E_batch(model: LinearModel, xi: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    """Tilt response matrices at many frequencies, shape (m, d, d)."""
    RQ = _resolvent_Q(model, np.asarray(omegas, dtype=float))
    R = model.theta_inv[None, :, None] * (model.Q.T[None, :, :] @ RQ)
    z = (np.asarray(xi, dtype=float) * model.theta)[None, :, None]
    Rh = np.conjugate(np.swapaxes(R, 1, 2))
    E = -(z * R + np.swapaxes(np.conjugate(z * R), 1, 2) + Rh @ (z * R))
    return 0.5 * (E + np.conjugate(np.swapaxes(E, 1, 2)))


def E_matrix(model: LinearModel, xi: np.ndarray, omega: float) -> np.ndarray:
    """Self-adjoint tilt response matrix at one frequency.

    Computed from the reduced resolvent ``R(omega)`` as
    ``-(zeta R + R* zeta + R* zeta R)`` with ``zeta = theta^{1/2} xi
    theta^{1/2}``; the result is linear in the tilt and independent of the
    choice of lift.
    """
    return _E_batch(model, xi, np.array([float(omega)]))[0]


def E_matrix_from_lift(model: LinearModel, lift: TiltLift, omega: float) -> np.ndarray:
    """Same matrix computed directly from a lift (cross-check route)."""
    eye = np.eye(model.dim)
    inner = lift.sigma @ np.linalg.solve(model.A + 1j * omega * eye, model.Q)
    return model.Q.T @ np.linalg.solve(model.A.T - 1j * omega * eye, inner)


def _zeta_norm(model: LinearModel, xi: np.ndarray) -> float:
    return float(np.abs(np.asarray(xi) * model.theta).max())


def _omega_cutoff(model: LinearModel, xi: np.ndarray) -> float:
    """Frequency beyond which the decay bound keeps ``I - E`` positive.

    For ``|omega| > 2 ||A||`` the resolvent bound gives
    ``||E|| <= 2 z c + z c^2`` with ``c = 2 a / |omega|``,
    ``a = ||theta^{-1}|| ||Q||^2`` and ``z = ||zeta||``; solving for the
    radius where the bound drops below one yields a certified cutoff.
    """
    z = _zeta_norm(model, xi)
    a = float(np.abs(model.theta_inv).max() * np.linalg.norm(model.Q, 2) ** 2)
    norm_A = float(np.linalg.norm(model.A, 2))
    if z == 0.0 or a == 0.0:
        return 2.0 * norm_A + 1.0
    # bound(omega) = 4 a z x + 4 a^2 z x^2 with x = 1/omega; root of bound = 1
    x_star = (-z + np.sqrt(z * z + z)) / (2.0 * a * z)
    return 1.01 * max(2.0 * norm_A, 1.0 / x_star)


def domain_margin(model: LinearModel, xi: np.ndarray,
                  grid: int = DOMAIN_GRID) -> float:
    """Infimum over frequency of the smallest eigenvalue of ``I - E``.

    Positive margin means the tilt lies in the open essential domain.  The
    search runs on a tangent-compactified grid over the certified window
    (the response is even in frequency up to conjugation) and refines every
    local minimum by bounded scalar minimization.
    """
    xi = np.asarray(xi, dtype=float)
    if _zeta_norm(model, xi) == 0.0:
        return 1.0
    s = model.omega_scale
    u_max = float(np.arctan(_omega_cutoff(model, xi) / s))
    us = np.linspace(0.0, u_max, grid)
    margins = np.linalg.eigvalsh(
        np.eye(model.d)[None, :, :] - _E_batch(model, xi, s * np.tan(us)))[:, 0]

    def margin_at(u: float) -> float:
        E = E_matrix(model, xi, s * np.tan(u))
        return float(np.linalg.eigvalsh(np.eye(model.d) - E)[0])

    best = float(margins.min())
    interior = np.nonzero(
        (margins[1:-1] <= margins[:-2]) & (margins[1:-1] <= margins[2:]))[0] + 1
    candidates = set(interior.tolist()) | {0, grid - 1}
    for k in candidates:
        lo = us[max(k - 1, 0)]
        hi = us[min(k + 1, grid - 1)]
        if hi <= lo:
            continue
        res = scipy.optimize.minimize_scalar(
            margin_at, bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-6 * u_max})
        best = min(best, float(res.fun))
    return best


def in_domain_D(model: LinearModel, xi: np.ndarray) -> tuple[bool, float]:
    """Membership in the open essential domain, with the located margin."""
    margin = domain_margin(model, xi)
    return margin > 0.0, margin


@dataclass(eq=False)
class DomainGeometry:
    """Lineality space, section frame and radial cache of the domain.

    ``L_basis`` rows span the conserved directions (the all-ones vector is
    always the first row); ``Pi`` projects orthogonally onto their
    complement, where ``frame`` rows form an orthonormal basis whose first
    vector points along the projected inverse temperatures whenever that
    projection is nonzero.  ``center`` is the projected symmetry center of
    the domain.
    """

    L_basis: np.ndarray
    Pi: np.ndarray
    center: np.ndarray
    frame: np.ndarray
    L_lifts: tuple[np.ndarray, ...]
    _radial: dict = field(default_factory=dict, repr=False)

    @property
    def dim_L(self) -> int:
        return self.L_basis.shape[0]

    @property
    def section_dim(self) -> int:
        return self.frame.shape[0]

    def to_frame(self, xi: np.ndarray) -> np.ndarray:
        return self.frame @ np.asarray(xi, dtype=float)

    def from_frame(self, coords: np.ndarray) -> np.ndarray:
        return np.asarray(coords, dtype=float) @ self.frame

    def project(self, xi: np.ndarray) -> np.ndarray:
        return self.Pi @ np.asarray(xi, dtype=float)


def _sign_fix(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def _complete_orthonormal(seeds: list[np.ndarray], target: int,
                          d: int, constraint: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal completion inside the range of a projector."""
    basis: list[np.ndarray] = []
    pool = list(seeds) + [constraint @ e for e in np.eye(d)]
    for v in pool:
        w = v.copy()
        for b in basis:
            w = w - (b @ w) * b
        norm = np.linalg.norm(w)
        if norm > 1e-10:
            basis.append(_sign_fix(w / norm))
        if len(basis) == target:
            break
    if len(basis) != target:
        raise NumericalError("failed to build an orthonormal frame")
    return np.array(basis)


def lineality_space(model: LinearModel) -> DomainGeometry:
    """Conserved tilt directions and the induced section geometry.

    The tilt response is linear in the tilt with entries rational in
    frequency of bounded degree, so its vanishing for all frequencies is
    certified by stacking the response maps at ``4n + 2`` sample
    frequencies and extracting the common null space by singular value
    threshold.
    """
    d, s = model.d, model.omega_scale
    freqs = np.concatenate([[0.0], np.geomspace(0.1 * s, 10.0 * s, 4 * model.n + 1)])
    rows = []
    for w in freqs:
        # one basis tilt at a time: build the (2 d^2, d) real block
        block = np.empty((2 * d * d, d))
        for j in range(d):
            Ej = E_matrix(model, np.eye(d)[j], w)
            block[:d * d, j] = Ej.real.ravel()
            block[d * d:, j] = Ej.imag.ravel()
        rows.append(block)
    stacked = np.vstack(rows)
    U, svals, Vt = np.linalg.svd(stacked)
    rank = int(np.sum(svals > LINEALITY_RTOL * svals[0])) if svals[0] > 0 else 0
    null = Vt[rank:]

    ones = np.ones(d) / np.sqrt(d)
    overlap = null.T @ (null @ ones)
    if np.linalg.norm(overlap - ones) > 1e-7:
        raise NumericalError("all-ones tilt missing from the lineality space")
    P_null = null.T @ null
    L_basis = _complete_orthonormal([ones], d - rank, d, P_null)
    Pi = np.eye(d) - L_basis.T @ L_basis
    center = Pi @ (0.5 * model.theta_inv)

    v1 = Pi @ model.theta_inv
    seeds = [v1 / np.linalg.norm(v1)] if np.linalg.norm(v1) > 1e-10 else []
    frame = _complete_orthonormal(seeds, rank, d, Pi)

    lifts = tuple(commuting_lift(model, b) for b in L_basis)
    return DomainGeometry(L_basis=L_basis, Pi=Pi, center=center,
                          frame=frame, L_lifts=lifts)


# ---------------------------------------------------------------------------
# the function g


def _g_integral(model: LinearModel, xi: np.ndarray) -> float:
    eye = np.eye(model.d)

    def integrand(w: float) -> float:
        lam = np.linalg.eigvalsh(eye - E_matrix(model, xi, w))
        if lam[0] <= 0.0:
            raise DomainError("tilt outside the open domain; integral route invalid")
        return -float(np.log(lam).sum())

    value, _ = integrate_frequency(integrand, model.omega_scale)
    return value / (4.0 * np.pi)


def _g_spectral(model: LinearModel, xi: np.ndarray) -> float:
    ham = hamiltonian(model, xi)
    base = 0.25 * float(np.trace((model.Q * model.theta_inv[None, :]) @ model.Q.T))
    return base - 0.25 * float(np.abs(ham.eigenvalues.real).sum())


def _g_riccati(model: LinearModel, xi: np.ndarray,
               sol: RiccatiSolution | None = None,
               inward: np.ndarray | None = None) -> float:
    if sol is None:
        sol = _riccati_any(model, xi, inward)
    lift = canonical_lift(model, xi)
    return -0.5 * float(np.trace(model.Q.T @ (sol.X - lift.xi_tilde) @ model.Q))


def _riccati_any(model: LinearModel, xi: np.ndarray,
                 inward: np.ndarray | None = None) -> RiccatiSolution:
    try:
        return riccati_maximal(model, xi)
    except RiccatiError:
        if inward is None:
            inward = 0.5 * model.theta_inv - np.asarray(xi, dtype=float)
            if np.linalg.norm(inward) < 1e-12:
                raise
        return riccati_extrapolated(model, xi, inward)


@dataclass(eq=False)
class CGFResult:
    """Cross-validated value of g at one tilt, with domain diagnostics."""

    xi: np.ndarray
    g_integral: float | None
    g_spectral: float | None
    g_riccati: float | None
    grad: np.ndarray | None
    in_D: bool
    margin: float
    in_Dinf: bool | None = None
    Lambda_minus: float | None = None
    Lambda_plus: float | None = None

    @property
    def g(self) -> float:
        for value in (self.g_riccati, self.g_spectral, self.g_integral):
            if value is not None:
                return value
        raise NumericalError("no value of g was computed")


def g_value(model: LinearModel, xi: np.ndarray, method: str = "all",
            with_domain_data: bool = True) -> CGFResult:
    """Evaluate g by the requested route(s).

    ``method`` is one of ``integral``, ``spectral``, ``riccati`` or ``all``;
    the integral route needs the open domain, the other two extend to its
    closure.  With ``all``, the three values are cross-checked against each
    other and a disagreement beyond tolerance raises.

    Raises
    ------
    DomainError
        If the tilt lies outside the closure of the essential domain (the
        limiting cumulant generating function is infinite there).
    """
    xi = np.asarray(xi, dtype=float)
    if method not in ("integral", "spectral", "riccati", "all"):
        raise SpecificationError(f"unknown method {method!r}")
    margin = domain_margin(model, xi)
    in_D = margin > 0.0
    if margin < -1e-9:
        raise DomainError(
            f"outside essential domain closure (margin {margin:.2e})")
    if method == "integral" and not in_D:
        raise DomainError("integral route requires the open domain")

    gi = gs = gr = None
    if method in ("integral", "all") and in_D:
        gi = _g_integral(model, xi)
    if method in ("spectral", "all"):
        gs = _g_spectral(model, xi)
    if method in ("riccati", "all"):
        gr = _g_riccati(model, xi)

    if method == "all":
        values = [v for v in (gi, gs, gr) if v is not None]
        ref = max(abs(v) for v in values)
        for a in values:
            for b in values:
                if abs(a - b) > G_AGREE_TOL * (1.0 + ref):
                    raise NumericalError(
                        f"g routes disagree: {gi}, {gs}, {gr}")

    grad = None
    lam = None
    if in_D and with_domain_data:
        grad = g_gradient(model, xi)
        lam = lambda_pm(model, xi)
    return CGFResult(
        xi=xi, g_integral=gi, g_spectral=gs, g_riccati=gr, grad=grad,
        in_D=in_D, margin=margin,
        in_Dinf=None if lam is None else lam.in_Dinf,
        Lambda_minus=None if lam is None else lam.minus,
        Lambda_plus=None if lam is None else lam.plus,
    )


def _sigma_basis(model: LinearModel) -> np.ndarray:
    sigmas = np.empty((model.d, model.dim, model.dim))
    for j in range(model.d):
        sigmas[j] = canonical_lift(model, np.eye(model.d)[j]).sigma
    return sigmas


def gap_pair(model: LinearModel, xi: np.ndarray,
             inward: np.ndarray | None = None) -> tuple[RiccatiSolution, RiccatiSolution]:
    """Maximal solutions at a tilt and its mirror, with the gap attached."""
    sol = _riccati_any(model, xi, inward)
    dual = _riccati_any(model, model.theta_inv - np.asarray(xi, dtype=float),
                        None if inward is None else -np.asarray(inward, dtype=float))
    Y = sol.X + model.theta_conj(dual.X)
    return replace(sol, gap=Y), dual


def g_gradient(model: LinearModel, xi: np.ndarray) -> np.ndarray:
    """Gradient of g from the Riccati gap matrix.

    Component ``i`` equals ``tr(Sigma_i Y^{-1}) / 2`` where ``Sigma_i`` is
    the flux-density matrix of the i-th basis tilt and ``Y`` the gap between
    the maximal solutions at the tilt and its mirror.

    Raises
    ------
    NumericalError
        If the gap matrix is numerically singular (tilt too close to the
        domain boundary).
    """
    sol, _ = gap_pair(model, xi)
    w, U = np.linalg.eigh(sol.gap)
    if w[0] <= 1e-12 * max(w[-1], 1.0):
        raise NumericalError(
            f"gap matrix numerically singular (min eigenvalue {w[0]:.2e})")
    Yinv = (U / w) @ U.T
    sigmas = _sigma_basis(model)
    return 0.5 * np.einsum("dij,ij->d", sigmas, Yinv)


def g_hessian_quadform(model: LinearModel, xi: np.ndarray,
                       eta: np.ndarray) -> float:
    """Second derivative of g at a tilt along a direction.

    Evaluates the frequency integral of the squared, symmetrically
    preconditioned response of the direction; non-negative, and zero exactly
    on the lineality space.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    eye = np.eye(model.d)

    def integrand(w: float) -> float:
        lam, U = np.linalg.eigh(eye - E_matrix(model, xi, w))
        if lam[0] <= 0.0:
            raise DomainError("tilt outside the open domain")
        W = (U / np.sqrt(lam)) @ U.conj().T
        G = W @ E_matrix(model, eta, w) @ W
        return float(np.trace(G @ G).real)

    value, _ = integrate_frequency(integrand, model.omega_scale)
    return value / (4.0 * np.pi)


@dataclass(frozen=True, eq=False)
class LambdaPair:
    """Extremal Riccati eigenvalue functionals bounding the finite region."""

    minus: float
    plus: float

    @property
    def in_Dinf(self) -> bool:
        return self.minus < 0.0 < self.plus

    @property
    def gap(self) -> float:
        return self.plus - self.minus


def lambda_pm(model: LinearModel, xi: np.ndarray,
              inward: np.ndarray | None = None) -> LambdaPair:
    """Eigenvalue functionals whose signs delimit the finite region.

    ``minus`` is the negated smallest eigenvalue of the maximal solution
    plus the inverse stationary covariance; ``plus`` is the smallest
    eigenvalue of the maximal solution at the mirrored tilt.  The inverse
    covariance is used for the maximal solution at the mirror of zero,
    which it equals and which it computes with better conditioning.
    """
    xi = np.asarray(xi, dtype=float)
    M = steady_covariance(model).M
    w, U = np.linalg.eigh(M)
    Minv = (U / w) @ U.T
    sol = _riccati_any(model, xi, inward)
    dual = _riccati_any(model, model.theta_inv - xi,
                        None if inward is None else -np.asarray(inward, dtype=float))
    lam_minus = -float(np.linalg.eigvalsh(sol.X + Minv)[0])
    lam_plus = float(np.linalg.eigvalsh(dual.X)[0])
    return LambdaPair(minus=lam_minus, plus=lam_plus)


# ---------------------------------------------------------------------------
# section geometry


def _radial_key(u: np.ndarray) -> tuple:
    return tuple(np.round(u, 12))


def section_boundary(model: LinearModel, geometry: DomainGeometry,
                     u: np.ndarray, tol: float = 1e-6) -> float:
    """Radius of the domain section from its center along a unit direction.

    Bisection on domain membership with geometric bracket growth; convexity
    of the domain guarantees a single crossing.
    """
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-8:
        raise SpecificationError("direction must be a unit vector")
    if np.linalg.norm(geometry.L_basis @ u) > 1e-8:
        raise SpecificationError("direction must be orthogonal to the lineality space")
    key = _radial_key(u)
    cached = geometry._radial.get(key)
    if cached is not None:
        return cached
    center = geometry.center
    lo, hi = 0.0, 1.0
    while in_domain_D(model, center + hi * u)[0]:
        lo = hi
        hi *= 2.0
        if hi > 1e6:
            raise ConvergenceError(
                "bracket exhaustion while searching the section boundary")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if in_domain_D(model, center + mid * u)[0]:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    geometry._radial[key] = r
    return r


def sinf_margin(model: LinearModel, geometry: DomainGeometry,
                xi_perp: np.ndarray,
                inward: np.ndarray | None = None) -> float:
    """Feasibility margin for membership of a section point in the finite set.

    A section point belongs iff some conserved-direction shift fits strictly
    between the two Riccati obstructions.  With a one-dimensional lineality
    space the margin is exactly the spectral gap of the extremal eigenvalue
    functionals; in higher dimension it is maximized by coordinate-wise
    bounded scalar ascent over the shift coefficients (heuristic, exact in
    all shipped examples).
    """
    xi_perp = np.asarray(xi_perp, dtype=float)
    if geometry.dim_L == 1:
        lam = lambda_pm(model, xi_perp, inward)
        return lam.gap
    M = steady_covariance(model).M
    w, U = np.linalg.eigh(M)
    Minv = (U / w) @ U.T
    sol = _riccati_any(model, xi_perp, inward)
    dual = _riccati_any(model, model.theta_inv - xi_perp,
                        None if inward is None else -np.asarray(inward, dtype=float))
    lower = sol.X + Minv
    upper = dual.X

    lifts = geometry.L_lifts

    def margin(coeffs: np.ndarray) -> float:
        shift = sum(c * lift for c, lift in zip(coeffs, lifts))
        return min(float(np.linalg.eigvalsh(upper - shift)[0]),
                   float(np.linalg.eigvalsh(lower + shift)[0]))

    scale = max(np.abs(np.linalg.eigvalsh(upper)).max(),
                np.abs(np.linalg.eigvalsh(lower)).max(), 1.0)
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


def in_Sinf(model: LinearModel, geometry: DomainGeometry,
            xi_perp: np.ndarray) -> bool:
    """Whether a section point carries a finite long-time generating function."""
    return sinf_margin(model, geometry, xi_perp) > 0.0


def section_inf_boundary(model: LinearModel, geometry: DomainGeometry,
                         u: np.ndarray, tol: float = 1e-6,
                         bracket_hint: float | None = None) -> float:
    """Exit radius of the finite region along a ray from the origin.

    The origin always lies inside; concavity of the feasibility margin along
    the ray gives a single sign change, located by bisection.  A bracket
    hint (for example the radius found along a nearby ray) shortcuts the
    bracket-growth phase.
    """
    u = np.asarray(u, dtype=float)

    def member(t: float) -> bool:
        if t <= 0.0:
            return True
        xi = t * u
        ok, _ = in_domain_D(model, xi)
        return ok and sinf_margin(model, geometry, xi, inward=-u) > 0.0

    lo, hi = 0.0, 0.5
    if bracket_hint is not None and bracket_hint > 0.0:
        below, above = 0.95 * bracket_hint, 1.05 * bracket_hint
        if member(below) and not member(above):
            lo, hi = below, above
        elif not member(below):
            lo, hi = 0.0, below
        else:
            lo, hi = above, 2.0 * above
            while member(hi):
                lo = hi
                hi *= 2.0
                if hi > 1e6:
                    raise ConvergenceError("bracket exhaustion on the finite region")
    else:
        while member(hi):
            lo = hi
            hi *= 2.0
            if hi > 1e6:
                raise ConvergenceError("bracket exhaustion on the finite region")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if member(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
