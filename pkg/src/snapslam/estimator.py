"""Snapshot state estimation from multipath channel parameters.

Given the anchor pose and a set of path measurements, and conditioning on a
candidate user heading, the user position and clock bias solve a weighted
linear least-squares problem: each path constrains the state to a line in
(position, bias) space, obtained by eliminating the unknown bounce fraction
with an orthogonal projector. The heading itself comes either in closed form
from the line-of-sight path or from a grid search over the conditional cost.

Internally the clock bias is carried in meters (c * seconds) so the 3x3
normal matrix is well scaled; public results are in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateGeometry, NearParallel, SingularGeometry
from .geometry import (
    SPEED_OF_LIGHT,
    NoiseModel,
    PathMeasurement,
    Pose,
    UeState,
    bounce_fraction,
    measurement_model,
    rotation,
    unit_vectors,
    wrap_angle,
)

_C = SPEED_OF_LIGHT

CONDITION_LIMIT = 1e12
"""Condition number of the scaled normal matrix above which the geometry is
treated as singular."""


@dataclass(frozen=True)
class ConditionalEstimate:
    """Position and clock bias estimated for one fixed heading.

    Attributes
    ----------
    position : ndarray, shape (2,)
    clock_bias : float
        Seconds.
    per_path_cost : tuple of (int, float)
        Unweighted squared projected residual of each used path, m^2,
        evaluated at this estimate.
    total_cost : float
        Gain-weighted sum of the per-path costs over the used set, m^2.
    """

    position: np.ndarray
    clock_bias: float
    per_path_cost: tuple
    total_cost: float


@dataclass(frozen=True)
class LandmarkEstimate:
    """Refined reflection point of one single-bounce path.

    ``covariance`` is the Gauss-Newton covariance (J^T R^-1 J)^-1 at the
    final iterate, m^2. ``converged`` is False when the iteration stopped on
    the step budget or a non-improving step rather than the step tolerance.
    """

    position: np.ndarray
    covariance: np.ndarray
    source_path: int = -1
    converged: bool = True
    iterations: int = 0


class _PathTerms(NamedTuple):
    """Per-(heading, path) arrays used by the batched conditional solver.

    Shapes: M headings by n paths. ``u`` is heading-independent, shape (n, 2).
    ``a`` and ``rhs`` are the gain-weighted per-path normal-matrix blocks.
    """

    p_bs: np.ndarray      # (2,)
    tau: np.ndarray       # (n,)
    eta: np.ndarray       # (n,)
    u: np.ndarray         # (n, 2)
    v: np.ndarray         # (M, n, 2)
    nu: np.ndarray        # (M, n, 2)
    nu_sq: np.ndarray     # (M, n)
    nubar: np.ndarray     # (M, n, 2)  zero rows where the projector is identity
    mu: np.ndarray        # (M, n, 2)
    a: np.ndarray         # (M, n, 3, 3)
    rhs: np.ndarray       # (M, n, 3)


def _dot2(x, y):
    return np.einsum("...i,...i->...", x, y)


def _build_terms(paths: Sequence[PathMeasurement], bs: Pose, alphas: np.ndarray,
                 los_index: int | None = None) -> _PathTerms:
    """Precompute per-path solver terms for every heading in ``alphas``.

    ``los_index`` marks the path hypothesized as line of sight: its projector
    is the identity (both residual components constrain the state). Paths
    whose departure/arrival rays cancel exactly get the same treatment, the
    correct limit of the eliminated-bounce constraint.
    """
    alphas = np.asarray(alphas, dtype=float)
    tau = np.array([p.toa for p in paths])
    eta = np.array([p.gain for p in paths])
    aod = np.array([p.aod for p in paths])
    aoa = np.array([p.aoa for p in paths])

    dep = bs.orientation + aod                      # world departure angle
    u = np.stack([np.cos(dep), np.sin(dep)], axis=-1)
    arr = alphas[:, None] + aoa[None, :]            # (M, n) world arrival angle
    v = np.stack([np.cos(arr), np.sin(arr)], axis=-1)

    nu = u[None, :, :] + v
    nu_sq = _dot2(nu, nu)
    identity_proj = nu_sq == 0.0
    if los_index is not None:
        identity_proj = identity_proj.copy()
        identity_proj[:, los_index] = True
    with np.errstate(divide="ignore", invalid="ignore"):
        nubar = np.where(identity_proj[..., None], 0.0,
                         nu / np.sqrt(nu_sq)[..., None])

    mu = bs.position[None, None, :] - (_C * tau)[None, :, None] * v

    # Per-path normal-matrix block for state [p_x, p_y, c*b]:
    #   A_i = eta * H^T P H,  rhs_i = eta * H^T P mu,  H = [I2 | -v], P = I - nubar nubar^T
    w = v - nubar * _dot2(nubar, v)[..., None]      # P v
    g = mu - nubar * _dot2(nubar, mu)[..., None]    # P mu
    m, n = v.shape[:2]
    a = np.empty((m, n, 3, 3))
    a[..., :2, :2] = np.eye(2) - nubar[..., :, None] * nubar[..., None, :]
    a[..., :2, 2] = -w
    a[..., 2, :2] = -w
    a[..., 2, 2] = _dot2(v, w)
    a *= eta[None, :, None, None]
    rhs = np.empty((m, n, 3))
    rhs[..., :2] = g
    rhs[..., 2] = -_dot2(v, g)
    rhs *= eta[None, :, None]
    return _PathTerms(bs.position, tau, eta, u, v, nu, nu_sq, nubar, mu, a, rhs)


def _solve_members(terms: _PathTerms, member: np.ndarray):
    """Solve the conditional normal equations for each heading row.

    ``member`` is an (M, n) float mask selecting the paths summed into each
    row's normal matrix. Returns (x, ok) where x is (M, 3) in meters-bias
    state and ok flags rows whose matrix is invertible below the condition
    limit; x rows with ok False are placeholders.
    """
    a_tot = np.einsum("mn,mnij->mij", member, terms.a)
    b_tot = np.einsum("mn,mni->mi", member, terms.rhs)
    sv = np.linalg.svd(a_tot, compute_uv=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = sv[:, 0] / sv[:, 2]
    ok = np.isfinite(cond) & (cond < CONDITION_LIMIT)
    a_safe = np.where(ok[:, None, None], a_tot, np.eye(3))
    x = np.linalg.solve(a_safe, b_tot[..., None])[..., 0]
    return x, ok


def _residuals(terms: _PathTerms, x: np.ndarray) -> np.ndarray:
    """Raw 2-D residuals H x - mu, shape (M, n, 2)."""
    return x[:, None, :2] - x[:, 2][:, None, None] * terms.v - terms.mu


def _costs(terms: _PathTerms, x: np.ndarray) -> np.ndarray:
    """Squared projected residual of every path at every row's state, (M, n)."""
    r = _residuals(terms, x)
    pr = r - terms.nubar * _dot2(terms.nubar, r)[..., None]
    return _dot2(pr, pr)


def _weighted_total(costs: np.ndarray, eta: np.ndarray, member: np.ndarray) -> np.ndarray:
    """Gain-weighted cost of each heading row over a member mask, (M,).

    One shared expression so grid search, conditional estimate, robust cells
    and the benchmark produce bit-identical totals on identical inputs.
    """
    return (member * eta[None, :] * costs).sum(axis=1)


def _gammas(terms: _PathTerms, x: np.ndarray) -> np.ndarray:
    """Bounce fraction of every path at every row's state, (M, n).

    Rows where the fraction is undefined (zero length or cancelled rays)
    come back infinite so that range checks fail.
    """
    d = _C * terms.tau[None, :] - x[:, 2][:, None]
    r = _residuals(terms, x)
    num = _dot2(terms.nu, r)
    den = d * terms.nu_sq
    with np.errstate(divide="ignore", invalid="ignore"):
        gam = num / den
    return np.where(den == 0.0, np.inf, gam)


def conditional_estimate(paths: Sequence[PathMeasurement], index_set, alpha_ue: float,
                         bs: Pose, los_index: int | None = None) -> ConditionalEstimate:
    """Closed-form position and clock bias for a fixed user heading.

    Parameters
    ----------
    paths : sequence of PathMeasurement
    index_set : iterable of int
        Indices of the paths entering the fit. Must be non-empty.
    alpha_ue : float
        Conditioning heading, radians.
    bs : Pose
    los_index : int, optional
        Index of the path treated as line of sight (identity projector);
        must be in ``index_set`` if given. ``None`` treats every path as a
        single bounce.

    Raises
    ------
    SingularGeometry
        If the 3x3 normal matrix has condition number >= 1e12 (e.g. a lone
        LoS path, or all rays parallel).
    """
    idx = sorted(int(i) for i in index_set)
    if not idx:
        raise ValueError("index_set must be non-empty")
    terms = _build_terms(paths, bs, np.array([float(alpha_ue)]), los_index)
    member = np.zeros((1, len(paths)))
    member[0, idx] = 1.0
    x, ok = _solve_members(terms, member)
    if not ok[0]:
        raise SingularGeometry("conditional normal matrix is singular or ill-conditioned")
    costs = _costs(terms, x)
    per_path = tuple((i, float(costs[0, i])) for i in idx)
    total = float(_weighted_total(costs, terms.eta, member)[0])
    return ConditionalEstimate(position=x[0, :2].copy(),
                               clock_bias=float(x[0, 2]) / _C,
                               per_path_cost=per_path,
                               total_cost=total)


def path_cost(path: PathMeasurement, position, clock_bias: float, alpha_ue: float,
              bs: Pose, is_los: bool = False) -> float:
    """Squared projected residual (m^2) of one path at a given state.

    ``is_los`` selects the identity projector (both residual components
    count); otherwise the component along the bounce direction is removed.
    """
    terms = _build_terms([path], bs, np.array([float(alpha_ue)]),
                         0 if is_los else None)
    x = np.array([[position[0], position[1], _C * clock_bias]])
    return float(_costs(terms, x)[0, 0])


def los_orientation(path: PathMeasurement, bs: Pose) -> float:
    """User heading implied by a line-of-sight path, closed form.

    The arrival ray of a LoS path points back at the anchor, which pins the
    heading given the departure direction and the local arrival angle.
    """
    u, _ = unit_vectors(path.aod, 0.0, bs.orientation, 0.0)
    xy = -rotation(-path.aoa) @ u
    return wrap_angle(math.atan2(xy[1], xy[0]))


def orientation_grid(size: int = 361) -> np.ndarray:
    """Uniform heading grid over [-pi, pi] with ``size`` points.

    Both interval endpoints are included (they alias to the same heading);
    the default matches the solver's 1-degree resolution.
    """
    if size < 1:
        raise ValueError("grid size must be >= 1")
    return np.linspace(-math.pi, math.pi, size)


def nlos_orientation_search(paths: Sequence[PathMeasurement], index_set, grid,
                            bs: Pose) -> tuple[float, ConditionalEstimate]:
    """Grid search over headings minimizing the conditional total cost.

    Returns the best grid heading and its conditional estimate. Grid points
    whose normal matrix is singular are skipped; ties keep the smallest grid
    index.

    Raises
    ------
    SingularGeometry
        If every grid point is singular.
    """
    idx = sorted(int(i) for i in index_set)
    if not idx:
        raise ValueError("index_set must be non-empty")
    grid = np.asarray(grid, dtype=float)
    terms = _build_terms(paths, bs, grid, None)
    member = np.zeros((len(grid), len(paths)))
    member[:, idx] = 1.0
    x, ok = _solve_members(terms, member)
    costs = _costs(terms, x)
    total = np.where(ok, _weighted_total(costs, terms.eta, member), np.inf)
    m = int(np.argmin(total))
    if not np.isfinite(total[m]):
        raise SingularGeometry("no heading on the grid yields an invertible system")
    per_path = tuple((i, float(costs[m, i])) for i in idx)
    est = ConditionalEstimate(position=x[m, :2].copy(),
                              clock_bias=float(x[m, 2]) / _C,
                              per_path_cost=per_path,
                              total_cost=float(total[m]))
    return float(grid[m]), est


def landmark_jacobian(ue: UeState, bs: Pose, landmark) -> np.ndarray:
    """Analytic 3x2 Jacobian of (toa, aod, aoa) w.r.t. the landmark position.

    Raises
    ------
    DegenerateGeometry
        If the landmark coincides with the anchor or the user.
    """
    p = np.asarray(landmark, dtype=float)
    d1 = p - bs.position
    d2 = p - ue.position
    n1 = math.hypot(d1[0], d1[1])
    n2 = math.hypot(d2[0], d2[1])
    if n1 == 0.0 or n2 == 0.0:
        raise DegenerateGeometry("landmark coincides with an antenna")
    row_toa = (d1 / n1 + d2 / n2) / _C
    row_aod = np.array([-d1[1], d1[0]]) / (n1 * n1)
    row_aoa = np.array([-d2[1], d2[0]]) / (n2 * n2)
    return np.vstack([row_toa, row_aod, row_aoa])


def _initial_landmark(path: PathMeasurement, ue: UeState, bs: Pose,
                      t_nu: float = 0.1) -> np.ndarray:
    """Initializer: midpoint of the two ray endpoints at the recovered fraction.

    The fraction is clamped to [0.05, 0.95] when it falls outside [0, 1] and
    defaults to 0.5 when undefined (near-parallel rays).
    """
    try:
        gam = bounce_fraction(ue, path, bs, t_nu)
        if not math.isfinite(gam):
            gam = 0.5
        elif not 0.0 <= gam <= 1.0:
            gam = min(max(gam, 0.05), 0.95)
    except (NearParallel, DegenerateGeometry):
        gam = 0.5
    u, v = unit_vectors(path.aod, path.aoa, bs.orientation, ue.orientation)
    d = SPEED_OF_LIGHT * (path.toa - ue.clock_bias)
    anchor_side = bs.position + d * gam * u
    user_side = ue.position + d * (1.0 - gam) * v
    return 0.5 * (anchor_side + user_side)


def landmark_refine(path: PathMeasurement, ue: UeState, bs: Pose,
                    noise: NoiseModel = NoiseModel(), max_iter: int = 50,
                    tol: float = 1e-9, source_path: int = -1) -> LandmarkEstimate:
    """Gauss-Newton refinement of a single-bounce reflection point.

    Minimizes the noise-whitened squared residual between the measured
    (toa, aod, aoa) and the single-bounce forward model at the given user
    state. Steps that increase the objective are halved up to 8 times; the
    iteration converges when the step norm drops below ``tol`` meters.

    Returns the best iterate with ``converged=False`` if the tolerance was
    not reached.

    Raises
    ------
    DegenerateGeometry
        If the Jacobian is rank-deficient at the final iterate.
    """
    z = np.array([path.toa, path.aod, path.aoa])
    sig = noise.sigmas

    def whitened_residual(pt):
        t, a, o = measurement_model(ue, bs, pt)
        return np.array([z[0] - t,
                         wrap_angle(z[1] - a),
                         wrap_angle(z[2] - o)]) / sig

    def objective(pt):
        try:
            r = whitened_residual(pt)
        except DegenerateGeometry:
            return None, math.inf
        return r, float(r @ r)

    p = _initial_landmark(path, ue, bs)
    r, cost = objective(p)
    if r is None:
        # initializer landed on an antenna; nudge off it
        p = p + 1e-6
        r, cost = objective(p)
        if r is None:
            raise DegenerateGeometry("cannot evaluate the model near the initializer")
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        try:
            jac = landmark_jacobian(ue, bs, p) / sig[:, None]
        except DegenerateGeometry:
            break
        ata = jac.T @ jac
        atr = jac.T @ r
        try:
            step = np.linalg.solve(ata, atr)
        except np.linalg.LinAlgError:
            break
        if float(np.hypot(*step)) < tol:
            converged = True    # already at a stationary point
            break
        scale = 1.0
        accepted = False
        for _ in range(9):  # full step, then up to 8 halvings
            cand = p + scale * step
            r_new, cost_new = objective(cand)
            if r_new is not None and cost_new <= cost:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break
        p, r, cost = cand, r_new, cost_new
        if float(np.hypot(*(scale * step))) < tol:
            converged = True
            break

    try:
        jac = landmark_jacobian(ue, bs, p) / sig[:, None]
    except DegenerateGeometry as exc:
        raise DegenerateGeometry("Jacobian undefined at the optimum") from exc
    ata = jac.T @ jac
    sv = np.linalg.svd(ata, compute_uv=False)
    if sv[-1] == 0.0 or sv[0] / sv[-1] >= CONDITION_LIMIT:
        raise DegenerateGeometry("rank-deficient Jacobian at the optimum")
    cov = np.linalg.inv(ata)
    cov = 0.5 * (cov + cov.T)
    return LandmarkEstimate(position=p.copy(), covariance=cov,
                            source_path=source_path, converged=converged,
                            iterations=iterations)
