"""Box-constrained minimization of the pooled least-squares cost.

Constraint handling is by smooth reparameterization plus projection:

* box ordering: b = a + gap_min + exp(s), optimized in s;
* Cholesky diagonal floors: l = l_floor + exp(s);
* the simple lower bounds on a1 and a2 are enforced by projecting the
  trial point after each step.

Search directions come from a Powell-damped BFGS matrix on the working
coordinates; the backtracking line search accepts a step only when the
cost strictly decreases, and any model-layer failure (degenerate
density, singular operator, divergence) just fails the trial step so the
search can shorten it.  There is no randomness anywhere: identical
inputs give identical traces.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .density import L_FLOOR, QPoint, RhoParams
from .errors import DegenerateDensityError, PopdiffError
from .forward import Episode, simulate_deterministic
from .grid import Q1_FLOOR, GridSpec
from .objective import cost as objective_cost
from .objective import gradient_adjoint, gradient_fd


@dataclass
class FitOptions:
    gtol: float = 1e-6
    xtol: float = 1e-9
    max_iter: int = 200
    max_backtracks: int = 45
    step_cap: float = 1.0  # largest first-trial step norm in working coords
    quad_order: int = 8
    norm_quad_order: int = 24
    gap_min: float = 1e-3
    method: str = "adjoint"  # or "finite-difference"
    fd_step: float = 1e-6


@dataclass
class FitResult:
    rho_hat: RhoParams
    cost_trace: list[tuple[int, float, float, float]]  # (iter, cost, |grad|, |step|)
    status: str  # converged | max-iterations | degenerate-density | line-search-failure
    n_cost_evals: int
    n_grad_evals: int

    @property
    def cost(self) -> float:
        return self.cost_trace[-1][1] if self.cost_trace else np.inf


@dataclass
class CoreResult:
    x: np.ndarray
    cost: float
    trace: list[tuple[int, float, float, float]]
    status: str
    n_cost_evals: int
    n_grad_evals: int


def minimize_bfgs(fun, fun_grad, x0, project, gtol=1e-6, xtol=1e-9,
                  max_iter=200, max_backtracks=45, step_cap=1.0) -> CoreResult:
    """Projected-backtracking quasi-Newton descent on any dimension.

    ``fun`` returns the cost, ``fun_grad`` the (cost, gradient) pair;
    either may raise PopdiffError to veto a trial point (the search then
    shortens the step).  When the quasi-Newton direction fails its whole
    line search, the curvature model is discarded and one steepest-
    descent line search is attempted before giving up.
    """
    n = x0.size
    x = project(np.asarray(x0, dtype=float))
    n_cost = n_grad = 0
    try:
        c, g = fun_grad(x)
        n_grad += 1
    except DegenerateDensityError:
        return CoreResult(x, np.inf, [], "degenerate-density", n_cost, n_grad + 1)
    trace = [(0, c, float(np.linalg.norm(g)), 0.0)]
    B = np.eye(n)
    scaled = False
    status = "max-iterations"

    def line_search(d):
        nonlocal n_cost
        alpha = min(1.0, step_cap / max(float(np.linalg.norm(d)), 1e-300))
        for _ in range(max_backtracks):
            x_try = project(x + alpha * d)
            step = x_try - x
            if step.any():
                n_cost += 1
                try:
                    c_try = fun(x_try)
                    if c_try < c:
                        return x_try, c_try, step
                except PopdiffError:
                    pass
            alpha *= 0.5
        return None

    for it in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm < gtol * (1 + abs(c)):
            status = "converged"
            break
        try:
            d = -np.linalg.solve(B, g)
        except np.linalg.LinAlgError:
            d = -g
        if d @ g >= 0:
            d = -g
        is_steepest = np.array_equal(d, -g)

        accepted = line_search(d)
        if accepted is None and not is_steepest:
            # Quasi-Newton direction is blocked (often by the feasibility
            # veto); restart from a plain gradient step.
            B = np.eye(n)
            scaled = False
            accepted = line_search(-g)
        if accepted is None:
            status = "line-search-failure"
            break

        x_new, c_new, s = accepted
        c_probe, g_new = fun_grad(x_new)
        n_grad += 1
        y = g_new - g
        sy = s @ y
        if not scaled and sy > 0:
            # Shanno-Phua: size the initial metric from the first
            # curvature pair before any update.
            B = ((y @ y) / sy) * np.eye(n)
            scaled = True
        sBs = s @ B @ s
        # Powell damping keeps B positive definite on non-convex stretches.
        if sy < 0.2 * sBs:
            theta = 0.8 * sBs / (sBs - sy)
            y = theta * y + (1 - theta) * (B @ s)
            sy = s @ y
        Bs = B @ s
        B = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy

        x, c, g = x_new, c_new, g_new
        step_norm = float(np.linalg.norm(s))
        trace.append((it, c, float(np.linalg.norm(g)), step_norm))
        if step_norm < xtol:
            status = "converged"
            break

    return CoreResult(x, c, trace, status, n_cost, n_grad)


# --------------------------------------------------------------- 9-D transform

_GAP_EPS = 1e-12


def rho_to_working(rho: RhoParams, gap_min: float) -> np.ndarray:
    r = rho.as_array()
    z = np.empty(9)
    z[0] = r[0]
    z[1] = np.log(max(r[1] - r[0] - gap_min, _GAP_EPS))
    z[2] = r[2]
    z[3] = np.log(max(r[3] - r[2] - gap_min, _GAP_EPS))
    z[4:6] = r[4:6]
    z[6] = np.log(max(r[6] - L_FLOOR, _GAP_EPS))
    z[7] = r[7]
    z[8] = np.log(max(r[8] - L_FLOOR, _GAP_EPS))
    return z


def working_to_rho(z: np.ndarray, gap_min: float) -> RhoParams:
    # Overflowing exp on a wild trial point yields a non-finite vector,
    # which the parameter validation turns into a rejected step.
    with np.errstate(over="ignore"):
        r = np.empty(9)
        r[0] = z[0]
        r[1] = z[0] + gap_min + np.exp(z[1])
        r[2] = z[2]
        r[3] = z[2] + gap_min + np.exp(z[3])
        r[4:6] = z[4:6]
        r[6] = L_FLOOR + np.exp(z[6])
        r[7] = z[7]
        r[8] = L_FLOOR + np.exp(z[8])
    return RhoParams.from_array(r)


def chain_gradient(grad_rho: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Pull a rho-space gradient back through the working transform."""
    g = np.empty(9)
    g[0] = grad_rho[0] + grad_rho[1]
    g[1] = grad_rho[1] * np.exp(z[1])
    g[2] = grad_rho[2] + grad_rho[3]
    g[3] = grad_rho[3] * np.exp(z[3])
    g[4:6] = grad_rho[4:6]
    g[6] = grad_rho[6] * np.exp(z[6])
    g[7] = grad_rho[7]
    g[8] = grad_rho[8] * np.exp(z[8])
    return g


def _project_working(z: np.ndarray) -> np.ndarray:
    out = z.copy()
    out[0] = max(out[0], Q1_FLOOR)
    out[2] = max(out[2], 0.0)
    return out


def fit(
    episodes: list[Episode],
    spec: GridSpec,
    init: RhoParams,
    options: FitOptions | None = None,
) -> FitResult:
    """Minimize the pooled cost over all nine parameters."""
    opt = options or FitOptions()

    def fun(z):
        rho = working_to_rho(z, opt.gap_min)
        return objective_cost(rho, spec, episodes, opt.quad_order, opt.norm_quad_order)

    def fun_grad(z):
        rho = working_to_rho(z, opt.gap_min)
        if opt.method == "finite-difference":
            report = gradient_fd(rho, spec, episodes, opt.fd_step,
                                 opt.quad_order, opt.norm_quad_order)
        else:
            report = gradient_adjoint(rho, spec, episodes,
                                      opt.quad_order, opt.norm_quad_order)
        return report.cost, chain_gradient(report.grad, z)

    z0 = rho_to_working(init, opt.gap_min)
    core = minimize_bfgs(fun, fun_grad, z0, _project_working,
                         opt.gtol, opt.xtol, opt.max_iter, opt.max_backtracks,
                         opt.step_cap)
    if core.status == "degenerate-density" or not core.trace:
        rho_hat = init
    elif len(core.trace) == 1:
        rho_hat = init  # no accepted steps: hand back the exact input
    else:
        rho_hat = working_to_rho(core.x, opt.gap_min)
    return FitResult(
        rho_hat=rho_hat,
        cost_trace=core.trace,
        status=core.status,
        n_cost_evals=core.n_cost_evals,
        n_grad_evals=core.n_grad_evals,
    )


# ------------------------------------------------------------ deterministic 2-D

def fit_deterministic(
    episode: Episode,
    spec: GridSpec,
    init: QPoint | tuple = QPoint(1.0, 1.0),
    options: FitOptions | None = None,
) -> tuple[QPoint, float]:
    """Least-squares fit of a single (q1, q2) to one episode.

    Gradients by central differences (two parameters only); lower bounds
    q1 >= diffusivity floor, q2 >= 0.
    """
    opt = options or FitOptions()
    q_init = np.array(
        [init.q1, init.q2] if isinstance(init, QPoint) else init, dtype=float
    )

    def fun(q):
        y = simulate_deterministic(q, spec.n, spec.tau, episode.u)
        r = y - episode.y_obs
        return float(r @ r)

    def fun_grad(q):
        c = fun(q)
        g = np.empty(2)
        for k in range(2):
            h = 1e-6 * (1 + abs(q[k]))
            up, dn = q.copy(), q.copy()
            up[k] += h
            dn[k] = max(dn[k] - h, (Q1_FLOOR if k == 0 else 0.0))
            g[k] = (fun(up) - fun(dn)) / (up[k] - dn[k])
        return c, g

    def project(q):
        return np.maximum(q, [Q1_FLOOR, 0.0])

    core = minimize_bfgs(fun, fun_grad, q_init, project,
                         opt.gtol, opt.xtol, opt.max_iter, opt.max_backtracks,
                         opt.step_cap)
    return QPoint(float(core.x[0]), float(core.x[1])), core.cost


DEFAULT_BOX = (0.1, 2.0, 0.1, 2.0)


def initialize(
    episodes: list[Episode],
    spec: GridSpec,
    default_box: tuple[float, float, float, float] = DEFAULT_BOX,
    options: FitOptions | None = None,
) -> RhoParams:
    """Moment-based starting point from per-episode deterministic fits.

    Each episode is fit on its own; the means of the fitted pairs seed
    the location, the fitted spread (plus a 10% margin) seeds the box,
    and the spreads start independent with standard deviation one sixth
    of the box edge.  If any per-episode fit fails, the configured
    default box is used instead and a warning is issued.
    """
    if len(episodes) < 2:
        raise ValueError("moment initialization needs at least 2 episodes")
    opt = options or FitOptions()
    fitted = []
    failed = None
    for ep in episodes:
        try:
            q_hat, c = fit_deterministic(ep, spec, options=options)
            if not (np.isfinite(q_hat.q1) and np.isfinite(q_hat.q2) and np.isfinite(c)):
                raise PopdiffError(f"non-finite deterministic fit for {ep.id}")
            fitted.append([q_hat.q1, q_hat.q2])
        except PopdiffError as exc:
            failed = (ep.id, exc)
            break

    if failed is not None:
        warnings.warn(
            f"deterministic fit failed on episode {failed[0]} ({failed[1]}); "
            f"falling back to default box {default_box}"
        )
        a1, b1, a2, b2 = default_box
        return RhoParams(
            a1, b1, a2, b2, 0.5 * (a1 + b1), 0.5 * (a2 + b2),
            max((b1 - a1) / 6, L_FLOOR), 0.0, max((b2 - a2) / 6, L_FLOOR),
        )

    q = np.array(fitted)
    lo = q.min(axis=0)
    hi = q.max(axis=0)
    margin = np.maximum(0.1 * (hi - lo), opt.gap_min)
    a1 = max(lo[0] - margin[0], Q1_FLOOR)
    a2 = max(lo[1] - margin[1], 0.0)
    b1 = hi[0] + margin[0]
    b2 = hi[1] + margin[1]
    mu = q.mean(axis=0)
    return RhoParams(
        a1, b1, a2, b2, float(mu[0]), float(mu[1]),
        max((b1 - a1) / 6, L_FLOOR), 0.0, max((b2 - a2) / 6, L_FLOOR),
    )
