"""Fast-timescale grid refinement on the active support.

Given the active set, posterior gain summaries, and noise precision from the
slow-timescale estimator, this stage treats the active grid parameters as
continuous variables and descends the fit objective

    L(theta) = || y - A_S(theta) x_S ||^2

where the gains x_S are re-fit at every evaluated theta by a regularized
least-squares step that blends the data with the posterior summaries
(variable projection). Search directions come from an inverse-Hessian BFGS
recursion with safeguarded secant updates; step sizes from Armijo
backtracking. Accepted steps therefore never increase the objective.

All optimization runs in scaled coordinates (each parameter dimension divided
by its coarse grid spacing) so step sizes and curvature are comparable across
dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import (
    GridParams,
    Observation,
    ParametricDictionary,
    SingularSystemError,
)
from .vbi import SseOutput

__all__ = [
    "SrguConfig",
    "ArmijoResult",
    "StepRecord",
    "SrguOutput",
    "lmmse_gain_update",
    "grid_objective",
    "grid_gradient",
    "bfgs_direction",
    "armijo_search",
    "run_srgu",
]

# relative jitter added to the normal matrix when its Cholesky fails
RIDGE_JITTER = 1e-10
# curvature pairs with |q^T p| below this times ||q|| ||p|| are rejected
SECANT_TOL = 1e-12


@dataclass
class SrguConfig:
    """Tuning knobs of the refinement stage."""

    c_armijo: float = 1e-2
    gamma: float = 0.5
    eps0: float = 1.0
    max_backtracks: int = 30
    sigma_inflation: float = 1.5
    x_max: float = 1e3
    param_scale: Optional[np.ndarray] = None  # (D,) coarse spacing per dim
    direction_method: str = "bfgs"  # "bfgs" | "gradient"
    merge_enabled: bool = False
    merge_tol: float = 0.1  # fraction of coarse spacing, per dimension
    secant_reset: int = 3  # consecutive secant failures before B <- I

    def __post_init__(self) -> None:
        if not (0.0 < self.c_armijo < 1.0):
            raise ValueError("c_armijo must lie in (0, 1)")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if self.eps0 <= 0 or self.max_backtracks < 0:
            raise ValueError("eps0 must be positive, max_backtracks >= 0")
        if self.direction_method not in ("bfgs", "gradient"):
            raise ValueError("direction_method must be 'bfgs' or 'gradient'")
        if self.sigma_inflation < 1.0:
            raise ValueError("sigma_inflation must be >= 1")


@dataclass
class ArmijoResult:
    step: float
    theta: np.ndarray      # accepted point; equals the input when stalled
    value: float
    x: Optional[np.ndarray]
    stalled: bool
    backtracks: int
    clamped: np.ndarray    # coordinates projected onto the box at acceptance


@dataclass
class StepRecord:
    iteration: int
    objective_before: float
    objective_after: float
    step: float
    backtracks: int
    stalled: bool
    secant_ok: bool
    ridge_used: bool
    n_clamped: int


@dataclass
class SrguOutput:
    support: np.ndarray
    theta: np.ndarray          # (S, D) refined parameters
    x: np.ndarray              # (S,) re-fit gains at the final parameters
    u: np.ndarray              # (possibly merged) gain anchors
    sigma: np.ndarray          # (possibly merged) prior variances
    objective: float
    trace: List[StepRecord] = field(default_factory=list)
    iters_run: int = 0
    early_stop: Optional[str] = None
    merged: bool = False


def _columns(dictionary: ParametricDictionary, theta: np.ndarray) -> np.ndarray:
    return dictionary.columns(np.atleast_2d(theta))


def _lmmse(
    a_s: np.ndarray,
    y: np.ndarray,
    kappa_hat: float,
    u_s: np.ndarray,
    sigma_s: np.ndarray,
) -> Tuple[np.ndarray, bool]:
    """Solve (A^H A + (1/kappa) Sigma^-1) x = A^H y + (1/kappa) Sigma^-1 u.

    Returns the solution and whether the ridge fallback had to fire.
    """
    if kappa_hat <= 0 or not np.isfinite(kappa_hat):
        raise ValueError("kappa_hat must be finite and positive")
    sigma_s = np.asarray(sigma_s, dtype=float).ravel()
    if np.any(sigma_s <= 0) or not np.all(np.isfinite(sigma_s)):
        raise ValueError("posterior variances must be finite and positive")
    prior_prec = (1.0 / kappa_hat) / sigma_s
    g = a_s.conj().T @ a_s
    idx = np.diag_indices_from(g)
    g[idx] = g[idx].real + prior_prec
    rhs = a_s.conj().T @ y + prior_prec * u_s
    ridge_used = False
    try:
        factor = cho_factor(g, lower=False, check_finite=False)
    except np.linalg.LinAlgError:
        ridge_used = True
        jitter = RIDGE_JITTER * float(np.real(np.trace(g))) / g.shape[0]
        g[idx] = g[idx].real + jitter
        try:
            factor = cho_factor(g, lower=False, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(
                "gain normal matrix singular even after ridge fallback",
                cond=float(np.linalg.cond(g)),
            ) from exc
    x = cho_solve(factor, rhs, check_finite=False)
    return x, ridge_used


def lmmse_gain_update(
    a_s: np.ndarray,
    y: np.ndarray,
    kappa_hat: float,
    u_s: np.ndarray,
    sigma_s: np.ndarray,
) -> np.ndarray:
    """Regularized gain re-fit on the active columns.

    Blends the least-squares fit with the posterior summaries (u_s, sigma_s)
    from the slow stage; as kappa_hat -> inf it approaches plain LS, and for
    tiny kappa_hat it stays at u_s.
    """
    return _lmmse(a_s, y, kappa_hat, u_s, sigma_s)[0]


def grid_objective(
    dictionary: ParametricDictionary,
    theta_s: np.ndarray,
    x_s: np.ndarray,
    y: np.ndarray,
) -> float:
    """Squared residual ||y - A_S(theta) x_S||^2 at fixed gains."""
    a_s = _columns(dictionary, theta_s)
    r = y - a_s @ np.asarray(x_s, dtype=complex).ravel()
    return float(np.real(np.vdot(r, r)))


def grid_gradient(
    dictionary: ParametricDictionary,
    theta_s: np.ndarray,
    x_s: np.ndarray,
    y: np.ndarray,
) -> np.ndarray:
    """Analytic gradient of :func:`grid_objective` w.r.t. theta, shape (S, D).

    Per active column k and dimension d:
        g[k, d] = -2 Re{ conj(x_k) * (d a_k / d theta_d)^H (y - A_S x_S) }.
    """
    theta_s = np.atleast_2d(theta_s)
    x_s = np.asarray(x_s, dtype=complex).ravel()
    a_s = _columns(dictionary, theta_s)
    r = y - a_s @ x_s
    jac = dictionary.column_jacobians(theta_s)  # (M, S, D)
    inner = np.einsum("msd,m->sd", jac.conj(), r)
    return -2.0 * np.real(np.conj(x_s)[:, None] * inner)


def bfgs_direction(
    grad: np.ndarray,
    b_mat: Optional[np.ndarray] = None,
    param_diff: Optional[np.ndarray] = None,
    grad_diff: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, bool]:
    """One inverse-Hessian BFGS step.

    With q = param_diff and p = grad_diff, a safeguarded secant update

        B <- (I - rho q p^T) B (I - rho p q^T) + rho q q^T,  rho = 1 / (q^T p)

    is applied when the curvature q^T p is positive and not degenerate
    (|q^T p| >= 1e-12 ||q|| ||p||); the direction is then -B grad. On the
    first call (no differences yet) or on a rejected pair, the direction
    falls back to -grad; a rejected pair leaves B unchanged.

    Returns (direction, b_mat, secant_ok).
    """
    grad = np.asarray(grad, dtype=float).ravel()
    dim = grad.shape[0]
    if b_mat is None:
        b_mat = np.eye(dim)
    if param_diff is None or grad_diff is None:
        return -grad.copy(), b_mat, True
    q = np.asarray(param_diff, dtype=float).ravel()
    p = np.asarray(grad_diff, dtype=float).ravel()
    denom = float(q @ p)
    guard = SECANT_TOL * float(np.linalg.norm(q)) * float(np.linalg.norm(p))
    if not np.isfinite(denom) or denom <= 0.0 or abs(denom) < guard:
        return -grad.copy(), b_mat, False
    rho = 1.0 / denom
    v = np.eye(dim) - rho * np.outer(q, p)
    b_new = v @ b_mat @ v.T + rho * np.outer(q, q)
    b_new = 0.5 * (b_new + b_new.T)
    return -(b_new @ grad), b_new, True


def armijo_search(
    project_objective: Callable[[np.ndarray], Tuple[float, Optional[np.ndarray]]],
    theta: np.ndarray,
    direction: np.ndarray,
    grad: np.ndarray,
    *,
    c_armijo: float = 1e-2,
    gamma: float = 0.5,
    eps0: float = 1.0,
    max_backtracks: int = 30,
    lower: Optional[np.ndarray] = None,
    upper: Optional[np.ndarray] = None,
) -> ArmijoResult:
    """Backtracking line search with re-projected gains on both sides.

    ``project_objective(theta) -> (L, x_opt)`` must evaluate the objective
    with the gains re-fit at that theta; the sufficient-decrease test is

        L(theta_c) <= L(theta) + c_armijo * eps * direction @ grad

    with theta_c the candidate clamped to [lower, upper]. When all
    backtracks are exhausted the returned step is 0 and ``stalled`` is set.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    direction = np.asarray(direction, dtype=float).ravel()
    value0, x0 = project_objective(theta)
    slope = c_armijo * float(direction @ grad)
    eps = float(eps0)
    no_clamp = np.zeros(theta.shape[0], dtype=bool)
    for k in range(max_backtracks + 1):
        cand = theta + eps * direction
        clamped = no_clamp
        if lower is not None or upper is not None:
            raw = cand
            cand = np.clip(cand, lower, upper)
            clamped = cand != raw
        value_c, x_c = project_objective(cand)
        if value_c <= value0 + eps * slope:
            return ArmijoResult(
                step=eps, theta=cand, value=value_c, x=x_c,
                stalled=False, backtracks=k, clamped=clamped,
            )
        eps *= gamma
    return ArmijoResult(
        step=0.0, theta=theta.copy(), value=value0, x=x0,
        stalled=True, backtracks=max_backtracks + 1, clamped=no_clamp,
    )


def _clamp_gains(x: np.ndarray, x_max: float) -> np.ndarray:
    mag = np.abs(x)
    over = mag > x_max
    if np.any(over):
        x = x.copy()
        x[over] *= x_max / mag[over]
    return x


def _merge_components(
    support: np.ndarray,
    theta: np.ndarray,
    x: np.ndarray,
    u: np.ndarray,
    sigma: np.ndarray,
    tol_per_dim: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, bool]:
    """Collapse components whose parameters coincide within tolerance in
    every dimension; gains sum, the lower grid index survives."""
    keep: List[int] = []
    absorbed = np.zeros(theta.shape[0], dtype=bool)
    x = x.copy()
    u = u.copy()
    sigma = sigma.copy()
    for k in range(theta.shape[0]):
        if absorbed[k]:
            continue
        for j in range(k + 1, theta.shape[0]):
            if absorbed[j]:
                continue
            if np.all(np.abs(theta[k] - theta[j]) < tol_per_dim):
                x[k] += x[j]
                u[k] += u[j]
                sigma[k] += sigma[j]
                absorbed[j] = True
        keep.append(k)
    if not np.any(absorbed):
        return support, theta, x, u, sigma, False
    keep_arr = np.array(keep, dtype=int)
    return (
        support[keep_arr],
        theta[keep_arr],
        x[keep_arr],
        u[keep_arr],
        sigma[keep_arr],
        True,
    )


def run_srgu(
    sse_out: SseOutput,
    dictionary: ParametricDictionary,
    obs: Observation,
    grid: GridParams,
    n_iters: int,
    config: Optional[SrguConfig] = None,
) -> SrguOutput:
    """Refine the active grid parameters for ``n_iters`` descent steps.

    Each iteration re-fits the gains at the current parameters, takes a
    safeguarded BFGS (or plain gradient) direction, and accepts a step via
    Armijo backtracking with gains re-projected on both sides of the test.
    B is reset to the identity after ``secant_reset`` consecutive rejected
    secant pairs or any stalled line search; a second consecutive stall
    (i.e. backtracking failed even along -grad) ends the loop early.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    cfg = config if config is not None else SrguConfig()
    support = np.asarray(sse_out.support, dtype=int)
    if support.size == 0:
        raise ValueError("active support is empty")
    y = obs.y
    dims = dictionary.param_dim
    theta0 = grid.values[support].copy()
    u = sse_out.posterior_mean_s.astype(complex).copy()
    sigma = np.asarray(sse_out.posterior_var_s, dtype=float) * cfg.sigma_inflation
    kappa = float(sse_out.kappa_hat)
    scale = (
        np.asarray(cfg.param_scale, dtype=float).ravel()
        if cfg.param_scale is not None
        else np.ones(dims)
    )
    if scale.shape[0] != dims or np.any(scale <= 0):
        raise ValueError("param_scale must hold one positive spacing per dimension")

    s = support.size
    lower = np.tile(dictionary.valid_range[:, 0] / scale, s)
    upper = np.tile(dictionary.valid_range[:, 1] / scale, s)
    z = (theta0 / scale).ravel()

    ridge_flag = [False]

    def project_objective(z_flat: np.ndarray) -> Tuple[float, np.ndarray]:
        th = z_flat.reshape(s, dims) * scale
        a_s = _columns(dictionary, th)
        x_fit, ridge = _lmmse(a_s, y, kappa, u, sigma)
        if ridge:
            ridge_flag[0] = True
        x_fit = _clamp_gains(x_fit, cfg.x_max)
        r = y - a_s @ x_fit
        return float(np.real(np.vdot(r, r))), x_fit

    b_mat = np.eye(s * dims)
    prev_z: Optional[np.ndarray] = None
    prev_grad: Optional[np.ndarray] = None
    clamped_last = np.zeros(s * dims, dtype=bool)
    secant_failures = 0
    stall_streak = 0
    trace: List[StepRecord] = []
    early_stop: Optional[str] = None

    value, x = project_objective(z)
    for it in range(1, n_iters + 1):
        theta_now = z.reshape(s, dims) * scale
        grad_theta = grid_gradient(dictionary, theta_now, x, y)
        grad_z = (grad_theta * scale).ravel()
        gnorm = float(np.linalg.norm(grad_z))
        if not np.isfinite(gnorm):
            raise FloatingPointError("gradient overflow during refinement")
        if gnorm <= 1e-14 * max(1.0, value):
            early_stop = "gradient-vanished"
            break

        secant_ok = True
        if cfg.direction_method == "bfgs":
            if prev_z is None:
                direction, b_mat, secant_ok = bfgs_direction(grad_z, b_mat)
            else:
                q = z - prev_z
                q[clamped_last] = 0.0  # clamped coords carry no secant info
                p = grad_z - prev_grad
                direction, b_mat, secant_ok = bfgs_direction(grad_z, b_mat, q, p)
            if not secant_ok:
                secant_failures += 1
                if secant_failures >= cfg.secant_reset:
                    b_mat = np.eye(s * dims)
                    secant_failures = 0
            else:
                secant_failures = 0
        else:
            direction = -grad_z

        if float(direction @ grad_z) >= 0.0:
            # not a descent direction; discard curvature and use -grad
            direction = -grad_z
            b_mat = np.eye(s * dims)

        ridge_flag[0] = False
        result = armijo_search(
            project_objective, z, direction, grad_z,
            c_armijo=cfg.c_armijo, gamma=cfg.gamma, eps0=cfg.eps0,
            max_backtracks=cfg.max_backtracks, lower=lower, upper=upper,
        )
        trace.append(
            StepRecord(
                iteration=it,
                objective_before=value,
                objective_after=result.value,
                step=result.step,
                backtracks=result.backtracks,
                stalled=result.stalled,
                secant_ok=secant_ok,
                ridge_used=ridge_flag[0],
                n_clamped=int(np.count_nonzero(result.clamped)),
            )
        )
        if result.stalled:
            stall_streak += 1
            b_mat = np.eye(s * dims)
            prev_z = None
            prev_grad = None
            clamped_last = np.zeros(s * dims, dtype=bool)
            if stall_streak >= 2:
                early_stop = "stalled"
                break
            continue
        stall_streak = 0
        prev_z = z
        prev_grad = grad_z
        clamped_last = result.clamped
        z = result.theta
        value = result.value
        x = result.x

    theta_final = z.reshape(s, dims) * scale
    merged = False
    if cfg.merge_enabled and s > 1:
        tol = cfg.merge_tol * scale
        support, theta_final, x, u, sigma, merged = _merge_components(
            support, theta_final, x, u, sigma, tol
        )
        if merged:
            a_s = _columns(dictionary, theta_final)
            x, _ = _lmmse(a_s, y, kappa, u, sigma)
            x = _clamp_gains(x, cfg.x_max)
            r = y - a_s @ x
            value = float(np.real(np.vdot(r, r)))

    return SrguOutput(
        support=support,
        theta=theta_final,
        x=x,
        u=u,
        sigma=sigma,
        objective=value,
        trace=trace,
        iters_run=len(trace),
        early_stop=early_stop,
        merged=merged,
    )
