"""Reference module.

Centralized baselines and analytical evaluators. The saddle point of the
regularized Lagrangian is computed three independent ways (Uzawa iteration,
accelerated dual ascent and a smooth penalty reformulation); the module also
evaluates the contraction matrices, the rate constants and every convergence
and regularization bound used to audit asynchronous runs.
"""
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from blockpd.problem import (
    DualGeometry,
    compute_beta,
    compute_diameter_and_lipschitz,
    compute_gamma_bound,
    grad_mu,
    grad_x,
    hessian_x,
)
from blockpd.projection import project_box
from blockpd.utils import (
    CertificateError,
    DomainError,
    InfeasibleToleranceError,
    InvalidSlaterPointError,
    StepsizeError,
)

__all__ = [
    "SaddlePoint",
    "RateConstants",
    "ContractionCertificate",
    "CorollaryParameters",
    "uzawa_iterates",
    "uzawa_solve",
    "fixed_mu_minimizer",
    "dual_ascent_oracle",
    "penalty_solve",
    "unregularized_solve",
    "fixed_point_residual",
    "contraction_matrices",
    "rate_constants",
    "theorem_bound",
    "dual_block_bound",
    "mu_bound",
    "regularization_error_bounds",
    "tightening_delta_limit",
    "tighten_constraints",
    "corollary_parameters",
]

logger = logging.getLogger(__name__)

DELTA_SEARCH_MAX = 10.0
DELTA_SEARCH_TOL = 1e-8


@dataclass
class SaddlePoint:
    """Saddle point of the regularized Lagrangian.

    Attributes
    ----------
    x_hat_delta : numpy.ndarray
        Primal solution.
    mu_hat_delta : numpy.ndarray
        Dual solution.
    kkt_residual : float
        Sup-norm of one Uzawa step taken from the returned pair.
    iterations : int
        Iterations used by the solver.
    converged : bool
        False when the iteration budget ran out first.
    method : str
        Which solver produced the point.
    """

    x_hat_delta: np.ndarray
    mu_hat_delta: np.ndarray
    kkt_residual: float
    iterations: int = 0
    converged: bool = True
    method: str = "uzawa"

    def __iter__(self):
        return iter((self.x_hat_delta, self.mu_hat_delta))


@dataclass
class RateConstants:
    """Contraction factors and the constants of the convergence bounds.

    Attributes
    ----------
    q_p : float
        Primal contraction factor 1 - gamma * beta.
    q_d : float
        Dual factor (1 - rho * delta)^2 + 2 rho^2.
    C1, C2, C3 : float
        Constants of the primal bound; C3 is the asynchrony penalty.
    E1, E2, E3 : numpy.ndarray
        Per dual block constants of the one-step dual bound.
    """

    q_p: float
    q_d: float
    C1: float
    C2: float
    C3: float
    E1: np.ndarray = field(repr=False)
    E2: np.ndarray = field(repr=False)
    E3: np.ndarray = field(repr=False)
    n: int = field(default=0, repr=False)
    N_d: int = field(default=0, repr=False)
    M: float = field(default=0.0, repr=False)
    beta: float = field(default=0.0, repr=False)
    D_x: float = field(default=0.0, repr=False)
    gamma: float = field(default=0.0, repr=False)
    rho: float = field(default=0.0, repr=False)
    delta: float = field(default=0.0, repr=False)

    def to_dict(self):
        return {
            "q_p": self.q_p,
            "q_d": self.q_d,
            "C1": self.C1,
            "C2": self.C2,
            "C3": self.C3,
            "E1": np.asarray(self.E1).tolist(),
            "E2": np.asarray(self.E2).tolist(),
            "E3": np.asarray(self.E3).tolist(),
            "gamma": self.gamma,
            "rho": self.rho,
            "delta": self.delta,
        }


@dataclass
class ContractionCertificate:
    """The matrices G and F with their positivity certificates.

    Unpacks as ``G, F = contraction_matrices(...)``.
    """

    G: np.ndarray
    F: np.ndarray
    row_sums: np.ndarray
    q_p: float
    conditions: dict

    def __iter__(self):
        return iter((self.G, self.F))


@dataclass
class CorollaryParameters:
    """Parameters meeting a requested error bound.

    Unpacks as ``K_min, T_min, rho, delta_min``.
    """

    K_min: int
    T_min: int
    rho: float
    delta_min: float
    rate_constants: RateConstants = field(repr=False)
    mu0_dist: float = 0.0
    mu0_dist_source: str = "oracle"
    check_value: float = float("nan")

    def __iter__(self):
        return iter((self.K_min, self.T_min, self.rho, self.delta_min))

    def to_dict(self):
        return {
            "K_min": self.K_min,
            "T_min": self.T_min,
            "rho": self.rho,
            "delta_min": self.delta_min,
            "mu0_dist": self.mu0_dist,
            "mu0_dist_source": self.mu0_dist_source,
            "check_value": self.check_value,
            "rate_constants": self.rate_constants.to_dict(),
        }


def _check_stepsizes(gamma, rho, delta, gamma_max=None):
    if not gamma > 0 or (gamma_max is not None and not gamma < gamma_max):
        raise StepsizeError(
            f"primal stepsize violates 0 < gamma < 1 / max row sum |H| (gamma={gamma:.6g}, "
            f"bound={gamma_max})"
        )
    upper = 2 * delta / (delta ** 2 + 2)
    if not 0 < rho < upper:
        raise StepsizeError(
            f"dual stepsize violates 0 < rho < 2 delta / (delta^2 + 2) (rho={rho:.6g}, bound={upper:.6g})"
        )


def _oracle_stepsizes(p, geom):
    gamma = 0.9 * compute_gamma_bound(p, geom)
    rho = geom.delta / (1 + geom.delta ** 2)
    return gamma, rho


def _uzawa_step(p, geom, x, mu, gamma, rho, scheme):
    x_new = project_box(p.box, x - gamma * grad_x(p, geom, x, mu, check=False))
    x_dual = x_new if scheme == "alternating" else x
    mu_new = geom.project(mu + rho * grad_mu(p, geom, x_dual, mu, check=False))
    return x_new, mu_new


def fixed_point_residual(p, geom, x, mu, gamma=None, rho=None):
    """Sup-norm distance between (x, mu) and one Uzawa step from it."""
    if gamma is None or rho is None:
        gamma, rho = _oracle_stepsizes(p, geom)
    x_new, mu_new = _uzawa_step(p, geom, x, mu, gamma, rho, "alternating")
    return float(max(np.max(np.abs(x_new - x), initial=0.0), np.max(np.abs(mu_new - mu), initial=0.0)))


def uzawa_iterates(p, geom, gamma, rho, x0=None, mu0=None, scheme="alternating"):
    """Generate the centralized Uzawa iterates (x(k), mu(k)), k = 1, 2, ...

    With ``scheme="alternating"`` the dual step uses the fresh primal
    iterate, which is what the asynchronous algorithm performs with one
    primal and one dual agent. ``"simultaneous"`` uses x(k) for both steps.
    """
    if scheme not in ("alternating", "simultaneous"):
        raise ValueError(f"unknown Uzawa scheme {scheme!r}")
    x = p.box.midpoint() if x0 is None else project_box(p.box, np.asarray(x0, dtype=float))
    mu = np.zeros(p.m) if mu0 is None else geom.project(np.asarray(mu0, dtype=float))
    while True:
        x, mu = _uzawa_step(p, geom, x, mu, gamma, rho, scheme)
        yield x, mu


def uzawa_solve(p, geom, gamma=None, rho=None, iters=200_000, tol=1e-10, scheme="alternating", x0=None, mu0=None):
    """Centralized projected primal-dual (Uzawa) iteration.

    Parameters
    ----------
    p : ProblemSpec
    geom : DualGeometry
    gamma, rho : float, optional
        Stepsizes. Default to 0.9 * gamma_max and delta / (1 + delta^2).
    iters : int, optional
        Iteration budget.
    tol : float, optional
        Stop when one step moves the pair by at most tol in sup-norm.
    scheme : str, optional
        "alternating" (default) or "simultaneous".

    Returns
    -------
    SaddlePoint
        The last iterate, flagged ``converged=False`` if the budget ran out.

    Examples
    --------
    >>> from blockpd.problem import QuadraticProblem, DualGeometry
    >>> p = QuadraticProblem(Q=[[1.0]], A=[[1.0]], b=[1.0], box_lower=[-1.0],
    ...                      box_upper=[1.0], slater_point=[0.0])
    >>> sp = uzawa_solve(p, DualGeometry.from_problem(p, 0.1))
    >>> round(float(sp.x_hat_delta[0]), 8)
    0.0
    """
    if gamma is None or rho is None:
        gamma_default, rho_default = _oracle_stepsizes(p, geom)
        gamma = gamma_default if gamma is None else gamma
        rho = rho_default if rho is None else rho
    if p.m:
        _check_stepsizes(gamma, rho, geom.delta)

    x = p.box.midpoint() if x0 is None else project_box(p.box, np.asarray(x0, dtype=float))
    mu = np.zeros(p.m) if mu0 is None else geom.project(np.asarray(mu0, dtype=float))

    residual = np.inf
    for k in range(1, iters + 1):
        x_new, mu_new = _uzawa_step(p, geom, x, mu, gamma, rho, scheme)
        residual = float(
            max(np.max(np.abs(x_new - x), initial=0.0), np.max(np.abs(mu_new - mu), initial=0.0))
        )
        x, mu = x_new, mu_new
        if residual <= tol:
            logger.info("Uzawa converged in %d iterations (residual %.3e)", k, residual)
            return SaddlePoint(x, mu, residual, k, True, "uzawa")

    warnings.warn(f"Uzawa did not converge in {iters} iterations (residual {residual:.3e})")
    logger.warning("Uzawa stopped at the iteration budget with residual %.3e", residual)
    return SaddlePoint(x, mu, residual, iters, False, "uzawa")


def fixed_mu_minimizer(p, geom, mu, tol=1e-12, gamma=None, x0=None, max_iter=1_000_000, beta=None):
    """Minimizer of L_delta(., mu) over X.

    Iterates h(x) = Pi_X[x - gamma * grad_x L_delta(x, mu)], a contraction
    with factor q_p = 1 - gamma * beta in the sup-norm, until the step is
    below tol * (1 - q_p), which bounds the distance to the fixed point by
    tol.

    Examples
    --------
    >>> from blockpd.problem import QuadraticProblem, DualGeometry
    >>> p = QuadraticProblem(Q=[[2.0, 0.5], [0.5, 2.0]], c=[-1.0, -2.0], A=[[1.0, 1.0]],
    ...                      b=[10.0], box_lower=[-5.0, -5.0], box_upper=[5.0, 5.0],
    ...                      slater_point=[0.0, 0.0])
    >>> x = fixed_mu_minimizer(p, DualGeometry.from_problem(p, 0.1), [0.0])
    >>> np.allclose(x, np.linalg.solve(p.Q, -p.c))
    True
    """
    mu = np.asarray(mu, dtype=float)
    if gamma is None:
        gamma = 0.9 * compute_gamma_bound(p, geom)
    beta = compute_beta(p, geom) if beta is None else beta
    q_p = 1.0 - gamma * beta

    x = p.box.midpoint() if x0 is None else np.array(x0, dtype=float)
    # steps cannot shrink below a few ulps of the iterate
    threshold = max(tol * (1.0 - q_p), 8 * np.finfo(float).eps * max(1.0, np.max(np.abs(x), initial=0.0)))
    for _ in range(max_iter):
        x_new = project_box(p.box, x - gamma * grad_x(p, geom, x, mu, check=False))
        step = np.max(np.abs(x_new - x), initial=0.0)
        x = x_new
        if step <= threshold:
            return x

    warnings.warn(f"fixed-mu minimizer did not reach tolerance {tol:.1e} in {max_iter} iterations")
    return x


def dual_ascent_oracle(p, geom, tol=1e-10, max_iter=100_000):
    """Saddle point by accelerated projected ascent on the dual function.

    The dual function d(mu) = min_x L_delta(x, mu) is delta-strongly concave
    with gradient g(x(mu)) - delta * mu and Lipschitz constant at most
    delta + M^2 / beta. Every inner minimization is warm started.

    Returns
    -------
    SaddlePoint
    """
    if p.m == 0:
        x = fixed_mu_minimizer(p, geom, np.zeros(0), tol=tol)
        return SaddlePoint(x, np.zeros(0), fixed_point_residual(p, geom, x, np.zeros(0)), 0, True, "dual_ascent")

    beta = compute_beta(p, geom)
    J = p.jacobian(p.box.midpoint())
    if p.is_affine:
        M2 = float(np.linalg.norm(J, 2) ** 2)
    else:
        M2 = compute_diameter_and_lipschitz(p)[1] ** 2
    lipschitz = geom.delta + M2 / beta
    gamma = 0.9 * compute_gamma_bound(p, geom)
    step = 1.0 / lipschitz
    kappa = np.sqrt(geom.delta / lipschitz)
    momentum = (1 - kappa) / (1 + kappa)

    mu = np.zeros(p.m)
    y = mu.copy()
    x = p.box.midpoint()
    inner_tol = tol * 1e-2
    for k in range(1, max_iter + 1):
        x = fixed_mu_minimizer(p, geom, y, tol=inner_tol, gamma=gamma, x0=x, beta=beta)
        mu_new = geom.project(y + step * grad_mu(p, geom, x, y, check=False))
        change = np.max(np.abs(mu_new - mu))
        y = mu_new + momentum * (mu_new - mu)
        mu = mu_new
        if change <= tol * kappa:
            break
    else:
        warnings.warn(f"dual ascent oracle did not converge in {max_iter} iterations")

    x = fixed_mu_minimizer(p, geom, mu, tol=inner_tol, gamma=gamma, x0=x, beta=beta)
    residual = fixed_point_residual(p, geom, x, mu)
    return SaddlePoint(x, mu, residual, k, residual <= 1e-8, "dual_ascent")


def penalty_solve(p, geom, tol=1e-12, x0=None):
    """Saddle point through the smooth penalty form of the inner maximization.

    For delta > 0 and mu >= 0, max_mu mu^T g - delta/2 ||mu||^2 equals
    ||[g]_+||^2 / (2 delta), so x_hat_delta minimizes
    f(x) + ||[g(x)]_+||^2 / (2 delta) over X and mu_hat_delta = [g]_+ / delta.
    The box constrained problem is solved with L-BFGS-B.

    Returns
    -------
    SaddlePoint
    """
    delta = geom.delta

    def fun(x):
        excess = np.maximum(p.constraints(x), 0.0)
        value = p.objective(x) + 0.5 / delta * float(excess @ excess)
        gradient = p.gradient(x) + p.jacobian(x).T @ excess / delta
        return value, gradient

    x0 = p.box.midpoint() if x0 is None else np.asarray(x0, dtype=float)
    res = optimize.minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=list(zip(p.box.lower, p.box.upper)),
        options={"ftol": tol, "gtol": tol, "maxiter": 50_000, "maxcor": 30},
    )
    if not res.success:
        logger.warning("penalty solve: %s", res.message)

    x = np.clip(res.x, p.box.lower, p.box.upper)
    mu = geom.project(np.maximum(p.constraints(x), 0.0) / delta)
    residual = fixed_point_residual(p, geom, x, mu)
    return SaddlePoint(x, mu, residual, int(res.nit), bool(res.success), "penalty")


def unregularized_solve(p, tol=1e-12, x0=None):
    """Solution x_hat of the original constrained problem with SLSQP.

    Returns
    -------
    numpy.ndarray
    """
    x0 = p.slater_point if x0 is None else np.asarray(x0, dtype=float)
    constraints = []
    if p.m:
        constraints.append(
            {"type": "ineq", "fun": lambda x: -p.constraints(x), "jac": lambda x: -p.jacobian(x)}
        )
    res = optimize.minimize(
        p.objective,
        x0,
        jac=p.gradient,
        method="SLSQP",
        bounds=list(zip(p.box.lower, p.box.upper)),
        constraints=constraints,
        options={"ftol": tol, "maxiter": 2_000},
    )
    if not res.success:
        warnings.warn(f"unregularized solve did not converge: {res.message}")
    return np.clip(res.x, p.box.lower, p.box.upper)


def contraction_matrices(p, geom, gamma, at_point=None):
    """Comparison matrices G and F = I - gamma * G at a point of X x M.

    G keeps |H_ii| on the diagonal and holds -|H_ij| elsewhere.

    Parameters
    ----------
    p : ProblemSpec
    geom : DualGeometry
    gamma : float
        Primal stepsize.
    at_point : tuple, optional
        (x, mu). Defaults to the box midpoint and mu = 0.

    Returns
    -------
    ContractionCertificate

    Raises
    ------
    CertificateError
        Naming the first failing condition: (i) gamma * max row sum of |H| < 1,
        (ii) G positive definite by Gershgorin, (iii) F positive definite by
        Gershgorin.

    Examples
    --------
    >>> from blockpd.problem import QuadraticProblem, DualGeometry
    >>> p = QuadraticProblem(Q=np.eye(2), A=[[1.0, 1.0]], b=[1.0], box_lower=[-1.0, -1.0],
    ...                      box_upper=[1.0, 1.0], slater_point=[0.0, 0.0])
    >>> G, F = contraction_matrices(p, DualGeometry.from_problem(p, 0.1), gamma=0.5)
    >>> F
    array([[0.5, 0. ],
           [0. , 0.5]])
    """
    if at_point is None:
        x, mu = p.box.midpoint(), np.zeros(p.m)
    else:
        x, mu = (np.asarray(v, dtype=float) for v in at_point)

    absH = np.abs(hessian_x(p, x, mu))
    n = absH.shape[0]
    off = absH.sum(axis=1) - np.diag(absH)
    G = -absH.copy()
    G[np.diag_indices(n)] = np.diag(absH)
    F = np.eye(n) - gamma * G

    row_sums = np.abs(F).sum(axis=1)
    conditions = {
        "(i) gamma * max row sum |H| < 1": bool(gamma * absH.sum(axis=1).max() < 1),
        "(ii) G positive definite": bool(np.all(np.diag(absH) - off > 0)),
        "(iii) F positive definite": bool(np.all(1 - gamma * np.diag(absH) - gamma * off > 0)),
    }
    for name, holds in conditions.items():
        if not holds:
            raise CertificateError(f"contraction certificate {name} failed")

    q_p = 1.0 - gamma * compute_beta(p, geom)
    return ContractionCertificate(G, F, row_sums, q_p, conditions)


def rate_constants(p, geom, consts, gamma, rho):
    """Contraction factors and bound constants for the given stepsizes.

    Examples
    --------
    >>> from blockpd.problem import problem_example, DualGeometry, compute_constants
    >>> p = problem_example()
    >>> geom = DualGeometry.from_problem(p, 0.1)
    >>> rc = rate_constants(p, geom, compute_constants(p, geom), gamma=0.01, rho=0.099)
    >>> round(rc.q_d, 6)
    0.9999
    """
    _check_stepsizes(gamma, rho, geom.delta, consts.gamma_max)
    delta, beta = geom.delta, consts.beta
    q_p = 1.0 - gamma * beta
    q_d = (1 - rho * delta) ** 2 + 2 * rho ** 2
    if not q_d < 1:
        raise StepsizeError(f"dual factor q_d = {q_d:.6g} is not below 1")

    n, N_d = p.n, p.N_d
    M, D = consts.M_global, consts.D_x
    common = N_d * M ** 4 * D ** 2 / (beta ** 2 * (1 - q_d))
    C1 = 2 * n * common * (q_d - rho ** 2)
    C2 = 4 * rho ** 2 * np.sqrt(n) * common
    C3 = 2 * common * (q_d - rho ** 2)

    Mc2D2 = consts.M_per_block ** 2 * D ** 2
    E1 = (q_d - rho ** 2) * n * Mc2D2
    E2 = 2 * rho ** 2 * np.sqrt(n) * Mc2D2
    E3 = (q_d - rho ** 2) * Mc2D2

    return RateConstants(
        q_p=q_p,
        q_d=q_d,
        C1=float(C1),
        C2=float(C2),
        C3=float(C3),
        E1=E1,
        E2=E2,
        E3=E3,
        n=n,
        N_d=N_d,
        M=M,
        beta=beta,
        D_x=D,
        gamma=gamma,
        rho=rho,
        delta=delta,
    )


def theorem_bound(rc, ops, T, K, mu0_dist, x0_dist_inf=None):
    """Upper bound on ||x^i(k; t) - x_hat_delta||^2.

    q_p^(2 ops) 2 n D_x^2 + q_d^T (2 M^2 / beta^2) mu0_dist
    + q_p^(2K) C1 + q_p^K C2 + C3.

    Parameters
    ----------
    rc : RateConstants
    ops, T, K : int
        Counters of the run.
    mu0_dist : float
        ||mu(0) - mu_hat_delta||^2.
    x0_dist_inf : float, optional
        Measured max_j ||x^j(k0; t) - x_hat_delta(t)||_inf at the start of the
        current dual epoch. When given it replaces D_x in the first term.

    Examples
    --------
    >>> rc = RateConstants(0.5, 0.5, 1.0, 1.0, 1.0, None, None, None, n=1, M=1.0, beta=1.0, D_x=1.0)
    >>> theorem_bound(rc, 0, 0, 0, 1.0)
    7.0
    >>> theorem_bound(rc, 10**6, 10**6, 10**6, 1.0)
    1.0
    """
    q_p, q_d = rc.q_p, rc.q_d
    scale = rc.D_x if x0_dist_inf is None else x0_dist_inf
    first = q_p ** (2 * ops) * 2 * rc.n * scale ** 2
    second = q_d ** T * 2 * rc.M ** 2 / rc.beta ** 2 * mu0_dist
    return float(first + second + q_p ** (2 * K) * rc.C1 + q_p ** K * rc.C2 + rc.C3)


def dual_block_bound(rc, c, prev_dist, ops_kappa):
    """One-step bound on ||mu_[c](t_c + 1) - mu_hat_delta,[c]||^2.

    q_d * prev_dist + q_p^(2 ops) E1(c) + q_p^ops E2(c) + E3(c), where
    ops_kappa is the ops value reached by the primal blocks the update used.
    """
    q_p = rc.q_p
    return float(
        rc.q_d * prev_dist + q_p ** (2 * ops_kappa) * rc.E1[c] + q_p ** ops_kappa * rc.E2[c] + rc.E3[c]
    )


def mu_bound(rc, T, K, mu0_dist):
    """Bound on ||mu(t) - mu_hat_delta||^2 for the full dual vector."""
    q_p, q_d, rho = rc.q_p, rc.q_d, rc.rho
    base = rc.N_d * rc.M ** 2 * rc.D_x ** 2
    tail = (
        q_p ** (2 * K) * (q_d - rho ** 2) * rc.n * base
        + q_p ** K * 2 * rho ** 2 * np.sqrt(rc.n) * base
        + (q_d - rho ** 2) * base
    )
    return float(q_d ** T * mu0_dist + tail / (1 - q_d))


def regularization_error_bounds(p, geom, consts):
    """Bounds on what regularizing the dual variable costs.

    Returns
    -------
    solution_gap_bound : float
        (delta / beta) B^2, bounding ||x_hat_delta - x_hat||^2.
    per_constraint_violation_bounds : numpy.ndarray
        M_j B sqrt(delta / beta), bounding g_j(x_hat_delta).
    """
    ratio = geom.delta / consts.beta
    return ratio * geom.B ** 2, consts.M_per_constraint * geom.B * np.sqrt(ratio)


def tightening_delta_limit(p, geom, consts):
    """Largest delta whose tightened constraints keep the Slater point strictly feasible.

    The limit is beta min_j (-g_j(x_bar) / (M_j B))^2 and does not depend on
    ``geom.delta``; it is infinite without dual variables.

    Examples
    --------
    >>> from blockpd.problem import problem_example, compute_constants
    >>> p = problem_example()
    >>> geom = DualGeometry.from_problem(p, delta=0.1)
    >>> round(tightening_delta_limit(p, geom, compute_constants(p, geom)), 4)
    0.046
    """
    if geom.B == 0 or p.m == 0:
        return np.inf
    slack = -p.constraints(p.slater_point)
    with np.errstate(divide="ignore"):
        return float(consts.beta * np.min((slack / (consts.M_per_constraint * geom.B)) ** 2))


def tighten_constraints(p, geom, consts):
    """Problem with every constraint tightened by its violation bound.

    g_j is replaced by g_j + M_j B sqrt(delta / beta), so a solution of the
    regularized tightened problem is feasible for the original one. Only
    deltas below :func:`tightening_delta_limit` are accepted; on the network
    flow benchmark that is of order 1e-4.

    Raises
    ------
    InvalidSlaterPointError
        If the Slater point violates the tightened constraints. The message
        gives the largest delta for which it would not.
    """
    _, shift = regularization_error_bounds(p, geom, consts)
    if geom.B == 0 or p.m == 0:
        return p.tightened(np.zeros(p.m))

    slack = -p.constraints(p.slater_point)
    if np.any(shift >= slack):
        delta_max = tightening_delta_limit(p, geom, consts)
        raise InvalidSlaterPointError(
            f"tightened constraints exclude the Slater point; use delta < {delta_max:.6g}"
        )
    logger.info("tightening constraints by up to %.6g", shift.max())
    return p.tightened(shift)


def corollary_parameters(p, geom, consts, eps1, eps2, gamma=None, mu0_dist=None, delta_max=DELTA_SEARCH_MAX):
    """Counters, dual stepsize and regularization meeting eps1 + eps2.

    With rho = delta / (1 + delta^2) the asynchrony penalty is
    C3 = 2 N_d M^4 D_x^2 / (beta^2 (1 - q_d) (1 + delta^2)), nonincreasing
    in delta. The smallest delta with C3 <= eps2 is found with brentq.

    Parameters
    ----------
    p, geom, consts
        Problem, geometry (its delta is ignored) and constants.
    eps1, eps2 : float
        Error budget for the transient terms and for the asynchrony penalty.
    gamma : float, optional
        Primal stepsize, defaults to gamma_max / 2.
    mu0_dist : float, optional
        ||mu(0) - mu_hat_delta||^2. Without it the squared diameter bound
        (2B)^2 of the dual set is used.
    delta_max : float or None, optional
        Upper end of the search. None extends the search until C3 <= eps2.

    Returns
    -------
    CorollaryParameters

    Raises
    ------
    InfeasibleToleranceError
        If eps2 cannot be met with delta <= delta_max. The frontier (the
        value of C3 at delta_max) is attached.
    """
    if not (eps1 > 0 and eps2 > 0):
        raise DomainError("error bounds must be positive")
    gamma = 0.5 * consts.gamma_max if gamma is None else gamma

    K0 = 2 * p.N_d * consts.M_global ** 4 * consts.D_x ** 2 / consts.beta ** 2

    def penalty(delta):
        rho = delta / (1 + delta ** 2)
        q_d = (1 - rho * delta) ** 2 + 2 * rho ** 2
        if not q_d < 1:
            return np.inf
        return K0 * (q_d - rho ** 2) / (1 - q_d)

    hi = delta_max
    if hi is None:
        hi = 1.0
        while penalty(hi) > eps2:
            hi *= 2.0
    elif penalty(hi) > eps2:
        frontier = penalty(hi)
        raise InfeasibleToleranceError(
            f"eps2={eps2:.6g} is below the smallest asynchrony penalty {frontier:.6g} reachable "
            f"with delta <= {hi:g}",
            frontier=frontier,
        )

    lo = 0.5 * hi
    while penalty(lo) <= eps2:
        hi, lo = lo, 0.5 * lo
    delta = optimize.brentq(lambda d: penalty(d) - eps2, lo, hi, xtol=DELTA_SEARCH_TOL * hi)
    # the root may sit on the infeasible side by up to xtol
    while penalty(delta) > eps2:
        delta = min(hi, delta + DELTA_SEARCH_TOL * hi)
    rho = delta / (1 + delta ** 2)

    geom_delta = DualGeometry(delta, geom.B, p.dual_partition)
    rc = rate_constants(p, geom_delta, consts, gamma, rho)

    source = "oracle"
    if mu0_dist is None:
        mu0_dist = (2 * geom.B) ** 2
        source = "dual set diameter"

    transient = 4 * p.n * consts.D_x ** 2 + 2 * rc.C1 + 2 * rc.C2
    K_min = max(0, int(np.ceil((np.log(eps1) - np.log(transient)) / np.log(rc.q_p))))
    if mu0_dist > 0 and consts.M_global > 0:
        T_raw = (np.log(eps1 * consts.beta ** 2) - np.log(4 * consts.M_global ** 2 * mu0_dist)) / np.log(rc.q_d)
        T_min = max(0, int(np.ceil(T_raw)))
    else:
        T_min = 0

    check = theorem_bound(rc, K_min, T_min, K_min, mu0_dist)
    logger.info("corollary: K_min=%d T_min=%d delta=%.6g check=%.6g", K_min, T_min, delta, check)
    return CorollaryParameters(K_min, T_min, rho, delta, rc, mu0_dist, source, check)
