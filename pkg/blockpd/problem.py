"""Problem module.

This module defines the convex problem classes, the dual geometry obtained
from a Slater point, the Tikhonov-regularized Lagrangian

    L_delta(x, mu) = f(x) + mu^T g(x) - (delta / 2) ||mu||^2

with its derivatives, and every problem-derived constant used by the
stepsize rules and the convergence bounds.
"""
import logging
from abc import ABC, abstractmethod
from copy import deepcopy
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import pandas as pd
from scipy.stats import qmc

from blockpd.projection import BoxSet, NonnegL1Ball, project_nonneg_l1
from blockpd.utils import (
    DiagonalDominanceError,
    DomainError,
    EvaluationError,
    InvalidSlaterPointError,
    SchemaError,
    check_partition,
    dump_document,
    load_document,
)

__all__ = [
    "ProblemSpec",
    "QuadraticProblem",
    "SeparableLogProblem",
    "CallableProblem",
    "DualGeometry",
    "ProblemConstants",
    "eval_lagrangian",
    "grad_x",
    "grad_mu",
    "hessian_x",
    "compute_dual_bound",
    "compute_gamma_bound",
    "compute_beta",
    "compute_diameter_and_lipschitz",
    "compute_constants",
    "essential_neighbors",
    "problem_example",
    "quadratic_example",
]

logger = logging.getLogger(__name__)

# grid used when no closed form is available
GRID_POINTS_PER_AXIS = 17
GRID_MAX_POINTS = 20_000
SAFETY_FACTOR = 0.9


class ProblemSpec(ABC):
    """Base class for constrained convex problems.

    minimize f(x) subject to g(x) <= 0 and x in X, where X is a box split
    into primal blocks and g is split into dual blocks.

    Subclasses implement the evaluators. Everything else (validation,
    partitions, serialization) lives here.

    Parameters
    ----------
    n : int
        Primal dimension.
    m : int
        Number of constraints.
    box_lower, box_upper : array_like
        Finite bounds of the box X.
    slater_point : array_like
        A point of X with g(slater_point) < 0 componentwise.
    f_star_lower : float, optional
        Lower bound on min f over X. Default is 0, valid when f >= 0.
    primal_partition : list of list of int, optional
        Ordered disjoint index blocks covering range(n). Default is a single
        block.
    dual_partition : list of list of int, optional
        Ordered disjoint index blocks covering range(m). Default is a single
        block.
    tag : str, optional
        A name for the problem.
    """

    kind = None
    is_affine = False
    is_separable = False

    def __init__(
        self,
        n,
        m,
        box_lower,
        box_upper,
        slater_point,
        f_star_lower=0.0,
        primal_partition=None,
        dual_partition=None,
        tag=None,
    ):
        self.n = int(n)
        self.m = int(m)
        self.box_lower = np.asarray(box_lower, dtype=float).reshape(self.n)
        self.box_upper = np.asarray(box_upper, dtype=float).reshape(self.n)
        self.slater_point = np.asarray(slater_point, dtype=float).reshape(self.n)
        self.f_star_lower = float(f_star_lower)
        self.tag = tag

        if primal_partition is None:
            primal_partition = [list(range(self.n))]
        if dual_partition is None:
            dual_partition = [list(range(self.m))] if self.m > 0 else []

        self.primal_partition = [list(map(int, b)) for b in primal_partition]
        self.dual_partition = [list(map(int, b)) for b in dual_partition]

    def _validate(self):
        if not (np.all(np.isfinite(self.box_lower)) and np.all(np.isfinite(self.box_upper))):
            raise DomainError("box bounds must be finite on both sides")
        if np.any(self.box_lower >= self.box_upper):
            raise DomainError("box_lower must be strictly below box_upper")

        self.primal_blocks = check_partition(self.primal_partition, self.n, "primal_partition")
        self.dual_blocks = check_partition(self.dual_partition, self.m, "dual_partition")

        if not self.box.contains(self.slater_point):
            raise InvalidSlaterPointError("slater_point is outside the box X")
        if self.m > 0:
            g_bar = self.constraints(self.slater_point)
            if np.any(g_bar >= 0):
                raise InvalidSlaterPointError(
                    f"g(slater_point) must be strictly negative, got max {g_bar.max():.6g}"
                )
        f_bar = self.objective(self.slater_point)
        if f_bar < self.f_star_lower:
            raise DomainError(
                f"f(slater_point)={f_bar:.6g} is below f_star_lower={self.f_star_lower:.6g}"
            )

    @property
    def box(self):
        return BoxSet(self.box_lower, self.box_upper)

    @property
    def N_p(self):
        return len(self.primal_partition)

    @property
    def N_d(self):
        return len(self.dual_partition)

    @abstractmethod
    def objective(self, x):
        pass

    @abstractmethod
    def gradient(self, x):
        pass

    @abstractmethod
    def hessian(self, x):
        pass

    @abstractmethod
    def constraints(self, x):
        pass

    @abstractmethod
    def jacobian(self, x):
        pass

    def constraint_hessian(self, x, mu):
        """Sum_j mu_j * Hessian(g_j)(x). Zero for affine constraints."""
        return np.zeros((self.n, self.n))

    def hessian_pattern(self):
        """Boolean n x n pattern of entries of H(x, mu) that can be nonzero."""
        pattern = np.zeros((self.n, self.n), dtype=bool)
        geom_radius = 1.0
        mus = [np.zeros(self.m)] + [geom_radius * e for e in np.eye(self.m)]
        for x in _sample_points(self.box, max_points=64):
            for mu in mus:
                pattern |= np.abs(self.hessian(x) + self.constraint_hessian(x, mu)) > 0
        return pattern

    def constraint_pattern(self):
        """Boolean m x n pattern: entry (j, i) is True if g_j depends on x_i."""
        pattern = np.zeros((self.m, self.n), dtype=bool)
        for x in _sample_points(self.box, max_points=64):
            pattern |= np.abs(self.jacobian(x)) > 0
        return pattern

    def with_partitions(self, primal_partition, dual_partition):
        """Copy of the problem with other block partitions."""
        new = deepcopy(self)
        new.primal_partition = [list(map(int, b)) for b in primal_partition]
        new.dual_partition = [list(map(int, b)) for b in dual_partition]
        new._validate()
        return new

    @abstractmethod
    def tightened(self, shift):
        """Copy of the problem with g replaced by the stricter g + shift."""
        pass

    def _common_dict(self):
        return {
            "n": self.n,
            "m": self.m,
            "box": {"lower": self.box_lower, "upper": self.box_upper},
            "slater_point": self.slater_point,
            "f_star_lower": self.f_star_lower,
            "primal_partition": self.primal_partition,
            "dual_partition": self.dual_partition,
            "tag": self.tag,
        }

    def to_dict(self):
        raise SchemaError(f"{self.__class__.__name__} cannot be serialized")

    @staticmethod
    def from_dict(data, source="problem"):
        """Build a problem from its document form.

        Parameters
        ----------
        data : dict
            Document following the problem schema.
        source : str, optional
            Name used to anchor error messages.

        Returns
        -------
        ProblemSpec
        """
        try:
            kind = data["objective"]["kind"]
        except (KeyError, TypeError):
            raise SchemaError("missing objective.kind", location=f"{source}:objective")
        obj = data["objective"]

        try:
            common = dict(
                box_lower=data["box"]["lower"],
                box_upper=data["box"]["upper"],
                slater_point=data["slater_point"],
                f_star_lower=data.get("f_star_lower", 0.0),
                primal_partition=data.get("primal_partition"),
                dual_partition=data.get("dual_partition"),
                tag=data.get("tag"),
            )
            cons = data["constraints"]
            if cons.get("kind", "affine") != "affine":
                raise SchemaError(
                    f"unsupported constraints.kind {cons.get('kind')!r}",
                    location=f"{source}:constraints.kind",
                )
            A = np.asarray(cons["A"], dtype=float)
            b = np.asarray(cons["b"], dtype=float).reshape(-1)
        except KeyError as err:
            raise SchemaError(f"missing key {err.args[0]!r}", location=source)
        except (TypeError, ValueError) as err:
            raise SchemaError(str(err), location=f"{source}:constraints")

        try:
            n = int(data.get("n", np.size(common["box_lower"])))
        except (TypeError, ValueError):
            raise SchemaError(f"n must be an integer, got {data.get('n')!r}", location=f"{source}:n")
        if A.size != len(b) * n:
            raise SchemaError(
                f"expected {len(b)} x {n} = {len(b) * n} entries for {len(b)} constraints, got {A.size}",
                location=f"{source}:constraints.A",
            )
        A = A.reshape(len(b), n)

        required = {"quadratic": ("Q",), "log_utility": ("weights",)}
        if kind not in required:
            raise SchemaError(f"unknown objective kind {kind!r}", location=f"{source}:objective.kind")
        for key in required[kind]:
            if obj.get(key) is None:
                raise SchemaError(f"missing objective.{key}", location=f"{source}:objective.{key}")

        try:
            if kind == "quadratic":
                return QuadraticProblem(
                    Q=obj["Q"], c=obj.get("c"), offset=obj.get("offset", 0.0), A=A, b=b, **common
                )
            return SeparableLogProblem(weights=obj["weights"], A=A, b=b, **common)
        except DomainError:
            raise
        except (TypeError, ValueError) as err:
            # shape mismatches between the box, the slater point and the objective data
            raise SchemaError(str(err), location=source)

    def save(self, file_name):
        """Save the problem as a JSON (or TOML) document.

        Parameters
        ----------
        file_name : str
            Destination path.

        Examples
        --------
        >>> import tempfile, os
        >>> p = problem_example()
        >>> path = os.path.join(tempfile.mkdtemp(), "problem.json")
        >>> p.save(path)
        >>> ProblemSpec.load(path) == p
        True
        """
        dump_document(self.to_dict(), file_name)

    @staticmethod
    def load(file_name):
        """Load a problem saved with :meth:`save`."""
        return ProblemSpec.from_dict(load_document(file_name), source=str(file_name))

    def __eq__(self, other):
        if type(self) is not type(other):
            return False
        a, b = self.to_dict(), other.to_dict()
        return _nested_equal(a, b)

    def summary(self):
        """A pandas Series with the problem's sizes and constants.

        Examples
        --------
        >>> problem_example().summary()["N_p"]
        2
        """
        attributes = {
            "type": self.__class__.__name__,
            "tag": self.tag,
            "n": self.n,
            "m": self.m,
            "N_p": self.N_p,
            "N_d": self.N_d,
            "f(slater)": float(self.objective(self.slater_point)),
            "f_star_lower": self.f_star_lower,
        }
        return pd.Series(attributes)


class _AffineConstraints:
    """Mixin for g(x) = A x - b."""

    is_affine = True

    def _init_affine(self, A, b):
        self.A = np.atleast_2d(np.asarray(A, dtype=float)).reshape(-1, self.n)
        self.b = np.asarray(b, dtype=float).reshape(-1)
        if self.A.shape[0] != self.b.shape[0]:
            raise DomainError("A and b have inconsistent row counts")
        self.m = self.A.shape[0]

    def constraints(self, x):
        return self.A @ x - self.b

    def jacobian(self, x):
        return self.A

    def constraint_pattern(self):
        return self.A != 0

    def tightened(self, shift):
        new = deepcopy(self)
        new.b = self.b - np.broadcast_to(np.asarray(shift, dtype=float), self.b.shape)
        new._validate()
        return new


class QuadraticProblem(_AffineConstraints, ProblemSpec):
    """Quadratic objective with affine constraints.

    f(x) = 1/2 x^T Q x + c^T x + offset,  g(x) = A x - b.

    Parameters
    ----------
    Q : array_like
        Symmetric positive semidefinite n x n matrix.
    c : array_like, optional
        Linear term. Default is zero.
    offset : float, optional
        Constant term.
    A, b : array_like
        Constraint data.
    **kwargs
        Passed to :class:`ProblemSpec`.

    Examples
    --------
    >>> p = QuadraticProblem(Q=[[2.0]], c=[-2.0], offset=1.0, A=[[1.0]], b=[0.5],
    ...                      box_lower=[-1.0], box_upper=[1.0], slater_point=[0.0])
    >>> compute_dual_bound(p)
    2.0
    """

    kind = "quadratic"

    def __init__(self, Q, A, b, c=None, offset=0.0, **kwargs):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        n = Q.shape[0]
        super().__init__(n=n, m=len(np.atleast_1d(b)), **kwargs)
        if not np.allclose(Q, Q.T):
            raise DomainError("Q must be symmetric")
        self.Q = Q
        self.c = np.zeros(n) if c is None else np.asarray(c, dtype=float).reshape(n)
        self.offset = float(offset)
        self._init_affine(A, b)
        if self.m == 0:
            self.dual_partition = []
        self._validate()

    def objective(self, x):
        return float(0.5 * x @ self.Q @ x + self.c @ x + self.offset)

    def gradient(self, x):
        return self.Q @ x + self.c

    def hessian(self, x):
        return self.Q

    def hessian_pattern(self):
        return self.Q != 0

    def to_dict(self):
        data = self._common_dict()
        data["objective"] = {"kind": "quadratic", "Q": self.Q, "c": self.c, "offset": self.offset}
        data["constraints"] = {"kind": "affine", "A": self.A, "b": self.b}
        return data


class SeparableLogProblem(_AffineConstraints, ProblemSpec):
    """Log-utility objective with affine constraints.

    f(x) = -sum_i w_i log(1 + x_i),  g(x) = A x - b.

    The Hessian is diagonal with entries w_i / (1 + x_i)^2, so every
    Hessian-derived constant has a closed form over the box.

    Parameters
    ----------
    weights : float or array_like
        Positive weights w_i (a scalar W applies to every coordinate).
    A, b : array_like
        Constraint data.
    **kwargs
        Passed to :class:`ProblemSpec`.
    """

    kind = "log_utility"
    is_separable = True

    def __init__(self, weights, A, b, **kwargs):
        n = len(np.asarray(kwargs["box_lower"], dtype=float).reshape(-1))
        super().__init__(n=n, m=len(np.atleast_1d(b)), **kwargs)
        self.weights = np.broadcast_to(np.asarray(weights, dtype=float), (n,)).copy()
        if np.any(self.weights <= 0):
            raise DomainError("log-utility weights must be positive")
        if np.any(self.box_lower <= -1):
            raise DomainError("log-utility requires box_lower > -1")
        self._init_affine(A, b)
        self._validate()

    def objective(self, x):
        return float(-np.sum(self.weights * np.log1p(x)))

    def gradient(self, x):
        return -self.weights / (1.0 + x)

    def hessian(self, x):
        return np.diag(self.weights / (1.0 + x) ** 2)

    def hessian_pattern(self):
        return np.eye(self.n, dtype=bool)

    def hessian_diagonal_range(self):
        """Exact (min, max) of each Hessian diagonal entry over the box."""
        return (
            self.weights / (1.0 + self.box_upper) ** 2,
            self.weights / (1.0 + self.box_lower) ** 2,
        )

    def to_dict(self):
        data = self._common_dict()
        weights = self.weights
        if np.all(weights == weights[0]):
            weights = float(weights[0])
        data["objective"] = {"kind": "log_utility", "weights": weights}
        data["constraints"] = {"kind": "affine", "A": self.A, "b": self.b}
        return data


class CallableProblem(ProblemSpec):
    """A problem given by user callables.

    Parameters
    ----------
    n, m : int
        Dimensions.
    objective, gradient, hessian : callable
        f(x) -> float, grad f(x) -> (n,), Hessian f(x) -> (n, n).
    constraints, jacobian : callable
        g(x) -> (m,), Jacobian g(x) -> (m, n).
    constraint_hessian : callable, optional
        (x, mu) -> sum_j mu_j Hessian g_j(x). Omit for affine g.
    affine : bool, optional
        Declare g affine so that constant-Jacobian closed forms are used.
    **kwargs
        Passed to :class:`ProblemSpec`.
    """

    kind = "callable"

    def __init__(
        self,
        n,
        m,
        objective,
        gradient,
        hessian,
        constraints,
        jacobian,
        constraint_hessian=None,
        affine=False,
        **kwargs,
    ):
        super().__init__(n=n, m=m, **kwargs)
        self._f = objective
        self._grad = gradient
        self._hess = hessian
        self._g = constraints
        self._jac = jacobian
        self._g_hess = constraint_hessian
        self._shift = np.zeros(self.m)
        self.is_affine = bool(affine) and constraint_hessian is None
        self._validate()

    def objective(self, x):
        return float(self._f(x))

    def gradient(self, x):
        return np.asarray(self._grad(x), dtype=float).reshape(self.n)

    def hessian(self, x):
        return np.asarray(self._hess(x), dtype=float).reshape(self.n, self.n)

    def constraints(self, x):
        return np.asarray(self._g(x), dtype=float).reshape(self.m) + self._shift

    def jacobian(self, x):
        return np.asarray(self._jac(x), dtype=float).reshape(self.m, self.n)

    def constraint_hessian(self, x, mu):
        if self._g_hess is None:
            return np.zeros((self.n, self.n))
        return np.asarray(self._g_hess(x, mu), dtype=float).reshape(self.n, self.n)

    def tightened(self, shift):
        new = deepcopy(self)
        new._shift = self._shift + np.broadcast_to(np.asarray(shift, dtype=float), (self.m,))
        new._validate()
        return new


class DualGeometry:
    """Regularization weight and the dual feasible sets.

    Parameters
    ----------
    delta : float
        Tikhonov weight, must be positive.
    B : float
        l1 radius of the dual sets.
    dual_partition : list of list of int
        Dual blocks; one set M_c is built per block.

    Examples
    --------
    >>> geom = DualGeometry.from_problem(problem_example(), delta=0.1)
    >>> len(geom.block_sets)
    2
    """

    def __init__(self, delta, B, dual_partition):
        if not delta > 0:
            raise DomainError(f"delta must be positive, got {delta}")
        if not B >= 0:
            raise DomainError(f"dual bound B must be nonnegative, got {B}")
        self.delta = float(delta)
        self.B = float(B)
        self.dual_blocks = [np.asarray(b, dtype=int) for b in dual_partition]
        self.block_sets = [NonnegL1Ball(self.B, len(b)) for b in self.dual_blocks]
        self.m = int(sum(len(b) for b in self.dual_blocks))

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(delta={self.delta:.6g}, B={self.B:.6g}, "
            f"N_d={len(self.dual_blocks)})"
        )

    @classmethod
    def from_problem(cls, p, delta):
        return cls(delta, compute_dual_bound(p), p.dual_partition)

    def project(self, mu):
        """Blockwise projection onto the product of the sets M_c."""
        out = np.empty(self.m)
        for rows, ball in zip(self.dual_blocks, self.block_sets):
            out[rows] = project_nonneg_l1(ball, np.asarray(mu)[rows])
        return out

    def contains(self, mu, atol=1e-9):
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (self.m,):
            return False
        return all(ball.contains(mu[rows], atol=atol) for rows, ball in zip(self.dual_blocks, self.block_sets))

    def vertices(self):
        """The origin and B * e_j for every constraint j."""
        return np.vstack([np.zeros(self.m), self.B * np.eye(self.m)])


@dataclass
class ProblemConstants:
    """Hessian and Jacobian derived constants of a problem.

    Attributes
    ----------
    beta : float
        Diagonal dominance margin of H(x, mu) over X x M.
    gamma_max : float
        Strict upper bound for the primal stepsize.
    M_global : float
        max over X of ||grad g(x)||.
    M_per_constraint : numpy.ndarray
        max over X of ||grad g_j(x)|| for every j.
    M_per_block : numpy.ndarray
        max over X of ||grad g_[c](x)|| for every dual block c.
    D_x : float
        Diameter of X.
    exact : bool
        True when every constant came from a closed form.
    """

    beta: float
    gamma_max: float
    M_global: float
    M_per_constraint: np.ndarray = field(repr=False)
    M_per_block: np.ndarray = field(repr=False)
    D_x: float
    exact: bool = True

    def to_dict(self):
        return {
            "beta": self.beta,
            "gamma_max": self.gamma_max,
            "M_global": self.M_global,
            "M_per_constraint": self.M_per_constraint.tolist(),
            "M_per_block": self.M_per_block.tolist(),
            "D_x": self.D_x,
            "exact": self.exact,
        }


def _nested_equal(a, b):
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_nested_equal(a[k], b[k]) for k in a)
    if isinstance(a, (list, tuple, np.ndarray)) or isinstance(b, (list, tuple, np.ndarray)):
        try:
            return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        except (TypeError, ValueError):
            return list(a) == list(b)
    if isinstance(a, float) or isinstance(b, float):
        return np.isclose(a, b)
    return a == b


def _sample_points(box, max_points=GRID_MAX_POINTS):
    """Deterministic evaluation points covering a box.

    A full tensor grid with GRID_POINTS_PER_AXIS points per axis when it is
    small enough, otherwise the box vertices along each axis pair, the
    midpoint and an unscrambled Halton sequence.
    """
    n = box.dim
    if GRID_POINTS_PER_AXIS ** n <= max_points:
        axes = [np.linspace(lo, hi, GRID_POINTS_PER_AXIS) for lo, hi in zip(box.lower, box.upper)]
        return np.array(list(product(*axes)))

    points = [box.lower, box.upper, box.midpoint()]
    sampler = qmc.Halton(d=n, scramble=False)
    unit = sampler.random(max(max_points - len(points), 1))
    points.extend(qmc.scale(unit, box.lower, box.upper))
    return np.vstack(points)


def _check_domain(p, geom, x, mu):
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if x.shape != (p.n,) or not p.box.contains(x, atol=1e-12):
        raise DomainError("x is outside the box X")
    if mu.shape != (p.m,) or not geom.contains(mu):
        raise DomainError("mu is outside the dual set M")
    return x, mu


def eval_lagrangian(p, geom, x, mu, check=True):
    """Evaluate the regularized Lagrangian.

    Parameters
    ----------
    p : ProblemSpec
    geom : DualGeometry
    x : array_like
        Point of X.
    mu : array_like
        Point of M.
    check : bool, optional
        Validate that x and mu are in their sets. Default is True.

    Returns
    -------
    float
        f(x) + mu^T g(x) - delta/2 ||mu||^2.

    Examples
    --------
    >>> p = QuadraticProblem(Q=[[1.0]], A=[[1.0]], b=[1.0], box_lower=[-10.0],
    ...                      box_upper=[2.0], slater_point=[-9.0])
    >>> geom = DualGeometry.from_problem(p, delta=0.1)
    >>> round(eval_lagrangian(p, geom, [1.0], [2.0]), 12)
    0.3
    """
    if check:
        x, mu = _check_domain(p, geom, x, mu)
    else:
        x, mu = np.asarray(x, dtype=float), np.asarray(mu, dtype=float)
    return p.objective(x) + float(mu @ p.constraints(x)) - 0.5 * geom.delta * float(mu @ mu)


def grad_x(p, geom, x, mu, check=True):
    """Gradient of the regularized Lagrangian in x.

    Returns
    -------
    numpy.ndarray
        grad f(x) + J_g(x)^T mu.

    Examples
    --------
    >>> p = QuadraticProblem(Q=[[1.0, 0.0], [0.0, 1.0]], A=[[1.0, 1.0]], b=[1.0],
    ...                      box_lower=[-5.0, -5.0], box_upper=[5.0, 5.0],
    ...                      slater_point=[-2.0, -2.0])
    >>> geom = DualGeometry(0.1, 10.0, p.dual_partition)
    >>> grad_x(p, geom, [1.0, 2.0], [3.0])
    array([4., 5.])
    """
    if check:
        x, mu = _check_domain(p, geom, x, mu)
    else:
        x, mu = np.asarray(x, dtype=float), np.asarray(mu, dtype=float)
    return p.gradient(x) + p.jacobian(x).T @ mu


def grad_mu(p, geom, x, mu, check=True):
    """Gradient of the regularized Lagrangian in mu: g(x) - delta * mu."""
    if check:
        x, mu = _check_domain(p, geom, x, mu)
    else:
        x, mu = np.asarray(x, dtype=float), np.asarray(mu, dtype=float)
    return p.constraints(x) - geom.delta * mu


def hessian_x(p, x, mu):
    """Hessian of the Lagrangian in x, H(x, mu). The regularizer does not enter."""
    H = p.hessian(np.asarray(x, dtype=float)) + p.constraint_hessian(x, mu)
    if not np.all(np.isfinite(H)):
        raise EvaluationError("non-finite Hessian entries")
    return H


def compute_dual_bound(p):
    """Dual bound B = (f(x_bar) - f_star_lower) / min_j(-g_j(x_bar)).

    Raises
    ------
    InvalidSlaterPointError
        If min_j(-g_j(x_bar)) <= 0.
    """
    if p.m == 0:
        return 0.0
    slack = float(np.min(-p.constraints(p.slater_point)))
    if slack <= 0:
        raise InvalidSlaterPointError(f"Slater slack must be positive, got {slack:.6g}")
    return (p.objective(p.slater_point) - p.f_star_lower) / slack


def _hessian_evaluation_set(p, geom):
    for x in _sample_points(p.box):
        if isinstance(p, CallableProblem) and not p.is_affine:
            for mu in geom.vertices():
                yield hessian_x(p, x, mu)
        else:
            yield hessian_x(p, x, np.zeros(p.m))


def compute_gamma_bound(p, geom):
    """Strict upper bound on the primal stepsize.

    1 / max_i max_{x in X} max_{mu in M} sum_j |H_ij(x, mu)|, exact for the
    quadratic and log-utility classes, estimated on a deterministic grid and
    shrunk by SAFETY_FACTOR otherwise.

    Examples
    --------
    >>> p = problem_example()
    >>> compute_gamma_bound(p, DualGeometry.from_problem(p, 0.1)) == 1 / p.weights.max()
    True
    """
    if isinstance(p, QuadraticProblem):
        row_max = np.abs(p.Q).sum(axis=1).max()
        exact = True
    elif isinstance(p, SeparableLogProblem):
        row_max = p.hessian_diagonal_range()[1].max()
        exact = True
    else:
        row_max = max(np.abs(H).sum(axis=1).max() for H in _hessian_evaluation_set(p, geom))
        exact = False

    if not np.isfinite(row_max):
        raise EvaluationError("non-finite Hessian row sums")
    if row_max <= 0:
        raise DiagonalDominanceError("Hessian vanishes on X; the objective is not strongly convex")

    gamma_max = 1.0 / row_max
    return gamma_max if exact else SAFETY_FACTOR * gamma_max


def compute_beta(p, geom):
    """Diagonal dominance margin min(|H_ii| - sum_{j != i} |H_ij|).

    Raises
    ------
    DiagonalDominanceError
        If the margin is not positive.

    Examples
    --------
    >>> p = QuadraticProblem(Q=[[2.0, -0.5], [-0.5, 2.0]], A=[[1.0, 1.0]], b=[1.0],
    ...                      box_lower=[-1.0, -1.0], box_upper=[1.0, 1.0],
    ...                      slater_point=[0.0, 0.0])
    >>> compute_beta(p, DualGeometry.from_problem(p, 0.1))
    1.5
    """

    def margin(H):
        absH = np.abs(H)
        diag = np.diag(absH)
        return float(np.min(2 * diag - absH.sum(axis=1)))

    if isinstance(p, QuadraticProblem):
        beta = margin(p.Q)
    elif isinstance(p, SeparableLogProblem):
        beta = float(p.hessian_diagonal_range()[0].min())
    else:
        beta = SAFETY_FACTOR * min(margin(H) for H in _hessian_evaluation_set(p, geom))

    if not beta > 0:
        raise DiagonalDominanceError(
            f"Hessian is not diagonally dominant on X x M (margin {beta:.6g}); "
            "regularizing in the primal variable is not supported"
        )
    return beta


def compute_diameter_and_lipschitz(p):
    """Diameter of X and the constraint gradient bounds.

    Norms are Euclidean over the stacked Jacobian rows, so M_global is the
    Frobenius norm of the Jacobian, M_[c] the Frobenius norm of its block
    rows and M_j the norm of row j.

    Returns
    -------
    tuple
        (D_x, M_global, M_per_constraint, M_per_block)

    Examples
    --------
    >>> p = problem_example()
    >>> D_x, M, M_j, M_c = compute_diameter_and_lipschitz(p)
    >>> M_j
    array([1., 1.])
    """
    if not (np.all(np.isfinite(p.box_lower)) and np.all(np.isfinite(p.box_upper))):
        raise DomainError("box bounds must be finite")

    D_x = p.box.diameter()

    if p.is_affine:
        jacobians = [p.jacobian(p.box.midpoint())]
        inflate = 1.0
    else:
        jacobians = [p.jacobian(x) for x in _sample_points(p.box)]
        inflate = 1.0 / SAFETY_FACTOR

    row_norms = np.max([np.linalg.norm(J, axis=1) for J in jacobians], axis=0) if p.m else np.zeros(0)
    M_global = max((float(np.linalg.norm(J)) for J in jacobians), default=0.0)
    M_per_block = np.array(
        [max(float(np.linalg.norm(J[rows])) for J in jacobians) for rows in p.dual_blocks]
    )

    return D_x, inflate * M_global, inflate * row_norms, inflate * M_per_block


def compute_constants(p, geom):
    """All problem constants in one :class:`ProblemConstants`."""
    beta = compute_beta(p, geom)
    gamma_max = compute_gamma_bound(p, geom)
    D_x, M, M_j, M_c = compute_diameter_and_lipschitz(p)
    exact = isinstance(p, (QuadraticProblem, SeparableLogProblem))
    consts = ProblemConstants(
        beta=beta,
        gamma_max=gamma_max,
        M_global=M,
        M_per_constraint=M_j,
        M_per_block=M_c,
        D_x=D_x,
        exact=exact,
    )
    logger.debug("problem constants %s", consts)
    return consts


def essential_neighbors(p):
    """Essential neighbors N_i of every primal agent.

    j is in N_i when the partial gradient of L_delta in x_[i] depends on
    x_[j], read off the structural Hessian pattern.

    Returns
    -------
    list of set of int

    Examples
    --------
    >>> essential_neighbors(problem_example())
    [set(), set()]
    """
    pattern = p.hessian_pattern()
    neighbors = []
    for i, rows in enumerate(p.primal_blocks):
        coupled = set()
        for j, cols in enumerate(p.primal_blocks):
            if j != i and pattern[np.ix_(rows, cols)].any():
                coupled.add(j)
        neighbors.append(coupled)
    return neighbors


def problem_example():
    """A two-path log-utility problem with scalar blocks.

    The purpose is to make available a simple model so that doctests can be
    written using it.

    Examples
    --------
    >>> p = problem_example()
    >>> p.n, p.m
    (2, 2)
    """
    return SeparableLogProblem(
        weights=2.0,
        A=[[1.0, 0.0], [0.0, 1.0]],
        b=[4.0, 6.0],
        box_lower=[0.0, 0.0],
        box_upper=[10.0, 10.0],
        slater_point=[0.0, 0.0],
        f_star_lower=-2 * 2.0 * np.log(11.0),
        primal_partition=[[0], [1]],
        dual_partition=[[0], [1]],
        tag="two_paths",
    )


def quadratic_example():
    """A coupled three-variable quadratic with two affine constraints.

    The Hessian has off-diagonal entries, so with scalar blocks every primal
    agent has essential neighbors.

    Examples
    --------
    >>> essential_neighbors(quadratic_example())
    [{1}, {0, 2}, {1}]
    """
    # fmt: off
    Q = np.array([[ 3.0, -1.0,  0.0],
                  [-1.0,  3.0, -1.0],
                  [ 0.0, -1.0,  3.0]])
    # fmt: on
    return QuadraticProblem(
        Q=Q,
        c=[-6.0, -4.0, -6.0],
        offset=0.0,
        A=[[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]],
        b=[2.0, 2.5],
        box_lower=[-1.0, -1.0, -1.0],
        box_upper=[4.0, 4.0, 4.0],
        slater_point=[0.0, 0.0, 0.0],
        f_star_lower=-30.0,
        primal_partition=[[0], [1], [2]],
        dual_partition=[[0], [1]],
        tag="coupled_quadratic",
    )
