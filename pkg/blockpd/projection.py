"""Projection module.

Euclidean projections onto the primal boxes X_i and onto the dual sets
M_c = {nu >= 0 : ||nu||_1 <= B}.
"""
import numpy as np

from blockpd.utils import DomainError

__all__ = ["BoxSet", "NonnegL1Ball", "project_box", "project_nonneg_l1"]


class BoxSet:
    """A box lower <= v <= upper.

    Parameters
    ----------
    lower : array_like
        Lower bounds.
    upper : array_like
        Upper bounds.

    Examples
    --------
    >>> box = BoxSet([0.0, 0.0], [10.0, 10.0])
    >>> box.diameter()  # doctest: +ELLIPSIS
    14.142135...
    """

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))

        if self.lower.shape != self.upper.shape:
            raise DomainError("lower and upper bounds must have the same shape")
        if np.any(self.lower > self.upper):
            raise DomainError("box lower bound exceeds upper bound")

    def __repr__(self):
        return f"{self.__class__.__name__}(lower={self.lower!r}, upper={self.upper!r})"

    def __getitem__(self, idx):
        return BoxSet(self.lower[idx], self.upper[idx])

    @property
    def dim(self):
        return self.lower.shape[0]

    def contains(self, v, atol=0.0):
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lower - atol) and np.all(v <= self.upper + atol))

    def midpoint(self):
        return 0.5 * (self.lower + self.upper)

    def diameter(self):
        """Euclidean diameter, exact for boxes."""
        return float(np.linalg.norm(self.upper - self.lower))


class NonnegL1Ball:
    """The set {nu in R^dim : nu >= 0, ||nu||_1 <= radius}.

    Parameters
    ----------
    radius : float
        The l1 radius B, must be nonnegative.
    dim : int
        Dimension m_c of the block.
    """

    def __init__(self, radius, dim):
        if not np.isfinite(radius) or radius < 0:
            raise DomainError(f"radius must be finite and nonnegative, got {radius}")
        self.radius = float(radius)
        self.dim = int(dim)

    def __repr__(self):
        return f"{self.__class__.__name__}(radius={self.radius:.6g}, dim={self.dim})"

    def contains(self, v, atol=1e-12):
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= -atol) and v.sum() <= self.radius + atol)

    def vertices(self):
        """Extreme points: the origin and radius * e_j."""
        return np.vstack([np.zeros(self.dim), self.radius * np.eye(self.dim)])


def project_box(box, v):
    """Euclidean projection onto a box (componentwise clamp).

    Parameters
    ----------
    box : BoxSet
        Target set.
    v : array_like
        Point to be projected.

    Returns
    -------
    numpy.ndarray
        The closest point of the box.

    Examples
    --------
    >>> project_box(BoxSet([0.0], [10.0]), [12.0])
    array([10.])
    >>> project_box(BoxSet([0.0], [10.0]), [-3.0])
    array([0.])
    """
    return np.minimum(np.maximum(np.asarray(v, dtype=float), box.lower), box.upper)


def project_nonneg_l1(ball, v):
    """Euclidean projection onto the nonnegative part of an l1 ball.

    Negative entries are clipped first. If the clipped point is inside the
    ball it is the answer; otherwise the point is projected onto the scaled
    simplex {nu >= 0, sum(nu) = radius} by the sort-and-threshold rule.

    Parameters
    ----------
    ball : NonnegL1Ball
        Target set.
    v : array_like
        Point to be projected.

    Returns
    -------
    numpy.ndarray
        The closest feasible point.

    Examples
    --------
    >>> ball = NonnegL1Ball(1.0, 2)
    >>> project_nonneg_l1(ball, [0.6, 0.6])
    array([0.5, 0.5])
    >>> project_nonneg_l1(ball, [-1.0, -1.0])
    array([0., 0.])
    """
    v = np.asarray(v, dtype=float)
    clipped = np.maximum(v, 0.0)
    if clipped.sum() <= ball.radius:
        return clipped
    if ball.radius == 0.0:
        return np.zeros_like(clipped)

    # water-filling threshold on the sorted positive part
    u = np.sort(clipped)[::-1]
    cssv = np.cumsum(u) - ball.radius
    ind = np.arange(1, u.size + 1)
    rho = np.nonzero(u - cssv / ind > 0)[0][-1]
    theta = cssv[rho] / (rho + 1.0)

    return np.maximum(clipped - theta, 0.0)
