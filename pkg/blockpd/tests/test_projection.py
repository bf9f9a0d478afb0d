import numpy as np
import pytest
from numpy.testing import assert_allclose

from blockpd.projection import *
from blockpd.utils import DomainError


def grid_projection(v, radius, levels=7, points=21):
    """Minimize ||nu - v|| over the set by successively refined grids."""
    d = len(v)
    center = np.full(d, radius / 2)
    half = radius / 2
    best = None
    for _ in range(levels):
        axes = [np.linspace(c - half, c + half, points) for c in center]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        grid = grid[(grid >= 0).all(axis=1) & (grid.sum(axis=1) <= radius)]
        dist = ((grid - v) ** 2).sum(axis=1)
        best = grid[np.argmin(dist)]
        step = 2 * half / (points - 1)
        center, half = best, 2 * step
    return best


def test_box_projection_clamps():
    box = BoxSet([0.0, -1.0], [10.0, 1.0])
    assert_allclose(project_box(box, [12.0, -3.0]), [10.0, -1.0])
    assert_allclose(project_box(box, [5.0, 0.5]), [5.0, 0.5])


def test_box_rejects_inverted_bounds():
    with pytest.raises(DomainError):
        BoxSet([1.0], [0.0])


def test_box_item_is_sub_box():
    box = BoxSet([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    sub = box[np.array([0, 2])]
    assert_allclose(sub.lower, [0.0, 2.0])
    assert_allclose(sub.upper, [1.0, 3.0])


def test_l1_projection_interior_point_unchanged():
    ball = NonnegL1Ball(2.0, 3)
    assert_allclose(project_nonneg_l1(ball, [0.5, 0.5, 0.5]), [0.5, 0.5, 0.5])


def test_l1_projection_clips_negative_part():
    ball = NonnegL1Ball(2.0, 3)
    assert_allclose(project_nonneg_l1(ball, [0.5, -1.0, 0.2]), [0.5, 0.0, 0.2])


def test_l1_projection_onto_face():
    ball = NonnegL1Ball(1.0, 3)
    out = project_nonneg_l1(ball, [2.0, 0.0, -1.0])
    assert_allclose(out, [1.0, 0.0, 0.0])

    out = project_nonneg_l1(ball, [1.0, 1.0, 1.0])
    assert_allclose(out, [1 / 3, 1 / 3, 1 / 3])


def test_l1_projection_zero_radius():
    ball = NonnegL1Ball(0.0, 2)
    assert_allclose(project_nonneg_l1(ball, [3.0, 4.0]), [0.0, 0.0])


def test_l1_ball_rejects_negative_radius():
    with pytest.raises(DomainError):
        NonnegL1Ball(-1.0, 2)


@pytest.mark.parametrize("dim", [2, 3, 4])
def test_l1_projection_matches_grid_search(dim):
    rng = np.random.default_rng(dim)
    ball = NonnegL1Ball(1.0, dim)
    for _ in range(5):
        v = rng.normal(scale=1.0, size=dim)
        proj = project_nonneg_l1(ball, v)
        best = grid_projection(v, 1.0)
        assert ball.contains(proj)
        assert np.linalg.norm(v - proj) <= np.linalg.norm(v - best) + 1e-12
        assert_allclose(np.linalg.norm(v - proj), np.linalg.norm(v - best), atol=2e-3)
        # optimality: (v - proj) . (y - proj) <= 0 at every extreme point y
        assert np.all((ball.vertices() - proj) @ (v - proj) <= 1e-10)


def test_l1_projection_is_nonexpansive_and_idempotent():
    rng = np.random.default_rng(0)
    ball = NonnegL1Ball(1.5, 5)
    for _ in range(1000):
        u, v = rng.normal(scale=2.0, size=(2, 5))
        pu, pv = project_nonneg_l1(ball, u), project_nonneg_l1(ball, v)
        assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12
        assert ball.contains(pu)
        assert_allclose(project_nonneg_l1(ball, pu), pu, atol=1e-12)
