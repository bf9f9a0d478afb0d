import os
import tempfile

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_almost_equal

from blockpd.netflow import generate_benchmark
from blockpd.problem import *
from blockpd.utils import (
    DiagonalDominanceError,
    DomainError,
    EvaluationError,
    InvalidSlaterPointError,
    SchemaError,
)


@pytest.fixture
def two_paths():
    return problem_example()


@pytest.fixture
def coupled():
    return quadratic_example()


def quartic_problem(affine=True, hessian=None):
    return CallableProblem(
        n=2,
        m=1,
        objective=lambda x: float(np.sum(x ** 4 / 12 + x ** 2)),
        gradient=lambda x: x ** 3 / 3 + 2 * x,
        hessian=hessian or (lambda x: np.diag(x ** 2 + 2)),
        constraints=lambda x: np.array([x[0] + x[1] - 1.0]),
        jacobian=lambda x: np.array([[1.0, 1.0]]),
        affine=affine,
        box_lower=[-1.0, -1.0],
        box_upper=[1.0, 1.0],
        slater_point=[0.0, 0.0],
    )


def test_dual_bound(two_paths, coupled):
    assert_almost_equal(compute_dual_bound(two_paths), np.log(11.0))
    assert_almost_equal(compute_dual_bound(coupled), 15.0)


def test_constants_two_paths(two_paths):
    geom = DualGeometry.from_problem(two_paths, delta=0.1)
    consts = compute_constants(two_paths, geom)

    assert_almost_equal(consts.beta, 2 / 121)
    assert_almost_equal(consts.gamma_max, 0.5)
    assert_almost_equal(consts.D_x, np.sqrt(200.0))
    assert_almost_equal(consts.M_global, np.sqrt(2.0))
    assert_allclose(consts.M_per_constraint, [1.0, 1.0])
    assert_allclose(consts.M_per_block, [1.0, 1.0])
    assert consts.exact


def test_constants_quadratic(coupled):
    geom = DualGeometry.from_problem(coupled, delta=0.1)
    assert_almost_equal(compute_beta(coupled, geom), 1.0)
    assert_almost_equal(compute_gamma_bound(coupled, geom), 0.2)


def test_constants_from_grid():
    p = quartic_problem()
    geom = DualGeometry.from_problem(p, delta=0.1)
    consts = compute_constants(p, geom)

    assert_almost_equal(consts.gamma_max, 0.9 / 3)
    assert_almost_equal(consts.beta, 0.9 * 2)
    assert_almost_equal(consts.M_global, np.sqrt(2.0))
    assert not consts.exact


def test_non_affine_lipschitz_is_inflated():
    p = quartic_problem(affine=False)
    _, M, M_j, _ = compute_diameter_and_lipschitz(p)
    assert_almost_equal(M, np.sqrt(2.0) / 0.9)
    assert_allclose(M_j, [np.sqrt(2.0) / 0.9])


def test_non_finite_hessian_raises():
    p = quartic_problem(hessian=lambda x: np.full((2, 2), np.nan))
    geom = DualGeometry.from_problem(p, delta=0.1)
    with pytest.raises(EvaluationError):
        compute_gamma_bound(p, geom)


def test_not_diagonally_dominant():
    p = QuadraticProblem(
        Q=[[1.0, 2.0], [2.0, 5.0]],
        A=[[1.0, 1.0]],
        b=[1.0],
        box_lower=[-1.0, -1.0],
        box_upper=[1.0, 1.0],
        slater_point=[0.0, 0.0],
    )
    geom = DualGeometry.from_problem(p, delta=0.1)
    with pytest.raises(DiagonalDominanceError):
        compute_beta(p, geom)


def test_invalid_slater_point():
    with pytest.raises(InvalidSlaterPointError):
        SeparableLogProblem(
            weights=1.0,
            A=[[1.0, 0.0], [0.0, 1.0]],
            b=[4.0, 6.0],
            box_lower=[0.0, 0.0],
            box_upper=[10.0, 10.0],
            slater_point=[5.0, 0.0],
            f_star_lower=-100.0,
        )


def test_infinite_box_rejected():
    with pytest.raises(DomainError):
        QuadraticProblem(
            Q=[[1.0]],
            A=[[1.0]],
            b=[1.0],
            box_lower=[-np.inf],
            box_upper=[1.0],
            slater_point=[0.0],
        )


SHIPPED = {
    "two_paths": problem_example,
    "coupled": quadratic_example,
    "small_benchmark": lambda: generate_benchmark(seed=0, scale="small")[1],
    "benchmark": lambda: generate_benchmark(seed=0)[1],
    "grouped_benchmark": lambda: generate_benchmark(seed=0)[0].to_problem("grouped"),
}


def sample_points(p, geom, rng, count=100):
    """Random pairs (x, mu) in the interior of X and in M."""
    for _ in range(count):
        u = rng.uniform(0.01, 0.99, p.n)
        x = p.box.lower + u * (p.box.upper - p.box.lower)
        mu = geom.project(rng.uniform(0.0, geom.B, p.m))
        yield x, mu


def central_difference(fun, x, h):
    return np.array([(fun(x + h * e) - fun(x - h * e)) / (2 * h) for e in np.eye(len(x))]).T


@pytest.mark.parametrize("name", ["two_paths", "coupled", "small_benchmark", "benchmark"])
def test_lagrangian_gradients_match_finite_differences(name):
    p = SHIPPED[name]()
    geom = DualGeometry.from_problem(p, delta=0.1)
    rng = np.random.default_rng(0)
    h = 1e-5

    for x, mu in sample_points(p, geom, rng):
        fd_x = central_difference(lambda v: eval_lagrangian(p, geom, v, mu, check=False), x, h)
        fd_mu = central_difference(lambda v: eval_lagrangian(p, geom, x, v, check=False), mu, h)
        assert_allclose(grad_x(p, geom, x, mu, check=False), fd_x, rtol=1e-6, atol=1e-5)
        assert_allclose(grad_mu(p, geom, x, mu, check=False), fd_mu, rtol=1e-6, atol=1e-5)

        assert_allclose(p.gradient(x), central_difference(p.objective, x, h), rtol=1e-6, atol=1e-6)
        assert_allclose(p.jacobian(x), central_difference(p.constraints, x, h), rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("name", ["two_paths", "coupled", "benchmark"])
def test_lagrangian_gradient_is_affine_in_mu(name):
    p = SHIPPED[name]()
    geom = DualGeometry.from_problem(p, delta=0.1)
    rng = np.random.default_rng(1)

    points = list(sample_points(p, geom, rng, count=20))
    for (x, mu), (_, other) in zip(points, points[1:]):
        at_mu = grad_x(p, geom, x, mu, check=False)
        at_other = grad_x(p, geom, x, other, check=False)
        at_zero = grad_x(p, geom, x, np.zeros(p.m))
        assert_allclose(at_mu - at_zero, p.jacobian(x).T @ mu, rtol=1e-10, atol=1e-9)
        for a in (-1.0, 0.3, 2.0):
            mixed = grad_x(p, geom, x, a * mu + (1 - a) * other, check=False)
            assert_allclose(mixed, a * at_mu + (1 - a) * at_other, rtol=1e-10, atol=1e-8)


@pytest.mark.parametrize("name", list(SHIPPED))
def test_hessian_row_sums_bound_the_stepsize(name):
    p = SHIPPED[name]()
    geom = DualGeometry.from_problem(p, delta=0.1)
    beta = compute_beta(p, geom)
    gamma_max = compute_gamma_bound(p, geom)
    assert 0 < gamma_max * beta < 1

    rng = np.random.default_rng(2)
    points = list(sample_points(p, geom, rng))
    points += [(p.box.lower, np.zeros(p.m)), (p.box.upper, np.zeros(p.m))]
    margins, row_sums = [], []
    for x, mu in points:
        H = hessian_x(p, x, mu)
        absH = np.abs(H)
        margins.append(np.min(2 * np.abs(np.diag(H)) - absH.sum(axis=1)))
        row_sums.append(absH.sum(axis=1).max())

    # both bounds are attained at a corner of the box
    assert min(margins) >= beta * (1 - 1e-12)
    assert max(row_sums) <= (1 + 1e-12) / gamma_max
    assert_allclose(min(margins), beta, rtol=1e-12)
    assert_allclose(max(row_sums), 1 / gamma_max, rtol=1e-12)


def test_quadratic_hessian_is_constant(coupled):
    rng = np.random.default_rng(3)
    for _ in range(10):
        assert_allclose(hessian_x(coupled, rng.uniform(-1, 1, 3), rng.uniform(0, 1, 2)), coupled.Q)


def test_domain_checks(two_paths):
    geom = DualGeometry.from_problem(two_paths, delta=0.1)
    with pytest.raises(DomainError):
        eval_lagrangian(two_paths, geom, [11.0, 0.0], [0.0, 0.0])
    with pytest.raises(DomainError):
        grad_x(two_paths, geom, [1.0, 1.0], [-1.0, 0.0])
    with pytest.raises(DomainError):
        grad_mu(two_paths, geom, [1.0, 1.0], [5.0, 0.0])
    # unchecked evaluation accepts any point
    grad_mu(two_paths, geom, [1.0, 1.0], [5.0, 0.0], check=False)


def test_dual_geometry_projection(coupled):
    geom = DualGeometry.from_problem(coupled, delta=0.5)
    assert geom.B == 15.0
    assert_allclose(geom.project([20.0, -1.0]), [15.0, 0.0])
    assert geom.contains(geom.project([30.0, 40.0]))

    single = DualGeometry(0.5, 1.0, [[0, 1]])
    assert_allclose(single.project([1.0, 1.0]), [0.5, 0.5])

    with pytest.raises(DomainError):
        DualGeometry(0.0, 1.0, [[0]])


def test_essential_neighbors(two_paths, coupled):
    assert essential_neighbors(two_paths) == [set(), set()]
    assert essential_neighbors(coupled) == [{1}, {0, 2}, {1}]

    grouped = coupled.with_partitions([[0, 1], [2]], [[0, 1]])
    assert essential_neighbors(grouped) == [{1}, {0}]


def test_with_partitions(coupled):
    p = coupled.with_partitions([[0, 1, 2]], [[0], [1]])
    assert p.N_p == 1
    assert p.N_d == 2
    assert coupled.N_p == 3

    with pytest.raises(DomainError):
        coupled.with_partitions([[0, 1]], [[0], [1]])
    with pytest.raises(DomainError):
        coupled.with_partitions([[0, 1], [1, 2]], [[0], [1]])
    with pytest.raises(DomainError):
        coupled.with_partitions([[2], [0, 1]], [[0], [1]])


def test_tightened(two_paths):
    p = two_paths.tightened(0.5)
    assert_allclose(p.b, [3.5, 5.5])
    assert_allclose(two_paths.b, [4.0, 6.0])

    with pytest.raises(InvalidSlaterPointError):
        two_paths.tightened(5.0)


def test_save_load_json_and_toml(two_paths, coupled):
    tmpdir = tempfile.mkdtemp()
    for p, name in [(two_paths, "problem.json"), (coupled, "problem.toml")]:
        path = os.path.join(tmpdir, name)
        p.save(path)
        loaded = ProblemSpec.load(path)
        assert loaded == p
        assert loaded.primal_partition == p.primal_partition


def test_from_dict_errors(two_paths):
    data = two_paths.to_dict()
    data["objective"] = {"kind": "cubic"}
    with pytest.raises(SchemaError) as excinfo:
        ProblemSpec.from_dict(data, source="problem.json")
    assert "problem.json:objective.kind" in str(excinfo.value)

    data = two_paths.to_dict()
    del data["objective"]
    with pytest.raises(SchemaError) as excinfo:
        ProblemSpec.from_dict(data, source="problem.json")
    assert excinfo.value.location == "problem.json:objective"

    data = two_paths.to_dict()
    data["constraints"]["kind"] = "quadratic"
    with pytest.raises(SchemaError):
        ProblemSpec.from_dict(data)


def test_from_dict_shape_errors(two_paths, coupled):
    data = coupled.to_dict()
    del data["objective"]["Q"]
    with pytest.raises(SchemaError) as excinfo:
        ProblemSpec.from_dict(data, source="problem.json")
    assert excinfo.value.location == "problem.json:objective.Q"

    data = coupled.to_dict()
    data["objective"]["c"] = [1.0, 2.0]
    with pytest.raises(SchemaError) as excinfo:
        ProblemSpec.from_dict(data, source="problem.json")
    assert excinfo.value.location == "problem.json"

    data = two_paths.to_dict()
    data["constraints"]["A"] = [1.0, 0.0, 1.0]
    with pytest.raises(SchemaError) as excinfo:
        ProblemSpec.from_dict(data, source="problem.json")
    assert excinfo.value.location == "problem.json:constraints.A"

    # domain errors keep their type
    data = two_paths.to_dict()
    data["slater_point"] = [5.0, 0.0]
    with pytest.raises(InvalidSlaterPointError):
        ProblemSpec.from_dict(data)


def test_callable_problem_is_not_serializable():
    with pytest.raises(SchemaError):
        quartic_problem().to_dict()


def test_summary(coupled):
    summary = coupled.summary()
    assert summary["type"] == "QuadraticProblem"
    assert summary["n"] == 3
    assert summary["N_d"] == 2
