import numpy as np
import pytest
from mdl.core import (
    DataDistribution,
    Datapoint,
    EntropySimplex,
    EuclideanBall,
    EuclideanBox,
    SimplexWeights,
    TableLoss,
    brute_force_opt,
    exact_risk,
    is_eps_optimal,
    monte_carlo_risk,
    optimality_gap,
    worst_case_risk,
)
from mdl.errors import InvalidArgumentError, ResourceLimitError, UnsupportedError, UnsupportedEvaluationError
from mdl.instances import ConvexFamily, make_convex_gdro, make_matrix_instance, make_random_agnostic


def two_point_distribution():
    domain = [Datapoint(index=0), Datapoint(index=1)]
    return DataDistribution(domain, [0.5, 0.5], name='D')


def test_simplex_weights_validation():
    with pytest.raises(InvalidArgumentError):
        SimplexWeights(np.array([0.5, 0.6]))
    with pytest.raises(InvalidArgumentError):
        SimplexWeights(np.array([1.5, -0.5]))
    weights = SimplexWeights.normalized([2.0, 2.0])
    assert weights.weights.tolist() == [0.5, 0.5], 'Masses should be normalized'


def test_draw_counter():
    distribution = two_point_distribution()
    rng = np.random.default_rng(0)
    distribution.sample(rng)
    distribution.sample_many(rng, 9)
    assert distribution.draws == 10, 'Every delivered sample should be counted'
    distribution.reset()
    assert distribution.draws == 0


def test_exact_risk_examples():
    distribution = two_point_distribution()
    assert exact_risk(0, distribution, TableLoss([[0.0, 0.0]])) == 0.0, 'Zero loss should have zero risk'
    assert exact_risk(0, distribution, TableLoss([[0.0, 1.0]])) == pytest.approx(0.5)
    mixed = TableLoss([[0.3, 0.3], [0.7, 0.7]])
    risk = exact_risk(SimplexWeights(np.array([0.6, 0.4])), distribution, mixed)
    assert risk == pytest.approx(0.46), 'Randomized risk should be the weighted average'


def test_exact_risk_needs_finite_support():
    sampler_only = DataDistribution(sampler=lambda rng: Datapoint(index=0))
    with pytest.raises(UnsupportedEvaluationError):
        exact_risk(0, sampler_only, TableLoss([[0.5]]))


def test_monte_carlo_risk():
    instance = make_random_agnostic(class_size=4, n=1, support_size=4, seed=3)
    distribution, loss = instance.distributions[0], instance.losses[0]
    estimate = monte_carlo_risk(1, distribution, loss, samples=100_000, seed=11)
    assert estimate == pytest.approx(exact_risk(1, distribution, loss), abs=0.01)
    assert monte_carlo_risk(1, distribution, loss, 500, seed=4) == monte_carlo_risk(1, distribution, loss, 500, seed=4)
    constant = TableLoss([[0.5] * len(instance.domain)])
    assert monte_carlo_risk(0, distribution, constant, 50, seed=0) == pytest.approx(0.5)


def test_monte_carlo_risk_is_unbiased_across_seeds():
    instance = make_random_agnostic(class_size=3, n=1, support_size=5, seed=8)
    distribution, loss = instance.distributions[0], instance.losses[0]
    estimates = np.array([monte_carlo_risk(2, distribution, loss, 100, seed=seed) for seed in range(200)])
    error = estimates.std(ddof=1) / np.sqrt(len(estimates))
    assert abs(estimates.mean() - exact_risk(2, distribution, loss)) <= 4 * error + 1e-12


def test_worst_case_risk():
    instance = make_matrix_instance([[0.2, 0.5, 0.3]])
    assert worst_case_risk(0, instance) == pytest.approx(0.5), 'Worst case should be the maximum'
    single = make_matrix_instance([[0.4]])
    assert worst_case_risk(0, single) == exact_risk(0, single.distributions[0], single.losses[0])


def test_brute_force_opt_symmetric_game():
    instance = make_matrix_instance([[0.0, 1.0], [1.0, 0.0]])
    certificate = brute_force_opt(instance)
    assert certificate.value == pytest.approx(0.5)
    assert certificate.weights.weights == pytest.approx([0.5, 0.5])
    uniform = SimplexWeights.uniform(2)
    assert optimality_gap(uniform, instance, certificate) == pytest.approx(0.0, abs=1e-9)


def test_brute_force_opt_singleton_class():
    instance = make_matrix_instance([[0.3, 0.8, 0.1]])
    assert brute_force_opt(instance).value == pytest.approx(worst_case_risk(0, instance))


def test_brute_force_opt_matches_grid_search():
    matrix = np.random.default_rng(7).random((5, 3))
    instance = make_matrix_instance(matrix)
    grid = EntropySimplex(5).grid(40)
    grid_value = np.min(np.max(grid @ matrix, axis=1))
    certificate = brute_force_opt(instance)
    assert certificate.value <= grid_value + 1e-9, 'The LP should be at least as good as any grid point'
    assert certificate.value == pytest.approx(grid_value, abs=0.05)
    assert certificate.duality_gap <= 1e-6, 'Both players of the certificate should be optimal'
    assert optimality_gap(certificate.weights, instance, certificate) <= 1e-6


def test_brute_force_opt_limits():
    instance = make_matrix_instance(np.full((3, 3), 0.5))
    with pytest.raises(ResourceLimitError):
        brute_force_opt(instance, max_entries=4)
    logistic = make_convex_gdro(2, 2, ConvexFamily.LOGISTIC, seed=0)
    with pytest.raises(UnsupportedError):
        brute_force_opt(logistic)


def test_brute_force_opt_on_linear_simplex():
    instance = make_convex_gdro(3, 2, ConvexFamily.BILINEAR, seed=1)
    assert instance.linear_simplex, 'Bilinear instances should be linear over the simplex'
    certificate = brute_force_opt(instance)
    theta = certificate.weights.weights
    assert worst_case_risk(theta, instance) == pytest.approx(certificate.value, abs=1e-6)
    grid_best = min(worst_case_risk(u, instance) for u in instance.hypothesis_space.grid(10))
    assert certificate.value <= grid_best + 1e-9


def test_is_eps_optimal():
    assert is_eps_optimal(0.1, 0.1)
    assert is_eps_optimal(0.1 + 1e-9, 0.1), 'Round-off above eps should be tolerated'
    assert not is_eps_optimal(0.11, 0.1)


def test_copy_is_independent():
    instance = make_matrix_instance([[0.2, 0.4]])
    instance.distributions[0].sample(np.random.default_rng(0))
    duplicate = instance.copy()
    assert duplicate.draws().tolist() == [0, 0], 'Copies should start with zero draws'
    duplicate.distributions[1].sample(np.random.default_rng(0))
    assert instance.draws().tolist() == [1, 0], 'Sampling a copy should not touch the original'


def test_euclidean_spaces():
    ball = EuclideanBall(2, radius=1.0)
    assert ball.project(np.array([3.0, 4.0])) == pytest.approx([0.6, 0.8])
    assert ball.bregman_radius == pytest.approx(0.5)
    box = EuclideanBox(2)
    theta = np.array([0.1, -0.2])
    assert box.mirror_step(theta, np.array([0.05, 0.05])) == pytest.approx([0.05, -0.25])
    assert box.contains(theta)


def test_entropy_simplex():
    simplex = EntropySimplex(4)
    assert simplex.bregman_radius == pytest.approx(np.log(4))
    rng = np.random.default_rng(2)
    for u in rng.dirichlet(np.ones(4), size=50):
        assert simplex.bregman(simplex.center, u) <= np.log(4) + 1e-12, 'KL to the center is at most log k'
    vertex = np.array([1.0, 0.0, 0.0, 0.0])
    assert simplex.bregman(simplex.center, vertex) == pytest.approx(np.log(4))
    step = np.array([0.3, 0.0, -0.2, 0.1])
    expected = simplex.center * np.exp(-step)
    assert simplex.mirror_step(simplex.center, step) == pytest.approx(expected / expected.sum())
