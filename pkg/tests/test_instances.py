from collections import Counter

import numpy as np
import pytest
from mdl.config import config
from mdl.core import brute_force_opt, is_eps_optimal, worst_case_risk
from mdl.errors import InvalidArgumentError, ResourceLimitError
from mdl.instances import (
    ConvexFamily,
    InstanceFamily,
    InstanceSpec,
    lower_bound_variant_sampler,
    make_coin_instance,
    make_convex_gdro,
    make_imbalanced_logistic,
    make_lower_bound_family,
    make_matrix_instance,
    make_random_agnostic,
    make_realizable,
)


def test_lower_bound_probabilities():
    instance = make_lower_bound_family(2, 1, 0.1)
    for distribution in instance.distributions:
        assert distribution.probabilities == pytest.approx([0.3, 0.7])
    assert len(instance.hypothesis_space) == 4, 'The class should hold every labelling of the features'


def test_lower_bound_variant_risks():
    instance = make_lower_bound_family(1, 2, 0.1, variant=(0, 1))
    assert instance.distributions[1].probabilities == pytest.approx([0.9, 0.1])
    assert instance.risks(1) == pytest.approx([0.3, 0.9]), 'Predicting -1 should pay for the perturbed copy'
    assert instance.risks(0) == pytest.approx([0.7, 0.1])


def test_lower_bound_base_opt():
    instance = make_lower_bound_family(2, 1, 0.1)
    assert brute_force_opt(instance).value == pytest.approx(0.3)


def test_lower_bound_rejects_bad_arguments(mocker):
    with pytest.raises(InvalidArgumentError):
        make_lower_bound_family(2, 1, 0.2)
    with pytest.raises(InvalidArgumentError):
        make_lower_bound_family(2, 1, 0.1, variant=(2, 0))
    mocker.patch.object(config, 'max_feature_bits', 2)
    with pytest.raises(ResourceLimitError):
        make_lower_bound_family(3, 1, 0.1)


def test_variant_sampler_frequencies():
    sampler = lower_bound_variant_sampler(2, 2, seed=0)
    counts = Counter(next(sampler) for _ in range(8000))
    assert counts[None] / 8000 == pytest.approx(0.5, abs=0.03), 'The base instance should come up half the time'
    for variant in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        assert counts[variant] / 8000 == pytest.approx(0.125, abs=0.02)
    assert len(counts) == 5


def test_coin_instances():
    null = make_coin_instance(4, 0.1)
    for distribution in null.distributions:
        assert distribution.probabilities[0] == pytest.approx(0.7), 'Tails should be label +1'
    alternative = make_coin_instance(4, 0.1, hypothesis=3)
    assert alternative.distributions[3].probabilities[0] == pytest.approx(0.1)
    assert alternative.distributions[0].probabilities[0] == pytest.approx(0.7)
    with pytest.raises(InvalidArgumentError):
        make_coin_instance(4, 0.1, hypothesis=4)


def test_coin_null_solution_predicts_tails():
    instance = make_coin_instance(3, 0.1)
    opt = brute_force_opt(instance).value
    assert opt == pytest.approx(0.3)
    assert is_eps_optimal(worst_case_risk(0, instance) - opt, 0.1)
    assert not is_eps_optimal(worst_case_risk(1, instance) - opt, 0.1), 'Predicting heads should be far from optimal'


def test_random_agnostic_is_deterministic():
    first = make_random_agnostic(class_size=6, n=3, support_size=4, seed=12)
    second = make_random_agnostic(class_size=6, n=3, support_size=4, seed=12)
    assert first.hypothesis_space.labels.tolist() == second.hypothesis_space.labels.tolist()
    for a, b in zip(first.distributions, second.distributions):
        assert a.probabilities.tolist() == b.probabilities.tolist()
    assert brute_force_opt(first).value == brute_force_opt(second).value
    other = make_random_agnostic(class_size=6, n=3, support_size=4, seed=13)
    assert other.risk_matrix().tolist() != first.risk_matrix().tolist(), 'Different seeds should differ'


def test_random_agnostic_limits(mocker):
    with pytest.raises(InvalidArgumentError):
        make_random_agnostic(class_size=17, n=2, support_size=4, seed=0)
    mocker.patch.object(config, 'max_matrix_entries', 10)
    with pytest.raises(ResourceLimitError):
        make_random_agnostic(class_size=4, n=2, support_size=4, seed=0)


def test_realizable_target_has_zero_risk():
    instance = make_realizable(class_size=8, n=3, support_size=5, seed=2)
    assert worst_case_risk(instance.metadata['target'], instance) == 0.0
    assert brute_force_opt(instance).value == pytest.approx(0.0, abs=1e-9)


def test_bilinear_single_distribution_opt():
    instance = make_convex_gdro(3, 1, ConvexFamily.BILINEAR, seed=0)
    distribution = instance.distributions[0]
    mean = sum(p * z.vector for z, p in zip(distribution.support, distribution.probabilities))
    assert brute_force_opt(instance).value == pytest.approx((mean.min() + 1.0) / 2), \
        'The best mixture should be the cheapest vertex'


@pytest.mark.parametrize('family', [ConvexFamily.BILINEAR, ConvexFamily.LOGISTIC])
def test_convex_gradients_are_bounded(family):
    instance = make_convex_gdro(3, 2, family, seed=1)
    loss = instance.losses[0]
    rng = np.random.default_rng(0)
    for theta in [instance.hypothesis_space.project(rng.normal(size=3) * 3) for _ in range(20)]:
        for distribution in instance.distributions:
            for z in distribution.support:
                assert np.linalg.norm(loss.gradient(theta, z), loss.norm_ord) <= loss.bound + 1e-12
                assert 0.0 <= loss.value(theta, z) <= 1.0 + 1e-12


def test_convex_rejects_bad_arguments():
    with pytest.raises(InvalidArgumentError):
        make_convex_gdro(1, 2, ConvexFamily.BILINEAR, seed=0)
    with pytest.raises(InvalidArgumentError):
        make_convex_gdro(2, 2, 'quadratic', seed=0)


def test_imbalanced_logistic():
    task = make_imbalanced_logistic(seed=0)
    assert task.train.group_sizes(2).tolist() == [1818, 182], 'The minority should be a tenth of the majority'
    assert len(task.validation) == 400
    risks = task.group_risks(np.array([2.0, 0.0]))
    assert risks[0] < risks[1], 'A majority-only model should do worse on the minority'
    assert task.worst_group_risk(np.array([2.0, 0.0])) == pytest.approx(risks[1])
    with pytest.raises(InvalidArgumentError):
        task.split('holdout')


def test_instance_spec():
    spec = InstanceSpec(InstanceFamily.LOWER_BOUND, width=3, copies=2, gap=0.05, variant=(1, 0))
    instance = spec.build()
    assert instance.n == spec.distributions == 6
    assert spec.size == 8
    assert instance.metadata['variant'] == (1, 0)
    entries = spec.to_config()
    assert entries['family'] == 'lower-bound'
    assert entries['variant'] == '1,0'
    with pytest.raises(InvalidArgumentError):
        InstanceSpec(InstanceFamily.COIN, variant=(1, 0)).build()


def test_matrix_instance():
    matrix = [[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]
    instance = make_matrix_instance(matrix)
    assert instance.risk_matrix().tolist() == matrix
    assert instance.n == 2
    with pytest.raises(InvalidArgumentError):
        make_matrix_instance([])
