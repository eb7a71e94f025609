import io

import numpy as np
import pytest
from mdl import harness
from mdl.codec import OutputFormat, write_runs
from mdl.core import brute_force_opt, worst_case_risk
from mdl.errors import ConfigError, InvalidArgumentError
from mdl.harness import (
    RUN_FIELDS,
    Algorithm,
    ExperimentConfig,
    SweepAxis,
    apply_axis,
    grid_minimizer,
    group_dro_baseline,
    lower_bound_sweep,
    pooled_erm_baseline,
    reference_opt,
    rmdl_train,
    run_experiment,
    samples_to_target,
    sweep,
    untrained_gap,
)
from mdl.instances import ConvexFamily, make_convex_gdro, make_imbalanced_logistic, make_lower_bound_family
from mdl.learners import Hedge

RANDOM = {'family': 'random-agnostic', 'class_size': '4', 'n': '3', 'support_size': '3', 'instance_seed': '1'}


def experiment(**entries):
    return ExperimentConfig.from_mapping({**RANDOM, **entries})


@pytest.mark.parametrize('entries, field', [
    ({**RANDOM, 'eps': '2'}, 'eps'),
    ({**RANDOM, 'colour': 'red'}, 'colour'),
    ({**RANDOM, 'n': 'three'}, 'n'),
    ({**RANDOM, 'seeds': ' '}, 'seeds'),
    ({**RANDOM, 'algorithm': 'gdro'}, 'algorithm'),
    ({'class_size': '4'}, 'family'),
    ({'eps': '0.1'}, 'family'),
])
def test_config_errors_name_the_field(entries, field):
    with pytest.raises(ConfigError) as error:
        ExperimentConfig.from_mapping(entries)
    assert error.value.field == field


def test_config_from_file(tmp_path):
    path = tmp_path / 'experiment.env'
    path.write_text('family=coin\ncopies=3\ngap=0.05\nseeds=0,1,2\nalgorithm=batch-erm\n')
    loaded = ExperimentConfig.from_file(path, {'eps': '0.2'})
    assert loaded.instance.copies == 3
    assert loaded.seeds == (0, 1, 2)
    assert loaded.algorithm == Algorithm.BATCH_ERM
    assert loaded.eps == 0.2, 'Overrides should take precedence over the file'
    with pytest.raises(ConfigError) as error:
        ExperimentConfig.from_file(tmp_path / 'missing.env')
    assert error.value.field == 'config'


def test_run_experiment_records_every_seed():
    records = run_experiment(experiment(seeds='0,1,2', rounds='200'))
    assert [r.seed for r in records] == [0, 1, 2], 'Records should come back in seed order'
    assert [r.run_id for r in records] == ['random-agnostic-mdl-s0', 'random-agnostic-mdl-s1',
                                           'random-agnostic-mdl-s2']
    for record in records:
        assert record.samples_used == 400, 'MDL should draw two samples per round'
        assert record.opt_gap is not None and record.opt_gap >= -1e-6
        assert record.wall_ms == 0


def test_run_experiment_is_reproducible():
    outputs = []
    for _ in range(2):
        stream = io.StringIO()
        write_runs(run_experiment(experiment(seeds='3,4', rounds='100', workers='2')), stream,
                   OutputFormat.CSV, RUN_FIELDS)
        outputs.append(stream.getvalue())
    assert outputs[0] == outputs[1], 'Same seeds should give byte-identical output'


def test_batch_erm_samples():
    records = run_experiment(experiment(algorithm='batch-erm', budget='5'))
    assert records[0].samples_used == 15, 'Batch ERM should draw the budget from every distribution'


def test_samples_to_target():
    result = samples_to_target(lambda size, seed: (10 * size, 1 / size), 0.1, seed=0)
    assert result.reached
    assert result.size == 16
    assert result.samples == 160
    missed = samples_to_target(lambda size, seed: (size, 1.0), 0.1, seed=0, limit=4)
    assert not missed.reached
    assert missed.size == 4


def test_samples_to_target_derives_fresh_seeds():
    seeds = []
    samples_to_target(lambda size, seed: (seeds.append(seed) or size, 1.0), 0.1, seed=5, limit=8)
    assert len(set(seeds)) == 4, 'Every trial should get its own seed'


LOWER_BOUND = {'family': 'lower-bound', 'width': '2', 'gap': '0.12', 'eps': '0.2'}


def test_sweep_over_n():
    records = sweep(ExperimentConfig.from_mapping({**LOWER_BOUND, 'seeds': '0,1'}), SweepAxis.N, [2, 4])
    assert len(records) == 4
    assert [r.n for r in records] == [2, 2, 4, 4]
    assert all(r.opt_gap is not None and r.opt_gap <= 0.2 + 1e-6 for r in records)
    assert all(r.samples_used > 2 for r in records), 'One untrained round should never meet the target'


def test_sweep_refuses_instances_solved_before_any_data():
    solved = ExperimentConfig.from_mapping({**LOWER_BOUND, 'gap': '0.05', 'eps': '0.1'})
    for run in (lambda: sweep(solved, SweepAxis.N, [2]), lambda: lower_bound_sweep(solved, [2])):
        with pytest.raises(ConfigError) as error:
            run()
        assert error.value.field == 'eps'


def test_untrained_gap():
    base = make_lower_bound_family(2, 2, 0.12)
    assert untrained_gap(base, brute_force_opt(base).value) == pytest.approx(0.24)
    perturbed = make_lower_bound_family(2, 2, 0.12, variant=(0, 1))
    assert untrained_gap(perturbed, brute_force_opt(perturbed).value) == pytest.approx(0.0, abs=1e-9)


def _medians(records, key):
    groups = {}
    for record in records:
        groups.setdefault(key(record), []).append(record.samples_used)
    return {value: float(np.median(samples)) for value, samples in groups.items()}


def test_samples_to_target_grows_as_eps_shrinks():
    point = ExperimentConfig.from_mapping({**LOWER_BOUND, 'seeds': ','.join(str(s) for s in range(10))})
    medians = _medians(sweep(point, SweepAxis.EPS, [0.2, 0.1, 0.05]), lambda r: r.eps_target)
    assert medians[0.2] <= medians[0.1] <= medians[0.05]
    assert medians[0.05] >= 4 * medians[0.2], 'Quartering the target should cost well over twice the samples'


def test_sweep_needs_values():
    with pytest.raises(ConfigError):
        sweep(experiment(), SweepAxis.N, [])


def test_apply_axis():
    lower_bound = ExperimentConfig.from_mapping({'family': 'lower-bound', 'width': '2'})
    assert apply_axis(lower_bound, SweepAxis.CLASS_SIZE, 8).instance.width == 3
    assert apply_axis(lower_bound, SweepAxis.N, 6).instance.copies == 3
    with pytest.raises(ConfigError):
        apply_axis(lower_bound, SweepAxis.CLASS_SIZE, 6)
    with pytest.raises(ConfigError):
        apply_axis(lower_bound, SweepAxis.N, 5)
    assert apply_axis(lower_bound, SweepAxis.EPS, 0.05).eps == 0.05


def test_reference_opt_falls_back_to_grid():
    assert reference_opt(make_convex_gdro(2, 2, ConvexFamily.LOGISTIC, seed=0)) is not None
    assert reference_opt(make_convex_gdro(3, 2, ConvexFamily.LOGISTIC, seed=0)) is None


def test_reference_opt_refines_the_grid():
    instance = make_convex_gdro(2, 2, ConvexFamily.LOGISTIC, seed=0)
    _, coarse = grid_minimizer(instance)
    opt = reference_opt(instance)
    assert opt <= coarse
    fine = min(worst_case_risk(theta, instance) for theta in instance.hypothesis_space.grid(161))
    assert opt <= fine + 1e-5, 'The refined minimum should match a much finer grid'


def test_gdro_gaps_against_a_grid_reference_are_never_negative():
    logistic = {'family': 'convex', 'convex_family': 'logistic', 'dim': '2', 'n': '2', 'instance_seed': '0'}
    records = run_experiment(ExperimentConfig.from_mapping(
        {**logistic, 'algorithm': 'gdro', 'rounds': '300', 'seeds': '0,1,2,3,4'}))
    assert all(record.opt_gap >= 0.0 for record in records)
    assert all(record.worst_group_risk >= record.opt_gap for record in records)


def test_lower_bound_sweep():
    lower_bound = ExperimentConfig.from_mapping(
        {'family': 'lower-bound', 'width': '1', 'gap': '0.12', 'eps': '0.2', 'seeds': '0,1'})
    records = lower_bound_sweep(lower_bound, [1, 2])
    assert len(records) == 8
    assert {r.algorithm for r in records} == {'mdl', 'batch-erm'}
    assert all(r.run_id.startswith('lower-bound-') for r in records)
    with pytest.raises(ConfigError):
        lower_bound_sweep(experiment(), [1])


def test_lower_bound_sweep_skips_variants_solved_before_any_data(mocker):
    mocker.patch('mdl.harness.lower_bound_variant_sampler',
                 side_effect=lambda width, copies, seed: iter([(0, 1), (1, 0), None]))
    spy = mocker.spy(harness, 'make_lower_bound_family')
    records = lower_bound_sweep(ExperimentConfig.from_mapping({**LOWER_BOUND, 'seeds': '0,1'}), [4])
    assert [call.args[3] for call in spy.call_args_list[1:4]] == [(0, 1), (1, 0), None]
    for record in records:
        assert record.worst_group_risk < 0.5 - 1e-3, 'Runs should use the base variant, whose OPT is 0.26'
    assert all(r.samples_used > 2 for r in records if r.algorithm == 'mdl')


def test_lower_bound_batch_samples_grow_with_n():
    seeds = ','.join(str(s) for s in range(10))
    records = lower_bound_sweep(ExperimentConfig.from_mapping({**LOWER_BOUND, 'seeds': seeds}), [2, 8])
    batch = _medians([r for r in records if r.algorithm == 'batch-erm'], lambda r: r.n)
    assert batch[8] > batch[2], 'Batch ERM pays for every distribution up front'
    assert all(r.samples_used > 2 for r in records if r.algorithm == 'mdl')


def test_rmdl_adversary_updates_every_round(mocker):
    spy = mocker.spy(Hedge, 'update')
    task = make_imbalanced_logistic(train_size=400, validation_size=100, test_size=400, seed=0)
    result = rmdl_train(task, batch_size=16, adversary_batch_size=8, rounds=50, adversary_rate=1.0, seed=0)
    assert spy.call_count == 50
    assert result.adversary_weights.sum() == pytest.approx(1.0)
    assert np.all(result.adversary_weights >= 0)
    assert result.train_samples == 800
    assert result.validation_samples == 800
    assert task.space.contains(result.theta)


def test_rmdl_beats_pooled_erm_on_worst_group():
    task = make_imbalanced_logistic(seed=0)
    wins = 0
    for seed in range(20):
        rmdl = rmdl_train(task, 32, 16, 500, 1.0, seed)
        pooled = pooled_erm_baseline(task, rmdl.samples_used, seed)
        wins += rmdl.worst_group_risk < pooled.worst_group_risk
    assert wins >= 16, 'Reweighting groups should protect the minority'


def test_group_dro_reweights_the_groups_in_each_batch(mocker):
    spy = mocker.spy(Hedge, 'update')
    task = make_imbalanced_logistic(train_size=400, validation_size=100, test_size=400, seed=0)
    result = group_dro_baseline(task, budget=500, seed=0, batch_size=16)
    assert spy.call_count == 32, 'One weight update per minibatch'
    assert result.train_samples == 512
    assert result.validation_samples == 0, 'Group DRO never touches the validation split'
    assert result.adversary_weights.sum() == pytest.approx(1.0)
    assert task.space.contains(result.theta)
    assert result.average_risk == pytest.approx(task.average_risk(result.theta))
    assert result.avg_worst_gap == pytest.approx(result.worst_group_risk - result.average_risk)
    assert result.avg_worst_gap >= 0


def test_group_dro_beats_pooled_erm_on_worst_group():
    task = make_imbalanced_logistic(seed=0)
    wins = 0
    for seed in range(10):
        group_dro = group_dro_baseline(task, 16_000, seed)
        pooled = pooled_erm_baseline(task, 16_000, seed)
        wins += group_dro.worst_group_risk < pooled.worst_group_risk
    assert wins >= 8, 'Loss reweighting should help the minority even without resampling'


def test_rmdl_rejects_empty_groups():
    task = make_imbalanced_logistic(train_size=20, validation_size=20, test_size=20, seed=0)
    task.train.groups[:] = 0
    with pytest.raises(InvalidArgumentError):
        rmdl_train(task, 4, 4, 5, 1.0, seed=0)


def test_run_experiment_rmdl_and_pooled():
    rmdl = ExperimentConfig.from_mapping({'algorithm': 'rmdl', 'rounds': '20'})
    record = run_experiment(rmdl)[0]
    assert record.algorithm == 'rmdl'
    assert record.samples_used == 20 * 32 + 20 * 2 * 16
    assert record.opt_gap is None
    pooled = run_experiment(rmdl.replace(algorithm=Algorithm.POOLED_ERM))[0]
    assert pooled.samples_used == record.samples_used, 'Pooled ERM should get the same budget'
    group_dro = run_experiment(rmdl.replace(algorithm=Algorithm.GROUP_DRO))[0]
    assert group_dro.samples_used == record.samples_used, 'Group DRO should get the same budget'
    for row in (record, pooled, group_dro):
        assert row.avg_worst_gap == pytest.approx(row.worst_group_risk - row.avg_risk)

