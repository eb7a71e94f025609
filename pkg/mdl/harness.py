"""Experiments: seeded runs, sample-complexity sweeps, baselines and resampling MDL.

An ExperimentConfig names an instance (a generator recipe or an instance
file), an algorithm and a list of seeds. Every seed becomes one RunRecord;
seeds fan out over worker threads and each run owns a copy of the instance,
so draw counters never mix between runs.
"""
import dataclasses
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
from dotenv import dotenv_values
from scipy.optimize import minimize

from mdl.codec import OutputFormat, load_instance, record_fields
from mdl.config import config
from mdl.core import (
    OPTIMALITY_SLACK,
    MDLInstance,
    SimplexWeights,
    brute_force_opt,
    is_eps_optimal,
    worst_case_risk,
)
from mdl.dynamics import SeedStreams, SolveResult, budget_rounds, mdl_solve
from mdl.errors import ConfigError, InvalidArgumentError, ResourceLimitError, UnsupportedError
from mdl.instances import (
    ConvexFamily,
    InstanceFamily,
    InstanceSpec,
    SplitTask,
    lower_bound_variant_sampler,
    make_imbalanced_logistic,
    make_lower_bound_family,
)
from mdl.learners import Hedge
from mdl.reductions import empirical_instance, gdro_run

logger = logging.getLogger(__name__)

GRID_RESOLUTION = 41
DEFAULT_RMDL_ROUNDS = 500


class Algorithm(Enum):
    MDL = 'mdl'
    GDRO = 'gdro'
    GROUP_DRO = 'group-dro'
    RMDL = 'rmdl'
    BATCH_ERM = 'batch-erm'
    POOLED_ERM = 'pooled-erm'


# Algorithms that train on the imbalanced SplitTask instead of an MDLInstance.
RESAMPLING = (Algorithm.RMDL, Algorithm.GROUP_DRO, Algorithm.POOLED_ERM)


class SweepAxis(Enum):
    N = 'n'
    EPS = 'eps'
    CLASS_SIZE = 'class-size'


@dataclass(frozen=True)
class RunRecord:
    """One row of experiment output.

    Attributes:
        run_id: A label unique within one invocation.
        algorithm: The algorithm id.
        n: The number of distributions (groups for resampling runs).
        size: The class size, or the dimension of a parameter space.
        eps_target: The accuracy the run aimed for.
        samples_used: The total number of draws, summed over distributions.
        opt_gap: Worst-case risk minus OPT; None when OPT is unavailable.
        worst_group_risk: The output's worst-case risk; None when not computable.
        wall_ms: Wall time in milliseconds, 0 unless timing is enabled.
        seed: The run's master seed.
        avg_risk: The output's mean risk over all (distribution, loss) pairs, or
            its loss on the pooled test split for resampling runs.
        avg_worst_gap: worst_group_risk minus avg_risk.
    """
    run_id: str
    algorithm: str
    n: int
    size: int
    eps_target: float
    samples_used: int
    opt_gap: float | None
    worst_group_risk: float | None
    wall_ms: int
    seed: int
    avg_risk: float | None = None
    avg_worst_gap: float | None = None


RUN_FIELDS = record_fields(RunRecord)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(value) for value in text.split(',') if value.strip())


def _numbers(text: str) -> tuple[float, ...]:
    return tuple(float(value) for value in text.split(',') if value.strip())


def _flag(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f'not a boolean: {text!r}')


_INSTANCE_KEYS = {
    'family': ('family', InstanceFamily),
    'class_size': ('class_size', int),
    'n': ('n', int),
    'support_size': ('support_size', int),
    'dim': ('dim', int),
    'width': ('width', int),
    'copies': ('copies', int),
    'gap': ('gap', float),
    'variant': ('variant', _ints),
    'convex_family': ('convex_family', ConvexFamily),
    'instance_seed': ('seed', int),
}

_RUN_KEYS = {
    'instance': ('instance_path', str),
    'algorithm': ('algorithm', Algorithm),
    'eps': ('eps', float),
    'delta': ('delta', float),
    't_scale': ('t_scale', float),
    'seeds': ('seeds', _ints),
    'out': ('out', str),
    'format': ('format', OutputFormat),
    'rounds': ('rounds', int),
    'budget': ('budget', int),
    'batch_size': ('batch_size', int),
    'adversary_batch_size': ('adversary_batch_size', int),
    'adversary_rate': ('adversary_rate', float),
    'learning_rate': ('learning_rate', float),
    'validation_size': ('validation_size', int),
    'steps_per_round': ('steps_per_round', int),
    'timing': ('timing', _flag),
    'workers': ('workers', int),
    'axis': ('axis', SweepAxis),
    'values': ('values', _numbers),
    'transcript': ('transcript', str),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a batch of runs.

    Config files are flat KEY=value documents whose keys are the field names
    (`instance` for the instance file, `instance_seed` for the instance's own
    seed, and the InstanceSpec fields for generated instances).
    """
    instance: InstanceSpec | None = None
    instance_path: str | None = None
    algorithm: Algorithm = Algorithm.MDL
    eps: float = 0.1
    delta: float = 0.1
    t_scale: float = 1.0
    seeds: tuple[int, ...] = (0,)
    out: str = '-'
    format: OutputFormat = OutputFormat.CSV
    rounds: int | None = None
    budget: int | None = None
    batch_size: int = 32
    adversary_batch_size: int = 16
    adversary_rate: float = 1.0
    learning_rate: float = 1.0
    validation_size: int = 400
    steps_per_round: int = 1
    timing: bool = False
    workers: int | None = None
    axis: SweepAxis = SweepAxis.N
    values: tuple[float, ...] = ()
    transcript: str | None = None

    @classmethod
    def from_mapping(cls, entries: dict[str, str | None]) -> 'ExperimentConfig':
        """Parses string entries.

        Raises:
            ConfigError: On unknown keys or unparsable values, naming the key.
        """
        instance_fields = {}
        run_fields = {}
        for raw_key, raw in entries.items():
            key = raw_key.strip().lower().replace('-', '_')
            if key in _INSTANCE_KEYS:
                (name, parse), target = _INSTANCE_KEYS[key], instance_fields
            elif key in _RUN_KEYS:
                (name, parse), target = _RUN_KEYS[key], run_fields
            else:
                raise ConfigError(key, f'Unknown setting {raw_key!r}.')
            if raw is None or not raw.strip():
                raise ConfigError(key, f'Setting {key} has no value.')
            try:
                target[name] = parse(raw.strip())
            except ValueError as e:
                raise ConfigError(key, f'Cannot parse {key}={raw!r}: {e}') from None
        if instance_fields:
            if 'family' not in instance_fields:
                raise ConfigError('family', 'Instance settings need a family.')
            run_fields['instance'] = InstanceSpec(**instance_fields)
        experiment = cls(**run_fields)
        experiment.validate()
        return experiment

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict[str, str] | None = None) -> 'ExperimentConfig':
        """Reads a KEY=value file; `overrides` (e.g. command line flags) take precedence."""
        if not Path(path).is_file():
            raise ConfigError('config', f'Config file {path} does not exist.')
        entries = dict(dotenv_values(path))
        entries.update(overrides or {})
        return cls.from_mapping(entries)

    def validate(self):
        if not self.seeds:
            raise ConfigError('seeds', 'At least one seed is required.')
        for name in ('eps', 'delta'):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(name, f'{name} must lie in (0, 1), got {getattr(self, name)}.')
        for name in ('t_scale', 'adversary_rate', 'learning_rate'):
            if not getattr(self, name) > 0:
                raise ConfigError(name, f'{name} must be positive.')
        for name in ('rounds', 'budget', 'workers', 'batch_size', 'adversary_batch_size',
                     'validation_size', 'steps_per_round'):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(name, f'{name} must be at least 1, got {value}.')
        if self.algorithm in RESAMPLING:
            return
        if self.instance is None and self.instance_path is None:
            raise ConfigError('family', 'An instance family or instance file is required.')
        if (self.algorithm == Algorithm.GDRO and self.instance is not None
                and self.instance.family != InstanceFamily.CONVEX):
            raise ConfigError('algorithm', 'gdro needs a convex instance.')
        if self.instance is not None:
            try:
                self.instance.validate()
            except InvalidArgumentError as e:
                raise ConfigError('family', str(e)) from None

    def replace(self, **changes) -> 'ExperimentConfig':
        return dataclasses.replace(self, **changes)

    def load_instance(self) -> MDLInstance:
        if self.instance_path is not None:
            return load_instance(self.instance_path)
        return self.instance.build()

    @property
    def label(self) -> str:
        if self.instance is not None:
            return self.instance.family.value
        return Path(self.instance_path).stem if self.instance_path else 'task'


def hypothesis_size(instance: MDLInstance) -> int:
    return instance.hypothesis_space.size if instance.finite_class else instance.hypothesis_space.dimension


def grid_minimizer(instance: MDLInstance, resolution: int = GRID_RESOLUTION) -> tuple[np.ndarray, float]:
    """Returns the grid point of the parameter space with the lowest worst-case risk, and that risk."""
    best, best_value = None, math.inf
    for theta in instance.hypothesis_space.grid(resolution):
        value = worst_case_risk(theta, instance)
        if value < best_value:
            best, best_value = theta, value
    return best, best_value


def refined_minimizer(instance: MDLInstance, resolution: int = GRID_RESOLUTION,
                      restarts: int = 3) -> tuple[np.ndarray, float]:
    """Polishes the grid minimizer with Nelder-Mead on the projected worst-case risk.

    Nelder-Mead can stall on the kinks of a maximum, so each restart builds a
    fresh simplex around the best point so far. The result is never worse than
    the grid point it starts from.
    """
    space = instance.hypothesis_space
    best, best_value = grid_minimizer(instance, resolution)
    for _ in range(restarts):
        result = minimize(lambda u: worst_case_risk(space.project(u), instance), best, method='Nelder-Mead',
                          options={'xatol': 1e-10, 'fatol': 1e-12, 'maxiter': 4000})
        theta = space.project(result.x)
        value = worst_case_risk(theta, instance)
        if not value < best_value - 1e-14:
            break
        best, best_value = theta, value
    return best, best_value


def reference_opt(instance: MDLInstance) -> float | None:
    """Returns OPT by linear programming, or by a refined grid search on parameter spaces of dimension <= 2.

    None when neither applies. The grid value is an upper bound on OPT, so
    gaps measured against it are clamped at zero.
    """
    try:
        return brute_force_opt(instance).value
    except (UnsupportedError, ResourceLimitError) as e:
        logger.debug('No LP certificate for %s: %s', instance.name, e)
    space = instance.hypothesis_space
    if not instance.finite_class and space.dimension <= 2 and all(d.finite for d in instance.distributions):
        return refined_minimizer(instance)[1]
    logger.info('OPT unavailable for %s; gaps will be left empty', instance.name or 'instance')
    return None


def _clamped_gap(gap: float) -> float:
    if gap < -OPTIMALITY_SLACK:
        logger.debug('Clamping gap %.3g: the OPT reference was approximate', gap)
    return max(gap, 0.0)


def _evaluate(h, instance: MDLInstance, opt: float | None) -> tuple[float | None, float | None, float | None]:
    """Returns (gap, worst-case risk, mean risk) of h; all None when h cannot be evaluated exactly."""
    try:
        risks = instance.risks(h)
    except UnsupportedError:
        return None, None, None
    worst = float(risks.max())
    return (_clamped_gap(worst - opt) if opt is not None else None), worst, float(risks.mean())


def _hypothesis(result: SolveResult, instance: MDLInstance):
    return result.learner_weights() if instance.finite_class else result.avg_min_action


@dataclass(frozen=True, eq=False)
class BaselineResult:
    """A baseline's output: a hypothesis (SimplexWeights or parameters) and the samples it drew."""
    hypothesis: object
    samples_used: int


def batch_erm_baseline(instance: MDLInstance, budget: int, seed: int) -> BaselineResult:
    """Draws `budget` samples from every distribution up front and minimizes the empirical worst-group risk.

    Finite classes and linear simplex instances are minimized exactly over
    randomized hypotheses by linear programming, other parameter spaces by a
    refined grid search.
    """
    if budget < 1:
        raise InvalidArgumentError(f'The per-distribution budget must be positive, got {budget}.')
    rng = np.random.default_rng(seed)
    batches = [distribution.sample_many(rng, budget) for distribution in instance.distributions]
    empirical = empirical_instance(instance, batches)
    if empirical.finite_class or empirical.linear_simplex:
        certificate = brute_force_opt(empirical)
        hypothesis = certificate.weights if empirical.finite_class else certificate.weights.weights
    elif empirical.hypothesis_space.dimension <= 2:
        hypothesis, _ = refined_minimizer(empirical)
    else:
        raise UnsupportedError('Batch ERM over a nonlinear parameter space is limited to dimension 2.')
    return BaselineResult(hypothesis, instance.n * budget)


@dataclass(frozen=True)
class TargetResult:
    """The outcome of a doubling search.

    Attributes:
        samples: Samples used by the last trial.
        size: The rounds (or per-distribution budget) of the last trial.
        gap: The optimality gap of the last trial.
        reached: Whether the last trial met the target.
    """
    samples: int
    size: int
    gap: float
    reached: bool


def untrained_gap(instance: MDLInstance, opt: float) -> float:
    """Returns the gap of the play before any data: uniform weights over a finite class, or the center of a space."""
    if instance.finite_class:
        start = SimplexWeights.uniform(instance.hypothesis_space.size)
    else:
        start = instance.hypothesis_space.center
    return worst_case_risk(start, instance) - opt


def _check_informative(instance: MDLInstance, opt: float, eps: float):
    gap = untrained_gap(instance, opt)
    if is_eps_optimal(gap, eps):
        raise ConfigError('eps', f'The untrained start on {instance.name or "the instance"} is already '
                                 f'{eps:g}-optimal (gap {gap:.3g}), so there is no sample complexity to measure.')


def samples_to_target(trial: Callable[[int, int], tuple[int, float]], eps: float, seed: int,
                      start: int = 1, limit: int | None = None) -> TargetResult:
    """Doubles the trial size until a trial's gap is at most eps.

    Sweeps only search instances whose untrained start misses the target, so
    a one-round MDL trial cannot count as reached.

    Args:
        trial: Maps (size, seed) to (samples used, optimality gap).
        eps: The target gap.
        seed: The master seed; every size gets a fresh seed derived from it.
        start: The first size tried.
        limit: The largest size tried; MDL_MAX_ROUNDS by default.
    """
    limit = limit or config.max_rounds
    size, attempt = start, 0
    samples, gap = 0, math.inf
    while size <= limit:
        trial_seed = int(np.random.SeedSequence([seed, attempt]).generate_state(1)[0])
        samples, gap = trial(size, trial_seed)
        logger.debug('Trial size=%d seed=%d: samples=%d gap=%.4g', size, trial_seed, samples, gap)
        if is_eps_optimal(gap, eps):
            return TargetResult(samples, size, gap, True)
        size *= 2
        attempt += 1
    logger.info('Target %.3g not reached below size %d (last gap %.4g)', eps, limit, gap)
    return TargetResult(samples, size // 2, gap, False)


def _trial(algorithm: Algorithm, base: MDLInstance, opt: float) -> Callable[[int, int], tuple[int, float]]:
    def mdl_trial(rounds: int, seed: int) -> tuple[int, float]:
        instance = base.copy()
        result = mdl_solve(instance, rounds, seed)
        return int(instance.draws().sum()), worst_case_risk(_hypothesis(result, instance), instance) - opt

    def batch_trial(budget: int, seed: int) -> tuple[int, float]:
        instance = base.copy()
        baseline = batch_erm_baseline(instance, budget, seed)
        return baseline.samples_used, worst_case_risk(baseline.hypothesis, instance) - opt

    match algorithm:
        case Algorithm.MDL | Algorithm.GDRO:
            return mdl_trial
        case Algorithm.BATCH_ERM:
            return batch_trial
    raise ConfigError('algorithm', f'{algorithm.value} does not support sample-complexity searches.')


def _elapsed_ms(start: float, timing: bool) -> int:
    return round((time.perf_counter() - start) * 1000) if timing else 0


def run_once(experiment: ExperimentConfig, base: MDLInstance, seed: int, opt: float | None) -> RunRecord:
    """Runs one seed on a private copy of the instance."""
    start = time.perf_counter()
    instance = base.copy()
    rounds = experiment.rounds or budget_rounds(instance, experiment.eps, experiment.delta, experiment.t_scale)
    match experiment.algorithm:
        case Algorithm.MDL:
            h = _hypothesis(mdl_solve(instance, rounds, seed), instance)
        case Algorithm.GDRO:
            h = gdro_run(instance, experiment.eps, experiment.delta, seed, experiment.t_scale,
                         experiment.rounds).avg_min_action
        case Algorithm.BATCH_ERM:
            budget = experiment.budget or math.ceil(2 * rounds / instance.n)
            h = batch_erm_baseline(instance, budget, seed).hypothesis
        case _:
            raise ConfigError('algorithm', f'{experiment.algorithm.value} does not run on MDL instances.')
    gap, worst, average = _evaluate(h, instance, opt)
    return RunRecord(
        run_id=f'{experiment.label}-{experiment.algorithm.value}-s{seed}',
        algorithm=experiment.algorithm.value,
        n=instance.n,
        size=hypothesis_size(instance),
        eps_target=experiment.eps,
        samples_used=int(instance.draws().sum()),
        opt_gap=gap,
        worst_group_risk=worst,
        wall_ms=_elapsed_ms(start, experiment.timing),
        seed=seed,
        avg_risk=average,
        avg_worst_gap=worst - average if worst is not None else None)


def _fan_out(experiment: ExperimentConfig, job: Callable[[int], RunRecord], seeds) -> list[RunRecord]:
    with ThreadPoolExecutor(max_workers=experiment.workers or config.workers) as pool:
        return list(pool.map(job, seeds))


def run_experiment(experiment: ExperimentConfig, instance: MDLInstance | None = None) -> list[RunRecord]:
    """Runs every seed of an experiment; records come back in seed order.

    Raises:
        ConfigError: If the configuration is invalid.
    """
    experiment.validate()
    if experiment.algorithm in RESAMPLING:
        task = split_task(experiment)
        return _fan_out(experiment, lambda seed: resampling_run(experiment, task, seed), experiment.seeds)
    base = instance or experiment.load_instance()
    opt = reference_opt(base)
    logger.info('Running %s on %s with %d seeds', experiment.algorithm.value, base.name or 'instance',
                len(experiment.seeds))
    return _fan_out(experiment, lambda seed: run_once(experiment, base, seed, opt), experiment.seeds)


def _integral(value: float, field: str) -> int:
    if value != int(value) or value < 1:
        raise ConfigError(field, f'Expected a positive integer, got {value}.')
    return int(value)


def apply_axis(experiment: ExperimentConfig, axis: SweepAxis, value: float) -> ExperimentConfig:
    """Returns the experiment with one sweep coordinate set."""
    if axis == SweepAxis.EPS:
        return experiment.replace(eps=value)
    spec = experiment.instance
    if spec is None:
        raise ConfigError('axis', f'Sweeping {axis.value} needs a generated instance.')
    count = _integral(value, 'values')
    match axis, spec.family:
        case SweepAxis.N, InstanceFamily.LOWER_BOUND:
            if count % spec.width:
                raise ConfigError('values', f'n={count} is not a multiple of width {spec.width}.')
            spec = dataclasses.replace(spec, copies=count // spec.width)
        case SweepAxis.N, InstanceFamily.COIN:
            spec = dataclasses.replace(spec, copies=count)
        case SweepAxis.N, _:
            spec = dataclasses.replace(spec, n=count)
        case SweepAxis.CLASS_SIZE, InstanceFamily.LOWER_BOUND:
            width = count.bit_length() - 1
            if 2 ** width != count:
                raise ConfigError('values', f'Lower-bound classes have 2^w hypotheses, got {count}.')
            spec = dataclasses.replace(spec, width=width)
        case SweepAxis.CLASS_SIZE, InstanceFamily.CONVEX:
            spec = dataclasses.replace(spec, dim=count)
        case SweepAxis.CLASS_SIZE, InstanceFamily.COIN:
            raise ConfigError('axis', 'The coin family has a fixed class.')
        case SweepAxis.CLASS_SIZE, _:
            spec = dataclasses.replace(spec, class_size=count)
    return experiment.replace(instance=spec)


def _target_record(run_id: str, algorithm: Algorithm, instance: MDLInstance, eps: float, target: TargetResult,
                   opt: float, start: float, timing: bool, seed: int) -> RunRecord:
    return RunRecord(
        run_id=run_id,
        algorithm=algorithm.value,
        n=instance.n,
        size=hypothesis_size(instance),
        eps_target=eps,
        samples_used=target.samples,
        opt_gap=_clamped_gap(target.gap) if math.isfinite(target.gap) else None,
        worst_group_risk=opt + target.gap if math.isfinite(target.gap) else None,
        wall_ms=_elapsed_ms(start, timing),
        seed=seed)


def sweep(experiment: ExperimentConfig, axis: SweepAxis | None = None, values=None) -> list[RunRecord]:
    """Records samples-to-target for every seed at every axis value.

    Raises:
        ConfigError: If there are no values, OPT of a swept instance is
            unavailable, or its untrained start already meets the target.
    """
    axis = axis or experiment.axis
    values = tuple(values if values is not None else experiment.values)
    if not values:
        raise ConfigError('values', 'A sweep needs at least one axis value.')
    experiment.validate()
    records = []
    for value in values:
        point = apply_axis(experiment, axis, value)
        base = point.load_instance()
        opt = reference_opt(base)
        if opt is None:
            raise ConfigError('family', f'OPT of {base.name} is unavailable, so targets cannot be checked.')
        _check_informative(base, opt, point.eps)
        trial = _trial(point.algorithm, base, opt)
        logger.debug('Sweep %s=%s', axis.value, value)

        def job(seed: int) -> RunRecord:
            start = time.perf_counter()
            target = samples_to_target(trial, point.eps, seed)
            return _target_record(f'{point.label}-{point.algorithm.value}-{axis.value}={value:g}-s{seed}',
                                  point.algorithm, base, point.eps, target, opt, start, point.timing, seed)

        records.extend(_fan_out(point, job, point.seeds))
    return records


def _informative_variant(width: int, copies: int, gap: float, eps: float, seed: int) -> tuple[MDLInstance, float]:
    """Draws lower-bound variants for a seed until one's untrained start misses the target.

    Perturbed variants with two or more copies are solved by the uniform
    start, so in practice the search lands on the base variant.
    """
    for variant in lower_bound_variant_sampler(width, copies, seed):
        instance = make_lower_bound_family(width, copies, gap, variant, seed)
        opt = brute_force_opt(instance).value
        if not is_eps_optimal(untrained_gap(instance, opt), eps):
            return instance, opt
        logger.debug('Seed %d: skipping %s, solved before any data', seed, instance.name)


def lower_bound_sweep(experiment: ExperimentConfig, values=None) -> list[RunRecord]:
    """Compares on-demand MDL with the batch baseline on lower-bound variants as n grows.

    Every seed draws variants from the lower-bound variant distribution and
    keeps the first one whose untrained start misses the target; both
    algorithms see the same variant for a seed.

    Raises:
        ConfigError: If the family is not lower-bound, there are no values, or
            even the base variant starts within the target.
    """
    spec = experiment.instance
    if spec is None or spec.family != InstanceFamily.LOWER_BOUND:
        raise ConfigError('family', 'lowerbound-sweep needs family=lower-bound.')
    values = tuple(values if values is not None else experiment.values)
    if not values:
        raise ConfigError('values', 'A sweep needs at least one value of n.')
    experiment.validate()
    records = []
    for value in values:
        point = apply_axis(experiment, SweepAxis.N, value)
        copies = point.instance.copies
        base = make_lower_bound_family(spec.width, copies, spec.gap)
        _check_informative(base, brute_force_opt(base).value, point.eps)
        for algorithm in (Algorithm.MDL, Algorithm.BATCH_ERM):
            def job(seed: int) -> RunRecord:
                start = time.perf_counter()
                instance, opt = _informative_variant(spec.width, copies, spec.gap, point.eps, seed)
                target = samples_to_target(_trial(algorithm, instance, opt), point.eps, seed)
                return _target_record(f'lower-bound-{algorithm.value}-n{instance.n}-s{seed}', algorithm,
                                      instance, point.eps, target, opt, start, point.timing, seed)

            records.extend(_fan_out(point, job, point.seeds))
    return records


@dataclass(frozen=True, eq=False)
class ResamplingResult:
    """The output of a training run on a SplitTask.

    Attributes:
        theta: The averaged parameters.
        group_risks: Per-group test risks of theta.
        adversary_weights: The final weights over groups (uniform for pooled ERM).
        train_samples: Training points drawn.
        validation_samples: Validation points drawn.
        average_risk: The test loss of theta on the pooled test split.
    """
    theta: np.ndarray
    group_risks: np.ndarray
    adversary_weights: np.ndarray
    train_samples: int
    validation_samples: int = 0
    average_risk: float = math.nan

    @property
    def samples_used(self) -> int:
        return self.train_samples + self.validation_samples

    @property
    def worst_group_risk(self) -> float:
        return float(np.max(self.group_risks))

    @property
    def avg_worst_gap(self) -> float:
        return self.worst_group_risk - self.average_risk


def _group_batches(task: SplitTask, split: str) -> list[tuple[np.ndarray, np.ndarray]]:
    batches = [task.split(split).group(g) for g in range(task.n_groups)]
    for g, (_, labels) in enumerate(batches):
        if len(labels) == 0:
            raise InvalidArgumentError(f'Group {g} has no {split} data.')
    return batches


def rmdl_train(task: SplitTask, batch_size: int, adversary_batch_size: int, rounds: int, adversary_rate: float,
               seed: int, learning_rate: float = 1.0, steps_per_round: int = 1) -> ResamplingResult:
    """Trains with resampling MDL.

    Every round the adversary's Hedge weights are charged 1 minus the mean loss
    of the current parameters on `adversary_batch_size` validation points per
    group (drawn with replacement), the learner draws `batch_size` training
    points from the mixture of groups under the adversary's weights and takes
    `steps_per_round` projected gradient steps on them, and then the adversary
    updates.

    Raises:
        InvalidArgumentError: If a group has no training or validation data.
    """
    if batch_size < 1 or adversary_batch_size < 1 or rounds < 1 or steps_per_round < 1:
        raise InvalidArgumentError('Batch sizes, rounds and steps per round must be positive.')
    train = _group_batches(task, 'train')
    validation = _group_batches(task, 'validation')
    streams = SeedStreams.from_seed(seed)
    adversary = Hedge(task.n_groups, adversary_rate)
    theta = task.space.center.copy()
    total = np.zeros_like(theta)
    for _ in range(rounds):
        costs = np.empty(task.n_groups)
        for g, (vectors, labels) in enumerate(validation):
            picks = streams.auditor_sampling.integers(len(labels), size=adversary_batch_size)
            costs[g] = 1.0 - task.loss.batch_values(theta, vectors[picks], labels[picks]).mean()
        cumulative = np.cumsum(adversary.action)
        drawn = np.minimum(np.searchsorted(cumulative, streams.learner_sampling.random(batch_size), side='right'),
                           task.n_groups - 1)
        parts = []
        for g, count in enumerate(np.bincount(drawn, minlength=task.n_groups)):
            vectors, labels = train[g]
            picks = streams.learner_sampling.integers(len(labels), size=count)
            parts.append((vectors[picks], labels[picks]))
        batch_vectors = np.concatenate([v for v, _ in parts])
        batch_labels = np.concatenate([y for _, y in parts])
        for _ in range(steps_per_round):
            gradient = task.loss.batch_gradient(theta, batch_vectors, batch_labels)
            theta = task.space.mirror_step(theta, learning_rate * gradient)
        adversary.update(costs)
        total += theta
    theta = total / rounds
    return ResamplingResult(theta, task.group_risks(theta), np.array(adversary.action),
                            rounds * batch_size, rounds * task.n_groups * adversary_batch_size,
                            task.average_risk(theta))


def pooled_erm_baseline(task: SplitTask, budget: int, seed: int, batch_size: int = 32,
                        learning_rate: float = 1.0) -> ResamplingResult:
    """Minibatch projected gradient descent on the average loss of the pooled training data.

    Draws about `budget` training points uniformly with replacement, ignoring groups.
    """
    if budget < 1 or batch_size < 1:
        raise InvalidArgumentError('The budget and batch size must be positive.')
    rng = np.random.default_rng(seed)
    data = task.train
    rounds = math.ceil(budget / batch_size)
    theta = task.space.center.copy()
    total = np.zeros_like(theta)
    for _ in range(rounds):
        picks = rng.integers(len(data), size=batch_size)
        gradient = task.loss.batch_gradient(theta, data.vectors[picks], data.labels[picks])
        theta = task.space.mirror_step(theta, learning_rate * gradient)
        total += theta
    theta = total / rounds
    uniform = np.full(task.n_groups, 1.0 / task.n_groups)
    return ResamplingResult(theta, task.group_risks(theta), uniform, rounds * batch_size,
                            average_risk=task.average_risk(theta))


def group_dro_baseline(task: SplitTask, budget: int, seed: int, batch_size: int = 32, group_rate: float = 1.0,
                       learning_rate: float = 1.0) -> ResamplingResult:
    """Online group DRO: minibatch descent on a group-reweighted loss of pooled training data.

    Every round draws `batch_size` training points uniformly with replacement,
    raises the Hedge weight q_g of each group present in the batch by its mean
    loss at rate `group_rate`, and takes a projected gradient step on
    sum_g q_g * (mean loss of g). Unlike R-MDL the weights only change the
    loss; the data is still drawn in pooled proportions.
    """
    if budget < 1 or batch_size < 1:
        raise InvalidArgumentError('The budget and batch size must be positive.')
    rng = np.random.default_rng(seed)
    data = task.train
    rounds = math.ceil(budget / batch_size)
    weights = Hedge(task.n_groups, group_rate)
    theta = task.space.center.copy()
    total = np.zeros_like(theta)
    for _ in range(rounds):
        picks = rng.integers(len(data), size=batch_size)
        vectors, labels, groups = data.vectors[picks], data.labels[picks], data.groups[picks]
        present = [g for g in range(task.n_groups) if np.any(groups == g)]
        costs = np.zeros(task.n_groups)
        for g in present:
            costs[g] = -task.loss.batch_values(theta, vectors[groups == g], labels[groups == g]).mean()
        q = weights.update(costs).weights
        gradient = sum(q[g] * task.loss.batch_gradient(theta, vectors[groups == g], labels[groups == g])
                       for g in present)
        theta = task.space.mirror_step(theta, learning_rate * gradient)
        total += theta
    theta = total / rounds
    return ResamplingResult(theta, task.group_risks(theta), np.array(weights.action), rounds * batch_size,
                            average_risk=task.average_risk(theta))


def split_task(experiment: ExperimentConfig) -> SplitTask:
    """Builds the imbalanced grouped task an experiment trains on."""
    spec = experiment.instance
    dim = spec.dim if spec is not None else 2
    seed = spec.seed if spec is not None else 0
    return make_imbalanced_logistic(validation_size=experiment.validation_size, dim=dim, seed=seed)


def _rmdl_budget(experiment: ExperimentConfig, task: SplitTask) -> int:
    rounds = experiment.rounds or DEFAULT_RMDL_ROUNDS
    return rounds * (experiment.batch_size + task.n_groups * experiment.adversary_batch_size)


def resampling_run(experiment: ExperimentConfig, task: SplitTask, seed: int) -> RunRecord:
    """Runs R-MDL, or one of its baselines at the matched budget, for one seed.

    Online group DRO reuses `adversary_rate` as the step size of its group weights.
    """
    start = time.perf_counter()
    budget = experiment.budget or _rmdl_budget(experiment, task)
    match experiment.algorithm:
        case Algorithm.RMDL:
            result = rmdl_train(task, experiment.batch_size, experiment.adversary_batch_size,
                                experiment.rounds or DEFAULT_RMDL_ROUNDS, experiment.adversary_rate, seed,
                                experiment.learning_rate, experiment.steps_per_round)
        case Algorithm.GROUP_DRO:
            result = group_dro_baseline(task, budget, seed, experiment.batch_size, experiment.adversary_rate,
                                        experiment.learning_rate)
        case _:
            result = pooled_erm_baseline(task, budget, seed, experiment.batch_size, experiment.learning_rate)
    return RunRecord(
        run_id=f'imbalanced-logistic-{experiment.algorithm.value}-s{seed}',
        algorithm=experiment.algorithm.value,
        n=task.n_groups,
        size=task.space.dimension,
        eps_target=experiment.eps,
        samples_used=result.samples_used,
        opt_gap=None,
        worst_group_risk=result.worst_group_risk,
        wall_ms=_elapsed_ms(start, experiment.timing),
        seed=seed,
        avg_risk=result.average_risk,
        avg_worst_gap=result.avg_worst_gap)
