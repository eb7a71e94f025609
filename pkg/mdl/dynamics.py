"""No-regret game dynamics with noisy first-order oracles.

`solve_game` runs two online learners against each other on a convex-concave
game, each fed an unbiased bounded gradient estimate per round, and returns the
averaged actions. `mdl_solve` instantiates it for multi-distribution learning:
the learner plays hypotheses, the auditor plays (distribution, loss) pairs with
partial feedback grouped by distribution, and every round costs exactly one
sample for each player.

Round t plays (theta_t, w_t), draws that round's two samples, and only then
updates both players; the samples drawn in round t shape the actions of round
t + 1.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from mdl.core import MDLInstance, SimplexWeights
from mdl.errors import ContractViolationError, InvalidArgumentError, MDLError, OracleError, PartialResultError
from mdl.learners import ELP, FeedbackRecord, Hedge, MirrorDescentLearner, PartialFeedback, regret, sample_index

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-12


def required_iterations(eps: float, delta: float, lipschitz: float, diameter: float,
                        gamma_minus: float, gamma_plus: float, t_scale: float = 1.0) -> int:
    """Returns the number of rounds after which the averaged play is an eps-equilibrium w.p. 1 - delta.

    T = ceil(t_scale * (4 L^2 / eps^2) * (32 R^2 log(2 / delta) + 25 gamma_- + 25 gamma_+)).
    """
    if not 0 < eps < 1:
        raise InvalidArgumentError(f'eps must lie in (0, 1), got {eps}.')
    if not 0 < delta < 1:
        raise InvalidArgumentError(f'delta must lie in (0, 1), got {delta}.')
    if lipschitz <= 0 or diameter < 0 or gamma_minus < 0 or gamma_plus < 0 or t_scale <= 0:
        raise InvalidArgumentError('L and t_scale must be positive; R and the regret constants nonnegative.')
    budget = (4 * lipschitz ** 2 / eps ** 2) * (
        32 * diameter ** 2 * math.log(2 / delta) + 25 * gamma_minus + 25 * gamma_plus)
    return math.ceil(budget * t_scale)


def regret_constants(instance: MDLInstance, delta: float) -> tuple[float, float]:
    """Returns (gamma_-, gamma_+) for the default learner and auditor of an instance.

    The learner's constant is log|H| for Hedge and the Bregman radius for
    mirror descent; the auditor's is n log(n m / delta), ELP's high-probability
    regret constant on the distribution partition.
    """
    if instance.finite_class:
        gamma_minus = math.log(instance.hypothesis_space.size)
    else:
        gamma_minus = instance.hypothesis_space.bregman_radius
    return gamma_minus, instance.n * math.log(instance.n * instance.m / delta)


def budget_rounds(instance: MDLInstance, eps: float, delta: float, t_scale: float = 1.0) -> int:
    """Returns required_iterations for an instance's default learner and auditor (at least one round)."""
    gamma_minus, gamma_plus = regret_constants(instance, delta)
    if instance.finite_class:
        lipschitz, diameter = 1.0, 2.0
    else:
        lipschitz = max(loss.bound for loss in instance.losses)
        diameter = instance.hypothesis_space.diameter
    rounds = required_iterations(eps, delta, lipschitz, diameter, gamma_minus, gamma_plus, t_scale)
    logger.debug('Budget for eps=%g delta=%g t_scale=%g: %d rounds', eps, delta, t_scale, rounds)
    return max(rounds, 1)


@dataclass(frozen=True)
class SeedStreams:
    """Independent random streams split from one master seed."""
    learner_sampling: np.random.Generator
    auditor_sampling: np.random.Generator
    learner_algorithm: np.random.Generator
    auditor_algorithm: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> 'SeedStreams':
        return cls(*(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)))


def _check_norm(vector: np.ndarray, bound: float, ord_, source: str):
    norm = float(np.linalg.norm(vector, ord_))
    if not norm <= bound + NORM_TOLERANCE:
        raise ContractViolationError(f'{source} returned an estimate of norm {norm:.6g} > bound {bound:.6g}.')


@dataclass(frozen=True, eq=False)
class FirstOrderOracle:
    """A noisy first-order oracle with a norm bound L.

    Attributes:
        query: Maps (min action, max action, rng) to a gradient estimate.
        norm_bound: L; every estimate must satisfy ||g|| <= L.
        norm_ord: The numpy norm order of the bound.
        name: A label used in error messages.
    """
    query: Callable[[np.ndarray, np.ndarray, np.random.Generator], np.ndarray]
    norm_bound: float
    norm_ord: float = np.inf
    name: str = 'oracle'

    def __call__(self, min_action, max_action, rng: np.random.Generator) -> np.ndarray:
        estimate = np.asarray(self.query(min_action, max_action, rng), dtype=float)
        _check_norm(estimate, self.norm_bound, self.norm_ord, self.name)
        return estimate


@dataclass(frozen=True, eq=False)
class RoundRecord:
    """One round of a run.

    Attributes:
        round: The zero-based round number.
        min_action: The learner's action.
        max_action: The auditor's action.
        learner_cost: The gradient estimate fed to the learner.
        auditor_cost: The cost estimate fed to the auditor (full vector for
            solve_game, observed costs for mdl_solve).
        sampled_pair: The (distribution, loss) pair the learner's sample came from.
        observed: The (distribution, loss) pairs the auditor observed.
    """
    round: int
    min_action: np.ndarray
    max_action: np.ndarray
    learner_cost: np.ndarray
    auditor_cost: np.ndarray
    sampled_pair: tuple[int, int] | None = None
    observed: tuple[tuple[int, int], ...] = ()


class Transcript(list):
    """The RoundRecords of a run, in round order."""

    def min_actions(self) -> np.ndarray:
        return np.array([record.min_action for record in self])

    def max_actions(self) -> np.ndarray:
        return np.array([record.max_action for record in self])

    def learner_costs(self) -> np.ndarray:
        return np.array([record.learner_cost for record in self])

    def learner_regret(self, true_costs=None) -> float:
        """Returns the learner's regret against the best simplex vertex.

        Args:
            true_costs: Per-round cost vectors to measure against; the
                estimates the learner was fed when omitted.
        """
        costs = self.learner_costs() if true_costs is None else true_costs
        return regret(self.min_actions(), costs)


@dataclass(eq=False)
class SolveResult:
    """The auditable output of a run.

    Attributes:
        avg_min_action: The mean of the learner's actions.
        avg_max_action: The mean of the auditor's actions.
        rounds: The number of completed rounds T.
        oracle_calls: Samples drawn per distribution (per oracle for solve_game).
        learner_samples: Samples drawn to build learner gradients.
        auditor_samples: Samples drawn to build auditor costs.
        seed: The master seed.
        transcript: Per-round records, when recording was requested.
        auditor_transcript: The auditor's FeedbackRecords, when recording was
            requested and the auditor keeps them.
    """
    avg_min_action: np.ndarray
    avg_max_action: np.ndarray
    rounds: int
    oracle_calls: np.ndarray
    learner_samples: int = 0
    auditor_samples: int = 0
    seed: int | None = None
    transcript: 'Transcript | None' = None
    auditor_transcript: list[FeedbackRecord] | None = None

    @property
    def total_samples(self) -> int:
        return int(self.oracle_calls.sum())

    def learner_weights(self) -> SimplexWeights:
        return SimplexWeights.normalized(self.avg_min_action)

    def to_dict(self) -> dict:
        return {
            'rounds': self.rounds,
            'total_samples': self.total_samples,
            'per_distribution_samples': [int(c) for c in self.oracle_calls],
            'avg_min_action': [float(x) for x in self.avg_min_action],
            'avg_max_action': [float(x) for x in self.avg_max_action],
            'seed': self.seed,
        }


def equilibrium_gap(matrix, min_action, max_action) -> float:
    """Returns max_q phi(p, q) - min_p phi(p, q-bar) for the bilinear cost phi(p, q) = p^T A q."""
    matrix = np.asarray(matrix, dtype=float)
    return float(np.max(min_action @ matrix) - np.min(matrix @ max_action))


def solve_game(min_oracle: FirstOrderOracle, max_oracle: FirstOrderOracle, min_learner, max_learner,
               rounds: int, seed: int, record: bool = False) -> SolveResult:
    """Runs no-regret dynamics for `rounds` rounds and returns the averaged actions.

    Each round both learners play, each oracle returns a gradient estimate at the
    joint play (the max oracle estimates minus the max player's gradient), and
    both learners are fed the linearized costs.

    Raises:
        ContractViolationError: If an oracle exceeds its norm bound; the run aborts.
    """
    if rounds < 1:
        raise InvalidArgumentError(f'The number of rounds must be positive, got {rounds}.')
    streams = SeedStreams.from_seed(seed)
    min_total = np.zeros_like(min_learner.action, dtype=float)
    max_total = np.zeros_like(max_learner.action, dtype=float)
    transcript = Transcript() if record else None
    for t in range(rounds):
        p = np.array(min_learner.action, dtype=float)
        q = np.array(max_learner.action, dtype=float)
        min_total += p
        max_total += q
        min_gradient = min_oracle(p, q, streams.learner_sampling)
        max_gradient = max_oracle(p, q, streams.auditor_sampling)
        min_learner.update(min_gradient)
        max_learner.update(max_gradient)
        if transcript is not None:
            transcript.append(RoundRecord(t, p, q, min_gradient, max_gradient))
    return SolveResult(
        avg_min_action=min_total / rounds,
        avg_max_action=max_total / rounds,
        rounds=rounds,
        oracle_calls=np.array([rounds, rounds]),
        learner_samples=rounds,
        auditor_samples=rounds,
        seed=seed,
        transcript=transcript)


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    """A learner gradient estimate and where its sample came from."""
    vector: np.ndarray
    distribution: int
    loss: int


def _draw(instance: MDLInstance, i: int, rng: np.random.Generator):
    try:
        return instance.distributions[i].sample(rng)
    except MDLError:
        raise
    except Exception as e:
        raise OracleError(f'Sampling from distribution {i} failed: {e}') from e


def learner_gradient_estimate(h, auditor_weights: SimplexWeights, instance: MDLInstance,
                              rng: np.random.Generator) -> GradientEstimate:
    """Draws (i, j) from the auditor's mixture and one z from D_i; returns the learner's gradient at z.

    For a finite class this is the vector of losses of every hypothesis at z
    (the gradient of the relaxed linear loss); for a parameter space it is the
    gradient of l_j at the current parameters.
    """
    weights = auditor_weights.weights if isinstance(auditor_weights, SimplexWeights) else auditor_weights
    flat = sample_index(rng, weights)
    i, j = instance.pair(flat)
    z = _draw(instance, i, rng)
    loss = instance.losses[j]
    if instance.finite_class:
        vector = np.array(loss.values(z), dtype=float)
        _check_norm(vector, 1.0, np.inf, 'Learner oracle')
    else:
        vector = np.asarray(loss.gradient(np.asarray(h, dtype=float), z), dtype=float)
        _check_norm(vector, loss.bound, loss.norm_ord, 'Learner oracle')
    return GradientEstimate(vector, i, j)


def auditor_payoff_estimate(h, observe, instance: MDLInstance,
                            rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Estimates the auditor's costs 1 - l_j(h, z_i) on the observed (i, j) pairs.

    One datapoint is drawn per unique distribution index in `observe`.

    Returns:
        The costs aligned with `observe`, and the number of draws per distribution.
    """
    observe = list(observe)
    if not observe:
        raise InvalidArgumentError('The auditor must observe at least one pair.')
    calls = np.zeros(instance.n, dtype=int)
    points = {}
    costs = np.empty(len(observe))
    for position, (i, j) in enumerate(observe):
        if i not in points:
            points[i] = _draw(instance, i, rng)
            calls[i] += 1
        costs[position] = 1.0 - instance.losses[j].pointwise(h, points[i])
    return costs, calls


def distribution_partition(n: int, m: int) -> list[tuple[int, ...]]:
    """Groups flat auditor indices i*m + j by distribution index i."""
    return [tuple(i * m + j for j in range(m)) for i in range(n)]


def default_learner(instance: MDLInstance, rounds: int):
    if instance.finite_class:
        return Hedge.for_rounds(instance.hypothesis_space.size, rounds)
    lipschitz = max(loss.bound for loss in instance.losses)
    return MirrorDescentLearner.for_rounds(instance.hypothesis_space, rounds, lipschitz)


def default_auditor(instance: MDLInstance, rounds: int, rng: np.random.Generator, record: bool = False) -> ELP:
    partition = distribution_partition(instance.n, instance.m)
    return ELP.for_rounds(instance.n * instance.m, partition, rounds, seed=rng, record=record)


def mdl_solve(instance: MDLInstance, rounds: int, seed: int, learner=None, auditor: ELP | None = None,
              record: bool = False, sample_budget: int | None = None) -> SolveResult:
    """Runs on-demand multi-distribution learning for `rounds` rounds.

    Args:
        instance: The problem; its distributions' draw counters advance.
        rounds: T. The run draws exactly 2T samples when the auditor's
            partition groups pairs by distribution.
        seed: The master seed, split into independent streams.
        learner: The learner's online algorithm; Hedge over a finite class or
            mirror descent over a parameter space by default.
        auditor: A partial-feedback learner over the n*m pairs; ELP on the
            distribution partition by default.
        record: Whether to keep a per-round transcript.
        sample_budget: Optional cap on the total number of draws.

    Raises:
        PartialResultError: If the sample budget runs out mid-run; carries the
            result of the completed rounds.
    """
    if rounds < 1:
        raise InvalidArgumentError(f'The number of rounds must be positive, got {rounds}.')
    streams = SeedStreams.from_seed(seed)
    learner = learner or default_learner(instance, rounds)
    auditor = auditor or default_auditor(instance, rounds, streams.auditor_algorithm, record)
    start = instance.draws()
    learner_total = np.zeros_like(learner.action, dtype=float)
    auditor_total = np.zeros(auditor.k)
    transcript = Transcript() if record else None
    learner_samples = auditor_samples = 0

    def result(completed: int) -> SolveResult:
        divisor = max(completed, 1)
        return SolveResult(
            avg_min_action=learner_total / divisor if completed else np.array(learner.action, dtype=float),
            avg_max_action=auditor_total / divisor if completed else np.array(auditor.action),
            rounds=completed,
            oracle_calls=instance.draws() - start,
            learner_samples=learner_samples,
            auditor_samples=auditor_samples,
            seed=seed,
            transcript=transcript,
            auditor_transcript=getattr(auditor, 'transcript', None))

    def spend(samples: int, completed: int):
        if sample_budget is not None and int((instance.draws() - start).sum()) + samples > sample_budget:
            raise PartialResultError(
                f'Sample budget {sample_budget} exhausted after {completed} rounds.', result(completed))

    auditor.step()
    for t in range(rounds):
        theta = np.array(learner.action, dtype=float)
        h = learner.weights if instance.finite_class else theta
        w = np.array(auditor.action)
        spend(1, t)
        estimate = learner_gradient_estimate(h, auditor.weights, instance, streams.learner_sampling)
        learner_samples += 1
        cell = auditor.announced_cell
        pairs = [instance.pair(a) for a in cell]
        spend(len({i for i, _ in pairs}), t)
        costs, calls = auditor_payoff_estimate(h, pairs, instance, streams.auditor_sampling)
        auditor_samples += int(calls.sum())
        learner_total += theta
        auditor_total += w
        learner.update(estimate.vector)
        auditor.step(PartialFeedback(cell, costs))
        if transcript is not None:
            transcript.append(RoundRecord(
                t, theta, w, estimate.vector, costs, (estimate.distribution, estimate.loss), tuple(pairs)))
    solved = result(rounds)
    logger.debug('mdl_solve finished: rounds=%d samples=%d seed=%s', rounds, solved.total_samples, seed)
    return solved
