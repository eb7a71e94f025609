"""Online learning algorithms.

Hedge plays the probability simplex with full-information feedback. ELP plays
the same simplex but only observes the costs of one cell of a fixed partition
per round; Exp3 is ELP on the partition into singletons. Online mirror descent
plays a general convex parameter space.

All learners share one protocol: `action` is the current play and
`update(gradient)` feeds a linear cost.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from mdl.core import ConvexParamSpace, SimplexWeights
from mdl.errors import InvalidArgumentError, ProtocolViolationError

logger = logging.getLogger(__name__)

# Incoming costs are differences of losses in [0, 1], so they lie in [-2, 2].
COST_LIMIT = 2.0


def hedge_default_rate(k: int, rounds: int) -> float:
    """Returns the Hedge learning rate sqrt(log(k) / T)."""
    if k < 2:
        raise InvalidArgumentError(f'Hedge needs at least two actions, got {k}.')
    if rounds < 1:
        raise InvalidArgumentError(f'The horizon must be positive, got {rounds}.')
    return float(np.sqrt(np.log(k) / rounds))


def bandit_default_rates(k: int, cells: int, rounds: int) -> tuple[float, float]:
    """Returns (learning rate, implicit exploration) for ELP with `cells` partition cells.

    The exploration is sqrt(log(k) / (cells * T)) and the learning rate sqrt(2)
    times that; for singleton cells this is the usual Exp3-IX choice.
    """
    if rounds < 1:
        raise InvalidArgumentError(f'The horizon must be positive, got {rounds}.')
    if k < 2:
        return 1.0, 0.0
    exploration = float(np.sqrt(np.log(k) / (cells * rounds)))
    return float(np.sqrt(2.0) * exploration), exploration


def omd_default_rate(space: ConvexParamSpace, rounds: int, lipschitz: float = 1.0) -> float:
    """Returns sqrt(2 D / (T L^2)), the step size balancing mirror descent's regret terms."""
    if rounds < 1:
        raise InvalidArgumentError(f'The horizon must be positive, got {rounds}.')
    if space.bregman_radius <= 0:
        return float(1.0 / np.sqrt(rounds))
    return float(np.sqrt(2.0 * space.bregman_radius / rounds) / lipschitz)


def _checked_costs(costs, size: int) -> np.ndarray:
    costs = np.asarray(costs, dtype=float)
    if costs.shape != (size,):
        raise InvalidArgumentError(f'Expected {size} costs, got shape {costs.shape}.')
    if not np.all(np.isfinite(costs)):
        raise InvalidArgumentError(f'Costs must be finite: {costs}')
    if np.any(np.abs(costs) > COST_LIMIT):
        raise InvalidArgumentError(f'Costs must lie in [-{COST_LIMIT}, {COST_LIMIT}]: {costs}')
    return costs


def sample_index(rng: np.random.Generator, probabilities: np.ndarray) -> int:
    position = int(np.searchsorted(np.cumsum(probabilities), rng.random(), side='right'))
    return min(position, len(probabilities) - 1)


class RegretLedger:
    """Running bookkeeping of the costs a learner incurred and every fixed action would have.

    Attributes:
        cumulative_costs: Total cost of each fixed action so far.
        incurred: Total cost of the played actions.
        rounds: The number of recorded rounds.
    """
    def __init__(self, k: int):
        self.cumulative_costs = np.zeros(k)
        self.incurred = 0.0
        self.rounds = 0

    def record(self, action: np.ndarray, costs: np.ndarray):
        self.incurred += float(costs @ action)
        self.cumulative_costs += costs
        self.rounds += 1

    @property
    def best_action(self) -> int:
        """The best fixed action in hindsight, lowest index on ties."""
        return int(np.argmin(self.cumulative_costs))

    @property
    def regret(self) -> float:
        return self.incurred - float(self.cumulative_costs.min())


class Hedge:
    """Exponential weights over k actions.

    The action after costs c_1..c_t is proportional to exp(-eta * sum c_s).

    Attributes:
        k: The number of actions.
        eta: The learning rate.
        cumulative_costs: The summed (possibly estimated) costs per action.
        ledger: Regret bookkeeping on the costs passed to `update`.
    """

    def __init__(self, k: int, eta: float):
        if k < 1:
            raise InvalidArgumentError('Hedge needs at least one action.')
        if not eta > 0:
            raise InvalidArgumentError(f'The learning rate must be positive, got {eta}.')
        self.k = k
        self.eta = float(eta)
        self.cumulative_costs = np.zeros(k)
        self.ledger = RegretLedger(k)
        self._weights = SimplexWeights.uniform(k)

    @classmethod
    def for_rounds(cls, k: int, rounds: int) -> 'Hedge':
        return cls(k, hedge_default_rate(k, rounds) if k > 1 else 1.0)

    @property
    def weights(self) -> SimplexWeights:
        return self._weights

    @property
    def action(self) -> np.ndarray:
        return self._weights.weights

    def update(self, costs) -> SimplexWeights:
        """Feeds one full cost vector and returns the next weights."""
        costs = _checked_costs(costs, self.k)
        self.ledger.record(self.action, costs)
        return self.accumulate(costs)

    def accumulate(self, costs: np.ndarray) -> SimplexWeights:
        """Adds costs without range checks; used for importance-weighted estimates."""
        self.cumulative_costs += costs
        self._weights = SimplexWeights.normalized(softmax(-self.eta * self.cumulative_costs))
        return self._weights


@dataclass(frozen=True, eq=False)
class PartialFeedback:
    """The costs of the actions a partial-feedback learner chose to observe.

    Attributes:
        observed: The observed action indices (the announced cell).
        costs: The cost of each observed action, aligned with `observed`.
    """
    observed: tuple[int, ...]
    costs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'observed', tuple(int(i) for i in self.observed))
        object.__setattr__(self, 'costs', np.asarray(self.costs, dtype=float))
        if len(self.observed) != self.costs.size:
            raise InvalidArgumentError('Feedback needs one cost per observed action.')


@dataclass(frozen=True, eq=False)
class FeedbackRecord:
    """One round of a partial-feedback learner, for offline regret audits."""
    round: int
    weights: np.ndarray
    observed: tuple[int, ...]
    estimated_costs: np.ndarray


class ELP:
    """Hedge with feedback from one cell of a partition per round.

    Each round the learner announces a cell, sampled with probability equal to
    the current mass on that cell. When the cell's costs arrive, each observed
    cost is divided by the cell's mass plus the implicit exploration, which
    keeps the estimate unbiased when the exploration is zero.

    Attributes:
        partition: Disjoint cells covering all actions.
        exploration: The implicit exploration parameter.
        announced: Index of the cell whose feedback is expected next.
        transcript: Per-round FeedbackRecords, when recording is enabled.
    """

    def __init__(self, k: int, partition, eta: float, exploration: float = 0.0,
                 seed=None, record: bool = False):
        if exploration < 0:
            raise InvalidArgumentError(f'Exploration must be nonnegative, got {exploration}.')
        self.hedge = Hedge(k, eta)
        self.partition = [tuple(sorted(int(i) for i in cell)) for cell in partition]
        members = [i for cell in self.partition for i in cell]
        if (any(len(cell) == 0 for cell in self.partition) or len(members) != k
                or sorted(members) != list(range(k))):
            raise InvalidArgumentError(f'Partition cells must be nonempty, disjoint and cover all {k} actions.')
        self._cell_of = np.empty(k, dtype=int)
        for index, cell in enumerate(self.partition):
            self._cell_of[list(cell)] = index
        self.exploration = float(exploration)
        self.rng = np.random.default_rng(seed)
        self.announced = None
        self.rounds = 0
        self.transcript = [] if record else None

    @classmethod
    def for_rounds(cls, k: int, partition, rounds: int, seed=None, record: bool = False) -> 'ELP':
        eta, exploration = bandit_default_rates(k, len(partition), rounds)
        return cls(k, partition, eta, exploration, seed=seed, record=record)

    @property
    def k(self) -> int:
        return self.hedge.k

    @property
    def weights(self) -> SimplexWeights:
        return self.hedge.weights

    @property
    def action(self) -> np.ndarray:
        return self.hedge.action

    @property
    def announced_cell(self) -> tuple[int, ...]:
        return self.partition[self.announced]

    def cell_masses(self) -> np.ndarray:
        return np.bincount(self._cell_of, weights=self.action, minlength=len(self.partition))

    def estimate_costs(self, feedback: PartialFeedback) -> np.ndarray:
        """Returns the importance-weighted cost vector, zero outside the observed cell."""
        mass = self.cell_masses()[self._cell_of[feedback.observed[0]]]
        estimate = np.zeros(self.k)
        estimate[list(feedback.observed)] = feedback.costs / (mass + self.exploration)
        return estimate

    def step(self, feedback: PartialFeedback | None = None) -> tuple[SimplexWeights, int]:
        """Consumes the feedback for the announced cell and announces the next one.

        Args:
            feedback: The costs of the previously announced cell; None only on
                the first round.

        Returns:
            The next weights and the index of the next cell to observe.

        Raises:
            ProtocolViolationError: If feedback does not cover exactly the announced cell.
        """
        if feedback is None:
            if self.announced is not None:
                raise ProtocolViolationError('Feedback for the announced cell is required.')
        else:
            if self.announced is None:
                raise ProtocolViolationError('Feedback arrived before any cell was announced.')
            if sorted(feedback.observed) != list(self.announced_cell):
                raise ProtocolViolationError(
                    f'Feedback covers {feedback.observed}, announced cell is {self.announced_cell}.')
            _checked_costs(feedback.costs, len(feedback.observed))
            estimate = self.estimate_costs(feedback)
            if self.transcript is not None:
                self.transcript.append(FeedbackRecord(self.rounds, self.action, feedback.observed, estimate))
            self.hedge.accumulate(estimate)
            self.rounds += 1
        self.announced = sample_index(self.rng, self.cell_masses())
        return self.weights, self.announced


class Exp3(ELP):
    """ELP on singleton cells: one sampled action's cost is observed per round."""

    def __init__(self, k: int, eta: float, exploration: float = 0.0, seed=None, record: bool = False):
        super().__init__(k, [(i,) for i in range(k)], eta, exploration, seed=seed, record=record)

    @classmethod
    def for_rounds(cls, k: int, rounds: int, seed=None, record: bool = False) -> 'Exp3':
        eta, exploration = bandit_default_rates(k, k, rounds)
        return cls(k, eta, exploration, seed=seed, record=record)


def omd_step(theta, gradient, eta: float, space: ConvexParamSpace, bound: float = 1.0) -> np.ndarray:
    """One online mirror descent step: argmin_u <eta * gradient, u> + V(theta, u).

    Args:
        bound: The smoothness bound; the gradient's norm, measured in the
            space's gradient norm, may not exceed it.

    Raises:
        InvalidArgumentError: If theta is not feasible or the gradient is too large.
    """
    theta = np.asarray(theta, dtype=float)
    gradient = np.asarray(gradient, dtype=float)
    if not space.contains(theta):
        raise InvalidArgumentError(f'Point {theta} is not feasible.')
    if gradient.shape != theta.shape:
        raise InvalidArgumentError(f'Expected a gradient of shape {theta.shape}, got {gradient.shape}.')
    norm = float(np.linalg.norm(gradient, space.gradient_norm_ord))
    if not norm <= bound + 1e-12:
        raise InvalidArgumentError(f'Gradient norm {norm:.6g} exceeds the smoothness bound {bound:.6g}.')
    return space.mirror_step(theta, eta * gradient)


class MirrorDescentLearner:
    """Online mirror descent started at the center of the space."""

    def __init__(self, space: ConvexParamSpace, eta: float):
        if not eta > 0:
            raise InvalidArgumentError(f'The learning rate must be positive, got {eta}.')
        self.space = space
        self.eta = float(eta)
        self.theta = space.center.copy()

    @classmethod
    def for_rounds(cls, space: ConvexParamSpace, rounds: int, lipschitz: float = 1.0) -> 'MirrorDescentLearner':
        return cls(space, omd_default_rate(space, rounds, lipschitz))

    @property
    def action(self) -> np.ndarray:
        return self.theta

    def update(self, gradient) -> np.ndarray:
        self.theta = self.space.mirror_step(self.theta, self.eta * np.asarray(gradient, dtype=float))
        return self.theta


def _linear_totals(actions, vectors) -> tuple[float, np.ndarray]:
    actions = np.asarray(actions, dtype=float)
    vectors = np.asarray(vectors, dtype=float)
    if actions.shape != vectors.shape:
        raise InvalidArgumentError(f'Actions {actions.shape} and costs {vectors.shape} do not match.')
    return float(np.sum(actions * vectors)), vectors.sum(axis=0)


def regret(actions, costs) -> float:
    """Returns sum_t <c_t, a_t> minus the best fixed simplex action's total (a vertex)."""
    incurred, totals = _linear_totals(actions, costs)
    return incurred - float(totals.min())


def variational_error(actions, gradients) -> float:
    """Returns max over a* of sum_t <g_t, a_t - a*>, with g_t the gradient at the played a_t."""
    played, totals = _linear_totals(actions, gradients)
    return played - float(totals.min())
