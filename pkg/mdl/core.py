"""Domain types for multi-distribution learning problems.

An instance bundles n data distributions, m losses and a hypothesis space.
The toolkit evaluates risks exactly whenever distributions have finite support,
and certifies OPT (the best worst-case risk) with a linear program over the
finite hypothesis class.
"""
import copy
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np
from scipy.optimize import linprog
from scipy.special import expit, xlogy

from mdl.config import config
from mdl.errors import (
    InvalidArgumentError,
    OracleError,
    ResourceLimitError,
    UnsupportedError,
    UnsupportedEvaluationError,
)

logger = logging.getLogger(__name__)

PROBABILITY_TOLERANCE = 1e-12
OPT_TOLERANCE = 1e-6
# A solution with gap <= eps + OPTIMALITY_SLACK counts as eps-optimal.
OPTIMALITY_SLACK = 1e-6


@dataclass(frozen=True, eq=False)
class Datapoint:
    """A single datapoint z.

    Discrete instances use (feature, label) payloads, convex instances use a
    vector payload (optionally with a label). Points that belong to a finite
    domain carry their position in it as `index`, which is what table losses
    are keyed by.
    """
    index: int | None = None
    feature: int | None = None
    label: int | None = None
    vector: np.ndarray | None = None

    def __post_init__(self):
        if self.label is not None and self.label not in (1, -1):
            raise InvalidArgumentError(f'Labels must be +1 or -1, got {self.label}')


@dataclass(frozen=True, eq=False)
class SimplexWeights:
    """A probability vector over hypotheses, distributions or (distribution, loss) pairs."""
    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0:
            raise InvalidArgumentError('Simplex weights must be a nonempty vector.')
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise InvalidArgumentError(f'Simplex weights must be finite and nonnegative: {weights}')
        if abs(weights.sum() - 1.0) > PROBABILITY_TOLERANCE:
            raise InvalidArgumentError(f'Simplex weights must sum to 1, got {weights.sum()!r}')
        weights.setflags(write=False)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def uniform(cls, k: int) -> 'SimplexWeights':
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def point_mass(cls, k: int, index: int) -> 'SimplexWeights':
        weights = np.zeros(k)
        weights[index] = 1.0
        return cls(weights)

    @classmethod
    def normalized(cls, values) -> 'SimplexWeights':
        """Builds weights from nonnegative masses, absorbing float round-off."""
        values = np.clip(np.asarray(values, dtype=float), 0.0, None)
        return cls(values / values.sum())

    def __len__(self):
        return self.weights.size

    def __getitem__(self, index):
        return self.weights[index]


@dataclass(frozen=True, eq=False)
class Labeling:
    """A deterministic binary classifier given by its label on every feature."""
    labels: np.ndarray

    def __call__(self, feature: int) -> int:
        return int(self.labels[feature])


class DataDistribution:
    """An example oracle EX(D).

    A distribution either has a finite support with explicit probabilities, or
    only a sampler. Every delivered sample increments `draws`, which is how the
    toolkit counts sample complexity. Instances are not safe to sample from two
    threads at once.

    Attributes:
        support: The support points, or None for sampler-only distributions.
        probabilities: The probability of each support point.
        sampler: A callable drawing one Datapoint from a numpy Generator.
        draws: The number of samples delivered so far.
        name: A label used in logs and serialized files.
    """
    def __init__(self, support: list[Datapoint] | None = None, probabilities=None, sampler=None, name: str = ''):
        if support is None and sampler is None:
            raise InvalidArgumentError('A distribution needs a finite support or a sampler.')
        self.support = None
        self.probabilities = None
        self.support_indices = None
        if support is not None:
            probabilities = np.array(probabilities, dtype=float)
            if len(support) == 0 or probabilities.shape != (len(support),):
                raise InvalidArgumentError('Support and probabilities must be nonempty and of equal length.')
            if np.any(probabilities < 0) or abs(probabilities.sum() - 1.0) > PROBABILITY_TOLERANCE:
                raise InvalidArgumentError(f'Probabilities must be nonnegative and sum to 1: {probabilities}')
            probabilities.setflags(write=False)
            self.support = list(support)
            self.probabilities = probabilities
            self._cdf = np.cumsum(probabilities)
            if all(z.index is not None for z in self.support):
                self.support_indices = np.array([z.index for z in self.support], dtype=int)
        self.sampler = sampler
        self.name = name
        self.draws = 0

    @property
    def finite(self) -> bool:
        return self.support is not None

    def sample(self, rng: np.random.Generator) -> Datapoint:
        """Delivers one i.i.d. datapoint."""
        self.draws += 1
        if self.support is None:
            return self.sampler(rng)
        position = int(np.searchsorted(self._cdf, rng.random(), side='right'))
        return self.support[min(position, len(self.support) - 1)]

    def sample_many(self, rng: np.random.Generator, size: int) -> list[Datapoint]:
        if self.support is None:
            return [self.sample(rng) for _ in range(size)]
        positions = np.searchsorted(self._cdf, rng.random(size), side='right')
        self.draws += size
        last = len(self.support) - 1
        return [self.support[min(int(p), last)] for p in positions]

    def mass(self, index: int) -> float:
        """Returns the probability of the domain point with the given index."""
        if self.support_indices is None:
            raise UnsupportedEvaluationError('Distribution has no indexed finite support.')
        return float(self.probabilities[self.support_indices == index].sum())

    def reset(self):
        self.draws = 0

    def copy(self) -> 'DataDistribution':
        """Returns an independent copy with a zeroed draw counter."""
        duplicate = copy.deepcopy(self)
        duplicate.reset()
        return duplicate

    def __repr__(self):
        kind = f'support={len(self.support)}' if self.finite else 'sampler'
        return f'DataDistribution(name={self.name!r}, {kind}, draws={self.draws})'


class LossFunction(ABC):
    """A loss with values in [0, 1].

    Attributes:
        bound: Bound on the gradient norm (the smoothness bound).
        norm_ord: The numpy norm order in which `bound` holds.
        linear: Whether the loss is linear in the parameters.
    """
    bound = 1.0
    norm_ord = np.inf
    linear = False

    @abstractmethod
    def pointwise(self, h, z: Datapoint) -> float:
        """Returns l(h, z) for a hypothesis in the loss's own representation."""


class TableLoss(LossFunction):
    """A loss given by a table of values per (hypothesis index, domain index)."""
    def __init__(self, table):
        table = np.array(table, dtype=float)
        if table.ndim != 2:
            raise InvalidArgumentError('Loss tables must be two-dimensional.')
        if np.any(table < 0) or np.any(table > 1):
            raise InvalidArgumentError('Loss values must lie in [0, 1].')
        table.setflags(write=False)
        self.table = table

    def values(self, z: Datapoint) -> np.ndarray:
        """Returns the loss of every hypothesis at z."""
        if z.index is None:
            raise UnsupportedEvaluationError('Table losses need indexed datapoints.')
        return self.table[:, z.index]

    def pointwise(self, h, z: Datapoint) -> float:
        if isinstance(h, SimplexWeights):
            return float(h.weights @ self.values(z))
        return float(self.table[int(h), z.index])

    def risks(self, distribution: DataDistribution) -> np.ndarray:
        """Returns the exact risk of every hypothesis under the distribution."""
        if not distribution.finite or distribution.support_indices is None:
            raise UnsupportedEvaluationError(
                f'Exact evaluation needs a finite indexed support ({distribution.name or "unnamed"}).')
        return self.table[:, distribution.support_indices] @ distribution.probabilities


class ZeroOneLoss(TableLoss):
    """The 0/1 classification loss of a labelled hypothesis class over a domain of (feature, label) points."""
    def __init__(self, hypotheses: 'FiniteHypothesisClass', domain: list[Datapoint]):
        if hypotheses.labels is None:
            raise UnsupportedError('The 0/1 loss needs a class given by label tables.')
        features = np.array([z.feature for z in domain], dtype=int)
        labels = np.array([z.label for z in domain], dtype=int)
        super().__init__((hypotheses.labels[:, features] != labels).astype(float))

    def pointwise(self, h, z: Datapoint) -> float:
        if isinstance(h, Labeling):
            return float(h(z.feature) != z.label)
        return super().pointwise(h, z)

    def labeling_risk(self, labeling: Labeling, distribution: DataDistribution) -> float:
        if not distribution.finite:
            raise UnsupportedEvaluationError('Exact evaluation needs a finite support.')
        mistakes = np.array([labeling(z.feature) != z.label for z in distribution.support], dtype=float)
        return float(mistakes @ distribution.probabilities)


class SmoothLoss(LossFunction):
    """A loss differentiable in a real parameter vector."""
    @abstractmethod
    def value(self, theta: np.ndarray, z: Datapoint) -> float:
        pass

    @abstractmethod
    def gradient(self, theta: np.ndarray, z: Datapoint) -> np.ndarray:
        pass

    def pointwise(self, h, z: Datapoint) -> float:
        return self.value(np.asarray(h, dtype=float), z)

    def risk(self, theta: np.ndarray, distribution: DataDistribution) -> float:
        if not distribution.finite:
            raise UnsupportedEvaluationError('Exact evaluation needs a finite support.')
        values = np.array([self.value(theta, z) for z in distribution.support])
        return float(values @ distribution.probabilities)


class LinearLoss(SmoothLoss):
    """The bilinear loss (<theta, z> - low) / (high - low), rescaled into [0, 1].

    Attributes:
        low: The raw value mapped to 0.
        high: The raw value mapped to 1.
    """
    # Affine, so mixtures over simplex vertices average exactly.
    linear = True

    def __init__(self, low: float, high: float, norm_ord=np.inf):
        if not high > low:
            raise InvalidArgumentError('The rescaling range must satisfy high > low.')
        self.low = float(low)
        self.high = float(high)
        self.norm_ord = norm_ord
        self.bound = 1.0

    def value(self, theta, z):
        return float((theta @ z.vector - self.low) / (self.high - self.low))

    def gradient(self, theta, z):
        return z.vector / (self.high - self.low)

    def risk(self, theta, distribution):
        if not distribution.finite:
            raise UnsupportedEvaluationError('Exact evaluation needs a finite support.')
        mean = sum(p * z.vector for z, p in zip(distribution.support, distribution.probabilities))
        return float((theta @ mean - self.low) / (self.high - self.low))


class LogisticLoss(SmoothLoss):
    """The logistic loss log(1 + exp(-y <theta, x>)) divided by `scale`.

    With features in the unit ball and parameters in a ball of radius r,
    scale = log(1 + e^r) keeps values in [0, 1] and gradients below 1.
    """
    norm_ord = 2

    def __init__(self, scale: float):
        if scale <= 0:
            raise InvalidArgumentError('Logistic scale must be positive.')
        self.scale = float(scale)
        self.bound = min(1.0, 1.0 / self.scale)

    def value(self, theta, z):
        margin = z.label * (theta @ z.vector)
        return float(np.logaddexp(0.0, -margin) / self.scale)

    def gradient(self, theta, z):
        margin = z.label * (theta @ z.vector)
        return -z.label * expit(-margin) * z.vector / self.scale

    def batch_values(self, theta, vectors: np.ndarray, labels: np.ndarray) -> np.ndarray:
        return np.logaddexp(0.0, -labels * (vectors @ theta)) / self.scale

    def batch_gradient(self, theta, vectors: np.ndarray, labels: np.ndarray) -> np.ndarray:
        weights = -labels * expit(-labels * (vectors @ theta)) / self.scale
        return weights @ vectors / len(labels)


class FiniteHypothesisClass:
    """A finite hypothesis class.

    Classes over a finite feature domain are given by label tables; abstract
    classes (e.g. rows of a risk matrix) only by their size.

    Attributes:
        labels: A (size, features) array of +1/-1 labels, or None.
        size: The number of hypotheses.
        parameters: Optional description of each hypothesis (e.g. a threshold).
    """
    def __init__(self, labels=None, size: int | None = None, parameters: list | None = None):
        if labels is not None:
            labels = np.array(labels, dtype=np.int8)
            if labels.ndim != 2 or not np.isin(labels, (-1, 1)).all():
                raise InvalidArgumentError('Label tables must be 2-D arrays of +1/-1.')
            if len(np.unique(labels, axis=0)) != labels.shape[0]:
                raise InvalidArgumentError('Hypotheses must be distinct on the declared domain.')
            size = labels.shape[0]
        if size is None or size < 1:
            raise InvalidArgumentError('A hypothesis class needs at least one hypothesis.')
        self.labels = labels
        self.size = int(size)
        self.parameters = parameters

    def __len__(self):
        return self.size

    def labeling(self, h: int) -> Labeling:
        return Labeling(self.labels[h])


class ConvexParamSpace(ABC):
    """A convex compact parameter set with a distance-generating function.

    Attributes:
        dimension: The parameter dimension.
        center: The feasible point minimizing the distance-generating function.
        bregman_radius: max over feasible u of V(center, u).
        diameter: max distance between feasible points in the dual norm.
        norm_pair: (norm, dual norm) in which gradients and diameters are measured.
    """
    dimension: int
    center: np.ndarray
    bregman_radius: float
    diameter: float
    norm_pair: tuple[str, str]
    # numpy order of the norm gradients are bounded in
    gradient_norm_ord = 2

    @abstractmethod
    def project(self, u: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def dgf(self, u: np.ndarray) -> float:
        pass

    @abstractmethod
    def dgf_gradient(self, u: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def mirror_step(self, theta: np.ndarray, step: np.ndarray) -> np.ndarray:
        """Returns argmin over feasible u of <step, u> + V(theta, u)."""

    @abstractmethod
    def grid(self, resolution: int) -> np.ndarray:
        """Returns feasible points covering the space, one per row."""

    def contains(self, u: np.ndarray, tolerance: float = 1e-9) -> bool:
        u = np.asarray(u, dtype=float)
        return u.shape == (self.dimension,) and bool(np.all(np.abs(self.project(u) - u) <= tolerance))

    def bregman(self, w: np.ndarray, u: np.ndarray) -> float:
        """V(w, u) = omega(u) - omega(w) - <omega'(w), u - w>."""
        return float(self.dgf(u) - self.dgf(w) - self.dgf_gradient(w) @ (u - w))


class EuclideanBall(ConvexParamSpace):
    """The centered Euclidean ball with the squared-norm distance-generating function."""
    norm_pair = ('l2', 'l2')

    def __init__(self, dimension: int, radius: float = 1.0):
        self.dimension = dimension
        self.radius = float(radius)
        self.center = np.zeros(dimension)
        self.bregman_radius = self.radius ** 2 / 2
        self.diameter = 2 * self.radius

    def project(self, u):
        norm = np.linalg.norm(u)
        return u if norm <= self.radius else u * (self.radius / norm)

    def dgf(self, u):
        return 0.5 * float(u @ u)

    def dgf_gradient(self, u):
        return np.asarray(u, dtype=float)

    def mirror_step(self, theta, step):
        return self.project(theta - step)

    def grid(self, resolution):
        axis = np.linspace(-self.radius, self.radius, resolution)
        points = np.array(list(product(axis, repeat=self.dimension)))
        return points[np.linalg.norm(points, axis=1) <= self.radius + 1e-12]


class EuclideanBox(ConvexParamSpace):
    """The box [low, high]^d with the squared-norm distance-generating function."""
    norm_pair = ('l2', 'l2')

    def __init__(self, dimension: int, low: float = -1.0, high: float = 1.0):
        if not high > low:
            raise InvalidArgumentError('Box bounds must satisfy high > low.')
        self.dimension = dimension
        self.low = float(low)
        self.high = float(high)
        self.center = np.full(dimension, (self.low + self.high) / 2)
        self.bregman_radius = dimension * (self.high - self.low) ** 2 / 8
        self.diameter = float(np.sqrt(dimension) * (self.high - self.low))

    def project(self, u):
        return np.clip(u, self.low, self.high)

    def dgf(self, u):
        return 0.5 * float(u @ u)

    def dgf_gradient(self, u):
        return np.asarray(u, dtype=float)

    def mirror_step(self, theta, step):
        return self.project(theta - step)

    def grid(self, resolution):
        axis = np.linspace(self.low, self.high, resolution)
        return np.array(list(product(axis, repeat=self.dimension)))


class EntropySimplex(ConvexParamSpace):
    """The probability simplex with the negative-entropy distance-generating function.

    Mirror steps are multiplicative-weights updates. Gradients are measured in
    the max-norm and the diameter in the 1-norm.
    """
    norm_pair = ('linf', 'l1')
    gradient_norm_ord = np.inf

    def __init__(self, dimension: int):
        if dimension < 1:
            raise InvalidArgumentError('The simplex needs at least one vertex.')
        self.dimension = dimension
        self.center = np.full(dimension, 1.0 / dimension)
        self.bregman_radius = float(np.log(dimension))
        self.diameter = 2.0 if dimension > 1 else 0.0

    def project(self, u):
        """Euclidean projection onto the simplex (sort-based)."""
        u = np.asarray(u, dtype=float)
        ordered = np.sort(u)[::-1]
        cumulative = np.cumsum(ordered) - 1.0
        rho = np.nonzero(ordered - cumulative / np.arange(1, u.size + 1) > 0)[0][-1]
        return np.maximum(u - cumulative[rho] / (rho + 1), 0.0)

    def contains(self, u, tolerance=1e-9):
        u = np.asarray(u, dtype=float)
        return (u.shape == (self.dimension,) and bool(np.all(u >= -tolerance))
                and abs(u.sum() - 1.0) <= tolerance)

    def dgf(self, u):
        return float(np.sum(xlogy(u, u)))

    def dgf_gradient(self, u):
        with np.errstate(divide='ignore'):
            return np.log(u) + 1.0

    def bregman(self, w, u):
        # KL(u || w) on the simplex; 0 log 0 = 0
        with np.errstate(divide='ignore', invalid='ignore'):
            terms = xlogy(u, u) - xlogy(u, w)
        return float(np.sum(terms))

    def mirror_step(self, theta, step):
        with np.errstate(divide='ignore'):
            logits = np.log(theta) - step
        logits -= logits.max()
        weights = np.exp(logits)
        return weights / weights.sum()

    def grid(self, resolution):
        """All points with coordinates in multiples of 1/resolution."""
        points = []
        for cuts in combinations(range(resolution + self.dimension - 1), self.dimension - 1):
            bounds = (-1,) + cuts + (resolution + self.dimension - 1,)
            points.append([bounds[i + 1] - bounds[i] - 1 for i in range(self.dimension)])
        return np.array(points, dtype=float) / resolution


@dataclass(eq=False)
class MDLInstance:
    """A multi-distribution learning problem (D, L, H).

    Attributes:
        distributions: The n example oracles.
        losses: The m losses.
        hypothesis_space: A FiniteHypothesisClass or a ConvexParamSpace.
        domain: The finite domain indexed by table losses (may be empty).
        name: A label used in logs and serialized files.
        metadata: Generator parameters and derived facts (e.g. affine constants).
    """
    distributions: list[DataDistribution]
    losses: list[LossFunction]
    hypothesis_space: FiniteHypothesisClass | ConvexParamSpace
    domain: list[Datapoint] = field(default_factory=list)
    name: str = ''
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.distributions or not self.losses:
            raise InvalidArgumentError('An instance needs at least one distribution and one loss.')
        if isinstance(self.hypothesis_space, ConvexParamSpace):
            dimension = self.hypothesis_space.dimension
            for distribution in self.distributions:
                for z in distribution.support or []:
                    if z.vector is not None and np.shape(z.vector) != (dimension,):
                        raise InvalidArgumentError(
                            f'Datapoint vector has shape {np.shape(z.vector)}, expected ({dimension},).')

    @property
    def n(self) -> int:
        return len(self.distributions)

    @property
    def m(self) -> int:
        return len(self.losses)

    @property
    def finite_class(self) -> bool:
        return isinstance(self.hypothesis_space, FiniteHypothesisClass)

    @property
    def exact_evaluable(self) -> bool:
        return (all(d.finite and d.support_indices is not None for d in self.distributions)
                and all(isinstance(loss, TableLoss) for loss in self.losses))

    @property
    def linear_simplex(self) -> bool:
        """Whether every risk is linear over a simplex of parameters with finite supports."""
        return (isinstance(self.hypothesis_space, EntropySimplex)
                and all(d.finite for d in self.distributions)
                and all(loss.linear for loss in self.losses))

    def pair(self, index: int) -> tuple[int, int]:
        """Maps a flat auditor index to its (distribution, loss) pair."""
        return divmod(index, self.m)

    def draws(self) -> np.ndarray:
        return np.array([d.draws for d in self.distributions], dtype=int)

    def reset_draws(self):
        for distribution in self.distributions:
            distribution.reset()

    def copy(self) -> 'MDLInstance':
        """Returns an independent copy with zeroed draw counters."""
        duplicate = copy.deepcopy(self)
        duplicate.reset_draws()
        return duplicate

    def risk_matrix(self) -> np.ndarray:
        """Returns the (|H|, n*m) matrix of exact risks, column i*m + j for (D_i, l_j).

        For linear losses over a simplex the rows are the simplex vertices.
        """
        if self.finite_class and self.exact_evaluable:
            columns = [loss.risks(d) for d in self.distributions for loss in self.losses]
        elif self.linear_simplex:
            vertices = np.eye(self.hypothesis_space.dimension)
            columns = [[loss.risk(v, d) for v in vertices] for d in self.distributions for loss in self.losses]
        else:
            raise UnsupportedEvaluationError('The risk matrix needs an exact-evaluable finite or linear instance.')
        return np.clip(np.column_stack(columns), 0.0, 1.0)

    def risks(self, h) -> np.ndarray:
        """Returns the exact risk of h on every (distribution, loss) pair, flattened."""
        return np.array([exact_risk(h, d, loss) for d in self.distributions for loss in self.losses])


def exact_risk(h, distribution: DataDistribution, loss: LossFunction) -> float:
    """Returns E_{z~D}[l(h, z)].

    Args:
        h: A hypothesis index, SimplexWeights over a finite class, a Labeling,
            or a parameter vector for smooth losses.
        distribution: A finite-support distribution.
        loss: The loss to evaluate.

    Raises:
        UnsupportedEvaluationError: If the distribution has no finite support.
    """
    if not distribution.finite:
        raise UnsupportedEvaluationError(f'Distribution {distribution.name!r} has no finite support.')
    if isinstance(loss, ZeroOneLoss) and isinstance(h, Labeling):
        risk = loss.labeling_risk(h, distribution)
    elif isinstance(loss, TableLoss):
        risks = loss.risks(distribution)
        risk = h.weights @ risks if isinstance(h, SimplexWeights) else risks[int(h)]
    elif isinstance(loss, SmoothLoss):
        risk = loss.risk(np.asarray(h, dtype=float), distribution)
    else:
        raise UnsupportedEvaluationError(f'Cannot evaluate {type(loss).__name__} exactly.')
    return float(np.clip(risk, 0.0, 1.0))


def monte_carlo_risk(h, oracle: DataDistribution, loss: LossFunction, samples: int, seed: int) -> float:
    """Estimates the risk of h by averaging the loss over i.i.d. draws."""
    if samples < 1:
        raise InvalidArgumentError('Monte Carlo estimation needs at least one sample.')
    rng = np.random.default_rng(seed)
    total = sum(loss.pointwise(h, z) for z in oracle.sample_many(rng, samples))
    return total / samples


def worst_case_risk(h, instance: MDLInstance) -> float:
    """Returns max over (D, l) of the exact risk of h."""
    return float(instance.risks(h).max())


@dataclass(frozen=True, eq=False)
class OptimumCertificate:
    """The exact solution of the min-max problem over a finite class.

    Attributes:
        value: OPT, the game value.
        weights: An optimal randomized hypothesis.
        auditor_weights: An optimal mixture over (distribution, loss) pairs.
        duality_gap: max(weights @ A) - min(A @ auditor_weights).
    """
    value: float
    weights: SimplexWeights
    auditor_weights: SimplexWeights
    duality_gap: float


def _minimax_strategy(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Solves min over x in the simplex of max_j (x @ matrix)_j."""
    rows, columns = matrix.shape
    objective = np.zeros(rows + 1)
    objective[-1] = 1.0
    result = linprog(
        objective,
        A_ub=np.hstack([matrix.T, -np.ones((columns, 1))]),
        b_ub=np.zeros(columns),
        A_eq=np.hstack([np.ones((1, rows)), np.zeros((1, 1))]),
        b_eq=[1.0],
        bounds=[(0, None)] * rows + [(None, None)],
        method='highs')
    if result.status != 0:
        raise OracleError(f'Linear program failed: {result.message}')
    x = np.clip(result.x[:rows], 0.0, None)
    return x / x.sum(), float(result.x[-1])


def solve_matrix_game(matrix) -> OptimumCertificate:
    """Solves min_p max_q p^T A q for a cost matrix A (rows minimize)."""
    matrix = np.asarray(matrix, dtype=float)
    p, _ = _minimax_strategy(matrix)
    q, _ = _minimax_strategy(-matrix.T)
    upper = float(np.max(p @ matrix))
    lower = float(np.min(matrix @ q))
    if upper - lower > OPT_TOLERANCE:
        logger.warning('Matrix game solved with duality gap %.3g', upper - lower)
    return OptimumCertificate(
        value=upper,
        weights=SimplexWeights.normalized(p),
        auditor_weights=SimplexWeights.normalized(q),
        duality_gap=upper - lower)


def brute_force_opt(instance: MDLInstance, max_entries: int | None = None) -> OptimumCertificate:
    """Computes OPT = min over Delta(H) of the worst-case risk, by linear programming.

    Linear losses over a simplex of parameters are solved the same way, with
    the vertices in place of hypotheses.

    Raises:
        UnsupportedError: If the instance is neither a finite class nor linear over a simplex.
        ResourceLimitError: If |H|*n*m exceeds `max_entries`.
    """
    if instance.finite_class:
        rows = instance.hypothesis_space.size
    elif instance.linear_simplex:
        rows = instance.hypothesis_space.dimension
    else:
        raise UnsupportedError('brute_force_opt needs a finite hypothesis class or linear losses over a simplex.')
    limit = max_entries or config.max_matrix_entries
    entries = rows * instance.n * instance.m
    if entries > limit:
        raise ResourceLimitError(f'Risk matrix has {entries} entries, limit is {limit}.')
    return solve_matrix_game(instance.risk_matrix())


def optimality_gap(h, instance: MDLInstance, certificate: OptimumCertificate | None = None) -> float:
    """Returns worst_case_risk(h) - OPT."""
    certificate = certificate or brute_force_opt(instance)
    return worst_case_risk(h, instance) - certificate.value


def is_eps_optimal(gap: float, eps: float) -> bool:
    return gap <= eps + OPTIMALITY_SLACK
