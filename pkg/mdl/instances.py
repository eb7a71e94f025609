"""Seeded instance generators.

Every generator is a pure function of its parameters and seed. Discrete
families use a domain of (feature, label) points where point 2x is (x, +1)
and point 2x + 1 is (x, -1).
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from mdl.config import config
from mdl.core import (
    DataDistribution,
    Datapoint,
    EntropySimplex,
    EuclideanBall,
    FiniteHypothesisClass,
    LinearLoss,
    LogisticLoss,
    MDLInstance,
    TableLoss,
    ZeroOneLoss,
)
from mdl.errors import InvalidArgumentError, ResourceLimitError

logger = logging.getLogger(__name__)

# Gaps at or above this leave some lower-bound probability outside [0, 1].
MAX_GAP = 1 / 8


class InstanceFamily(Enum):
    LOWER_BOUND = 'lower-bound'
    COIN = 'coin'
    RANDOM_AGNOSTIC = 'random-agnostic'
    REALIZABLE = 'realizable'
    CONVEX = 'convex'


class ConvexFamily(Enum):
    BILINEAR = 'bilinear'
    LOGISTIC = 'logistic'


def _check_gap(eps: float):
    if not 0 < eps < MAX_GAP:
        raise InvalidArgumentError(f'The gap must lie in (0, 1/8), got {eps}.')


def _positive(**sizes):
    for name, value in sizes.items():
        if value < 1:
            raise InvalidArgumentError(f'{name} must be at least 1, got {value}.')


def binary_domain(features: int) -> list[Datapoint]:
    return [Datapoint(index=2 * x + offset, feature=x, label=label)
            for x in range(features) for offset, label in enumerate((1, -1))]


def _pair_distribution(domain: list[Datapoint], x: int, positive: float, name: str) -> DataDistribution:
    return DataDistribution([domain[2 * x], domain[2 * x + 1]], [positive, 1.0 - positive], name=name)


def make_lower_bound_family(w: int, eta: int, eps: float, variant: tuple[int, int] | None = None,
                            seed: int = 0) -> MDLInstance:
    """Builds the hard family: eta copies of a distribution D_x per feature x in [w].

    D_x puts 1/2 - 2 eps on (x, +1) and 1/2 + 2 eps on (x, -1). The perturbed
    variant (x*, i) replaces copy i of D_{x*} with D'_{x*}, which puts
    1/2 + 4 eps on (x*, +1). Distribution x * eta + c is copy c of D_x. The class
    is every labelling of [w].

    Raises:
        ResourceLimitError: If w exceeds the enumeration cap.
    """
    _check_gap(eps)
    _positive(w=w, eta=eta)
    if w > config.max_feature_bits:
        raise ResourceLimitError(f'Enumerating 2^{w} hypotheses exceeds the cap of 2^{config.max_feature_bits}.')
    if variant is not None:
        x_star, copy = variant
        if not (0 <= x_star < w and 0 <= copy < eta):
            raise InvalidArgumentError(f'Variant {variant} is outside [{w}] x [{eta}].')
    domain = binary_domain(w)
    bits = (np.arange(2 ** w)[:, None] >> np.arange(w)) & 1
    hypotheses = FiniteHypothesisClass(labels=1 - 2 * bits)
    distributions = []
    for x in range(w):
        for c in range(eta):
            if variant == (x, c):
                distributions.append(_pair_distribution(domain, x, 0.5 + 4 * eps, f'D\'_{x}'))
            else:
                distributions.append(_pair_distribution(domain, x, 0.5 - 2 * eps, f'D_{x}#{c}'))
    name = 'lower-bound' if variant is None else f'lower-bound-{variant[0]}-{variant[1]}'
    return MDLInstance(distributions, [ZeroOneLoss(hypotheses, domain)], hypotheses, domain, name=name,
                       metadata={'w': w, 'eta': eta, 'eps': eps, 'variant': variant, 'seed': seed})


def lower_bound_variant_sampler(w: int, eta: int, seed: int) -> Iterator[tuple[int, int] | None]:
    """Yields lower-bound variants: the base (None) w.p. 1/2, each perturbation (x*, i) w.p. 1/(2 w eta)."""
    _positive(w=w, eta=eta)
    rng = np.random.default_rng(seed)
    while True:
        if rng.random() < 0.5:
            yield None
        else:
            yield divmod(int(rng.integers(w * eta)), eta)


def make_coin_instance(eta: int, eps: float, hypothesis: int | None = None, seed: int = 0) -> MDLInstance:
    """Builds eta single-feature coins; tails is label +1 and heads label -1.

    Under the null hypothesis (None) every coin shows tails w.p. 1/2 + 2 eps;
    under hypothesis i coin i shows heads w.p. 1/2 + 4 eps instead. The class
    holds the two constant predictors, +1 first.
    """
    _check_gap(eps)
    _positive(eta=eta)
    if hypothesis is not None and not 0 <= hypothesis < eta:
        raise InvalidArgumentError(f'Coin {hypothesis} does not exist among {eta} coins.')
    domain = binary_domain(1)
    hypotheses = FiniteHypothesisClass(labels=[[1], [-1]])
    distributions = [
        _pair_distribution(domain, 0, 0.5 - 4 * eps if i == hypothesis else 0.5 + 2 * eps, f'coin-{i}')
        for i in range(eta)]
    name = 'coin-H0' if hypothesis is None else f'coin-H{hypothesis}'
    return MDLInstance(distributions, [ZeroOneLoss(hypotheses, domain)], hypotheses, domain, name=name,
                       metadata={'eta': eta, 'eps': eps, 'hypothesis': hypothesis, 'seed': seed})


def _check_size(class_size: int, n: int, support_size: int):
    _positive(class_size=class_size, n=n, support_size=support_size)
    if class_size * n * support_size > config.max_matrix_entries:
        raise ResourceLimitError(
            f'{class_size} x {n} x {support_size} exceeds the limit of {config.max_matrix_entries} entries.')
    if class_size > 2 ** support_size:
        raise InvalidArgumentError(f'Only {2 ** support_size} distinct classifiers exist on {support_size} features.')


def _random_labels(rng: np.random.Generator, class_size: int, features: int, planted=None) -> np.ndarray:
    rows = {}
    if planted is not None:
        rows[planted.tobytes()] = planted
    while len(rows) < class_size:
        row = rng.choice(np.array([-1, 1], dtype=np.int8), size=features)
        rows.setdefault(row.tobytes(), row)
    return np.array(list(rows.values()))


def make_random_agnostic(class_size: int, n: int, support_size: int, seed: int) -> MDLInstance:
    """Builds n random label distributions over support_size features and a random class.

    Each distribution has Dirichlet feature marginals and a uniformly random
    probability of label +1 at every feature.
    """
    _check_size(class_size, n, support_size)
    rng = np.random.default_rng(seed)
    domain = binary_domain(support_size)
    hypotheses = FiniteHypothesisClass(labels=_random_labels(rng, class_size, support_size))
    distributions = []
    for i in range(n):
        marginal = rng.dirichlet(np.ones(support_size))
        positive = rng.random(support_size)
        probabilities = np.column_stack([marginal * positive, marginal * (1 - positive)]).ravel()
        distributions.append(DataDistribution(domain, probabilities / probabilities.sum(), name=f'D_{i}'))
    return MDLInstance(distributions, [ZeroOneLoss(hypotheses, domain)], hypotheses, domain,
                       name=f'random-agnostic-{seed}',
                       metadata={'class_size': class_size, 'n': n, 'support_size': support_size, 'seed': seed})


def make_realizable(class_size: int, n: int, support_size: int, seed: int) -> MDLInstance:
    """Builds n distributions all labelled by one planted hypothesis of a random class.

    The planted hypothesis' index is stored as metadata['target'].
    """
    _check_size(class_size, n, support_size)
    rng = np.random.default_rng(seed)
    domain = binary_domain(support_size)
    target = rng.choice(np.array([-1, 1], dtype=np.int8), size=support_size)
    labels = _random_labels(rng, class_size, support_size, planted=target)
    order = rng.permutation(class_size)
    labels = labels[order]
    hypotheses = FiniteHypothesisClass(labels=labels)
    support = [domain[2 * x + (0 if target[x] == 1 else 1)] for x in range(support_size)]
    distributions = [DataDistribution(support, rng.dirichlet(np.ones(support_size)), name=f'D_{i}')
                     for i in range(n)]
    return MDLInstance(distributions, [ZeroOneLoss(hypotheses, domain)], hypotheses, domain,
                       name=f'realizable-{seed}',
                       metadata={'class_size': class_size, 'n': n, 'support_size': support_size, 'seed': seed,
                                 'target': int(np.flatnonzero(order == 0)[0])})


def make_matrix_instance(matrix, name: str = 'matrix') -> MDLInstance:
    """Builds an exact-evaluable instance whose risk matrix is `matrix`.

    Column k becomes a point mass on domain point k and hypothesis h has loss
    matrix[h, k] there; there is one loss, so n is the number of columns.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.size == 0:
        raise InvalidArgumentError('The risk matrix must be a nonempty 2-D array.')
    domain = [Datapoint(index=k) for k in range(matrix.shape[1])]
    distributions = [DataDistribution([z], [1.0], name=f'D_{z.index}') for z in domain]
    return MDLInstance(distributions, [TableLoss(matrix)], FiniteHypothesisClass(size=matrix.shape[0]), domain,
                       name=name, metadata={'shape': list(matrix.shape)})


def unit_ball_points(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Draws points uniformly from the d-dimensional unit ball."""
    directions = rng.normal(size=(count, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions * rng.random((count, 1)) ** (1.0 / dim)


def make_convex_gdro(dim: int, n: int, family: ConvexFamily | str, seed: int, support_size: int = 8,
                     noise: float = 0.1) -> MDLInstance:
    """Builds a group DRO instance with n uniform finite-support distributions.

    The bilinear family plays the simplex with the entropy distance-generating
    function against points z in [-1, 1]^dim, with loss (<theta, z> + 1) / 2.
    The logistic family plays the radius-2 Euclidean ball; each distribution
    labels unit-ball features by its own random direction, flipping a `noise`
    fraction, and the logistic loss is divided by log(1 + e^2).
    """
    try:
        family = ConvexFamily(family)
    except ValueError:
        raise InvalidArgumentError(f'Unknown convex family {family!r}.') from None
    if dim < 2:
        raise InvalidArgumentError(f'Convex instances need dim >= 2, got {dim}.')
    _positive(n=n, support_size=support_size)
    rng = np.random.default_rng(seed)
    probabilities = np.full(support_size, 1.0 / support_size)
    distributions = []
    if family == ConvexFamily.BILINEAR:
        space = EntropySimplex(dim)
        loss = LinearLoss(-1.0, 1.0)
        for i in range(n):
            points = rng.uniform(-1.0, 1.0, size=(support_size, dim))
            distributions.append(DataDistribution([Datapoint(vector=z) for z in points], probabilities,
                                                  name=f'D_{i}'))
        metadata = {'loss_low': -1.0, 'loss_high': 1.0}
    else:
        space = EuclideanBall(dim, radius=2.0)
        loss = LogisticLoss(math.log1p(math.exp(2.0)))
        for i in range(n):
            direction = unit_ball_points(rng, 1, dim)[0]
            points = unit_ball_points(rng, support_size, dim)
            labels = np.where(points @ direction >= 0, 1, -1)
            labels[rng.random(support_size) < noise] *= -1
            distributions.append(DataDistribution(
                [Datapoint(vector=x, label=int(y)) for x, y in zip(points, labels)], probabilities, name=f'D_{i}'))
        metadata = {'loss_scale': loss.scale, 'noise': noise}
    metadata.update(family=family.value, dim=dim, n=n, support_size=support_size, seed=seed)
    return MDLInstance(distributions, [loss], space, name=f'convex-{family.value}-{seed}', metadata=metadata)


@dataclass(frozen=True, eq=False)
class GroupSplit:
    """Labelled points tagged with their group."""
    vectors: np.ndarray
    labels: np.ndarray
    groups: np.ndarray

    def __len__(self):
        return len(self.labels)

    def group(self, g: int) -> tuple[np.ndarray, np.ndarray]:
        mask = self.groups == g
        return self.vectors[mask], self.labels[mask]

    def group_sizes(self, n_groups: int) -> np.ndarray:
        return np.bincount(self.groups, minlength=n_groups)


@dataclass(eq=False)
class SplitTask:
    """A grouped logistic task with train, validation and test splits."""
    train: GroupSplit
    validation: GroupSplit
    test: GroupSplit
    n_groups: int
    loss: LogisticLoss
    space: EuclideanBall
    metadata: dict = field(default_factory=dict)

    def split(self, name: str) -> GroupSplit:
        if name not in ('train', 'validation', 'test'):
            raise InvalidArgumentError(f'Unknown split {name!r}.')
        return getattr(self, name)

    def group_risks(self, theta, split: str = 'test') -> np.ndarray:
        data = self.split(split)
        risks = []
        for g in range(self.n_groups):
            vectors, labels = data.group(g)
            risks.append(float(self.loss.batch_values(theta, vectors, labels).mean()) if len(labels) else np.nan)
        return np.array(risks)

    def worst_group_risk(self, theta, split: str = 'test') -> float:
        return float(np.nanmax(self.group_risks(theta, split)))

    def average_risk(self, theta, split: str = 'test') -> float:
        """Returns the mean loss over the whole split, so larger groups weigh more."""
        data = self.split(split)
        return float(self.loss.batch_values(theta, data.vectors, data.labels).mean())


def _group_split(rng: np.random.Generator, size: int, dim: int, minority_ratio: float, noise: float) -> GroupSplit:
    minority = max(1, round(size * minority_ratio / (1 + minority_ratio)))
    groups = np.zeros(size, dtype=int)
    groups[rng.choice(size, size=minority, replace=False)] = 1
    vectors = unit_ball_points(rng, size, dim)
    labels = np.where(vectors[np.arange(size), groups] >= 0, 1, -1)
    labels[rng.random(size) < noise] *= -1
    return GroupSplit(vectors, labels, groups)


def make_imbalanced_logistic(train_size: int = 2000, validation_size: int = 400, test_size: int = 2000,
                             dim: int = 2, minority_ratio: float = 0.1, noise: float = 0.05,
                             seed: int = 0) -> SplitTask:
    """Builds the two-group logistic task with a rare second group.

    Group 0 is labelled by the sign of the first coordinate and group 1 by the
    sign of the second, so a model fitted to pooled data neglects group 1.
    Group 1 is `minority_ratio` times as frequent as group 0 in every split.
    """
    if dim < 2:
        raise InvalidArgumentError('The imbalanced task needs dim >= 2.')
    if not 0 < minority_ratio <= 1:
        raise InvalidArgumentError(f'The minority ratio must lie in (0, 1], got {minority_ratio}.')
    _positive(train_size=train_size, validation_size=validation_size, test_size=test_size)
    rng = np.random.default_rng(seed)
    train, validation, test = (_group_split(rng, size, dim, minority_ratio, noise)
                               for size in (train_size, validation_size, test_size))
    return SplitTask(train, validation, test, 2, LogisticLoss(math.log1p(math.exp(2.0))), EuclideanBall(dim, 2.0),
                     metadata={'minority_ratio': minority_ratio, 'noise': noise, 'seed': seed})


@dataclass
class InstanceSpec:
    """A serializable recipe for an instance.

    Attributes:
        family: The generator to call.
        seed: The instance seed.
        class_size: |H| for the random families.
        n: The number of distributions (random and convex families).
        support_size: Features per random instance, support points per convex one.
        dim: Parameter dimension of convex instances.
        width: w of the lower-bound family.
        copies: eta, the copies per feature (lower-bound) or the number of coins.
        gap: The eps of the lower-bound and coin families.
        variant: (x*, i) for the lower-bound family, or (i,) for coin hypothesis i.
        convex_family: The convex loss family.
    """
    family: InstanceFamily
    seed: int = 0
    class_size: int = 10
    n: int = 4
    support_size: int = 8
    dim: int = 2
    width: int = 2
    copies: int = 1
    gap: float = 0.1
    variant: tuple[int, ...] | None = None
    convex_family: ConvexFamily = ConvexFamily.BILINEAR

    def validate(self):
        if self.family in (InstanceFamily.LOWER_BOUND, InstanceFamily.COIN):
            _check_gap(self.gap)
        if self.family == InstanceFamily.LOWER_BOUND and self.variant is not None and len(self.variant) != 2:
            raise InvalidArgumentError('Lower-bound variants are (x*, i) pairs.')
        if self.family == InstanceFamily.COIN and self.variant is not None and len(self.variant) != 1:
            raise InvalidArgumentError('Coin hypotheses are a single coin index.')

    def build(self) -> MDLInstance:
        self.validate()
        logger.debug('Building %s instance with seed %d', self.family.value, self.seed)
        match self.family:
            case InstanceFamily.LOWER_BOUND:
                variant = tuple(self.variant) if self.variant is not None else None
                return make_lower_bound_family(self.width, self.copies, self.gap, variant, self.seed)
            case InstanceFamily.COIN:
                hypothesis = self.variant[0] if self.variant is not None else None
                return make_coin_instance(self.copies, self.gap, hypothesis, self.seed)
            case InstanceFamily.RANDOM_AGNOSTIC:
                return make_random_agnostic(self.class_size, self.n, self.support_size, self.seed)
            case InstanceFamily.REALIZABLE:
                return make_realizable(self.class_size, self.n, self.support_size, self.seed)
            case InstanceFamily.CONVEX:
                return make_convex_gdro(self.dim, self.n, self.convex_family, self.seed, self.support_size)

    @property
    def size(self) -> int:
        """The class size or dimension reported in run records."""
        match self.family:
            case InstanceFamily.LOWER_BOUND:
                return 2 ** self.width
            case InstanceFamily.COIN:
                return 2
            case InstanceFamily.CONVEX:
                return self.dim
        return self.class_size

    @property
    def distributions(self) -> int:
        match self.family:
            case InstanceFamily.LOWER_BOUND:
                return self.width * self.copies
            case InstanceFamily.COIN:
                return self.copies
        return self.n

    def to_config(self) -> dict[str, str]:
        """Returns the recipe as flat config entries."""
        entries = {
            'family': self.family.value, 'instance_seed': str(self.seed), 'class_size': str(self.class_size),
            'n': str(self.n), 'support_size': str(self.support_size), 'dim': str(self.dim),
            'width': str(self.width), 'copies': str(self.copies), 'gap': repr(self.gap),
            'convex_family': self.convex_family.value,
        }
        if self.variant is not None:
            entries['variant'] = ','.join(str(v) for v in self.variant)
        return entries
