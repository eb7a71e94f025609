"""Problem transformations.

Collaborative learning over a finite class relaxes to a linear problem over
the simplex of randomized hypotheses; majority vote turns a randomized binary
classifier back into a deterministic one at a factor 2. Group DRO is the MDL
recipe with mirror descent as the learner, optionally on empirical batches.
Classes of finite VC dimension become finite classes by projecting them on a
sample.
"""
import logging
import math
from abc import ABC, abstractmethod

import numpy as np
from scipy.special import comb

from mdl.core import (
    ConvexParamSpace,
    DataDistribution,
    Datapoint,
    EntropySimplex,
    FiniteHypothesisClass,
    Labeling,
    MDLInstance,
    SimplexWeights,
    SmoothLoss,
    TableLoss,
)
from mdl.dynamics import SolveResult, budget_rounds, mdl_solve
from mdl.errors import InvalidArgumentError, UnsupportedError

logger = logging.getLogger(__name__)


class EmpiricalDistribution(DataDistribution):
    """The uniform distribution over a batch of datapoints.

    Repeated points (the same Datapoint object) are merged and weighted by
    their multiplicity.
    """
    def __init__(self, batch: list[Datapoint], name: str = ''):
        if not batch:
            raise InvalidArgumentError(f'Empirical distribution {name!r} needs a nonempty batch.')
        counts = {}
        points = {}
        for z in batch:
            counts[id(z)] = counts.get(id(z), 0) + 1
            points.setdefault(id(z), z)
        support = list(points.values())
        probabilities = np.array([counts[id(z)] for z in support], dtype=float) / len(batch)
        super().__init__(support, probabilities, name=name)
        self.batch = list(batch)


class RelaxedLoss(SmoothLoss):
    """The linear loss E_{f ~ h} l(f, z) of a randomized hypothesis h over a finite class."""
    norm_ord = np.inf
    bound = 1.0
    linear = True

    def __init__(self, base: TableLoss):
        self.base = base

    def value(self, theta, z):
        return float(np.asarray(theta, dtype=float) @ self.base.values(z))

    def gradient(self, theta, z):
        return np.array(self.base.values(z), dtype=float)

    def risk(self, theta, distribution):
        return float(np.asarray(theta, dtype=float) @ self.base.risks(distribution))


def relax_collaborative(instance: MDLInstance) -> MDLInstance:
    """Returns the instance over the simplex Delta(H) with the relaxed linear losses.

    Any eps-optimal point of the relaxed instance is an eps-optimal randomized
    hypothesis of the original one.

    Raises:
        UnsupportedError: If the class is not finite or a loss is not table-valued.
    """
    if not instance.finite_class:
        raise UnsupportedError('Only finite hypothesis classes can be relaxed.')
    if not all(isinstance(loss, TableLoss) for loss in instance.losses):
        raise UnsupportedError('Relaxation needs table-valued losses.')
    metadata = dict(instance.metadata, relaxation_of=instance.name, eps_optimal_transfers=True)
    return MDLInstance(
        distributions=[distribution.copy() for distribution in instance.distributions],
        losses=[RelaxedLoss(loss) for loss in instance.losses],
        hypothesis_space=EntropySimplex(instance.hypothesis_space.size),
        domain=instance.domain,
        name=f'{instance.name}-relaxed' if instance.name else 'relaxed',
        metadata=metadata)


def majority_vote(weights: SimplexWeights, hypotheses: FiniteHypothesisClass) -> Labeling:
    """Returns the deterministic classifier labelling x with +1 iff Pr_{f~h}(f(x) = +1) > 1/2.

    Ties go to -1.

    Raises:
        UnsupportedError: If the class is not given by binary label tables.
    """
    if hypotheses.labels is None:
        raise UnsupportedError('Majority vote needs a binary classifier class.')
    if len(weights) != hypotheses.size:
        raise InvalidArgumentError(f'Expected {hypotheses.size} weights, got {len(weights)}.')
    positive = weights.weights @ (hypotheses.labels == 1)
    return Labeling(np.where(positive > 0.5, 1, -1).astype(np.int8))


def _check_convex(instance: MDLInstance):
    if not isinstance(instance.hypothesis_space, ConvexParamSpace):
        raise UnsupportedError('Group DRO needs a parameter space with a distance-generating function.')
    if not all(isinstance(loss, SmoothLoss) for loss in instance.losses):
        raise UnsupportedError('Group DRO needs differentiable losses.')


def gdro_run(instance: MDLInstance, eps: float, delta: float, seed: int, t_scale: float = 1.0,
             rounds: int | None = None, record: bool = False) -> SolveResult:
    """Runs the MDL recipe with mirror descent from the center as the learner and ELP over distributions.

    The horizon is required_iterations with gamma_- equal to the Bregman radius,
    unless `rounds` overrides it.
    """
    _check_convex(instance)
    rounds = rounds or budget_rounds(instance, eps, delta, t_scale)
    logger.debug('Group DRO on %s for %d rounds', instance.name or 'instance', rounds)
    return mdl_solve(instance, rounds, seed, record=record)


def gdro_solve(instance: MDLInstance, eps: float, delta: float, seed: int, t_scale: float = 1.0,
               rounds: int | None = None) -> np.ndarray:
    """Returns the averaged parameters of a group DRO run; see gdro_run."""
    return gdro_run(instance, eps, delta, seed, t_scale, rounds).avg_min_action


def empirical_instance(instance: MDLInstance, batches: list[list[Datapoint]]) -> MDLInstance:
    """Replaces every distribution by the uniform distribution over its batch."""
    if len(batches) != instance.n:
        raise InvalidArgumentError(f'Expected {instance.n} batches, got {len(batches)}.')
    distributions = [EmpiricalDistribution(batch, name=f'{d.name}-empirical')
                     for batch, d in zip(batches, instance.distributions)]
    return MDLInstance(distributions, instance.losses, instance.hypothesis_space, instance.domain,
                       name=f'{instance.name}-empirical', metadata=dict(instance.metadata))


def empirical_gdro(instance: MDLInstance, batches: list[list[Datapoint]], eps: float, delta: float,
                   seed: int, t_scale: float = 1.0, rounds: int | None = None) -> np.ndarray:
    """Runs gdro_solve on the empirical distributions of the batches; guarantees hold for empirical risks.

    Raises:
        InvalidArgumentError: If any batch is empty.
    """
    return gdro_solve(empirical_instance(instance, batches), eps, delta, seed, t_scale, rounds)


class VCFamily(ABC):
    """A binary hypothesis family on the real line, evaluable at arbitrary points."""
    vc_dimension: int

    @abstractmethod
    def label(self, parameter, points: np.ndarray) -> np.ndarray:
        """Returns the +1/-1 labels of the hypothesis with this parameter."""

    @abstractmethod
    def candidates(self, points: np.ndarray) -> list:
        """Returns parameters realizing every labelling the family induces on the points."""


class ThresholdClass(VCFamily):
    """h_t(x) = +1 iff x >= t."""
    vc_dimension = 1

    def label(self, parameter, points):
        return np.where(np.asarray(points, dtype=float) >= parameter, 1, -1)

    def candidates(self, points):
        return [float(t) for t in np.unique(points)] + [math.inf]


class IntervalClass(VCFamily):
    """h_{a,b}(x) = +1 iff a <= x <= b; (inf, -inf) is the empty interval."""
    vc_dimension = 2

    def label(self, parameter, points):
        low, high = parameter
        points = np.asarray(points, dtype=float)
        return np.where((points >= low) & (points <= high), 1, -1)

    def candidates(self, points):
        values = [float(x) for x in np.unique(points)]
        spans = [(a, b) for i, a in enumerate(values) for b in values[i:]]
        return spans + [(math.inf, -math.inf)]


def project_class(family: VCFamily, points, hypotheses: list | None = None) -> FiniteHypothesisClass:
    """Projects a family on sample points, keeping one representative per label pattern.

    Args:
        family: The hypothesis family.
        points: The sample x_1..x_N.
        hypotheses: Parameters to project; every pattern the family realizes
            on the points when omitted.

    Returns:
        A class labelled on the sample points whose `parameters` hold the
        first hypothesis of each pattern.
    """
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        raise InvalidArgumentError('Projection needs at least one sample point.')
    parameters = family.candidates(points) if hypotheses is None else list(hypotheses)
    patterns = {}
    for parameter in parameters:
        labels = family.label(parameter, points).astype(np.int8)
        patterns.setdefault(labels.tobytes(), (parameter, labels))
    representatives = list(patterns.values())
    logger.debug('Projected %d hypotheses on %d points to %d patterns',
                 len(parameters), points.size, len(representatives))
    return FiniteHypothesisClass(
        labels=np.array([labels for _, labels in representatives]),
        parameters=[parameter for parameter, _ in representatives])


def haussler_net_size(vc_dimension: int, eps: float, delta: float) -> int:
    """Returns the sample size N >= (8d/eps) log(8d/eps) + (4/eps) log(2/delta) making a projection an eps-net."""
    if vc_dimension < 1 or not 0 < eps < 1 or not 0 < delta < 1:
        raise InvalidArgumentError('Need d >= 1 and eps, delta in (0, 1).')
    ratio = 8 * vc_dimension / eps
    return math.ceil(ratio * math.log(ratio) + (4 / eps) * math.log(2 / delta))


def sauer_bound(points: int, vc_dimension: int) -> int:
    """Returns sum_{i <= d} C(N, i), the most labellings a class of VC dimension d induces on N points."""
    return int(sum(comb(points, i, exact=True) for i in range(vc_dimension + 1)))
