"""Text formats.

Instances are JSON documents. Probabilities are written as shortest
round-trip decimal strings, so reading a written instance reproduces every
probability bit for bit:

{
  "format": "mdl-instance/1",
  "name": "lower-bound",
  "domain": [{"index": 0, "feature": 0, "label": 1}, ...],
  "hypothesis_space": {"kind": "finite", "labels": [[1, -1], ...]},
  "losses": [{"kind": "zero-one"}],
  "distributions": [{"name": "D_0#0", "support": [{"index": 0}, ...], "probabilities": ["0.3", ...]}],
  "metadata": {...}
}

Solve results are sorted-key JSON, transcripts and run records CSV.
"""
import csv
import dataclasses
import json
import logging
from enum import Enum
from pathlib import Path
from typing import TextIO

import numpy as np

from mdl.core import (
    DataDistribution,
    Datapoint,
    EntropySimplex,
    EuclideanBall,
    EuclideanBox,
    FiniteHypothesisClass,
    LinearLoss,
    LogisticLoss,
    MDLInstance,
    TableLoss,
    ZeroOneLoss,
)
from mdl.dynamics import SolveResult, Transcript
from mdl.errors import InvalidArgumentError, UnsupportedError
from mdl.learners import FeedbackRecord

logger = logging.getLogger(__name__)

INSTANCE_FORMAT = 'mdl-instance/1'

TRANSCRIPT_FIELDS = ('round', 'sampled_distribution', 'sampled_loss', 'observed',
                     'min_action', 'max_action', 'learner_cost', 'auditor_cost')
FEEDBACK_FIELDS = ('round', 'observed', 'weights', 'estimated_costs')


class OutputFormat(Enum):
    CSV = 'csv'
    JSON = 'json'


def _vector(values) -> list[float]:
    return [float(v) for v in np.asarray(values, dtype=float)]


def _jsonable(value):
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    return value


class InstanceWriter:
    """Serializes instances whose distributions have finite supports."""

    def write(self, instance: MDLInstance) -> str:
        positions = {id(z): k for k, z in enumerate(instance.domain)}
        document = {
            'format': INSTANCE_FORMAT,
            'name': instance.name,
            'domain': [self._point(z) for z in instance.domain],
            'hypothesis_space': self._space(instance.hypothesis_space),
            'losses': [self._loss(loss) for loss in instance.losses],
            'distributions': [self._distribution(d, positions) for d in instance.distributions],
            'metadata': _jsonable(instance.metadata),
        }
        return json.dumps(document, sort_keys=True, indent=2) + '\n'

    def _point(self, z: Datapoint) -> dict:
        point = {'index': z.index, 'feature': z.feature, 'label': z.label}
        if z.vector is not None:
            point['vector'] = _vector(z.vector)
        return {key: value for key, value in point.items() if value is not None}

    def _space(self, space) -> dict:
        match space:
            case FiniteHypothesisClass(labels=None):
                return {'kind': 'finite', 'size': space.size}
            case FiniteHypothesisClass():
                return {'kind': 'finite', 'labels': space.labels.tolist()}
            case EntropySimplex():
                return {'kind': 'simplex', 'dimension': space.dimension}
            case EuclideanBall():
                return {'kind': 'ball', 'dimension': space.dimension, 'radius': space.radius}
            case EuclideanBox():
                return {'kind': 'box', 'dimension': space.dimension, 'low': space.low, 'high': space.high}
        raise UnsupportedError(f'Cannot serialize hypothesis space {type(space).__name__}.')

    def _loss(self, loss) -> dict:
        match loss:
            case ZeroOneLoss():
                return {'kind': 'zero-one'}
            case TableLoss():
                return {'kind': 'table', 'table': loss.table.tolist()}
            case LinearLoss():
                return {'kind': 'linear', 'low': loss.low, 'high': loss.high}
            case LogisticLoss():
                return {'kind': 'logistic', 'scale': loss.scale}
        raise UnsupportedError(f'Cannot serialize loss {type(loss).__name__}.')

    def _distribution(self, distribution: DataDistribution, positions: dict[int, int]) -> dict:
        if not distribution.finite:
            raise UnsupportedError(f'Distribution {distribution.name!r} has no finite support to serialize.')
        support = [{'domain': positions[id(z)]} if id(z) in positions else self._point(z)
                   for z in distribution.support]
        return {
            'name': distribution.name,
            'support': support,
            'probabilities': [repr(float(p)) for p in distribution.probabilities],
        }


class InstanceReader:
    """Parses documents written by InstanceWriter.

    Raises:
        InvalidArgumentError: If the document is malformed.
    """

    def read(self, text: str) -> MDLInstance:
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidArgumentError(f'Instance file is not valid JSON: {e}') from e
        if not isinstance(document, dict) or document.get('format') != INSTANCE_FORMAT:
            raise InvalidArgumentError(f'Expected an instance document in format {INSTANCE_FORMAT}.')
        try:
            domain = [self._point(p) for p in document.get('domain', [])]
            space = self._space(document['hypothesis_space'])
            losses = [self._loss(spec, space, domain) for spec in document['losses']]
            distributions = [self._distribution(spec, domain) for spec in document['distributions']]
        except (KeyError, TypeError, IndexError) as e:
            raise InvalidArgumentError(f'Malformed instance document: {e!r}') from e
        return MDLInstance(distributions, losses, space, domain, name=document.get('name', ''),
                           metadata=document.get('metadata', {}))

    def _point(self, spec: dict) -> Datapoint:
        vector = np.array(spec['vector'], dtype=float) if 'vector' in spec else None
        return Datapoint(index=spec.get('index'), feature=spec.get('feature'), label=spec.get('label'),
                         vector=vector)

    def _space(self, spec: dict):
        match spec['kind']:
            case 'finite' if 'labels' in spec:
                return FiniteHypothesisClass(labels=spec['labels'])
            case 'finite':
                return FiniteHypothesisClass(size=spec['size'])
            case 'simplex':
                return EntropySimplex(spec['dimension'])
            case 'ball':
                return EuclideanBall(spec['dimension'], spec['radius'])
            case 'box':
                return EuclideanBox(spec['dimension'], spec['low'], spec['high'])
        raise InvalidArgumentError(f'Unknown hypothesis space kind {spec["kind"]!r}.')

    def _loss(self, spec: dict, space, domain: list[Datapoint]):
        match spec['kind']:
            case 'zero-one':
                return ZeroOneLoss(space, domain)
            case 'table':
                return TableLoss(spec['table'])
            case 'linear':
                return LinearLoss(spec['low'], spec['high'])
            case 'logistic':
                return LogisticLoss(spec['scale'])
        raise InvalidArgumentError(f'Unknown loss kind {spec["kind"]!r}.')

    def _distribution(self, spec: dict, domain: list[Datapoint]) -> DataDistribution:
        support = [domain[p['domain']] if 'domain' in p else self._point(p) for p in spec['support']]
        try:
            probabilities = [float(p) for p in spec['probabilities']]
        except ValueError as e:
            raise InvalidArgumentError(f'Unreadable probability in {spec.get("name")!r}: {e}') from e
        return DataDistribution(support, probabilities, name=spec.get('name', ''))


def dump_instance(instance: MDLInstance, path: str | Path):
    Path(path).write_text(InstanceWriter().write(instance))
    logger.info('Wrote instance %s to %s', instance.name or '(unnamed)', path)


def load_instance(path: str | Path) -> MDLInstance:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InvalidArgumentError(f'Cannot read instance file {path}: {e.strerror}') from e
    return InstanceReader().read(text)


def result_to_json(result: SolveResult) -> str:
    return json.dumps(result.to_dict(), sort_keys=True, indent=2) + '\n'


def _cells(values) -> str:
    return ' '.join(repr(float(v)) for v in np.asarray(values, dtype=float))


def write_transcript(transcript: Transcript, stream: TextIO):
    """Writes one CSV row per round; vectors are space-separated."""
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(TRANSCRIPT_FIELDS)
    for record in transcript:
        distribution, loss = record.sampled_pair if record.sampled_pair is not None else ('', '')
        writer.writerow([
            record.round, distribution, loss,
            ' '.join(f'{i}:{j}' for i, j in record.observed),
            _cells(record.min_action), _cells(record.max_action),
            _cells(record.learner_cost), _cells(record.auditor_cost),
        ])


def write_feedback(records: list[FeedbackRecord], stream: TextIO):
    """Writes a partial-feedback learner's transcript, one CSV row per update."""
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(FEEDBACK_FIELDS)
    for record in records:
        writer.writerow([record.round, ' '.join(str(i) for i in record.observed),
                         _cells(record.weights), _cells(record.estimated_costs)])


def _cell(value) -> str:
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_runs(records: list, stream: TextIO, output_format: OutputFormat, header: tuple[str, ...]):
    """Writes run records (dataclasses whose fields are `header`) as CSV or sorted-key JSON."""
    if output_format == OutputFormat.JSON:
        rows = [{name: getattr(record, name) for name in header} for record in records]
        stream.write(json.dumps(rows, sort_keys=True, indent=2) + '\n')
        return
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(header)
    for record in records:
        writer.writerow([_cell(getattr(record, name)) for name in header])


def record_fields(record_type) -> tuple[str, ...]:
    return tuple(f.name for f in dataclasses.fields(record_type))
