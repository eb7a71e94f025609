"""The command layer.

One controller per subcommand. Controllers turn parsed arguments into an
ExperimentConfig, run it, and write the records; they return the process
exit code.
"""
import argparse
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from mdl.codec import InstanceWriter, dump_instance, result_to_json, write_feedback, write_runs, write_transcript
from mdl.dynamics import budget_rounds, mdl_solve
from mdl.errors import ConfigError
from mdl.harness import (
    RUN_FIELDS,
    Algorithm,
    ExperimentConfig,
    RunRecord,
    lower_bound_sweep,
    run_experiment,
    sweep,
)

logger = logging.getLogger(__name__)

# argparse destinations that map onto config keys
OVERRIDE_FLAGS = ('algorithm', 'eps', 'delta', 't_scale', 'seeds', 'out', 'format', 'rounds', 'budget',
                  'transcript', 'axis', 'values', 'workers')


def overrides_from_args(args: argparse.Namespace) -> dict[str, str]:
    """Collects `--set KEY=VALUE` pairs and explicit flags as config entries; flags win."""
    entries = {}
    for pair in getattr(args, 'set', None) or []:
        key, separator, value = pair.partition('=')
        if not separator:
            raise ConfigError(key, f'Expected KEY=VALUE, got {pair!r}.')
        entries[key] = value
    if getattr(args, 'seed', None) is not None:
        entries['seeds'] = str(args.seed)
    for name in OVERRIDE_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            entries[name] = str(value)
    if getattr(args, 'timing', False):
        entries['timing'] = 'true'
    return entries


def experiment_from_args(args: argparse.Namespace, **forced: str) -> ExperimentConfig:
    """Reads --config (if given) and applies the command line on top of it."""
    entries = overrides_from_args(args)
    entries.update(forced)
    if getattr(args, 'config', None):
        return ExperimentConfig.from_file(args.config, entries)
    return ExperimentConfig.from_mapping(entries)


@contextmanager
def output_stream(out: str):
    if out == '-':
        yield sys.stdout
        return
    with open(out, 'w', newline='') as stream:
        yield stream


def emit_runs(records: list[RunRecord], experiment: ExperimentConfig):
    with output_stream(experiment.out) as stream:
        write_runs(records, stream, experiment.format, RUN_FIELDS)
    logger.info('Wrote %d records to %s', len(records), 'stdout' if experiment.out == '-' else experiment.out)


class SolveController:
    """Handles the solve command."""
    def handle_solve(self, args: argparse.Namespace) -> int:
        """Runs every seed and writes one record per seed.

        With a transcript path, the first seed is replayed with recording on and
        its rounds are written as CSV next to a JSON summary of the solve.
        """
        experiment = experiment_from_args(args)
        emit_runs(run_experiment(experiment), experiment)
        if experiment.transcript:
            self._write_transcript(experiment)
        return 0

    def _write_transcript(self, experiment: ExperimentConfig):
        if experiment.algorithm not in (Algorithm.MDL, Algorithm.GDRO):
            raise ConfigError('transcript', 'Transcripts are recorded for mdl and gdro runs only.')
        instance = experiment.load_instance()
        rounds = experiment.rounds or budget_rounds(instance, experiment.eps, experiment.delta, experiment.t_scale)
        result = mdl_solve(instance, rounds, experiment.seeds[0], record=True)
        path = Path(experiment.transcript)
        with open(path, 'w', newline='') as stream:
            write_transcript(result.transcript, stream)
        if result.auditor_transcript is not None:
            with open(path.with_suffix('.auditor.csv'), 'w', newline='') as stream:
                write_feedback(result.auditor_transcript, stream)
        path.with_suffix('.json').write_text(result_to_json(result))
        logger.info('Wrote transcript of seed %d to %s', experiment.seeds[0], path)


class GdroController:
    """Handles the gdro command."""
    def handle_gdro(self, args: argparse.Namespace) -> int:
        experiment = experiment_from_args(args, algorithm=Algorithm.GDRO.value)
        emit_runs(run_experiment(experiment), experiment)
        return 0


class SweepController:
    """Handles the sweep command."""
    def handle_sweep(self, args: argparse.Namespace) -> int:
        """Writes samples-to-target for every (axis value, seed)."""
        experiment = experiment_from_args(args)
        emit_runs(sweep(experiment), experiment)
        return 0


class LowerBoundSweepController:
    """Handles the lowerbound-sweep command."""
    def handle_lower_bound_sweep(self, args: argparse.Namespace) -> int:
        experiment = experiment_from_args(args, family='lower-bound')
        emit_runs(lower_bound_sweep(experiment), experiment)
        return 0


class RmdlController:
    """Handles the rmdl command."""
    def handle_rmdl(self, args: argparse.Namespace) -> int:
        """Runs resampling MDL, then online group DRO and pooled ERM at the matched budget."""
        experiment = experiment_from_args(args, algorithm=Algorithm.RMDL.value)
        records = []
        for algorithm in (Algorithm.RMDL, Algorithm.GROUP_DRO, Algorithm.POOLED_ERM):
            records += run_experiment(experiment.replace(algorithm=algorithm))
        emit_runs(records, experiment)
        return 0


class GenerateController:
    """Handles the generate command."""
    def handle_generate(self, args: argparse.Namespace) -> int:
        """Writes the configured instance as an instance file."""
        experiment = experiment_from_args(args)
        if experiment.instance is None:
            raise ConfigError('family', 'generate needs an instance family.')
        if experiment.out == '-':
            sys.stdout.write(InstanceWriter().write(experiment.instance.build()))
        else:
            dump_instance(experiment.instance.build(), experiment.out)
        return 0
