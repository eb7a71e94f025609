"""Command line interface for on-demand multi-distribution learning.

Usage:
    python -m mdl.cli solve --config experiment.env --seeds 0,1,2
    python -m mdl.cli sweep --set family=random-agnostic --set axis=n --set values=2,4,8
    python -m mdl.cli generate --set family=lower-bound --set width=3 --out instance.json
"""
import argparse
import logging
import sys

from mdl.config import config
from mdl.controller import (
    GdroController,
    GenerateController,
    LowerBoundSweepController,
    RmdlController,
    SolveController,
    SweepController,
)
from mdl.errors import MDLError, PartialResultError

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument('--config', help='KEY=value experiment file')
    parser.add_argument('--set', action='append', metavar='KEY=VALUE', help='override one config key')
    seeds = parser.add_mutually_exclusive_group()
    seeds.add_argument('--seed', type=int, help='a single master seed')
    seeds.add_argument('--seeds', help='comma-separated master seeds')
    parser.add_argument('--eps', type=float, help='target accuracy')
    parser.add_argument('--delta', type=float, help='failure probability')
    parser.add_argument('--t-scale', dest='t_scale', type=float, help='multiplier on the round budget')
    parser.add_argument('--rounds', type=int, help='fixed number of rounds instead of the budget')
    parser.add_argument('--out', help="output path, '-' for stdout")
    parser.add_argument('--format', choices=('csv', 'json'))
    parser.add_argument('--workers', type=int, help='threads used to fan out seeds')
    parser.add_argument('--timing', action='store_true', help='record wall time')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='mdl', description='On-demand multi-distribution learning.')
    commands = parser.add_subparsers(dest='command', required=True)

    solve = commands.add_parser('solve', help='run an algorithm on an instance for every seed')
    _add_common(solve)
    solve.add_argument('--algorithm', choices=('mdl', 'gdro', 'batch-erm'))
    solve.add_argument('--budget', type=int, help='per-distribution samples for batch-erm')
    solve.add_argument('--transcript', help='write the first seed\'s rounds to this CSV file')
    solve.set_defaults(handler=SolveController().handle_solve)

    sweep = commands.add_parser('sweep', help='samples-to-target along one axis')
    _add_common(sweep)
    sweep.add_argument('--algorithm', choices=('mdl', 'gdro', 'batch-erm'))
    sweep.add_argument('--axis', choices=('n', 'eps', 'class-size'))
    sweep.add_argument('--values', help='comma-separated axis values')
    sweep.set_defaults(handler=SweepController().handle_sweep)

    lower_bound = commands.add_parser('lowerbound-sweep', help='MDL against batch ERM on lower-bound instances')
    _add_common(lower_bound)
    lower_bound.add_argument('--values', help='comma-separated values of n')
    lower_bound.set_defaults(handler=LowerBoundSweepController().handle_lower_bound_sweep)

    gdro = commands.add_parser('gdro', help='group DRO on a convex instance')
    _add_common(gdro)
    gdro.set_defaults(handler=GdroController().handle_gdro)

    rmdl = commands.add_parser('rmdl', help='resampling MDL against group DRO and pooled ERM on the imbalanced task')
    _add_common(rmdl)
    rmdl.add_argument('--budget', type=int, help='training draws of the group DRO and pooled baselines')
    rmdl.set_defaults(handler=RmdlController().handle_rmdl)

    generate = commands.add_parser('generate', help='write an instance file')
    _add_common(generate)
    generate.set_defaults(handler=GenerateController().handle_generate)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=config.log_level, format=LOG_FORMAT, stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except PartialResultError as e:
        logger.error('Stopped after %d rounds: %s', e.result.rounds, e)
        return e.exit_code
    except MDLError as e:
        logger.error('%s', e)
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
