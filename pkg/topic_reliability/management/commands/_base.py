"""
Shared options and exit-code handling for the pipeline commands.

Exit codes: 0 on success, 1 for invalid input or configuration, 2 when a
computation failed. A partially failed run exits 1 if any K was rejected
as invalid input and 2 otherwise.
"""

import logging

from django.core.management.base import BaseCommand, CommandError

from topic_reliability.exceptions import ComputationError, ValidationError
from topic_reliability.services import PIPELINES, record_run, summarise_coefficients
from topic_reliability.utils import load_run_config

logger = logging.getLogger('topic_reliability.commands')

EXIT_INVALID_INPUT = 1
EXIT_COMPUTATION = 2


class PipelineCommand(BaseCommand):
    verb = None
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Path to a JSON run config')
        parser.add_argument('--preset', help='Named experiment preset (trivial, nontrivial or removal)')
        parser.add_argument('--seed', type=int, help='Master seed; overrides the config')
        parser.add_argument('--out', help='Output directory; overrides the config')
        parser.add_argument('--jobs', type=int, help='Parallel fits; overrides the config')

    def handle(self, *args, **options):
        if not options.get('config') and not options.get('preset'):
            raise CommandError('Pass --config or --preset', returncode=EXIT_INVALID_INPUT)
        try:
            run_config = load_run_config(
                options.get('config'),
                preset=options.get('preset'),
                seed=options.get('seed'),
                out=options.get('out'),
                jobs=options.get('jobs'),
            )
            result = PIPELINES[self.verb](run_config)
        except ValidationError as e:
            raise CommandError(str(e), returncode=EXIT_INVALID_INPUT) from e
        except ComputationError as e:
            raise CommandError(str(e), returncode=EXIT_COMPUTATION) from e

        record_run(result, run_config)
        for line in summarise_coefficients(result):
            self.stdout.write(line)
        if result.failures:
            failed = ', '.join(f['task'] for f in result.failures)
            raise CommandError(f"{self.verb} failed for {failed}; see {result.directory / 'manifest.json'}",
                               returncode=EXIT_INVALID_INPUT if result.invalid_input else EXIT_COMPUTATION)
        self.stdout.write(self.style.SUCCESS(f"{self.verb}: wrote {len(result.files)} files to {result.directory}"))
