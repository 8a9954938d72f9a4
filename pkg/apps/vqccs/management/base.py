"""
Shared flags and error handling of the experiment commands.
"""
from django.core.management.base import BaseCommand, CommandError

from apps.vqccs.config import cli_overrides, load_config
from apps.vqccs.exceptions import VqccsError, exit_code_for
from apps.vqccs.models import record_run

STATUS_BY_CODE = {3: 'diverged'}


def describe(error):
    """Error message plus field-level details and expected/found shapes."""
    lines = [str(error)]
    for name, messages in sorted(getattr(error, 'field_errors', {}).items()):
        lines.append(f'  {name}: {"; ".join(messages)}')
    if getattr(error, 'expected', None) is not None:
        lines.append(f'  expected: {error.expected}')
        lines.append(f'  found:    {error.found}')
    return '\n'.join(lines)


class ExperimentCommand(BaseCommand):
    """
    Base for gen_data, train, eval, sweep and report.

    Subclasses implement ``run(config, **options)`` returning
    ``(summary, output_path)``. Library errors become ``CommandError`` with
    exit code 1 (validation/shape), 2 (IO/missing data) or 3 (divergence).
    """
    kind = None

    def add_arguments(self, parser):
        parser.add_argument('--config', help='INI configuration file (defaults reproduce the reference scenario)')
        parser.add_argument('--seed', type=int, help='Override scenario and training seeds')
        parser.add_argument('--workers', type=int, help='Worker threads for generation and evaluation')
        parser.add_argument('--out', help='Output directory')
        parser.add_argument('--shots', type=int, help='Measurement shots per expectation (0 = exact)')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def run(self, config, **options):
        raise NotImplementedError

    def handle(self, *args, **options):
        config = None
        try:
            config = load_config(options.get('config'), overrides=cli_overrides(options))
            run_options = {key: value for key, value in options.items() if key != 'config'}
            summary, output_path = self.run(config, **run_options)
        except (VqccsError, OSError) as exc:
            code = exit_code_for(exc)
            record_run(self.kind, config, status=STATUS_BY_CODE.get(code, 'failed'), message=str(exc))
            raise CommandError(describe(exc), returncode=code) from exc
        record_run(self.kind, config, output_path=output_path, summary=summary)
