"""
Management command to repeat the evaluation over a grid of M, gamma, SNR or T.

Usage: python manage.py sweep --axis M --values 6,7 [--config experiment.ini]
"""
from pathlib import Path

from apps.vqccs import storage
from apps.vqccs.experiments import SWEEP_AXES, checkpoint_path, parse_grid, run_sweep, write_sweep
from apps.vqccs.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Evaluates the solvers over a grid of one scenario parameter'
    kind = 'sweep'

    def add_command_arguments(self, parser):
        parser.add_argument('--axis', required=True, choices=sorted(SWEEP_AXES), help='Swept parameter')
        parser.add_argument('--values', required=True, help='Comma separated grid values')
        parser.add_argument('--checkpoint', help='Checkpoint path (default: <out>/checkpoint.json)')

    def run(self, config, **options):
        values = parse_grid(options['axis'], options['values'])
        checkpoint = None
        if 'vqc_cs' in config.solvers.solvers:
            path = Path(options['checkpoint']) if options.get('checkpoint') else checkpoint_path(config)
            checkpoint = storage.load_checkpoint(path)

        self.stdout.write(f"Sweeping {options['axis']} over {values}...")
        rows = run_sweep(config, options['axis'], values, checkpoint)
        path = write_sweep(config.output_dir / f"sweep_{options['axis']}.csv", rows, config.header())
        self.stdout.write(self.style.SUCCESS(f'Wrote {len(rows)} rows to {path}.'))
        return {'axis': options['axis'], 'values': values, 'rows': len(rows)}, path
