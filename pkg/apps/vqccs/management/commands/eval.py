"""
Management command to evaluate every solver on the test split.

Usage: python manage.py eval --config experiment.ini [--checkpoint path] [--shots 0]
"""
from pathlib import Path

from apps.vqccs import storage
from apps.vqccs.eval_metrics import to_db
from apps.vqccs.experiments import (
    checkpoint_path, dataset_path, eval_dir, evaluate, load_split, write_eval_outputs,
)
from apps.vqccs.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Runs ISTA, FISTA, OAMP and VQC-CS on the test split and writes MSE/ROC/AUC files'
    kind = 'eval'

    def add_command_arguments(self, parser):
        parser.add_argument('--checkpoint', help='Checkpoint path (default: <out>/checkpoint.json)')

    def run(self, config, **options):
        test = load_split(config, 'test')
        validation = load_split(config, 'validation') if dataset_path(config, 'validation').exists() else None
        checkpoint = None
        if 'vqc_cs' in config.solvers.solvers:
            path = Path(options['checkpoint']) if options.get('checkpoint') else checkpoint_path(config)
            checkpoint = storage.load_checkpoint(path)

        self.stdout.write(f'Evaluating {", ".join(config.solvers.solvers)} on {len(test)} instances...')
        report = evaluate(config, test, checkpoint, validation)
        paths = write_eval_outputs(report, eval_dir(config), config.header())

        for solver in report.solvers:
            final = report.final_mse(solver)
            self.stdout.write(
                f'{solver:<8} final MSE {final:.4g} ({to_db(final):.2f} dB), AUC {report.auc[solver]:.4f}'
            )
        for detector, value in report.auc.items():
            if detector not in report.mse:
                self.stdout.write(f'{detector:<8} AUC {value:.4f}')
        self.stdout.write(self.style.SUCCESS(f'Results written to {eval_dir(config)}.'))
        return {row['solver']: row.get('auc') for row in report.summary()}, paths['summary']
