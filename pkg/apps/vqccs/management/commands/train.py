"""
Management command to train VQC-CS (and the detection MLP) on the train split.

Usage: python manage.py train --config experiment.ini [--checkpoint path]
"""
from pathlib import Path

from apps.vqccs.exceptions import TrainingDivergedError
from apps.vqccs.experiments import checkpoint_path, run_training, save_training_outputs
from apps.vqccs.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Trains the unrolled VQC-CS pipeline and writes a checkpoint'
    kind = 'train'

    def add_command_arguments(self, parser):
        parser.add_argument('--checkpoint', help='Checkpoint path (default: <out>/checkpoint.json)')

    def run(self, config, **options):
        train = config.train
        path = Path(options['checkpoint']) if options.get('checkpoint') else checkpoint_path(config)
        self.stdout.write(
            f'Training VQC-CS (T={train.n_iterations}, L={train.n_layers}, epochs={train.epochs}, '
            f'restarts={train.n_restarts})...'
        )
        try:
            checkpoint = run_training(config, path)
        except TrainingDivergedError as exc:
            if exc.checkpoint is not None:
                save_training_outputs(config, exc.checkpoint, path)
                self.stdout.write(self.style.WARNING(f'Training diverged; last finite checkpoint saved to {path}.'))
            raise

        self.stdout.write(self.style.SUCCESS(
            f'Final validation loss {checkpoint.best_val_loss:.6f} (epoch {checkpoint.best_epoch}).'
        ))
        self.stdout.write(self.style.SUCCESS(f'Checkpoint written to {path}.'))
        summary = {'best_val_loss': checkpoint.best_val_loss, 'best_epoch': checkpoint.best_epoch}
        return summary, path
