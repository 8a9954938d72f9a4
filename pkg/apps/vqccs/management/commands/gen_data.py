"""
Management command to generate the train/validation/test datasets.

Usage: python manage.py gen_data --config experiment.ini [--seed 2023] [--export-csv]
"""
from apps.vqccs.experiments import data_dir, generate_datasets
from apps.vqccs.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Generates grant-free access datasets and their manifest'
    kind = 'gen_data'

    def add_command_arguments(self, parser):
        parser.add_argument('--export-csv', action='store_true', help='Also write per-instance CSV exports')

    def run(self, config, **options):
        scenario = config.scenario
        self.stdout.write(
            f'Generating datasets (N={scenario.n_devices}, M={scenario.n_measurements}, '
            f'rho={scenario.activity_rate}, gamma={scenario.correlation}, SNR={scenario.snr_db} dB)...'
        )
        manifest = generate_datasets(config, export_csv=options.get('export_csv', False))
        for split, count in manifest['counts'].items():
            self.stdout.write(self.style.SUCCESS(f'Wrote {count} {split} instances.'))
        self.stdout.write(self.style.SUCCESS(f"Content hash: {manifest['content_hash']}"))
        summary = {'counts': manifest['counts'], 'content_hash': manifest['content_hash']}
        return summary, data_dir(config)
