"""
Management command to summarize the last evaluation as text and PDF.

Usage: python manage.py report [--config experiment.ini] [--runs 10]
"""
from apps.vqccs import storage
from apps.vqccs.exceptions import DatasetMissingError
from apps.vqccs.experiments import eval_dir
from apps.vqccs.management.base import ExperimentCommand
from apps.vqccs.models import recent_runs
from apps.vqccs.reports import summary_lines, write_pdf_report, write_text_report


class Command(ExperimentCommand):
    help = 'Writes report.txt and report.pdf from the evaluation summary'
    kind = 'report'

    def add_command_arguments(self, parser):
        parser.add_argument('--runs', type=int, default=10, help='Registry entries to list')

    def run(self, config, **options):
        summary_path = eval_dir(config) / 'summary.json'
        if not summary_path.exists():
            raise DatasetMissingError(f'{summary_path} does not exist; run eval first.')
        summary = storage.read_json(summary_path)
        lines = summary_lines(summary, recent_runs(options.get('runs', 10)))

        text_path = write_text_report(config.output_dir / 'report.txt', lines)
        pdf_path = write_pdf_report(config.output_dir / 'report.pdf', 'VQC-CS evaluation report', lines)
        for line in lines:
            self.stdout.write(line)
        self.stdout.write(self.style.SUCCESS(f'Report written to {text_path} and {pdf_path}.'))
        return {'lines': len(lines)}, text_path
