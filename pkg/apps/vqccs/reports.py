"""
Text and PDF summaries of an evaluation run.
"""
import io
import math

from reportlab.lib.pagesizes import A4
from reportlab.pdfgen import canvas

from .storage import atomic_write


def _fmt(value, spec='.4g'):
    if value is None:
        return '-'
    if isinstance(value, float) and math.isinf(value):
        return '-inf' if value < 0 else 'inf'
    return format(value, spec)


def summary_lines(summary, runs=()):
    """Plain-text report lines from an eval ``summary.json`` and registry runs."""
    lines = [
        f"VQC-CS evaluation report (config {summary.get('config_hash', '?')}, "
        f"version {summary.get('version', '?')})",
        f"Test instances: {summary.get('n_samples', 0)}",
        '',
        f"{'solver':<12} {'final MSE':>12} {'MSE [dB]':>10} {'NMSE':>10} {'AUC':>8}",
    ]
    for row in summary.get('solvers', []):
        lines.append(
            f"{row['solver']:<12} {_fmt(row.get('final_mse')):>12} "
            f"{_fmt(row.get('final_mse_db'), '.2f'):>10} {_fmt(row.get('normalized_mse')):>10} "
            f"{_fmt(row.get('auc'), '.4f'):>8}"
        )
    if runs:
        lines += ['', 'Recent runs:']
        for run in runs:
            lines.append(
                f"  {run.created_at:%Y-%m-%d %H:%M}  {run.kind:<9} {run.status:<9} "
                f"{run.config_hash}  {run.output_path}"
            )
    return lines


def write_text_report(path, lines):
    with atomic_write(path) as handle:
        handle.write('\n'.join(lines) + '\n')
    return path


def write_pdf_report(path, title, lines):
    """One line per row on A4 pages."""
    buffer = io.BytesIO()
    p = canvas.Canvas(buffer, pagesize=A4)
    width, height = A4
    y = height - 50

    p.setFont('Helvetica-Bold', 14)
    p.drawString(50, y, title)
    y -= 30
    p.setFont('Courier', 9)

    for line in lines:
        if y < 80:
            p.showPage()
            y = height - 50
            p.setFont('Courier', 9)
        p.drawString(50, y, line[:110])
        y -= 13

    p.showPage()
    p.save()
    with atomic_write(path, 'wb') as handle:
        handle.write(buffer.getvalue())
    return path
