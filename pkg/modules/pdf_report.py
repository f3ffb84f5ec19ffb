"""
PDF Report - renders a RateReport as a one-document summary
Rows that break a bound are highlighted.
"""

import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Dict, List

from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import cm
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from modules.rates import RateReport

logger = logging.getLogger(__name__)


def _fmt(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return '-'
    return f'{value:.4e}'


class RateReportPDF:
    def __init__(self):
        self.styles = getSampleStyleSheet()
        self._setup_styles()

    def _setup_styles(self):
        self.styles.add(ParagraphStyle(
            name='ReportTitle',
            parent=self.styles['Heading1'],
            fontSize=20,
            textColor=colors.HexColor('#1a1a1a'),
            spaceAfter=20,
            alignment=TA_CENTER
        ))
        self.styles.add(ParagraphStyle(
            name='SectionHeader',
            parent=self.styles['Heading2'],
            fontSize=14,
            textColor=colors.HexColor('#2563eb'),
            spaceAfter=8,
            spaceBefore=12
        ))

    def create_report(self, report: RateReport, path: Path, title: str, provenance: Dict) -> Path:
        """Build the PDF next to path and move it into place"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f'.{path.name}.', dir=path.parent)
        os.close(fd)
        doc = SimpleDocTemplate(
            tmp,
            pagesize=A4,
            rightMargin=2 * cm,
            leftMargin=2 * cm,
            topMargin=2 * cm,
            bottomMargin=2 * cm,
            invariant=1,
            title=title,
        )
        story = [Paragraph(title, self.styles['ReportTitle'])]
        story.extend(self._summary_section(report, provenance))
        story.extend(self._rows_section(report))
        story.extend(self._flags_section(report))
        try:
            doc.build(story)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        logger.info(f"📄 PDF report written: {path}")
        return path

    def _summary_section(self, report: RateReport, provenance: Dict) -> List:
        verdict = 'PASSED' if report.passed() else 'FAILED'
        lines = [
            f"<b>Rule:</b> {report.rule} &nbsp; <b>Source:</b> {report.source.get('type', '?')}",
            f"<b>Fitted slope:</b> {report.fitted_slope:.4f} (expected {report.expected_slope:.4f} "
            f"± {report.slope_tolerance:g})",
            f"<b>Verdict:</b> {verdict}",
            f"<b>Seed:</b> {provenance.get('seed')} ({provenance.get('generator')}), "
            f"<b>version</b> {provenance.get('version')}",
            f"<b>Config sha256:</b> {provenance.get('config_sha256', '')[:16]}",
        ]
        if report.c_estimate is not None:
            lines.append(f"<b>Empirical c:</b> {report.c_estimate:.4g}")
        return [Paragraph('Summary', self.styles['SectionHeader']),
                Paragraph('<br/>'.join(lines), self.styles['Normal']),
                Spacer(1, 0.5 * cm)]

    def _rows_section(self, report: RateReport) -> List:
        data = [['delta', 'alpha', 'D', 'bound', 'residual', 'res. bound', 'flag']]
        for row in report.rows():
            data.append([_fmt(row['delta']), _fmt(row['alpha']), _fmt(row['bregman_error']), _fmt(row['bound']),
                         _fmt(row['residual']), _fmt(row['residual_bound']), row['flag'] or ''])

        table = Table(data, repeatRows=1)
        style = [
            ('BACKGROUND', (0, 0), (-1, 0), colors.HexColor('#2563eb')),
            ('TEXTCOLOR', (0, 0), (-1, 0), colors.whitesmoke),
            ('ALIGN', (0, 0), (-1, -1), 'CENTER'),
            ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
            ('FONTSIZE', (0, 0), (-1, -1), 8),
            ('BOTTOMPADDING', (0, 0), (-1, 0), 8),
            ('BACKGROUND', (0, 1), (-1, -1), colors.beige),
            ('GRID', (0, 0), (-1, -1), 0.5, colors.black),
        ]
        for index in report.violations():
            style.append(('BACKGROUND', (0, index + 1), (-1, index + 1), colors.HexColor('#fecaca')))
        table.setStyle(TableStyle(style))
        return [Paragraph('Measured errors and bounds', self.styles['SectionHeader']), table, Spacer(1, 0.5 * cm)]

    def _flags_section(self, report: RateReport) -> List:
        elements = [Paragraph('Hypothesis flags', self.styles['SectionHeader'])]
        flags = '<br/>'.join(f'• {flag}' for flag in report.hypothesis_flags)
        elements.append(Paragraph(flags or 'None: every bound applies', self.styles['Normal']))
        if report.notes:
            elements.append(Paragraph('Notes', self.styles['SectionHeader']))
            elements.append(Paragraph('<br/>'.join(f'• {note}' for note in report.notes), self.styles['Normal']))
        return elements
