from datetime import datetime, timezone
from typing import Dict, List, Optional

from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4, landscape
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import mm
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from .montecarlo import SweepResult
from .utils import OutputError

# tables wider than this many columns go landscape
PORTRAIT_COLUMNS = 8


def html_escape(text: str) -> str:
    if not text:
        return ""
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def get_styles():
    """Sample sheet plus the report's own styles; registering twice is a no-op."""
    styles = getSampleStyleSheet()
    extra = {
        'RunTitle': dict(parent=styles['Title'], fontSize=16, leading=20, alignment=TA_CENTER, spaceAfter=14),
        'Stamp': dict(parent=styles['Normal'], fontSize=8, textColor=colors.grey),
        'Digest': dict(fontName='Courier', fontSize=7.5, leading=9.5),
        'Section': dict(parent=styles['Heading4'], spaceBefore=6, spaceAfter=4),
    }
    for name, kw in extra.items():
        if name not in styles:
            styles.add(ParagraphStyle(name=name, **kw))
    return styles


def summary_table_data(result: SweepResult) -> List[List[str]]:
    """Header row plus one row per model, mean rate in Mbps."""
    rows = [[result.sweep_name] + [str(v) for v in result.sweep_values]]
    for m in result.models:
        rows.append([m] + [f"{x / 1e6:.2f}" for x in result.means(m)])
    return rows


def _timing_table_data(result: SweepResult) -> List[List[str]]:
    rows = [["resolution", "candidates", "mean time (ms)"]]
    rows += [[str(r), str(n), f"{t * 1e3:.3f}"] for r, (n, t) in result.timing.items()]
    return rows


def _parameter_text(result: SweepResult, params: Optional[Dict]) -> str:
    items = sorted(result.provenance.items()) + sorted((params or {}).items())
    return "\n".join(f"{k}: {v}" for k, v in items)


def _grid_table(rows, header_fill=True) -> Table:
    table = Table(rows, repeatRows=1, hAlign='CENTER')
    style = [
        ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
        ('FONTSIZE', (0, 0), (-1, -1), 8),
        ('GRID', (0, 0), (-1, -1), 0.25, colors.grey),
        ('ALIGN', (1, 1), (-1, -1), 'RIGHT'),
    ]
    if header_fill:
        style.append(('BACKGROUND', (0, 0), (-1, 0), colors.lightgrey))
    table.setStyle(TableStyle(style))
    return table


def assemble_pdf(pdf_path: str, result: SweepResult, params: Optional[Dict] = None) -> str:
    """Run report: title, timestamp, parameter digest, mean-rate table and, for grid sweeps, timings."""
    wide = len(result.sweep_values) + 1 > PORTRAIT_COLUMNS
    doc = SimpleDocTemplate(
        pdf_path,
        pagesize=landscape(A4) if wide else A4,
        leftMargin=18*mm, rightMargin=18*mm,
        topMargin=18*mm, bottomMargin=18*mm,
        title=f"{result.experiment} sweep",
    )
    styles = get_styles()

    story = [
        Paragraph(html_escape(f"{result.experiment} sweep"), styles['RunTitle']),
        Paragraph(f"generated {datetime.now(timezone.utc).strftime('%Y-%m-%d %H:%M:%S')} UTC", styles['Stamp']),
        Spacer(1, 10),
    ]
    digest = _parameter_text(result, params)
    if digest:
        story.append(Paragraph(html_escape(digest).replace("\n", "<br/>"), styles['Digest']))
        story.append(Spacer(1, 14))

    story.append(Paragraph("Mean rate, Mbps", styles['Section']))
    story.append(_grid_table(summary_table_data(result)))

    if result.timing:
        story.append(Spacer(1, 14))
        story.append(Paragraph("MAP placement time", styles['Section']))
        story.append(_grid_table(_timing_table_data(result), header_fill=False))

    def page_footer(canvas, doc):
        canvas.setFont("Helvetica", 8)
        canvas.drawRightString(doc.rightMargin + doc.width, doc.bottomMargin - 10, f"{canvas.getPageNumber()}")

    try:
        doc.build(story, onFirstPage=page_footer, onLaterPages=page_footer)
    except OSError as e:
        raise OutputError(f"cannot write report {pdf_path}: {e}") from e
    return pdf_path
