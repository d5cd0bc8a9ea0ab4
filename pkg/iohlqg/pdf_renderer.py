"""Reportlab flowables for the synthesis report."""

import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

from reportlab.lib import colors
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import ListFlowable, ListItem, Paragraph, Table, TableStyle

styles = getSampleStyleSheet()

pdf_footer_style = ParagraphStyle(
    name="PDF_Footer",
    parent=styles["Normal"],
    fontSize=8,
    textColor=colors.grey,
    alignment=1,  # center
    leading=10,
)

HEADER_FILL = colors.HexColor("#D9E1F2")
RULE = colors.HexColor("#CCCCCC")


def paragraphStyling(
    text: str, style_name: str = "BodyText", font_size: int = 9, leading: int = 11
) -> Paragraph:
    st = ParagraphStyle(
        f"{style_name}_{font_size}", parent=styles[style_name], fontSize=font_size, leading=leading
    )
    return Paragraph(text, st)


def miniHeader(text: str) -> Paragraph:
    return paragraphStyling(f"<b>{text}</b>", font_size=10, leading=13)


def formatNumber(value: Optional[float], spec: str = ".6f") -> str:
    """'N/A' for missing values, 'n/a' for NaN, otherwise ``format(value, spec)``."""
    if value is None:
        return "N/A"
    if isinstance(value, float) and math.isnan(value):
        return "n/a"
    return format(value, spec)


def _padded(pad: int) -> List[Tuple[Any, ...]]:
    return [
        (side, (0, 0), (-1, -1), pad)
        for side in ("LEFTPADDING", "RIGHTPADDING", "TOPPADDING", "BOTTOMPADDING")
    ]


def keyValueTable(rows: Sequence[Tuple[str, str]], label_width: float = 2.2 * inch) -> Table:
    """Run settings and headline costs, label column in bold."""
    data = [[paragraphStyling(f"<b>{label}</b>"), paragraphStyling(value)] for label, value in rows]
    t = Table(data, colWidths=[label_width, 7.5 * inch - label_width], hAlign="LEFT")
    rules = [("VALIGN", (0, 0), (-1, -1), "TOP"), ("LINEBELOW", (0, 0), (-1, -1), 0.25, RULE)]
    t.setStyle(TableStyle(rules + _padded(3)))
    return t


def valueList(values: Sequence[float], empty: str = "None") -> ListFlowable:
    """Numbered list of singular values."""
    items = [ListItem(paragraphStyling(formatNumber(v, ".6g")), leftIndent=6) for v in values]
    if not items:
        items = [ListItem(paragraphStyling(empty), leftIndent=6)]
    return ListFlowable(items, bulletType="1", leftIndent=14)


def seedHeaderCard(run: Dict[str, Any], doc_width: float) -> Table:
    """Banner of one PGM run: seed index, stop reason, iterations and final cost."""
    if run.get("error"):
        text = f"<b>Seed {run['seed']}</b> &nbsp;&nbsp; <font color='red'>failed</font>"
    else:
        text = (
            f"<b>Seed {run['seed']}</b> &nbsp;&nbsp; stopped by {run['stop_reason']} after "
            f"{run['iterations']} iterations &nbsp;&nbsp; final J = {formatNumber(run['final_J'])}"
        )
    card = Table([[paragraphStyling(text)]], colWidths=[doc_width], hAlign="LEFT")
    card.setStyle(TableStyle([
        ("BACKGROUND", (0, 0), (-1, -1), colors.whitesmoke),
        ("BOX", (0, 0), (-1, -1), 0.25, colors.grey),
    ] + _padded(5)))
    return card


def traceTable(header: Sequence[str], rows: Sequence[Sequence[Any]], doc_width: float) -> Table:
    """Grid of trace rows, header shaded."""
    data = [[paragraphStyling(f"<b>{h}</b>") for h in header]]
    data += [[paragraphStyling(formatNumber(float(v), ".6g")) for v in row] for row in rows]
    table = Table(data, colWidths=[doc_width / max(len(header), 1)] * len(header), hAlign="LEFT")
    table.setStyle(TableStyle([
        ("BACKGROUND", (0, 0), (-1, 0), HEADER_FILL),
        ("GRID", (0, 0), (-1, -1), 0.25, RULE),
    ] + _padded(3)))
    return table


def footerParagraph(text: str) -> Paragraph:
    return Paragraph(text, pdf_footer_style)
