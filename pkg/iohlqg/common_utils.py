"""Common utility functions for iohlqg: YAML config, input files and report builders."""

import csv
import json
import os
from datetime import datetime
from io import BytesIO, StringIO
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import xlsxwriter
import yaml
from reportlab.lib.pagesizes import letter, portrait
from reportlab.lib.styles import getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer
from rich.console import Console

from iohlqg.exceptions import RejectedInputError
from iohlqg.pdf_renderer import (
    footerParagraph,
    formatNumber,
    keyValueTable,
    miniHeader,
    paragraphStyling,
    seedHeaderCard,
    traceTable,
    valueList,
)

console = Console(stderr=True)

THREADS_ENV = "IOHLQG_THREADS"


def load_config_file(config_path: str) -> Dict[str, Any]:
    """
    Load a run configuration from a YAML file.

    Args:
        config_path: Path to config file (.yaml or .yml)

    Returns:
        Configuration dictionary (empty when the file is missing or unreadable)
    """
    if not os.path.exists(config_path):
        console.print(f"[bold red]Config file not found: {config_path}[/]")
        return {}

    ext = os.path.splitext(config_path)[1].lower()
    if ext not in (".yaml", ".yml"):
        console.print(f"[bold red]Unsupported config format: {ext}. Use .yaml or .yml[/]")
        return {}
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            doc = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        console.print(f"[bold red]Error loading config: {e}[/]")
        return {}
    if not isinstance(doc, dict):
        console.print(f"[bold red]Config file {config_path} must hold a mapping[/]")
        return {}
    return doc


def thread_count(default: int = 1) -> int:
    """Worker cap from IOHLQG_THREADS."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError as e:
        raise RejectedInputError(f"{THREADS_ENV} must be an integer, got '{raw}'") from e
    if value < 1:
        raise RejectedInputError(f"{THREADS_ENV} must be >= 1, got {value}")
    return value


def load_json_file(path: str) -> Dict[str, Any]:
    """
    Read a JSON object from ``path``.

    Raises:
        FileNotFoundError: path does not exist
        RejectedInputError: the file is not a JSON object
    """
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise RejectedInputError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise RejectedInputError(f"{path} must hold a JSON object")
    return doc


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def export_document_to_json(doc: Dict[str, Any]) -> str:
    """Serialize a report document; floats keep full double precision."""
    return json.dumps(_plain(doc), indent=2) + "\n"


def export_rows_to_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """Header row plus data rows, '.' decimal separator, '\\n' line endings."""
    output = StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return output.getvalue()


def export_bode_to_csv(omegas: np.ndarray, mag_db: np.ndarray, phase_deg: np.ndarray) -> str:
    """One row per frequency; magnitude and phase columns per (output, input) channel."""
    _, p, m = mag_db.shape
    channels = [(i, j) for i in range(p) for j in range(m)]
    header = (
        ["omega"]
        + [f"mag_db_{i + 1}_{j + 1}" for i, j in channels]
        + [f"phase_deg_{i + 1}_{j + 1}" for i, j in channels]
    )
    rows = []
    for k, omega in enumerate(omegas):
        rows.append(
            [float(omega)]
            + [float(mag_db[k, i, j]) for i, j in channels]
            + [float(phase_deg[k, i, j]) for i, j in channels]
        )
    return export_rows_to_csv(header, rows)


def export_trajectory_to_csv(t: np.ndarray, y: np.ndarray, u: np.ndarray) -> str:
    header = ["t"] + [f"y_{i + 1}" for i in range(y.shape[1])] + [f"u_{i + 1}" for i in range(u.shape[1])]
    rows = [[int(t[k])] + [float(x) for x in y[k]] + [float(x) for x in u[k]] for k in range(len(t))]
    return export_rows_to_csv(header, rows)


def export_synth_report_to_pdf(
    summary: Dict[str, Any],
    traces: Dict[int, List[List[Any]]],
    trace_header: Sequence[str],
    output_path: Optional[str] = None,
) -> bytes:
    """
    Render the synthesis summary and the last recorded iterate of every seed to PDF.

    Args:
        summary: The summary.json document
        traces: Trace rows keyed by seed index
        trace_header: Column names of the trace rows
        output_path: Optional path to save PDF

    Returns:
        PDF content as bytes
    """
    buffer = BytesIO()
    doc = SimpleDocTemplate(
        buffer,
        pagesize=portrait(letter),
        rightMargin=0.5 * inch,
        leftMargin=0.5 * inch,
        topMargin=0.5 * inch,
        bottomMargin=0.5 * inch,
        allowSplitting=True,
    )
    styles = getSampleStyleSheet()
    story: List[Any] = []

    story.append(Paragraph("IOH policy-gradient synthesis", styles["Title"]))
    story.append(Spacer(1, 10))

    kv_rows = [
        ("History length L", str(summary["L"])),
        ("Step size / epsilon", f"{summary['alpha']:.3g} / {summary['epsilon']:.3g}"),
        ("Seeds (succeeded)", f"{summary['seeds']} ({summary['succeeded']})"),
        ("Best final J", f"<b>{formatNumber(summary['final_J'])}</b>"),
        ("Riccati baseline J", formatNumber(summary["baseline_J"])),
        (
            "Gap",
            f"{formatNumber(summary['gap'], '.3e')} ({formatNumber(summary['gap_percent'], '+.4f')}%)",
        ),
    ]
    story.append(keyValueTable(kv_rows))
    story.append(Spacer(1, 6))
    story.append(miniHeader("Hankel singular values of the realized controller"))
    story.append(valueList(summary.get("hankel_singular_values") or []))
    story.append(Spacer(1, 8))

    keep = ["iter", "J", "J_eps", "grad_norm", "rho"]
    idx = [trace_header.index(c) for c in keep if c in trace_header]
    for run in summary["runs"]:
        story.append(seedHeaderCard(run, doc.width))
        story.append(Spacer(1, 4))
        if run["error"]:
            story.append(paragraphStyling(run["error"]))
        else:
            last = [[row[i] for i in idx] for row in traces.get(run["seed"], [])[-5:]]
            story.append(traceTable([trace_header[i] for i in idx], last, doc.width))
        story.append(Spacer(1, 8))

    story.append(Spacer(1, 8))
    story.append(footerParagraph(f"Generated by iohlqg on {datetime.now():%Y-%m-%d %H:%M:%S}"))

    doc.build(story)
    buffer.seek(0)
    pdf_bytes = buffer.read()

    if output_path:
        with open(output_path, "wb") as f:
            f.write(pdf_bytes)
        console.print(f"[green]✓ PDF saved to {output_path}[/]")

    return pdf_bytes


def export_traces_to_xlsx(
    summary: Dict[str, Any],
    traces: Dict[int, List[List[Any]]],
    trace_header: Sequence[str],
) -> bytes:
    """Workbook with a summary sheet and one trace table per seed."""
    output = BytesIO()
    workbook = xlsxwriter.Workbook(output, {"in_memory": True, "nan_inf_to_errors": True})
    title_fmt = workbook.add_format({"bold": True, "font_size": 14, "bg_color": "#FCE4D6"})
    meta_fmt = workbook.add_format({"bold": True})
    header_fmt = workbook.add_format({"bold": True, "bg_color": "#D9E1F2", "border": 1})
    number_fmt = workbook.add_format({"num_format": "0.000000"})

    sheet = workbook.add_worksheet("Summary")
    sheet.set_column(0, 0, 28)
    sheet.set_column(1, 8, 16)
    sheet.write(0, 0, "IOH policy-gradient synthesis", title_fmt)
    meta = [
        ("L", summary["L"]),
        ("alpha", summary["alpha"]),
        ("epsilon", summary["epsilon"]),
        ("best final J", summary["final_J"]),
        ("baseline J", summary["baseline_J"]),
        ("gap %", summary["gap_percent"]),
    ]
    for r, (label, value) in enumerate(meta, start=1):
        sheet.write(r, 0, label, meta_fmt)
        sheet.write(r, 1, "N/A" if value is None else value)

    header_row = len(meta) + 2
    run_cols = [
        "seed", "final_J", "final_J_eps", "grad_norm", "iterations", "stop_reason", "backoffs",
        "ascent_steps", "error",
    ]
    run_rows = [[run.get(c) if run.get(c) is not None else "" for c in run_cols] for run in summary["runs"]]
    sheet.add_table(
        header_row,
        0,
        header_row + max(len(run_rows), 1),
        len(run_cols) - 1,
        {
            "name": "Runs",
            "columns": [{"header": c, "format": header_fmt} for c in run_cols],
            "data": run_rows,
            "style": "Table Style Light 9",
            "autofilter": True,
        },
    )

    for seed in sorted(traces):
        rows = traces[seed]
        ws = workbook.add_worksheet(f"seed_{seed:02d}")
        ws.set_column(0, len(trace_header) - 1, 14, number_fmt)
        ws.add_table(
            0,
            0,
            max(len(rows), 1),
            len(trace_header) - 1,
            {
                "name": f"Trace{seed:02d}",
                "columns": [{"header": c, "format": header_fmt} for c in trace_header],
                "data": rows,
                "style": "Table Style Light 9",
            },
        )
        ws.freeze_panes(1, 1)

    workbook.close()
    output.seek(0)
    return output.read()
