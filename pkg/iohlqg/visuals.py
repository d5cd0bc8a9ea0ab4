"""Rich renderings of PGM cost traces and Hankel singular values."""

from decimal import ROUND_HALF_UP, Decimal, getcontext
from typing import Optional, Sequence

import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from iohlqg.pgm import TraceRecord

getcontext().prec = 12

console = Console()

BAR_WIDTH = 40


def create_cost_bars(
    records: Sequence[TraceRecord],
    baseline: Optional[float] = None,
    max_rows: int = 12,
    title: str = "Cost trace",
) -> None:
    """Bars of J along a trace, scaled to the largest recorded cost, with the gap to ``baseline``."""
    if not records:
        console.print("[yellow]No trace records[/]")
        return
    if len(records) > max_rows:
        picks = np.unique(np.linspace(0, len(records) - 1, max_rows).round().astype(int))
        records = [records[i] for i in picks]

    table = Table(box=None, padding=(0, 1), collapse_padding=True)
    table.add_column("Iter", style="bright_magenta", justify="right", width=8)
    table.add_column("J", style="bright_cyan", justify="right", width=14)
    table.add_column("", width=BAR_WIDTH + 2)
    table.add_column("Gap", style="bright_yellow", width=12)

    max_cost = max(r.J for r in records)
    if max_cost <= 0:
        console.print("[yellow]All recorded costs are zero[/]")
        return

    for rec in records:
        bar = "█" * int(rec.J / max_cost * BAR_WIDTH)
        gap = ""
        bar_color = "blue"
        if baseline is not None and baseline > 0:
            gap_pct = (
                (Decimal(repr(rec.J)) - Decimal(repr(baseline))) / Decimal(repr(baseline)) * 100
            ).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP)
            if abs(gap_pct) < Decimal("0.1"):
                bar_color = "bright_green"
            elif gap_pct > Decimal("5"):
                bar_color = "bright_red"
            else:
                bar_color = "yellow"
            gap = f"[{bar_color}]{gap_pct:+}%[/]"
        table.add_row(str(rec.iteration), f"{rec.J:.6f}", f"[{bar_color}]{bar}[/]", gap)

    console.print(Panel(table, title=f"[bright_magenta]{title}[/]", border_style="bright_magenta"))


def create_hsv_table(rows: Sequence[Sequence[float]], labels: Sequence[str]) -> Table:
    """One row per controller, one column per Hankel singular value."""
    width = max((len(r) for r in rows), default=0)
    table = Table(title="Hankel singular values", style="bright_cyan", show_lines=False)
    table.add_column("Controller", style="bright_magenta")
    for i in range(width):
        table.add_column(f"σ{i + 1}", justify="right")
    for label, row in zip(labels, rows):
        cells = [f"{s:.4g}" if np.isfinite(s) else "[red]n/a[/]" for s in row]
        table.add_row(label, *cells, *([""] * (width - len(row))))
    return table
