"""Writes run artifacts (JSON, CSV, PDF, XLSX) into an output directory."""

import os
import tempfile
from typing import List, Optional

from rich.console import Console

console = Console(stderr=True)


class ExportHandler:
    """
    Saves artifacts of one command under ``output_dir``.

    The directory is created on the first save, so a command that fails before
    writing leaves nothing behind. Each file is written to a temporary sibling
    and renamed into place.
    """

    def __init__(self, output_dir: Optional[str] = None, quiet: bool = False):
        self.output_dir = output_dir or os.getcwd()
        self.quiet = quiet
        self.written: List[str] = []

    def path_for(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    def save(self, content: bytes, filename: str) -> str:
        """Write ``content`` to ``output_dir/filename`` and return the path."""
        target = self.path_for(filename)
        os.makedirs(os.path.dirname(target) or ".", exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=".iohlqg-", dir=os.path.dirname(target) or ".")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(content)
            os.chmod(tmp, 0o644)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(target)
        if not self.quiet:
            console.print(f"[green]✓ Saved to {target}[/]")
        return target

    def save_text(self, content: str, filename: str) -> str:
        return self.save(content.encode("utf-8"), filename)

    save_csv = save_text
    save_json = save_text
    save_pdf = save
    save_xlsx = save
