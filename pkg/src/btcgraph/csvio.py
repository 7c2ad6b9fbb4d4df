"""Report CSV conventions.

Every report is UTF-8 with LF line endings and one header row. Leading
``# key=value`` comment lines echo the configuration (seed included) that
produced the file, so a bundle is self-describing and reruns can be
compared byte for byte. Readers skip comment lines.
"""

from __future__ import annotations

import csv
from contextlib import contextmanager
from pathlib import Path

from .errors import IngestError


def fmt(value) -> str:
    """Deterministic cell rendering; floats keep full round-trip precision."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


@contextmanager
def open_report(path, echo: dict | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in (echo or {}).items():
            fh.write(f"# {key}={fmt(value)}\n")
        yield fh


def iter_report_rows(path, expected_header: list[str] | None = None):
    """Yield (line_number, row) for each data row, skipping comments."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for line_no, row in enumerate(reader, start=1):
            if not row or (row[0].startswith("#")):
                continue
            if header is None:
                header = row
                if expected_header is not None and row != expected_header:
                    raise IngestError(
                        f"expected header {expected_header}, found {row}", line_no
                    )
                continue
            yield line_no, row


def read_echo(path) -> dict:
    """Parse the leading comment block back into a dict of strings."""
    echo = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                echo[key.strip()] = value.strip()
    return echo
