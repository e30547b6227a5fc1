"""Tab-separated reports with a ``key=value`` header block.

Layout::

    key=value          (one per line, values JSON-encoded when not plain scalars)
    <blank line>
    col1<TAB>col2...
    v1<TAB>v2...
"""

from __future__ import annotations

import json
from pathlib import Path


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(v, sort_keys=True)
    return str(v)


def write_report(path, header: dict, columns: list[str], rows: list[list]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={_fmt(v)}" for k, v in header.items()]
    lines.append("")
    lines.append("\t".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} cells, table has {len(columns)} columns")
        lines.append("\t".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_report(path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    text = Path(path).read_text(encoding="utf-8")
    head, _, table = text.partition("\n\n")
    header = dict(line.split("=", 1) for line in head.splitlines() if line)
    lines = [ln for ln in table.splitlines() if ln]
    if not lines:
        return header, [], []
    return header, lines[0].split("\t"), [ln.split("\t") for ln in lines[1:]]
