"""Persist runner output as JSON and render it as CSV or markdown tables."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Mapping

from ..errors import MalformedFile

SCHEMA_VERSION = 1
ER_COLUMNS = ("n", "contexts", "samples", "setting", "precision", "recall", "f1", "seed")
KINDS = ("three_node", "downstream", "er", "confounding")


def save_report(report: Mapping, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(dict(report), indent=1, default=_jsonable))
    return path


def _jsonable(obj):
    # numpy scalars and tuples that slipped through
    if hasattr(obj, "item"):
        return obj.item()
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def validate_report(doc, source="<report>") -> dict:
    if not isinstance(doc, dict):
        raise MalformedFile(source, "top level must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise MalformedFile(source, f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise MalformedFile(source, f"unknown report kind {kind!r}; expected one of {KINDS}")
    key = "pairs" if kind == "confounding" else "rows"
    if not isinstance(doc.get(key), list) or not all(isinstance(r, dict) for r in doc[key]):
        raise MalformedFile(source, f"'{key}' must be a list of objects")
    if kind == "er":
        for k, row in enumerate(doc["rows"]):
            missing = [c for c in ER_COLUMNS if c not in row]
            if missing:
                raise MalformedFile(source, f"rows[{k}] lacks columns {missing}")
    return doc


def load_report(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MalformedFile(path, f"cannot read report ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFile(path, f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return validate_report(doc, path)


def _table(doc: Mapping) -> tuple[list[str], list[dict]]:
    kind = doc["kind"]
    if kind == "er":
        return list(ER_COLUMNS), doc["rows"]
    rows = doc["pairs"] if kind == "confounding" else doc["rows"]
    columns: list[str] = []
    for r in rows:
        columns.extend(c for c in r if c not in columns and not isinstance(r[c], (dict, list)))
    return columns, rows


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def to_csv(doc: Mapping) -> str:
    columns, rows = _table(doc)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({c: r.get(c) for c in columns})
    return buf.getvalue()


def _markdown_table(columns: list[str], rows: list[Mapping]) -> str:
    lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    lines += ["| " + " | ".join(_cell(r.get(c)) for c in columns) + " |" for r in rows]
    return "\n".join(lines)


def to_markdown(doc: Mapping) -> str:
    """Summary table when the report has one, then the notes."""
    out = [f"## {doc['kind']}"]
    summary = doc.get("summary")
    if summary:
        columns: list[str] = []
        for r in summary:
            columns.extend(c for c in r if c not in columns)
        out.append(_markdown_table(columns, summary))
    else:
        out.append(_markdown_table(*_table(doc)))
    for note in doc.get("notes", []):
        out.append(f"- {note}")
    return "\n\n".join(out) + "\n"


def render(doc: Mapping, fmt: str = "markdown") -> str:
    if fmt == "csv":
        return to_csv(doc)
    if fmt == "markdown":
        return to_markdown(doc)
    if fmt == "json":
        return json.dumps(dict(doc), indent=1, default=_jsonable)
    raise ValueError(f"unknown format {fmt!r}")
