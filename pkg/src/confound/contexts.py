"""Context metadata, context-set selection and per-context expectations.

A :class:`ContextSuite` holds one sample table per context plus metadata
naming the variables whose mechanisms shifted in that context. Variables are
referred to by column name throughout.

On-disk layout (a directory)::

    suite.json      {"schema_version": 1, "columns": [...], "metas": [...], "dag": {...}?}
    ctx_<id>.csv    header = column names, one row per sample
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import EmptyContextSet, MalformedFile, UnknownColumn, UnsupportedSupport
from .graph import Dag

SCHEMA_VERSION = 1
MIN_CONTEXTS = 8

AND = "and"
AND_NOT = "and_not"


@dataclass(frozen=True)
class InterventionRecord:
    target: str
    kind: str
    value: float | None = None


@dataclass(frozen=True)
class ContextMeta:
    id: int
    shifted: frozenset[str] = frozenset()
    interventions: tuple[InterventionRecord, ...] = ()
    is_observational: bool = False

    def __post_init__(self):
        object.__setattr__(self, "shifted", frozenset(self.shifted))
        object.__setattr__(self, "interventions", tuple(self.interventions))
        if self.is_observational and self.shifted:
            raise ValueError(f"observational context {self.id} lists shifted variables")

    def hard_value(self, column: str):
        """Value of a hard intervention on ``column`` here, or None."""
        for rec in self.interventions:
            if rec.target == column and rec.kind == "hard":
                return rec.value
        return None


@dataclass(frozen=True)
class ContextSuite:
    metas: tuple[ContextMeta, ...]
    tables: Mapping[int, pd.DataFrame]
    dag: Dag | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "metas", tuple(self.metas))
        ids = [m.id for m in self.metas]
        if len(set(ids)) != len(ids):
            raise ValueError("context ids must be unique within a suite")
        missing = [i for i in ids if i not in self.tables]
        if missing:
            raise ValueError(f"no sample table for contexts {missing}")
        columns = None
        for i in ids:
            cols = list(self.tables[i].columns)
            if columns is None:
                columns = cols
            elif cols != columns:
                raise ValueError(f"context {i} has columns {cols}, expected {columns}")
        object.__setattr__(self, "_columns", tuple(columns or ()))
        object.__setattr__(self, "_by_id", {m.id: m for m in self.metas})
        object.__setattr__(self, "_levels", {})

    def __eq__(self, other):
        if not isinstance(other, ContextSuite) or self.metas != other.metas:
            return False
        # Values only: a CSV round trip widens int8 columns to int64.
        return all(
            list(self.tables[m.id].columns) == list(other.tables[m.id].columns)
            and np.array_equal(self.tables[m.id].to_numpy(), other.tables[m.id].to_numpy())
            for m in self.metas
        )

    @property
    def columns(self) -> tuple[str, ...]:
        return self._columns

    @property
    def ids(self) -> list[int]:
        return [m.id for m in self.metas]

    def meta(self, cid: int) -> ContextMeta:
        return self._by_id[cid]

    def table(self, cid: int) -> pd.DataFrame:
        return self.tables[cid]

    def column(self, cid: int, name: str) -> np.ndarray:
        self.check_column(name)
        return self.tables[cid][name].to_numpy()

    def check_column(self, name: str) -> str:
        if name not in self._columns:
            raise UnknownColumn(f"unknown column {name!r}; suite has {list(self._columns)}")
        return name

    def observational_ids(self) -> list[int]:
        return [m.id for m in self.metas if m.is_observational]

    def levels(self, name: str) -> tuple:
        """Sorted support of a discrete column across every context."""
        self.check_column(name)
        if name not in self._levels:
            values = np.unique(np.concatenate([self.tables[i][name].to_numpy() for i in self.ids]))
            self._levels[name] = tuple(v.item() for v in values)
        return self._levels[name]

    def pooled(self, ids: Iterable[int]) -> pd.DataFrame:
        return pd.concat([self.tables[i] for i in ids], ignore_index=True)


def select_contexts(
    metas: Sequence[ContextMeta],
    S: Iterable[str],
    R: Iterable[str] = (),
    mode: str = AND,
) -> list[int]:
    """Ids of contexts shifting all of S together with R (``and``), or all of S
    but none of R (``and_not``). Meta order is preserved."""
    S, R = frozenset(S), frozenset(R)
    if mode == AND:
        need = S | R
        return [m.id for m in metas if need <= m.shifted]
    if mode == AND_NOT:
        if S & R:
            raise ValueError(f"S and R overlap in and_not mode: {sorted(S & R)}")
        return [m.id for m in metas if S <= m.shifted and not (m.shifted & R)]
    raise ValueError(f"unknown selection mode {mode!r}")


@dataclass(frozen=True)
class ContextExpectations:
    """Per-context means, one row per selected context.

    ``values`` is 1-D for marginal means; for conditional means it has one
    column per level of the conditioning variable (``levels``).
    """

    ids: tuple[int, ...]
    variable: str
    values: np.ndarray
    given: str | None = None
    levels: tuple = ()

    def __len__(self) -> int:
        return len(self.ids)


def context_expectations(suite: ContextSuite, ids: Sequence[int], i: str) -> ContextExpectations:
    """Sample mean of column ``i`` in each listed context."""
    if len(ids) == 0:
        raise EmptyContextSet(f"no contexts selected for E[{i}]")
    suite.check_column(i)
    values = np.array([suite.tables[c][i].to_numpy(dtype=float).mean() for c in ids])
    return ContextExpectations(tuple(ids), i, values)


def conditional_context_expectations(
    suite: ContextSuite,
    ids: Sequence[int],
    i: str,
    given: str,
    *,
    levels: Sequence | None = None,
    on_missing: str = "raise",
) -> ContextExpectations:
    """Per context, the vector of E[i | given = v] over the levels of ``given``.

    A level with no rows in some context raises :class:`UnsupportedSupport`;
    pass ``on_missing="drop"`` to leave such contexts out instead.
    """
    if len(ids) == 0:
        raise EmptyContextSet(f"no contexts selected for E[{i} | {given}]")
    suite.check_column(i)
    suite.check_column(given)
    levels = tuple(suite.levels(given) if levels is None else levels)
    kept, rows = [], []
    for c in ids:
        x = suite.tables[c][i].to_numpy(dtype=float)
        g = suite.tables[c][given].to_numpy()
        row = []
        for v in levels:
            mask = g == v
            if not mask.any():
                break
            row.append(x[mask].mean())
        if len(row) < len(levels):
            if on_missing == "drop":
                continue
            raise UnsupportedSupport(
                f"context {c} has no rows with {given} = {levels[len(row)]!r}; "
                f"merge or drop such contexts before computing E[{i} | {given}]"
            )
        kept.append(c)
        rows.append(row)
    values = np.array(rows, dtype=float).reshape(len(kept), len(levels))
    return ContextExpectations(tuple(kept), i, values, given=given, levels=levels)


# -- persistence ---------------------------------------------------------------

_SUITE_KEYS = {"schema_version", "columns", "metas", "dag"}
_META_KEYS = {"id", "shifted", "interventions", "observational"}
_IV_KEYS = {"target", "kind", "value"}


def _warn_unknown(obj: Mapping, known: set, where: str) -> None:
    extra = sorted(set(obj) - known)
    if extra:
        warnings.warn(f"{where}: ignoring unknown fields {extra}", stacklevel=3)


def save_suite(suite: ContextSuite, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    metas = []
    for m in suite.metas:
        ivs = []
        for rec in m.interventions:
            entry = {"target": rec.target, "kind": rec.kind}
            if rec.value is not None:
                entry["value"] = rec.value
            ivs.append(entry)
        metas.append(
            {
                "id": m.id,
                "shifted": sorted(m.shifted),
                "interventions": ivs,
                "observational": m.is_observational,
            }
        )
    doc = {"schema_version": SCHEMA_VERSION, "columns": list(suite.columns), "metas": metas}
    if suite.dag is not None:
        doc["dag"] = suite.dag.to_dict()
    (path / "suite.json").write_text(json.dumps(doc, indent=1))
    for m in suite.metas:
        suite.tables[m.id].to_csv(path / f"ctx_{m.id}.csv", index=False)
    return path


def _as_number(value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError
    return value


def load_suite(path) -> ContextSuite:
    path = Path(path)
    manifest = path / "suite.json"
    try:
        text = manifest.read_text()
    except OSError as exc:
        raise MalformedFile(manifest, f"cannot read manifest ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFile(manifest, f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("metas"), list):
        raise MalformedFile(manifest, "top level must be an object with a 'metas' list")
    _warn_unknown(doc, _SUITE_KEYS, str(manifest))

    metas = []
    for k, raw in enumerate(doc["metas"]):
        where = f"metas[{k}]"
        if not isinstance(raw, dict):
            raise MalformedFile(manifest, f"{where} must be an object")
        _warn_unknown(raw, _META_KEYS, f"{manifest} {where}")
        try:
            cid = raw["id"]
            if not isinstance(cid, int) or isinstance(cid, bool):
                raise MalformedFile(manifest, f"{where}.id must be an integer")
            shifted = raw.get("shifted", [])
            if not isinstance(shifted, list) or not all(isinstance(s, str) for s in shifted):
                raise MalformedFile(manifest, f"{where}.shifted must be a list of column names")
            records = []
            for n, iv in enumerate(raw.get("interventions", [])):
                if not isinstance(iv, dict) or "target" not in iv or "kind" not in iv:
                    raise MalformedFile(
                        manifest, f"{where}.interventions[{n}] needs 'target' and 'kind'"
                    )
                _warn_unknown(iv, _IV_KEYS, f"{manifest} {where}.interventions[{n}]")
                if iv["kind"] not in ("hard", "soft"):
                    raise MalformedFile(manifest, f"{where}.interventions[{n}].kind must be hard or soft")
                value = iv.get("value")
                if iv["kind"] == "hard":
                    try:
                        value = _as_number(value)
                    except TypeError:
                        raise MalformedFile(
                            manifest, f"{where}.interventions[{n}].value must be a number"
                        ) from None
                records.append(InterventionRecord(str(iv["target"]), iv["kind"], value))
            observational = raw.get("observational", False)
            if not isinstance(observational, bool):
                raise MalformedFile(manifest, f"{where}.observational must be a boolean")
            metas.append(ContextMeta(cid, frozenset(shifted), tuple(records), observational))
        except KeyError as exc:
            raise MalformedFile(manifest, f"{where} is missing field {exc.args[0]!r}") from None
        except ValueError as exc:
            raise MalformedFile(manifest, f"{where}: {exc}") from None

    columns = doc.get("columns")
    tables = {}
    for m in metas:
        csv = path / f"ctx_{m.id}.csv"
        if not csv.exists():
            raise MalformedFile(csv, f"missing sample table for context {m.id}")
        try:
            df = pd.read_csv(csv, float_precision="round_trip")
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
            raise MalformedFile(csv, f"unreadable CSV ({exc})") from None
        if columns is not None and list(df.columns) != list(columns):
            raise MalformedFile(csv, f"header {list(df.columns)} does not match columns {columns}", line=1)
        bad = [c for c in df.columns if not pd.api.types.is_numeric_dtype(df[c])]
        if bad:
            raise MalformedFile(csv, f"non-numeric values in columns {bad}")
        tables[m.id] = df

    dag = None
    if "dag" in doc:
        try:
            dag = Dag.from_dict(doc["dag"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(manifest, f"invalid 'dag' entry: {exc}") from None
    try:
        return ContextSuite(tuple(metas), tables, dag)
    except ValueError as exc:
        raise MalformedFile(manifest, str(exc)) from None
