"""Observations, covariate schemas and dataset containers.

A :class:`Dataset` stores left-truncated right-censored (LTRC) records as
column arrays: entry time ``left``, exit time ``right``, event flag ``event``
and a float covariate matrix ``X``.  Ordinal and nominal covariates are
stored as level indices (0, 1, ...) into the schema's level list.

Long ("visit row") data are turned into LTRC pseudo-subjects with
:func:`reformat_long_to_ltrc`; each pseudo-subject covers an interval over
which the covariates are constant.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, SchemaError, ValidationError

KINDS = ("numeric", "ordinal", "nominal")
WIDE_RESERVED = ("id", "left", "right", "event")
LONG_RESERVED = ("id", "time", "event")
DATASET_FORMAT = "ltrc-dataset"
DATASET_VERSION = 1


@dataclass(frozen=True)
class Covariate:
    name: str
    kind: str = "numeric"
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"covariate {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if self.kind == "numeric":
            if self.levels:
                raise SchemaError(f"covariate {self.name!r}: numeric columns take no levels")
        else:
            if not self.levels:
                raise SchemaError(f"covariate {self.name!r}: {self.kind} needs a non-empty level list")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"covariate {self.name!r}: duplicate levels")

    @property
    def categorical(self) -> bool:
        return self.kind != "numeric"


@dataclass(frozen=True)
class CovariateSchema:
    """Ordered covariate columns."""

    columns: tuple[Covariate, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("covariate names must be unique")
        clash = set(names) & (set(WIDE_RESERVED) | set(LONG_RESERVED))
        if clash:
            raise SchemaError(f"covariate names clash with reserved columns: {sorted(clash)}")

    @classmethod
    def numeric(cls, names: Iterable[str]) -> "CovariateSchema":
        return cls(tuple(Covariate(n) for n in names))

    @classmethod
    def from_dict(cls, doc: dict) -> "CovariateSchema":
        """Build from ``{"columns": [{"name":..., "kind":..., "levels": [...]}, ...]}``."""
        try:
            cols = doc["columns"]
            return cls(tuple(
                Covariate(str(c["name"]), str(c.get("kind", "numeric")), tuple(c.get("levels", ())))
                for c in cols
            ))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc

    @classmethod
    def from_toml(cls, path) -> "CovariateSchema":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise SchemaError(f"cannot read schema {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        out = []
        for c in self.columns:
            d = {"name": c.name, "kind": c.kind}
            if c.levels:
                d["levels"] = list(c.levels)
            out.append(d)
        return {"columns": out}

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def __len__(self):
        return len(self.columns)

    def index(self, name: str) -> int:
        for j, c in enumerate(self.columns):
            if c.name == name:
                return j
        raise SchemaError(f"no covariate named {name!r}")

    def encode(self, j: int, cell) -> float:
        """Convert one raw cell to its stored float."""
        col = self.columns[j]
        if col.kind == "numeric":
            value = float(cell)
            if not math.isfinite(value):
                raise ValueError(f"non-finite value {cell!r}")
            return value
        label = str(cell).strip()
        try:
            return float(col.levels.index(label))
        except ValueError:
            raise SchemaError(f"unknown level {label!r} for covariate {col.name!r}") from None

    def decode(self, j: int, value: float):
        col = self.columns[j]
        if col.kind == "numeric":
            return float(value)
        return col.levels[int(value)]

    def check_row(self, values: Sequence[float]) -> tuple[float, ...]:
        if len(values) != len(self.columns):
            raise ValidationError(
                f"covariate row has {len(values)} values, schema has {len(self.columns)}")
        out = []
        for col, v in zip(self.columns, values):
            v = float(v)
            if not math.isfinite(v):
                raise ValidationError(f"covariate {col.name!r}: non-finite value")
            if col.categorical and (v != int(v) or not 0 <= v < len(col.levels)):
                raise SchemaError(f"covariate {col.name!r}: {v} is not a valid level index")
            out.append(v)
        return tuple(out)


@dataclass(frozen=True)
class LTRCRecord:
    """One interval observation (left, right] with event flag."""

    subject_id: str
    left: float
    right: float
    event: int
    covariates: tuple[float, ...] = ()

    def __post_init__(self):
        left, right = float(self.left), float(self.right)
        if not (math.isfinite(left) and math.isfinite(right)):
            raise ValidationError(f"record {self.subject_id!r}: times must be finite")
        if left < 0:
            raise ValidationError(f"record {self.subject_id!r}: left must be >= 0")
        if not left < right:
            raise ValidationError(
                f"record {self.subject_id!r}: left ({left}) must be < right ({right})")
        if self.event not in (0, 1, True, False):
            raise ValidationError(f"record {self.subject_id!r}: event must be 0 or 1")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "event", int(self.event))
        object.__setattr__(self, "covariates", tuple(float(v) for v in self.covariates))


@dataclass(frozen=True)
class LongVisitRecord:
    """A visit row; ``covariates`` is None on a terminal row with blank cells."""

    subject_id: str
    time: float
    event: int
    covariates: tuple[float, ...] | None


def _readonly(a):
    a.setflags(write=False)
    return a


class Dataset:
    """Immutable column store of LTRC records conforming to ``schema``."""

    def __init__(self, schema: CovariateSchema, left, right, event, X, ids=None):
        left = np.array(left, dtype=float).reshape(-1)
        right = np.array(right, dtype=float).reshape(-1)
        event = np.array(event, dtype=np.int8).reshape(-1)
        n = left.shape[0]
        X = np.array(X, dtype=float).reshape(n, len(schema))
        if right.shape[0] != n or event.shape[0] != n:
            raise ValidationError("left, right and event must have equal length")
        if ids is None:
            ids = [str(i) for i in range(n)]
        ids = [str(i) for i in ids]
        if len(ids) != n:
            raise ValidationError("ids must have one entry per record")
        if not (np.all(np.isfinite(left)) and np.all(np.isfinite(right))):
            raise ValidationError("times must be finite")
        bad = np.flatnonzero(~(left < right))
        if bad.size:
            i = bad[0]
            raise ValidationError(
                f"record {ids[i]!r}: left ({left[i]}) must be < right ({right[i]})")
        if np.any(left < 0):
            raise ValidationError("left times must be >= 0")
        if np.any((event != 0) & (event != 1)):
            raise ValidationError("event flags must be 0 or 1")
        if not np.all(np.isfinite(X)):
            raise ValidationError("covariates must be finite")
        for j, col in enumerate(schema.columns):
            if col.categorical:
                v = X[:, j]
                if np.any((v != np.round(v)) | (v < 0) | (v >= len(col.levels))):
                    raise SchemaError(f"covariate {col.name!r}: invalid level index")
        self.schema = schema
        self.left = _readonly(left)
        self.right = _readonly(right)
        self.event = _readonly(event)
        self.X = _readonly(X)
        self.ids = tuple(ids)

    @classmethod
    def from_records(cls, schema: CovariateSchema, records: Sequence[LTRCRecord]) -> "Dataset":
        p = len(schema)
        X = np.array([schema.check_row(r.covariates) for r in records], dtype=float).reshape(-1, p)
        return cls(schema, [r.left for r in records], [r.right for r in records],
                   [r.event for r in records], X, [r.subject_id for r in records])

    @property
    def records(self) -> list[LTRCRecord]:
        return [LTRCRecord(self.ids[i], self.left[i], self.right[i], int(self.event[i]),
                           tuple(self.X[i])) for i in range(len(self))]

    def __len__(self):
        return self.left.shape[0]

    def __repr__(self):
        return (f"Dataset(n={len(self)}, events={int(self.event.sum())}, "
                f"covariates={self.schema.names})")

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return Dataset(self.schema, self.left[idx], self.right[idx], self.event[idx],
                       self.X[idx], [self.ids[i] for i in idx])

    def to_dict(self) -> dict:
        recs = []
        for i in range(len(self)):
            recs.append({
                "id": self.ids[i],
                "left": float(self.left[i]),
                "right": float(self.right[i]),
                "event": int(self.event[i]),
                "covariates": [self.schema.decode(j, v) for j, v in enumerate(self.X[i])],
            })
        return {"format": DATASET_FORMAT, "version": DATASET_VERSION,
                "schema": self.schema.to_dict(), "records": recs}

    @classmethod
    def from_dict(cls, doc: dict) -> "Dataset":
        if doc.get("format") != DATASET_FORMAT or doc.get("version") != DATASET_VERSION:
            raise SchemaError("not a version-1 ltrc-dataset document")
        schema = CovariateSchema.from_dict(doc["schema"])
        recs = doc["records"]
        X = [[schema.encode(j, v) for j, v in enumerate(r["covariates"])] for r in recs]
        return cls(schema, [r["left"] for r in recs], [r["right"] for r in recs],
                   [r["event"] for r in recs], np.array(X, dtype=float).reshape(len(recs), len(schema)),
                   [r["id"] for r in recs])

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def from_json(cls, path) -> "Dataset":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- CSV input

def _read_rows(path, reserved, schema):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ValidationError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file, header is mandatory") from None
        expected = list(reserved) + schema.names
        if sorted(header) != sorted(expected):
            missing = sorted(set(expected) - set(header))
            extra = sorted(set(header) - set(expected))
            raise SchemaError(
                f"{path}: header mismatch (missing {missing}, unexpected {extra})")
        pos = {name: header.index(name) for name in expected}
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} cells, got {len(row)}", row=lineno)
            rows.append((lineno, {name: row[pos[name]].strip() for name in expected}))
    return rows


def _float_cell(cell, lineno, column):
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"malformed number {cell!r}", row=lineno, column=column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite number {cell!r}", row=lineno, column=column)
    return value


def _event_cell(cell, lineno):
    if cell not in ("0", "1"):
        raise ParseError(f"event must be 0 or 1, got {cell!r}", row=lineno, column="event")
    return int(cell)


def _covariate_cells(schema, cells, lineno):
    out = []
    for j, col in enumerate(schema.columns):
        cell = cells[col.name]
        if cell == "":
            raise ValidationError(f"row {lineno}: missing value for covariate {col.name!r}")
        if col.kind == "numeric":
            out.append(_float_cell(cell, lineno, col.name))
        else:
            try:
                out.append(schema.encode(j, cell))
            except SchemaError as exc:
                raise SchemaError(f"row {lineno}: {exc}") from None
    return out


def parse_ltrc_csv(path, schema: CovariateSchema) -> Dataset:
    """Read a wide CSV with columns ``id,left,right,event`` plus covariates."""
    ids, left, right, event, X = [], [], [], [], []
    for lineno, cells in _read_rows(path, WIDE_RESERVED, schema):
        lo = _float_cell(cells["left"], lineno, "left")
        hi = _float_cell(cells["right"], lineno, "right")
        if not lo < hi:
            raise ValidationError(f"row {lineno}: left ({lo}) must be < right ({hi})")
        if lo < 0:
            raise ValidationError(f"row {lineno}: left must be >= 0")
        ids.append(cells["id"])
        left.append(lo)
        right.append(hi)
        event.append(_event_cell(cells["event"], lineno))
        X.append(_covariate_cells(schema, cells, lineno))
    return Dataset(schema, left, right, event,
                   np.array(X, dtype=float).reshape(len(ids), len(schema)), ids)


def _fmt(value: float) -> str:
    return repr(float(value))


def write_ltrc_csv(dataset: Dataset, path) -> None:
    """Write ``dataset`` in the wide layout read by :func:`parse_ltrc_csv`."""
    schema = dataset.schema
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(WIDE_RESERVED) + schema.names)
        for i in range(len(dataset)):
            cov = [_fmt(v) if c.kind == "numeric" else schema.decode(j, v)
                   for j, (c, v) in enumerate(zip(schema.columns, dataset.X[i]))]
            w.writerow([dataset.ids[i], _fmt(dataset.left[i]), _fmt(dataset.right[i]),
                        int(dataset.event[i])] + cov)


def parse_long_csv(path, schema: CovariateSchema) -> dict[str, list[LongVisitRecord]]:
    """Read visit rows (``id,time,event`` plus covariates) grouped by subject.

    The last row of every subject is its terminal row: its time is the end of
    follow-up and its event flag the subject's outcome.  Covariate cells may be
    left blank on terminal rows only.  Groups come back sorted by id, rows by
    time.
    """
    raw: dict[str, list] = {}
    for lineno, cells in _read_rows(path, LONG_RESERVED, schema):
        t = _float_cell(cells["time"], lineno, "time")
        ev = _event_cell(cells["event"], lineno)
        raw.setdefault(cells["id"], []).append((t, lineno, ev, cells))
    groups = {}
    for sid in sorted(raw):
        rows = sorted(raw[sid], key=lambda r: r[0])
        times = [r[0] for r in rows]
        if len(set(times)) != len(times):
            raise ValidationError(f"subject {sid!r}: duplicate visit time")
        if len(rows) < 2:
            raise ValidationError(
                f"subject {sid!r}: needs at least one visit row and a terminal row")
        out = []
        for k, (t, lineno, ev, cells) in enumerate(rows):
            terminal = k == len(rows) - 1
            if ev == 1 and not terminal:
                raise ValidationError(f"subject {sid!r}: event=1 on a non-final row (row {lineno})")
            if terminal and all(cells[c] == "" for c in schema.names):
                cov = None
            else:
                cov = tuple(_covariate_cells(schema, cells, lineno))
            out.append(LongVisitRecord(sid, t, ev, cov))
        groups[sid] = out
    return groups


def reformat_long_to_ltrc(groups: dict[str, list[LongVisitRecord]],
                          schema: CovariateSchema) -> Dataset:
    """Turn visit rows into pseudo-subject records (one per inter-visit interval).

    For visit times t0 < ... < t_{k-1} and terminal time Y the subject yields
    (t0,t1,0), ..., (t_{k-1},Y,delta); each interval carries the covariates
    recorded at its opening visit.
    """
    records = []
    for sid, rows in groups.items():
        if len(rows) < 2:
            raise ValidationError(f"subject {sid!r}: no terminal row")
        visits, terminal = rows[:-1], rows[-1]
        times = [r.time for r in visits]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError(f"subject {sid!r}: visit times must be increasing")
        if terminal.time <= times[-1]:
            raise ValidationError(
                f"subject {sid!r}: terminal time {terminal.time} must exceed last visit {times[-1]}")
        ends = times[1:] + [terminal.time]
        for k, (visit, end) in enumerate(zip(visits, ends)):
            last = k == len(visits) - 1
            records.append(LTRCRecord(sid, visit.time, end, terminal.event if last else 0,
                                      visit.covariates))
    return Dataset.from_records(schema, records)


def make_pseudo_subjects(rec: LTRCRecord, cuts: Sequence[float]) -> list[LTRCRecord]:
    """Split ``rec`` at interior ``cuts``; only the last piece keeps the event."""
    cuts = [float(c) for c in cuts]
    if any(b <= a for a, b in zip(cuts, cuts[1:])):
        raise ValueError("cuts must be strictly increasing")
    for c in cuts:
        if not rec.left < c < rec.right:
            raise ValueError(f"cut {c} is not inside ({rec.left}, {rec.right})")
    bounds = [rec.left] + cuts + [rec.right]
    last = len(bounds) - 2
    return [LTRCRecord(rec.subject_id, a, b, rec.event if k == last else 0, rec.covariates)
            for k, (a, b) in enumerate(zip(bounds, bounds[1:]))]


def split_dataset(dataset: Dataset, cuts: Sequence[Sequence[float]]) -> Dataset:
    """Apply :func:`make_pseudo_subjects` record by record, keeping order."""
    if len(cuts) != len(dataset):
        raise ValueError("need one cut list per record")
    out = []
    for rec, c in zip(dataset.records, cuts):
        out.extend(make_pseudo_subjects(rec, c))
    return Dataset.from_records(dataset.schema, out)
