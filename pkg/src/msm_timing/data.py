"""Observational records in counting-process form.

A subject is observed up to ``t_star = min(T, C)``. Treatment initiation is
observed at ``a_star = min(A, T, C)`` with ``delta_a`` flagging an actual
initiation. Covariates are last-observation-carried-forward segments; the
value in force at time ``t`` is the one recorded strictly before ``t``, so a
segment ``(start, stop]`` supplies ``L(t)`` for ``start < t <= stop``.

:class:`Dataset` is columnar and immutable so that fitters, bootstrap
resampling and simulation can work on arrays without materialising one Python
object per subject.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "."})


class ObservationPattern(enum.Enum):
    I = "I"      # initiation observed, then death observed
    II = "II"    # initiation observed, death censored
    III = "III"  # death before initiation
    IV = "IV"    # neither observed


def classify_pattern(delta_a: bool, delta_t: bool) -> ObservationPattern:
    if delta_a:
        return ObservationPattern.I if delta_t else ObservationPattern.II
    return ObservationPattern.III if delta_t else ObservationPattern.IV


def _readonly(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


class CovariatePath:
    """Piecewise-constant covariate history.

    Parameters
    ----------
    starts, stops : array_like, shape (m,)
        Contiguous segment boundaries; ``starts[0] == 0``.
    values : array_like, shape (m, p)
        Covariate values in force on each segment.
    """

    __slots__ = ("starts", "stops", "values")

    def __init__(self, starts, stops, values):
        starts = np.asarray(starts, dtype=float).reshape(-1)
        stops = np.asarray(stops, dtype=float).reshape(-1)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(len(starts), -1)
        if len(starts) == 0:
            raise ValidationError("empty covariate path")
        if len(stops) != len(starts) or values.shape[0] != len(starts):
            raise ValidationError("segment arrays have mismatched lengths")
        _check_segments(starts, stops)
        self.starts = _readonly(starts)
        self.stops = _readonly(stops)
        self.values = _readonly(values)

    @classmethod
    def constant(cls, values, stop):
        values = np.asarray(values, dtype=float).reshape(1, -1)
        return cls([0.0], [float(stop)], values)

    @property
    def baseline(self) -> np.ndarray:
        return self.values[0]

    @property
    def end(self) -> float:
        return float(self.stops[-1])

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def value_at(self, t: float) -> np.ndarray:
        """Covariates in force at ``t`` (observed strictly before ``t``)."""
        if t > self.end:
            raise ValidationError(f"covariate path exhausted at t={t}")
        k = max(int(np.searchsorted(self.starts, t, side="left")) - 1, 0)
        return self.values[k]

    def truncate(self, t: float) -> "CovariatePath":
        keep = self.starts < t
        if not keep.any():
            keep[0] = True
        stops = np.minimum(self.stops[keep], t)
        return CovariatePath(self.starts[keep], stops, self.values[keep])

    def __len__(self):
        return len(self.starts)

    def __eq__(self, other):
        if not isinstance(other, CovariatePath):
            return NotImplemented
        return (
            np.array_equal(self.starts, other.starts)
            and np.array_equal(self.stops, other.stops)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"CovariatePath(segments={len(self)}, p={self.p}, end={self.end})"


def _check_segments(starts, stops, subject=None):
    who = "" if subject is None else f"subject {subject}: "
    if not (np.all(np.isfinite(starts)) and np.all(np.isfinite(stops))):
        raise ValidationError(f"{who}non-finite segment time")
    if starts[0] != 0.0:
        raise ValidationError(f"{who}covariate path must start at 0, got {starts[0]}")
    if np.any(stops <= starts):
        raise ValidationError(f"{who}segment with stop <= start")
    if np.any(starts[1:] != stops[:-1]):
        raise ValidationError(f"{who}overlapping or gapped covariate segments")


@dataclass(frozen=True, eq=False)
class SubjectRecord:
    id: object
    a_star: float
    delta_a: bool
    t_star: float
    delta_t: bool
    covariates: CovariatePath
    stratum: object = None

    def __post_init__(self):
        _check_times(self.id, self.a_star, self.delta_a, self.t_star)
        if self.covariates.end < self.t_star:
            raise ValidationError(
                f"subject {self.id}: covariate path ends at {self.covariates.end} "
                f"before t_star={self.t_star}"
            )

    @property
    def pattern(self) -> ObservationPattern:
        return classify_pattern(self.delta_a, self.delta_t)

    def __eq__(self, other):
        if not isinstance(other, SubjectRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.a_star == other.a_star
            and bool(self.delta_a) == bool(other.delta_a)
            and self.t_star == other.t_star
            and bool(self.delta_t) == bool(other.delta_t)
            and self.covariates == other.covariates
            and self.stratum == other.stratum
        )


def _check_times(sid, a_star, delta_a, t_star):
    for name, v in (("a_star", a_star), ("t_star", t_star)):
        if not math.isfinite(v):
            raise ValidationError(f"subject {sid}: {name} is not finite")
        if v < 0:
            raise ValidationError(f"subject {sid}: negative time {name}={v}")
    if t_star <= 0:
        raise ValidationError(f"subject {sid}: t_star must be positive")
    if a_star > t_star:
        raise ValidationError(f"subject {sid}: a_star={a_star} exceeds t_star={t_star}")
    if delta_a and not a_star < t_star:
        raise ValidationError(
            f"subject {sid}: observed initiation must precede t_star strictly"
        )


def _concat_ranges(starts, lengths):
    """Concatenate ``arange(s, s + l)`` for paired starts and lengths."""
    starts = np.asarray(starts, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    keep = lengths > 0
    starts, lengths = starts[keep], lengths[keep]
    ends = np.cumsum(lengths)
    out = np.ones(total, dtype=np.int64)
    out[0] = starts[0]
    out[ends[:-1]] = starts[1:] - (starts[:-1] + lengths[:-1] - 1)
    return np.cumsum(out)


class Dataset:
    """Immutable, columnar collection of subjects.

    Segments of all subjects are stored back to back; subject ``i`` owns
    ``seg_start[seg_offsets[i]:seg_offsets[i + 1]]``. Paths are truncated at
    each subject's ``t_star``.
    """

    def __init__(
        self,
        *,
        ids,
        a_star,
        delta_a,
        t_star,
        delta_t,
        seg_start,
        seg_stop,
        seg_values,
        seg_offsets,
        t_max=None,
        covariate_names=(),
        strata=None,
        validate=True,
    ):
        ids = np.asarray(ids, dtype=object).reshape(-1)
        a_star = np.asarray(a_star, dtype=float).reshape(-1)
        t_star = np.asarray(t_star, dtype=float).reshape(-1)
        delta_a = np.asarray(delta_a, dtype=bool).reshape(-1)
        delta_t = np.asarray(delta_t, dtype=bool).reshape(-1)
        seg_start = np.asarray(seg_start, dtype=float).reshape(-1)
        seg_stop = np.asarray(seg_stop, dtype=float).reshape(-1)
        seg_offsets = np.asarray(seg_offsets, dtype=np.int64).reshape(-1)
        covariate_names = tuple(str(c) for c in covariate_names)
        seg_values = np.asarray(seg_values, dtype=float).reshape(len(seg_start), len(covariate_names))
        n = len(ids)
        if strata is not None:
            strata = np.asarray(strata, dtype=object).reshape(-1)
            if len(strata) != n:
                raise ValidationError("strata length mismatch")
        if validate:
            for arr, name in ((a_star, "a_star"), (t_star, "t_star"), (delta_a, "delta_a"), (delta_t, "delta_t")):
                if len(arr) != n:
                    raise ValidationError(f"{name} length mismatch")
            if len(seg_offsets) != n + 1 or seg_offsets[0] != 0 or seg_offsets[-1] != len(seg_start):
                raise ValidationError("segment offsets inconsistent with segment arrays")
            if np.any(np.diff(seg_offsets) <= 0):
                i = int(np.argmax(np.diff(seg_offsets) <= 0))
                raise ValidationError(f"subject {ids[i]}: empty covariate path")
            _validate_columns(ids, a_star, delta_a, t_star, delta_t, seg_start, seg_stop, seg_offsets)
            if t_max is None:
                t_max = float(t_star.max()) if n else 0.0
            if n and t_star.max() > t_max:
                raise ValidationError("subject times exceed the administrative horizon t_max")
            # paths are stored up to t_star only
            seg_subject = np.repeat(np.arange(n), np.diff(seg_offsets))
            keep = seg_start < t_star[seg_subject]
            if not keep.all():
                seg_start, seg_stop, seg_values = seg_start[keep], seg_stop[keep], seg_values[keep]
                seg_offsets = np.concatenate([[0], np.cumsum(np.bincount(seg_subject[keep], minlength=n))])
                seg_subject = seg_subject[keep]
            seg_stop = np.minimum(seg_stop, t_star[seg_subject])
        self.ids = _readonly(ids)
        self.a_star = _readonly(a_star)
        self.delta_a = _readonly(delta_a)
        self.t_star = _readonly(t_star)
        self.delta_t = _readonly(delta_t)
        self.seg_start = _readonly(seg_start)
        self.seg_stop = _readonly(seg_stop)
        self.seg_values = _readonly(seg_values)
        self.seg_offsets = _readonly(seg_offsets)
        self.t_max = float(t_max)
        self.covariate_names = covariate_names
        self.strata = None if strata is None else _readonly(strata)
        self._subjects = None

    # construction helpers -------------------------------------------------

    @classmethod
    def from_subjects(cls, subjects: Sequence[SubjectRecord], t_max=None, covariate_names=None):
        subjects = list(subjects)
        if not subjects:
            raise ValidationError("dataset has no subjects")
        p = subjects[0].covariates.p
        if covariate_names is None:
            covariate_names = [f"x{j}" for j in range(p)]
        if len(covariate_names) != p or any(s.covariates.p != p for s in subjects):
            raise ValidationError("covariate dimension differs across subjects")
        lengths = [len(s.covariates) for s in subjects]
        has_strata = any(s.stratum is not None for s in subjects)
        return cls(
            ids=[s.id for s in subjects],
            a_star=[s.a_star for s in subjects],
            delta_a=[s.delta_a for s in subjects],
            t_star=[s.t_star for s in subjects],
            delta_t=[s.delta_t for s in subjects],
            seg_start=np.concatenate([s.covariates.starts for s in subjects]),
            seg_stop=np.concatenate([s.covariates.stops for s in subjects]),
            seg_values=np.concatenate([s.covariates.values for s in subjects]).reshape(sum(lengths), p),
            seg_offsets=np.concatenate([[0], np.cumsum(lengths)]),
            t_max=t_max,
            covariate_names=covariate_names,
            strata=[s.stratum for s in subjects] if has_strata else None,
        )

    @classmethod
    def from_baseline(cls, a_star, delta_a, t_star, delta_t, covariates=None, *,
                      covariate_names=None, ids=None, t_max=None, strata=None):
        """Dataset whose covariates are fixed at their baseline values."""
        t_star = np.asarray(t_star, dtype=float)
        n = len(t_star)
        if covariates is None:
            covariates = np.zeros((n, 0))
        covariates = np.asarray(covariates, dtype=float).reshape(n, -1)
        if covariate_names is None:
            covariate_names = [f"x{j}" for j in range(covariates.shape[1])]
        return cls(
            ids=np.arange(n) if ids is None else ids,
            a_star=a_star,
            delta_a=delta_a,
            t_star=t_star,
            delta_t=delta_t,
            seg_start=np.zeros(n),
            seg_stop=t_star,
            seg_values=covariates,
            seg_offsets=np.arange(n + 1),
            t_max=t_max,
            covariate_names=covariate_names,
            strata=strata,
        )

    # accessors ------------------------------------------------------------

    def __len__(self):
        return len(self.ids)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def p(self) -> int:
        return len(self.covariate_names)

    @property
    def seg_subject(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.seg_offsets))

    @property
    def single_segment(self) -> bool:
        return len(self.seg_start) == self.n

    def covariate_index(self, name: str) -> int:
        try:
            return self.covariate_names.index(name)
        except ValueError:
            raise ValidationError(f"unknown covariate {name!r}") from None

    def path(self, i: int) -> CovariatePath:
        lo, hi = self.seg_offsets[i], self.seg_offsets[i + 1]
        return CovariatePath(self.seg_start[lo:hi], self.seg_stop[lo:hi], self.seg_values[lo:hi])

    def subject(self, i: int) -> SubjectRecord:
        return SubjectRecord(
            id=self.ids[i],
            a_star=float(self.a_star[i]),
            delta_a=bool(self.delta_a[i]),
            t_star=float(self.t_star[i]),
            delta_t=bool(self.delta_t[i]),
            covariates=self.path(i),
            stratum=None if self.strata is None else self.strata[i],
        )

    @property
    def subjects(self) -> tuple:
        if self._subjects is None:
            self._subjects = tuple(self.subject(i) for i in range(self.n))
        return self._subjects

    def patterns(self) -> list:
        return [classify_pattern(a, t) for a, t in zip(self.delta_a, self.delta_t)]

    def stratum_labels(self) -> list:
        if self.strata is None:
            return [None]
        seen = {}
        for s in self.strata:
            seen.setdefault(s, None)
        return list(seen)

    # derived datasets -----------------------------------------------------

    def take(self, idx) -> "Dataset":
        """Subjects at positions ``idx`` (repeats allowed, e.g. for resampling)."""
        idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        lengths = self.seg_offsets[idx + 1] - self.seg_offsets[idx]
        seg = _concat_ranges(self.seg_offsets[idx], lengths)
        return Dataset(
            ids=self.ids[idx],
            a_star=self.a_star[idx],
            delta_a=self.delta_a[idx],
            t_star=self.t_star[idx],
            delta_t=self.delta_t[idx],
            seg_start=self.seg_start[seg],
            seg_stop=self.seg_stop[seg],
            seg_values=self.seg_values[seg],
            seg_offsets=np.concatenate([[0], np.cumsum(lengths)]),
            t_max=self.t_max,
            covariate_names=self.covariate_names,
            strata=None if self.strata is None else self.strata[idx],
            validate=False,
        )

    def stratum(self, label) -> "Dataset":
        if self.strata is None:
            if label is None:
                return self
            raise ValidationError("dataset has no strata")
        idx = np.flatnonzero(np.array([s == label for s in self.strata], dtype=bool))
        if len(idx) == 0:
            raise ValidationError(f"no subjects in stratum {label!r}")
        return self.take(idx)

    def __repr__(self):
        return f"Dataset(n={self.n}, p={self.p}, t_max={self.t_max})"


def _validate_columns(ids, a_star, delta_a, t_star, delta_t, seg_start, seg_stop, seg_offsets):
    bad = ~(np.isfinite(a_star) & np.isfinite(t_star))
    bad |= (a_star < 0) | (t_star <= 0) | (a_star > t_star)
    bad |= delta_a & ~(a_star < t_star)
    if bad.any():
        i = int(np.argmax(bad))
        _check_times(ids[i], float(a_star[i]), bool(delta_a[i]), float(t_star[i]))
    if not (np.all(np.isfinite(seg_start)) and np.all(np.isfinite(seg_stop))):
        raise ValidationError("non-finite segment time")
    first = seg_offsets[:-1]
    last = seg_offsets[1:] - 1
    problems = np.zeros(len(ids), dtype=bool)
    problems |= seg_start[first] != 0.0
    seg_subject = np.repeat(np.arange(len(ids)), np.diff(seg_offsets))
    bad_seg = seg_stop <= seg_start
    contiguous = np.ones(len(seg_start), dtype=bool)
    contiguous[1:] = seg_start[1:] == seg_stop[:-1]
    contiguous[first] = True
    bad_seg |= ~contiguous
    if bad_seg.any():
        problems[seg_subject[bad_seg]] = True
    problems |= seg_stop[last] < t_star
    if problems.any():
        i = int(np.argmax(problems))
        lo, hi = seg_offsets[i], seg_offsets[i + 1]
        _check_segments(seg_start[lo:hi], seg_stop[lo:hi], ids[i])
        raise ValidationError(
            f"subject {ids[i]}: covariate path ends at {seg_stop[hi - 1]} before t_star={t_star[i]}"
        )


def apply_administrative_censoring(ds: Dataset, t_max: float) -> Dataset:
    """Censor follow-up and initiation at the horizon ``t_max``."""
    t_max = float(t_max)
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    over_t = ds.t_star > t_max
    t_star = np.where(over_t, t_max, ds.t_star)
    delta_t = ds.delta_t & ~over_t
    over_a = ds.a_star >= t_max
    a_star = np.minimum(ds.a_star, t_max)
    delta_a = ds.delta_a & ~over_a
    return Dataset(
        ids=ds.ids,
        a_star=a_star,
        delta_a=delta_a,
        t_star=t_star,
        delta_t=delta_t,
        seg_start=ds.seg_start,
        seg_stop=ds.seg_stop,
        seg_values=ds.seg_values,
        seg_offsets=ds.seg_offsets,
        t_max=min(ds.t_max, t_max),
        covariate_names=ds.covariate_names,
        strata=ds.strata,
    )


# ---------------------------------------------------------------------------
# delimited-text loader


@dataclass(frozen=True)
class Schema:
    """Mapping from semantic column roles to column names."""

    id: str = "id"
    start: str = "start"
    stop: str = "stop"
    covariates: tuple = ()
    initiation: str = "initiation"
    death: str = "death"
    censoring: str = "censoring"
    stratum: str | None = None

    ROLES = ("id", "start", "stop", "covariates", "initiation", "death", "censoring", "stratum")

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "Schema":
        unknown = set(mapping) - set(cls.ROLES)
        if unknown:
            raise ValidationError(f"unknown schema roles: {sorted(unknown)}")
        kwargs = dict(mapping)
        cov = kwargs.get("covariates", ())
        if isinstance(cov, str):
            cov = [c.strip() for c in cov.split(",") if c.strip()]
        kwargs["covariates"] = tuple(cov)
        return cls(**kwargs)

    def to_mapping(self) -> dict:
        return {
            "id": self.id, "start": self.start, "stop": self.stop,
            "covariates": list(self.covariates), "initiation": self.initiation,
            "death": self.death, "censoring": self.censoring, "stratum": self.stratum,
        }

    def required_columns(self) -> list:
        cols = [self.id, self.start, self.stop, *self.covariates, self.initiation, self.death, self.censoring]
        if self.stratum:
            cols.append(self.stratum)
        return cols


@dataclass
class _SubjectRows:
    line: int
    segments: list = field(default_factory=list)
    initiation: list = field(default_factory=list)
    death: list = field(default_factory=list)
    censoring: list = field(default_factory=list)
    stratum: list = field(default_factory=list)


def _parse_time(token, line, column, optional):
    token = (token or "").strip()
    if token.lower() in MISSING_TOKENS:
        if optional:
            return None
        raise ParseError(f"missing value in column {column!r}", line)
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"cannot parse {token!r} in column {column!r}", line) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value in column {column!r}", line)
    return value


def _single(values, sid, role):
    distinct = {v for v in values if v is not None}
    if len(distinct) > 1:
        raise ValidationError(f"subject {sid}: conflicting {role} values {sorted(distinct)}")
    return distinct.pop() if distinct else None


def load_dataset(path, schema: Schema | Mapping, delimiter: str = ",", t_max=None) -> Dataset:
    """Read a delimited file with one row per subject and covariate segment.

    Terminal columns (``initiation``, ``death``, ``censoring``) may be repeated
    on every row of a subject or given on one row only; missing values mark
    an unobserved event.
    """
    if not isinstance(schema, Schema):
        schema = Schema.from_mapping(schema)
    path = Path(path)
    groups: dict = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        if reader.fieldnames is None:
            raise ParseError("file is empty", 1)
        header = [h.strip() for h in reader.fieldnames]
        reader.fieldnames = header
        missing = [c for c in schema.required_columns() if c not in header]
        if missing:
            raise ParseError(f"missing columns {missing}", 1)
        for row in reader:
            line = reader.line_num
            if None in row or any(v is None for v in row.values()):
                raise ParseError("wrong number of fields", line)
            sid = row[schema.id].strip()
            if not sid:
                raise ParseError("missing subject id", line)
            start = _parse_time(row[schema.start], line, schema.start, False)
            stop = _parse_time(row[schema.stop], line, schema.stop, False)
            values = [_parse_time(row[c], line, c, False) for c in schema.covariates]
            g = groups.setdefault(sid, _SubjectRows(line))
            g.segments.append((start, stop, values, line))
            g.initiation.append(_parse_time(row[schema.initiation], line, schema.initiation, True))
            g.death.append(_parse_time(row[schema.death], line, schema.death, True))
            g.censoring.append(_parse_time(row[schema.censoring], line, schema.censoring, True))
            if schema.stratum:
                g.stratum.append(row[schema.stratum].strip())
    if not groups:
        raise ValidationError("no data rows")
    subjects = [_assemble_subject(sid, g) for sid, g in groups.items()]
    horizon = max(s.t_star for s in subjects)
    ds = Dataset.from_subjects(subjects, t_max=horizon if t_max is None else max(t_max, horizon),
                               covariate_names=schema.covariates)
    if t_max is not None and t_max < horizon:
        ds = apply_administrative_censoring(ds, t_max)
    return ds


def _assemble_subject(sid, g: _SubjectRows) -> SubjectRecord:
    segs = sorted(g.segments, key=lambda s: s[0])
    for start, stop, _, line in segs:
        if start < 0 or stop < 0:
            raise ValidationError(f"subject {sid}: negative time at line {line}")
    starts = np.array([s[0] for s in segs])
    stops = np.array([s[1] for s in segs])
    _check_segments(starts, stops, sid)
    values = np.array([s[2] for s in segs], dtype=float).reshape(len(segs), -1)
    a = _single(g.initiation, sid, "initiation")
    d = _single(g.death, sid, "death")
    c = _single(g.censoring, sid, "censoring")
    for name, v in (("initiation", a), ("death", d), ("censoring", c)):
        if v is not None and v < 0:
            raise ValidationError(f"subject {sid}: negative {name} time")
    if d is not None:
        if c is not None and c < d:
            raise ValidationError(f"subject {sid}: censoring at {c} precedes death at {d}")
        t_star, delta_t = d, True
    elif c is not None:
        t_star, delta_t = c, False
    else:
        raise ValidationError(f"subject {sid}: neither death nor censoring time given")
    if a is not None:
        if not a < t_star:
            raise ValidationError(
                f"subject {sid}: initiation at {a} is not strictly before end of follow-up {t_star}"
            )
        a_star, delta_a = a, True
    else:
        a_star, delta_a = t_star, False
    path = CovariatePath(starts, stops, values)
    if path.end < t_star:
        raise ValidationError(f"subject {sid}: covariate path ends at {path.end} before t_star={t_star}")
    stratum = _single(g.stratum, sid, "stratum") if g.stratum else None
    return SubjectRecord(sid, a_star, delta_a, t_star, delta_t, path.truncate(t_star), stratum)


def write_dataset(ds: Dataset, path, schema: Schema | None = None, delimiter: str = ","):
    """Write ``ds`` in the layout read by :func:`load_dataset`."""
    if schema is None:
        schema = Schema(covariates=ds.covariate_names, stratum="stratum" if ds.strata is not None else None)
    cols = schema.required_columns()
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(cols)
        for i in range(ds.n):
            ini = repr(float(ds.a_star[i])) if ds.delta_a[i] else ""
            death = repr(float(ds.t_star[i])) if ds.delta_t[i] else ""
            cens = "" if ds.delta_t[i] else repr(float(ds.t_star[i]))
            for k in range(ds.seg_offsets[i], ds.seg_offsets[i + 1]):
                row = {
                    schema.id: str(ds.ids[i]),
                    schema.start: repr(float(ds.seg_start[k])),
                    schema.stop: repr(float(ds.seg_stop[k])),
                    schema.initiation: ini,
                    schema.death: death,
                    schema.censoring: cens,
                }
                for j, c in enumerate(schema.covariates):
                    row[c] = repr(float(ds.seg_values[k, j]))
                if schema.stratum:
                    row[schema.stratum] = str(ds.strata[i])
                w.writerow([row[c] for c in cols])
