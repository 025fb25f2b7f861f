import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msm_timing.data import (
    CovariatePath, Dataset, ObservationPattern, Schema, SubjectRecord, apply_administrative_censoring,
    classify_pattern, load_dataset, write_dataset,
)
from msm_timing.errors import ParseError, ValidationError

SCHEMA = Schema(covariates=("cd4",))


def _write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return p


def _subject(a, da, t, dt, sid=0):
    return SubjectRecord(sid, a, da, t, dt, CovariatePath.constant([0.0], t))


def test_load_two_segments(tmp_path):
    p = _write(tmp_path, "id,start,stop,cd4,initiation,death,censoring\n"
                         "1,0,4,350,,10,\n1,4,10,300,,10,\n")
    ds = load_dataset(p, SCHEMA)
    assert ds.n == 1
    s = ds.subject(0)
    assert s.t_star == 10 and s.delta_t
    assert not s.delta_a
    assert s.covariates.value_at(5.0)[0] == 300
    assert s.covariates.value_at(4.0)[0] == 350  # strictly-before convention


def test_segment_stop_before_start(tmp_path):
    p = _write(tmp_path, "id,start,stop,cd4,initiation,death,censoring\n1,0,4,350,,,10\n1,6,4,300,,,10\n")
    with pytest.raises(ValidationError):
        load_dataset(p, SCHEMA)


def test_gap_names_subject(tmp_path):
    p = _write(tmp_path, "id,start,stop,cd4,initiation,death,censoring\n7,0,4,350,,,10\n7,5,10,300,,,10\n")
    with pytest.raises(ValidationError, match="7"):
        load_dataset(p, SCHEMA)


def test_empty_covariate_path():
    with pytest.raises(ValidationError, match="empty covariate path"):
        Dataset(ids=[1, 2], a_star=[1, 1], delta_a=[False, False], t_star=[5, 5], delta_t=[True, True],
                seg_start=[0.0], seg_stop=[5.0], seg_values=np.zeros((1, 0)), seg_offsets=[0, 1, 1])


def test_malformed_row_reports_line(tmp_path):
    p = _write(tmp_path, "id,start,stop,cd4,initiation,death,censoring\n1,0,x,350,,,10\n")
    with pytest.raises(ParseError, match="line 2"):
        load_dataset(p, SCHEMA)


def test_negative_time(tmp_path):
    p = _write(tmp_path, "id,start,stop,cd4,initiation,death,censoring\n1,0,4,350,-1,,4\n")
    with pytest.raises(ValidationError):
        load_dataset(p, SCHEMA)


def test_tie_with_initiation_rejected():
    with pytest.raises(ValidationError):
        _subject(5.0, True, 5.0, True)


@pytest.mark.parametrize("da,dt,expected", [
    (True, True, ObservationPattern.I),
    (True, False, ObservationPattern.II),
    (False, True, ObservationPattern.III),
    (False, False, ObservationPattern.IV),
])
def test_classify_pattern(da, dt, expected):
    assert classify_pattern(da, dt) is expected


def _one(a, da, t, dt, t_max=200.0):
    return Dataset.from_subjects([_subject(a, da, t, dt)], t_max=t_max)


def test_admin_censoring_late_initiation():
    ds = apply_administrative_censoring(_one(80, True, 90, False), 78)
    assert (ds.a_star[0], ds.delta_a[0], ds.t_star[0], ds.delta_t[0]) == (78, False, 78, False)


def test_admin_censoring_inside_horizon():
    ds = apply_administrative_censoring(_one(4, True, 30, True), 78)
    assert (ds.a_star[0], ds.delta_a[0], ds.t_star[0], ds.delta_t[0]) == (4, True, 30, True)


def test_admin_censoring_late_death():
    ds = apply_administrative_censoring(_one(10, True, 100, True), 78)
    assert (ds.a_star[0], ds.delta_a[0], ds.t_star[0], ds.delta_t[0]) == (10, True, 78, False)
    assert ds.path(0).end == 78


def test_admin_censoring_rejects_nonpositive():
    with pytest.raises(ValueError):
        apply_administrative_censoring(_one(4, True, 30, True), 0)


def _random_rows(draw):
    n = draw(st.integers(1, 6))
    rows = []
    for i in range(n):
        k = draw(st.integers(1, 3))
        cuts = sorted(draw(st.lists(st.floats(0.5, 90), min_size=k, max_size=k, unique=True)))
        starts = [0.0] + cuts[:-1]
        end = cuts[-1]
        event = draw(st.sampled_from(["death", "censoring"]))
        a = draw(st.one_of(st.none(), st.floats(0, 95)))
        for s, e in zip(starts, cuts):
            rows.append((i, s, e, draw(st.floats(0, 1000)), a, end, event))
    return rows


@st.composite
def files(draw):
    return _random_rows(draw), draw(st.floats(20, 100))


@given(files())
def test_loaded_records_satisfy_invariants(tmp_path_factory, spec):
    rows, t_max = spec
    p = tmp_path_factory.mktemp("f") / "d.csv"
    lines = ["id,start,stop,cd4,initiation,death,censoring"]
    for i, s, e, v, a, end, event in rows:
        ini = "" if a is None or a >= end else repr(a)
        lines.append(f"{i},{s!r},{e!r},{v!r},{ini},{repr(end) if event == 'death' else ''},"
                     f"{repr(end) if event == 'censoring' else ''}")
    p.write_text("\n".join(lines) + "\n")
    ds = apply_administrative_censoring(load_dataset(p, SCHEMA), t_max)
    for s in ds.subjects:
        assert 0 <= s.a_star <= s.t_star <= t_max
        if s.delta_a:
            assert s.a_star < s.t_star
        c = s.covariates
        assert c.starts[0] == 0 and np.all(c.starts[1:] == c.stops[:-1]) and np.all(c.starts < c.stops)


@given(st.floats(1, 120), st.floats(0, 100), st.booleans(), st.floats(0.1, 100), st.booleans())
def test_admin_censoring_idempotent(t_max, a, da, t, dt):
    if da and not a < t:
        a = t / 2
    a = min(a, t)
    ds = _one(a, da, t, dt)
    once = apply_administrative_censoring(ds, t_max)
    twice = apply_administrative_censoring(once, t_max)
    assert once.subjects == twice.subjects


def test_write_load_round_trip(tmp_path, rng):
    from conftest import random_dataset

    ds = random_dataset(rng, n=15)
    write_dataset(ds, tmp_path / "r.csv")
    back = load_dataset(tmp_path / "r.csv", Schema(covariates=ds.covariate_names), t_max=ds.t_max)
    for s, b in zip(ds.subjects, back.subjects):
        assert s.a_star == b.a_star and s.t_star == b.t_star
        assert s.delta_a == b.delta_a and s.delta_t == b.delta_t
        assert np.array_equal(s.covariates.values, b.covariates.values)


def test_load_without_covariates(tmp_path):
    ds = Dataset.from_baseline([2.0, 5.0], [True, False], [9.0, 5.0], [True, True], t_max=20.0)
    write_dataset(ds, tmp_path / "d.csv")
    back = load_dataset(tmp_path / "d.csv", Schema())
    assert back.seg_values.shape == (2, 0)
    assert np.array_equal(back.t_star, ds.t_star)
