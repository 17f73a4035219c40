import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from edgecloud.feed_model import (
    CleanTuple,
    ContextTuple,
    MotionLabel,
    ParseError,
    RawTuple,
    iter_lines,
    parse_context,
    parse_tuple,
    read_feed,
    serialize_tuple,
    write_lines,
)


def test_parse_core_fields():
    t = parse_tuple("r12,12,bus7,46.09,-64.79,1465387200000")
    assert t == RawTuple("r12", "12", "bus7", 46.09, -64.79, 1465387200000)
    assert t.extras == ()


def test_parse_extras_in_order():
    t = parse_tuple("r12,12,bus7,46.09,-64.79,1465387200000,door=open,temp=21")
    assert (t.route_id, t.lat, t.ts) == ("r12", 46.09, 1465387200000)
    assert t.extras == (("door", "open"), ("temp", "21"))


@pytest.mark.parametrize(
    "line, column",
    [
        ("r12,12,bus7,abc,-64.79,1465387200000", "lat"),
        ("r12,12,bus7,46.09,x,1465387200000", "lon"),
        ("r12,12,bus7,46.09,-64.79,12.5", "ts"),
        ("r12,12,bus7,46.09,-64.79", "ts"),
        ("r12,12", "vehicle_id"),
    ],
)
def test_parse_errors_name_the_column(line, column):
    with pytest.raises(ParseError) as err:
        parse_tuple(line)
    assert err.value.column == column
    assert column in str(err.value)


def test_empty_numeric_fields_are_none():
    t = parse_tuple("r1,1,bus1,,-64.8,")
    assert t.lat is None and t.ts is None and t.lon == -64.8


def test_context_serialization_format():
    ct = ContextTuple("r1", "1", "bus1", 46.1, -64.8, 1000, MotionLabel.STOP, 7.2)
    assert serialize_tuple(ct) == "r1,1,bus1,46.1,-64.8,1000,label=stop,dist=7.2"
    first = ContextTuple("r1", "1", "bus1", 46.1, -64.8, 1000, MotionLabel.MOVE, None)
    assert serialize_tuple(first).endswith(",label=move")


def test_no_trailing_comma_without_extras():
    line = serialize_tuple(CleanTuple("r1", "1", "bus1", 46.1, -64.8, 1000))
    assert line == "r1,1,bus1,46.1,-64.8,1000"


def test_iter_lines_skips_comments_and_blanks():
    src = io.StringIO("# header\n\nr1,1,b,1.0,2.0,3\r\n")
    assert list(iter_lines(src)) == ["r1,1,b,1.0,2.0,3"]


def test_read_feed_assigns_arrival_seq(tmp_path):
    p = tmp_path / "f.txt"
    write_lines(p, ["r1,1,a,1.0,2.0,5", "r1,1,b,1.0,2.0,3"], header=["# comment"])
    feed = read_feed(p)
    assert [t.arrival_seq for t in feed] == [0, 1]
    assert [t.vehicle_id for t in feed] == ["a", "b"]


token = st.text(alphabet=st.characters(blacklist_characters=",=\n\r#", blacklist_categories=("Cs",)), min_size=1, max_size=8)
finite = st.floats(allow_nan=False, allow_infinity=False)


@given(
    rid=token,
    num=token,
    vid=token,
    lat=finite,
    lon=finite,
    ts=st.integers(min_value=-(2**62), max_value=2**62),
    extras=st.lists(st.tuples(token, st.text(alphabet="abc123", max_size=5)), max_size=3),
)
def test_raw_round_trip(rid, num, vid, lat, lon, ts, extras):
    t = RawTuple(rid, num, vid, lat, lon, ts, tuple(extras))
    assert parse_tuple(serialize_tuple(t)) == t


@given(
    lat=st.floats(-90, 90),
    lon=st.floats(-180, 180),
    ts=st.integers(0, 2**50),
    label=st.sampled_from(list(MotionLabel)),
    dist=st.one_of(st.none(), st.floats(0, 1e6)),
)
def test_context_round_trip(lat, lon, ts, label, dist):
    ct = ContextTuple("r1", "1", "bus-1", lat, lon, ts, label, dist)
    assert parse_context(serialize_tuple(ct)) == ct


def test_parse_context_requires_label():
    with pytest.raises(ParseError) as err:
        parse_context("r1,1,b,1.0,2.0,3")
    assert err.value.column == "label"
