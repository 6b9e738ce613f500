import tracemalloc

import numpy as np
import pytest
from hypothesis import given, settings, HealthCheck
from hypothesis import strategies as st

from seqsample.line_store import (
    ParseError,
    StoreError,
    VisitorError,
    advance_to_next_header,
    count_records,
    header_offsets,
    iter_lines,
    next_header,
    open_store,
    read_line,
    seek,
    sequential_scan,
)

from oracles import reference_headers, reference_lines, reference_realign

# stores of 1..30 lines, each 0..12 printable bytes (no LF), small buffers
line_text = st.binary(min_size=0, max_size=12).map(lambda b: b.replace(b"\n", b"x"))
store_bytes = st.lists(line_text, min_size=1, max_size=30).map(lambda ls: b"".join(l + b"\n" for l in ls))
fixture_ok = settings(max_examples=60, suppress_health_check=[HealthCheck.function_scoped_fixture], deadline=None)


# -- open ----------------------------------------------------------------------

def test_open_sets_byte_count(make_store):
    assert make_store(b"1.0\n2.0\n").n_f == 8


def test_open_rejects_empty(make_store):
    with pytest.raises(StoreError, match="empty store"):
        make_store(b"")


def test_open_rejects_unterminated(make_store):
    with pytest.raises(StoreError, match="unterminated final line"):
        make_store(b"1.0\n2.0")


def test_open_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        open_store(tmp_path / "nope.csv")


def test_n_f_fixed_at_open(tmp_path):
    path = tmp_path / "grow.csv"
    path.write_bytes(b"1\n2\n")
    with open_store(path) as fh:
        path.write_bytes(b"1\n2\n3\n4\n")
        assert fh.n_f == 4


def test_closed_handle_refuses_reads(make_store):
    fh = make_store(b"1\n")
    fh.close()
    assert fh.closed
    with pytest.raises(StoreError):
        fh.pread(0, 1)


# -- seek / realign ----------------------------------------------------------------

def test_seek_bounds(make_store):
    fh = make_store(b"aa\nbb\n")
    assert seek(fh, 0).position == 0
    assert seek(fh, fh.n_f).position == 6
    with pytest.raises(StoreError):
        seek(fh, fh.n_f + 1)
    with pytest.raises(StoreError):
        seek(fh, -1)


def test_advance_examples(make_store):
    fh = make_store(b"aa\nbb\n")
    c = advance_to_next_header(seek(fh, 1))
    assert (c.position, c.wrapped) == (3, False)
    c = advance_to_next_header(seek(fh, 4))
    assert (c.position, c.wrapped) == (0, True)


def test_advance_is_strictly_after_a_header(make_store):
    fh = make_store(b"aa\nbb\ncc\n")
    assert advance_to_next_header(seek(fh, 3)).position == 6
    # offset 0 selects line 2
    assert advance_to_next_header(seek(fh, 0)).position == 3


def test_advance_from_end_of_file_wraps(make_store):
    fh = make_store(b"aa\nbb\n")
    c = advance_to_next_header(seek(fh, fh.n_f))
    assert (c.position, c.wrapped) == (0, True)


def test_single_line_always_wraps_to_zero(make_store):
    fh = make_store(b"42\n")
    for p in range(fh.n_f + 1):
        assert next_header(fh, p) == 0


def test_long_line_needs_probe_growth(make_store):
    fh = make_store(b"x" * 5000 + b"\n" + b"y\n", probe_size=4)
    assert advance_to_next_header(seek(fh, 2)).position == 5001


@fixture_ok
@given(data=store_bytes, probe=st.integers(1, 8))
def test_realignment_matches_reference(make_store, data, probe):
    fh = make_store(data, probe_size=probe)
    for p in range(len(data) + 1):
        assert next_header(fh, p) == reference_realign(data, p)


@fixture_ok
@given(data=store_bytes)
def test_realign_idempotence(make_store, data):
    fh = make_store(data)
    for p in range(len(data) + 1):
        h = next_header(fh, p)
        if h > 0:
            assert next_header(fh, h - 1) == h


@fixture_ok
@given(data=store_bytes)
def test_offset_to_line_preimage_sizes(make_store, data):
    """Offsets realigning to line i number the byte length of line i-1 (circularly)."""
    fh = make_store(data)
    heads = reference_headers(data)
    lengths = np.diff(heads + [len(data)])
    hits = {h: 0 for h in heads}
    for p in range(len(data) + 1):
        hits[next_header(fh, p)] += 1
    for i, h in enumerate(heads):
        expected = lengths[i - 1]
        if i == 0:
            expected = lengths[-1] + 1  # the extra offset n_f wraps as well
        assert hits[h] == expected


# -- read_line ------------------------------------------------------------------------

def test_read_line_numeric(make_store):
    fh = make_store(b"1.5\n-2\n")
    rec, nxt = read_line(seek(fh, 0))
    assert rec.fields == (1.5,)
    assert rec.origin_offset == 0
    assert nxt.position == 4
    rec, nxt = read_line(nxt)
    assert rec.fields == (-2.0,)
    assert (nxt.position, nxt.wrapped) == (0, True)


def test_read_line_parse_error_names_offset(make_store):
    fh = make_store(b"1\na,b\n")
    with pytest.raises(ParseError) as err:
        read_line(seek(fh, 2))
    assert err.value.offset == 2
    assert "offset 2" in str(err.value)


def test_read_line_raw_mode_skips_parsing(make_store):
    fh = make_store(b"a,b\n")
    rec, _ = read_line(seek(fh, 0), numeric=False)
    assert rec.raw == b"a,b" and rec.fields is None


def test_carriage_return_stripped_but_counted(make_store):
    fh = make_store(b"1\r\n2\r\n")
    rec, nxt = read_line(seek(fh, 0))
    assert rec.raw == b"1" and nxt.position == 3
    assert header_offsets(fh).tolist() == [0, 3]


@fixture_ok
@given(data=store_bytes, p=st.integers(0, 400))
def test_seek_advance_read_never_truncates(make_store, data, p):
    fh = make_store(data, probe_size=3)
    p = p % (len(data) + 1)
    rec, _ = read_line(advance_to_next_header(seek(fh, p)), numeric=False)
    lines = reference_lines(data)
    heads = reference_headers(data)
    assert rec.raw == lines[heads.index(rec.origin_offset)].removesuffix(b"\r")


# -- sequential scan -----------------------------------------------------------------

def test_scan_count_and_headers(make_store):
    assert sequential_scan(make_store(b"1\n2\n3\n")).n_records == 3
    seen = []
    sequential_scan(make_store(b"aa\nbb\n"), lambda r: seen.append(r.origin_offset))
    assert seen == [0, 3]


def test_scan_visitor_error_carries_offset(make_store):
    fh = make_store(b"1\n2\n3\n")

    def visitor(rec):
        if rec.origin_offset == 4:
            raise RuntimeError("boom")

    with pytest.raises(VisitorError) as err:
        sequential_scan(fh, visitor)
    assert err.value.offset == 4


@fixture_ok
@given(data=store_bytes, buf=st.integers(1, 16))
def test_scan_visits_each_line_once_in_order(make_store, data, buf):
    fh = make_store(data, buffer_size=buf)
    seen = []
    summary = sequential_scan(fh, lambda r: seen.append((r.origin_offset, r.raw)), collect_offsets=True)
    lines = [l.removesuffix(b"\r") for l in reference_lines(data)]
    assert seen == list(zip(reference_headers(data), lines))
    assert summary.n_records == len(lines) == count_records(fh)
    assert summary.offsets == reference_headers(data)
    assert header_offsets(fh).tolist() == reference_headers(data)


def test_scan_up_to_ten_thousand_lines(make_store):
    rng = np.random.default_rng(3)
    lines = [("%d" % v).encode() for v in rng.integers(-10**6, 10**6, size=10_000)]
    data = b"".join(l + b"\n" for l in lines)
    fh = make_store(data, buffer_size=1000)
    assert [raw for _, raw in iter_lines(fh)] == lines


def test_scan_memory_independent_of_size(tmp_path):
    peaks = []
    for N in (10_000, 1_000_000):
        path = tmp_path / f"big_{N}.csv"
        path.write_bytes(b"+000.123456\n" * N)
        with open_store(path) as fh:
            tracemalloc.start()
            sequential_scan(fh, lambda r: None)
            peaks.append(tracemalloc.get_traced_memory()[1])
            tracemalloc.stop()
    # a few buffers either way; nothing that scales with N
    assert peaks[1] < 4 * 64 * 1024 + 16 * 1024
    assert peaks[1] < 2 * peaks[0] + 16 * 1024
