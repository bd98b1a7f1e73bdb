import csv
import io

import pytest
from hypothesis import given, strategies as st

from obsim.metrics import (CSV_COLUMNS, Counters, MetricsReport, finalize, read_csv, seed_mean,
                           write_csv)


def test_blr_definition():
    r = finalize(Counters(generated=100, delivered=90, lost=10), 1.0)
    assert r.blr == pytest.approx(0.10)
    assert not r.blr_undefined


def test_zero_generated_flagged():
    r = finalize(Counters(), 1.0)
    assert r.blr == 0.0 and r.blr_undefined


def test_goodput():
    c = Counters(generated=90, delivered=90, delivered_bits=90 * 400_000 * 8)
    assert finalize(c, 1.0).goodput_gbps == pytest.approx(0.288, abs=1e-12)


def test_undrained_rejected():
    with pytest.raises(ValueError):
        finalize(Counters(generated=3, delivered=1), 1.0)


def test_mean_delay():
    c = Counters(generated=2, delivered=2, delay_sum=3e-3)
    assert finalize(c, 1.0).mean_e2e_delay == pytest.approx(1.5e-3)


def report(seed=1, strategy="ahdr", load=0.5, **kw):
    base = dict(scenario="general", strategy=strategy, load=load, seed=seed, bursts_generated=100,
                delivered=97, permanently_lost=3, blr=0.03, goodput_gbps=1.234567, deflections=5,
                retransmissions=4, mean_delay_us=1234.5)
    base.update(kw)
    return MetricsReport(**base)


def test_header_only(tmp_path):
    path = tmp_path / "out.csv"
    write_csv([], path)
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"


def test_two_reports_three_lines(tmp_path):
    path = tmp_path / "out.csv"
    write_csv([report(1), report(2)], path)
    assert len(path.read_text().splitlines()) == 3


def test_append(tmp_path):
    path = tmp_path / "out.csv"
    write_csv([report(1)], path, header_comments=["x=1"])
    write_csv([report(2)], path, append=True)
    lines = path.read_text().splitlines()
    assert lines[0] == "# x=1" and len(lines) == 4
    assert [r.seed for r in read_csv(path)] == [1, 2]


def test_stream_output():
    buf = io.StringIO()
    write_csv([report()], buf)
    assert buf.getvalue().startswith("scenario,strategy,load")


finite = st.floats(0, 1e3, allow_nan=False, allow_infinity=False)


@given(st.floats(0.01, 2.0), st.integers(0, 10**6), st.integers(0, 10**6), st.floats(0, 1),
       finite, st.floats(0, 1e7, allow_nan=False))
def test_round_trip(load, gen, defl, blr, goodput, delay):
    r = report(load=load, bursts_generated=gen, delivered=gen, permanently_lost=0, blr=blr,
               goodput_gbps=goodput, deflections=defl, mean_delay_us=delay)
    buf = io.StringIO()
    write_csv([r], buf)
    lines = buf.getvalue().splitlines()
    back = MetricsReport.from_row(next(csv.DictReader(lines)))
    assert back.row() == r.row()
    for name in ("load", "bursts_generated", "delivered", "permanently_lost", "blr",
                 "goodput_gbps", "deflections", "retransmissions", "mean_delay_us", "seed"):
        assert getattr(back, name) == getattr(r, name)


def test_seed_mean():
    rs = [report(1, blr=0.1), report(2, blr=0.3), report(3, strategy="lhdr", blr=0.9)]
    assert seed_mean(rs, "blr", "general", "ahdr", 0.5) == pytest.approx(0.2)
    assert seed_mean(rs, "deflections", "general", "ahdr", 0.5, per_burst=True) == pytest.approx(0.05)
    assert seed_mean(rs, "blr", "general", "pure", 0.5) is None
