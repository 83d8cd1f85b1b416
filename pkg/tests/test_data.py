import io

import numpy as np
import pytest

from coalscreen.data import BidRow, DataError, Dataset, build_index, parse_dataset, validate


def parse(text, **kw):
    return parse_dataset(io.StringIO(text), **kw)


def test_six_tenders_counts(six_tenders):
    report = validate(six_tenders)
    assert report.counts == (6, 7)
    assert report.n_rows == 23
    assert report.small_tenders == ()


def test_six_tenders_bitset_popcount(six_tenders):
    idx = build_index(six_tenders)
    assert idx.count("F1") == 4
    assert idx.tenders_of(idx.bitset("F1")) == ("T1", "T2", "T3", "T6")
    common = idx.bitset("F1") & idx.bitset("F2") & idx.bitset("F3")
    assert idx.tenders_of(common) == ("T1", "T2", "T3", "T6")


def test_firm_in_no_tender_has_empty_bitset():
    ds = Dataset.from_rows([BidRow("T1", "A", 1.0, False)])
    idx = build_index(ds)
    assert idx.bitset("A") == 1
    assert idx.tenders_of(0) == ()


def test_roundtrip_through_csv(six_tenders):
    again = parse(six_tenders.to_csv())
    assert again == six_tenders
    assert np.array_equal(again.bid_matrix, six_tenders.bid_matrix, equal_nan=True)


def test_custom_schema():
    text = "contract,bidder,amount,cartel\nT1,A,10,1\nT1,B,11,true\n"
    ds = parse(text, schema={"tender_id": "contract", "firm_id": "bidder", "bid": "amount",
                             "rigged_flag": "cartel"})
    assert ds.firms == ("A", "B")
    assert all(r.rigged_flag for r in ds.rows())


@pytest.mark.parametrize("text, line, fragment", [
    ("tender_id,firm_id,bid\nT1,A,1\n", 1, "missing required column"),
    ("tender_id,firm_id,bid,rigged_flag\nT1,A,1,0\nT1,B,0,0\n", 3, "positive"),
    ("tender_id,firm_id,bid,rigged_flag\nT1,A,-5,0\n", 2, "positive"),
    ("tender_id,firm_id,bid,rigged_flag\nT1,A,abc,0\n", 2, "numeric"),
    ("tender_id,firm_id,bid,rigged_flag\nT1,A,1,0\nT1,A,2,0\n", 3, "duplicate"),
    ("tender_id,firm_id,bid,rigged_flag\nT1,A,1,2\n", 2, "rigged_flag"),
    ("tender_id,firm_id,bid,rigged_flag\nT1,A,1\n", 2, "fields"),
    ("", 1, "empty"),
])
def test_rejects_bad_rows(text, line, fragment):
    with pytest.raises(DataError) as exc:
        parse(text)
    assert exc.value.line == line
    assert fragment in str(exc.value)


def test_validate_warns_on_small_and_uniform_flags():
    ds = parse("tender_id,firm_id,bid,rigged_flag\nT1,A,1,0\nT1,B,2,0\n")
    report = validate(ds)
    assert report.small_tenders == ("T1",)
    assert len(report.warnings) == 2
    assert "tenders: 1" in report.summary()


def test_mixed_flag_tenders_counted():
    ds = parse("tender_id,firm_id,bid,rigged_flag\nT1,A,1,1\nT1,B,2,0\nT1,C,3,0\n")
    assert validate(ds).n_mixed_flag_tenders == 1


def test_empty_dataset_validates():
    ds = parse("tender_id,firm_id,bid,rigged_flag\n")
    report = validate(ds)
    assert report.counts == (0, 0)
    assert "dataset is empty" in report.warnings


def test_matrices_are_read_only(six_tenders):
    with pytest.raises(ValueError):
        six_tenders.bid_matrix[0, 0] = 1.0
    assert six_tenders.flag_matrix[3, six_tenders.firm_ordinal["F1"]] == -1
