"""Procurement bid data: parsing, validation and the firm participation index.

A dataset is a collection of tenders, each holding the bids of the firms that
took part in it. Every bid row carries a ``rigged_flag`` telling whether the
firm was acting as a cartel participant when it submitted that bid.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from typing import IO, Iterable, Mapping, Union

import numpy as np

DEFAULT_SCHEMA = {
    "tender_id": "tender_id",
    "firm_id": "firm_id",
    "bid": "bid",
    "rigged_flag": "rigged_flag",
}


class DataError(ValueError):
    """Raised when input bid data violates the dataset contract."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class BidRow:
    tender_id: str
    firm_id: str
    bid: float
    rigged_flag: bool


@dataclass(frozen=True)
class Tender:
    tender_id: str
    rows: tuple[BidRow, ...]

    @property
    def firm_ids(self) -> tuple[str, ...]:
        return tuple(r.firm_id for r in self.rows)

    @property
    def bids(self) -> np.ndarray:
        return np.array([r.bid for r in self.rows], dtype=float)

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of tenders.

    ``firms`` lists firm ids in ascending order. ``provenance`` is not part of
    equality, so a dataset reparsed from its own CSV export compares equal.
    """

    tenders: tuple[Tender, ...]
    firms: tuple[str, ...]
    provenance: Mapping[str, str] = field(default_factory=dict, compare=False)

    @classmethod
    def from_rows(cls, rows: Iterable[BidRow], provenance: Mapping[str, str] | None = None) -> "Dataset":
        """Group rows by tender (first-appearance order) after checking invariants."""
        grouped: dict[str, list[BidRow]] = {}
        seen: set[tuple[str, str]] = set()
        for row in rows:
            if not (row.bid > 0 and np.isfinite(row.bid)):
                raise DataError(f"bid must be positive and finite, got {row.bid!r}")
            key = (row.tender_id, row.firm_id)
            if key in seen:
                raise DataError(f"duplicate (tender, firm) pair {key}")
            seen.add(key)
            grouped.setdefault(row.tender_id, []).append(row)
        tenders = tuple(Tender(t, tuple(r)) for t, r in grouped.items())
        firms = tuple(sorted({r.firm_id for t in tenders for r in t.rows}))
        return cls(tenders, firms, dict(provenance or {}))

    @property
    def tender_ids(self) -> tuple[str, ...]:
        return tuple(t.tender_id for t in self.tenders)

    @property
    def n_rows(self) -> int:
        return sum(len(t) for t in self.tenders)

    def rows(self) -> Iterable[BidRow]:
        for t in self.tenders:
            yield from t.rows

    @cached_property
    def firm_ordinal(self) -> dict[str, int]:
        return {f: i for i, f in enumerate(self.firms)}

    @cached_property
    def tender_ordinal(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.tender_ids)}

    @cached_property
    def bid_matrix(self) -> np.ndarray:
        """Dense ``(n_tenders, n_firms)`` bid table, NaN where a firm did not bid."""
        out = np.full((len(self.tenders), len(self.firms)), np.nan)
        fo = self.firm_ordinal
        for i, t in enumerate(self.tenders):
            for r in t.rows:
                out[i, fo[r.firm_id]] = r.bid
        out.flags.writeable = False
        return out

    @cached_property
    def flag_matrix(self) -> np.ndarray:
        """Dense rigged-flag table: 1/0 where a bid exists, -1 elsewhere."""
        out = np.full((len(self.tenders), len(self.firms)), -1, dtype=np.int8)
        fo = self.firm_ordinal
        for i, t in enumerate(self.tenders):
            for r in t.rows:
                out[i, fo[r.firm_id]] = int(r.rigged_flag)
        out.flags.writeable = False
        return out

    def to_csv(self, stream: IO[str] | None = None, schema: Mapping[str, str] | None = None) -> str | None:
        """Write the dataset in the standard input format.

        Returns the CSV text when ``stream`` is None.
        """
        schema = {**DEFAULT_SCHEMA, **(schema or {})}
        buf = stream if stream is not None else io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([schema[c] for c in DEFAULT_SCHEMA])
        for r in self.rows():
            writer.writerow([r.tender_id, r.firm_id, repr(float(r.bid)), int(r.rigged_flag)])
        if stream is None:
            return buf.getvalue()
        return None


@dataclass(frozen=True)
class ValidationReport:
    n_tenders: int
    n_firms: int
    n_rows: int
    small_tenders: tuple[str, ...]
    n_mixed_flag_tenders: int
    warnings: tuple[str, ...]

    @property
    def counts(self) -> tuple[int, int]:
        return self.n_tenders, self.n_firms

    def summary(self) -> str:
        lines = [
            f"tenders: {self.n_tenders}",
            f"firms: {self.n_firms}",
            f"bids: {self.n_rows}",
            f"tenders with <3 bidders: {len(self.small_tenders)}",
            f"tenders with mixed flags: {self.n_mixed_flag_tenders}",
        ]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def _parse_flag(raw: str, line: int) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true"):
        return True
    if value in ("0", "false"):
        return False
    raise DataError(f"rigged_flag must be 0 or 1, got {raw!r}", line)


def parse_dataset(
    source: Union[str, os.PathLike, IO[str], IO[bytes]],
    schema: Mapping[str, str] | None = None,
) -> Dataset:
    """Parse a bid CSV into a :class:`Dataset`.

    Parameters
    ----------
    source
        Path to a UTF-8 CSV file, or an open text/binary stream.
    schema
        Optional mapping from logical column (``tender_id``, ``firm_id``,
        ``bid``, ``rigged_flag``) to the header name used in the file.

    Raises
    ------
    DataError
        On a missing column, malformed row, non-positive or non-numeric bid,
        or a duplicated (tender, firm) pair. The message names the line.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    path = None
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        with open(path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty input: header row required", 1) from None
    header = [h.strip() for h in header]
    cols = {}
    for logical, name in schema.items():
        if name not in header:
            raise DataError(f"missing required column {name!r}", 1)
        cols[logical] = header.index(name)

    rows: list[BidRow] = []
    seen: dict[tuple[str, str], int] = {}
    for record in reader:
        line = reader.line_num
        if not record or all(not c.strip() for c in record):
            continue
        if len(record) != len(header):
            raise DataError(f"expected {len(header)} fields, found {len(record)}", line)
        tender_id = record[cols["tender_id"]].strip()
        firm_id = record[cols["firm_id"]].strip()
        if not tender_id or not firm_id:
            raise DataError("empty tender_id or firm_id", line)
        raw_bid = record[cols["bid"]].strip()
        try:
            bid = float(raw_bid)
        except ValueError:
            raise DataError(f"bid is not numeric: {raw_bid!r}", line) from None
        if not np.isfinite(bid) or bid <= 0:
            raise DataError(f"bid must be positive, got {raw_bid!r}", line)
        key = (tender_id, firm_id)
        if key in seen:
            raise DataError(f"duplicate (tender, firm) pair {key}, first seen on line {seen[key]}", line)
        seen[key] = line
        rows.append(BidRow(tender_id, firm_id, bid, _parse_flag(record[cols["rigged_flag"]], line)))

    provenance = {
        "source": path or "<stream>",
        "parsed_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    return Dataset.from_rows(rows, provenance)


def validate(dataset: Dataset) -> ValidationReport:
    """Summarize a dataset; never raises, problems become warnings."""
    small = tuple(t.tender_id for t in dataset.tenders if len(t) < 3)
    mixed = sum(1 for t in dataset.tenders if len({r.rigged_flag for r in t.rows}) > 1)
    warnings = []
    if not dataset.tenders:
        warnings.append("dataset is empty")
    if small:
        warnings.append(f"{len(small)} tender(s) have fewer than 3 bidders and cannot host 3-firm coalitions")
    flags = {r.rigged_flag for r in dataset.rows()}
    if dataset.tenders and len(flags) < 2:
        warnings.append("all rows carry the same rigged_flag; only one coalition class can occur")
    return ValidationReport(
        n_tenders=len(dataset.tenders),
        n_firms=len(dataset.firms),
        n_rows=dataset.n_rows,
        small_tenders=small,
        n_mixed_flag_tenders=mixed,
        warnings=tuple(warnings),
    )


@dataclass(frozen=True)
class ParticipationIndex:
    """Per-firm bitsets over tender ordinals.

    Bit ``t`` of ``bits[f]`` is set iff firm ``f`` bid in the tender with
    ordinal ``t`` (input order). Python ints serve as arbitrary-width bitsets.
    """

    firms: tuple[str, ...]
    tender_ids: tuple[str, ...]
    bits: tuple[int, ...]

    def bitset(self, firm_id: str) -> int:
        return self.bits[self.firms.index(firm_id)]

    def count(self, firm_id: str) -> int:
        return self.bitset(firm_id).bit_count()

    def tenders_of(self, mask: int) -> tuple[str, ...]:
        """Tender ids whose bits are set in ``mask``, in ordinal order."""
        out = []
        while mask:
            low = mask & -mask
            out.append(self.tender_ids[low.bit_length() - 1])
            mask ^= low
        return tuple(out)


def build_index(dataset: Dataset) -> ParticipationIndex:
    bits = dict.fromkeys(dataset.firms, 0)
    for ordinal, tender in enumerate(dataset.tenders):
        flag = 1 << ordinal
        for r in tender.rows:
            bits[r.firm_id] |= flag
    return ParticipationIndex(dataset.firms, dataset.tender_ids, tuple(bits[f] for f in dataset.firms))
