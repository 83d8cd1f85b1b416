"""Coalitions of firms and their coalition-based screens.

A coalition is a group of ``k`` firms that bid together in at least
``min_joint`` tenders. For each such tender only the members' bids are kept,
the nine tender-based screens are computed on them, and the screens are
summarized across tenders (mean, median, min, max and optionally six more
percentiles) to give one feature row per coalition.

Feature columns are ordered screen-major, statistic-minor, e.g.
``cv_mean, cv_median, cv_min, cv_max, spread_mean, ...``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import IO, Iterator, Sequence

import numpy as np

from .data import Dataset, ParticipationIndex, build_index
from .screens import SCREENS, ScreenVector, screen_matrix

BASE_STATS = ("mean", "median", "min", "max")
EXTRA_PERCENTILES = (5, 10, 25, 75, 90, 95)
EXTENDED_STATS = BASE_STATS + tuple(f"p{q:02d}" for q in EXTRA_PERCENTILES)

COLLUSIVE = "collusive"
COMPETITIVE = "competitive"
MIXED = "mixed"
LABELS = (COLLUSIVE, COMPETITIVE, MIXED)


def statistic_names(stats: str = "base") -> tuple[str, ...]:
    if stats == "base":
        return BASE_STATS
    if stats == "extended":
        return EXTENDED_STATS
    raise ValueError(f"unknown statistic set {stats!r}; use 'base' or 'extended'")


def feature_names(stats: str = "base", screens: Sequence[str] = SCREENS) -> list[str]:
    return [f"{s}_{t}" for s in screens for t in statistic_names(stats)]


@dataclass(frozen=True, slots=True)
class Coalition:
    members: tuple[str, ...]
    tender_ids: tuple[str, ...]

    @property
    def k(self) -> int:
        return len(self.members)

    @property
    def coalition_id(self) -> str:
        return "+".join(self.members)


def enumerate_coalitions(index: ParticipationIndex, k: int = 3, min_joint: int = 3) -> list[Coalition]:
    """All ``k``-firm coalitions sharing at least ``min_joint`` tenders.

    Intersections are pruned level by level: a pair (or triple) whose common
    tenders already fall below ``min_joint`` is not extended. Results are in
    lexicographic member order.
    """
    if k not in (3, 4):
        raise ValueError(f"coalition size must be 3 or 4, got {k}")
    if min_joint < 1:
        raise ValueError("min_joint must be at least 1")
    bits = index.bits
    nf = len(bits)
    decoded: dict[int, tuple[str, ...]] = {}

    def tenders(mask: int) -> tuple[str, ...]:
        t = decoded.get(mask)
        if t is None:
            t = decoded[mask] = index.tenders_of(mask)
        return t

    # firms in the index are already sorted, so index order is lexicographic
    out: list[Coalition] = []
    firms = index.firms
    active = [i for i in range(nf) if bits[i].bit_count() >= min_joint]
    for a_pos, a in enumerate(active):
        ba = bits[a]
        for b_pos in range(a_pos + 1, len(active)):
            b = active[b_pos]
            ab = ba & bits[b]
            if ab.bit_count() < min_joint:
                continue
            for c_pos in range(b_pos + 1, len(active)):
                c = active[c_pos]
                abc = ab & bits[c]
                if abc.bit_count() < min_joint:
                    continue
                if k == 3:
                    out.append(Coalition((firms[a], firms[b], firms[c]), tenders(abc)))
                    continue
                for d_pos in range(c_pos + 1, len(active)):
                    d = active[d_pos]
                    abcd = abc & bits[d]
                    if abcd.bit_count() >= min_joint:
                        out.append(Coalition((firms[a], firms[b], firms[c], firms[d]), tenders(abcd)))
    return out


def _member_bids(coalition: Coalition, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    t_idx = [dataset.tender_ordinal[t] for t in coalition.tender_ids]
    f_idx = [dataset.firm_ordinal[f] for f in coalition.members]
    bids = dataset.bid_matrix[np.ix_(t_idx, f_idx)]
    flags = dataset.flag_matrix[np.ix_(t_idx, f_idx)]
    if np.isnan(bids).any():
        raise RuntimeError(f"coalition {coalition.coalition_id} lists a tender where a member did not bid")
    return bids, flags


def coalition_screens(coalition: Coalition, dataset: Dataset) -> list[ScreenVector]:
    """One :class:`ScreenVector` per shared tender, using members' bids only."""
    bids, _ = _member_bids(coalition, dataset)
    values, degenerate = screen_matrix(bids)
    return [
        ScreenVector(*(float(v) for v in row), degenerate=frozenset(s for s, d in zip(SCREENS, drow) if d))
        for row, drow in zip(values, degenerate)
    ]


def aggregate_matrix(values: np.ndarray, stats: str = "base") -> np.ndarray:
    """Summarize a ``(n_tenders, n_screens)`` screen matrix column-wise.

    Returns a flat vector in screen-major, statistic-minor order. Percentiles
    use linear interpolation between closest ranks.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] == 0:
        raise ValueError("need at least one tender to aggregate")
    lo = values.min(axis=0)
    hi = values.max(axis=0)
    cols = {
        "mean": np.clip(values.mean(axis=0), lo, hi),
        "median": np.median(values, axis=0),
        "min": lo,
        "max": hi,
    }
    if stats == "extended":
        pct = np.percentile(values, EXTRA_PERCENTILES, axis=0, method="linear")
        for q, row in zip(EXTRA_PERCENTILES, pct):
            cols[f"p{q:02d}"] = row
    names = statistic_names(stats)
    return np.stack([cols[t] for t in names], axis=1).ravel()


def aggregate(screen_vectors: Sequence[ScreenVector], stats: str = "base") -> dict[str, float]:
    """Coalition-based screens as an ordered ``{"<screen>_<stat>": value}`` map."""
    if not screen_vectors:
        raise ValueError("cannot aggregate an empty list of screen vectors")
    values = np.array([sv.values() for sv in screen_vectors])
    return dict(zip(feature_names(stats), aggregate_matrix(values, stats).tolist()))


def _label_from_flags(flags: np.ndarray) -> str:
    if (flags == 1).all():
        return COLLUSIVE
    if (flags == 0).all():
        return COMPETITIVE
    return MIXED


def label_coalition(coalition: Coalition, dataset: Dataset) -> str:
    _, flags = _member_bids(coalition, dataset)
    return _label_from_flags(flags)


@dataclass(frozen=True)
class FeatureVector:
    coalition: Coalition
    features: dict[str, float]
    n_tenders: int
    label: str


@dataclass(frozen=True)
class FeatureTable:
    """Coalition feature rows stored column-wise.

    ``members`` holds one tuple of firm ids per row; ``labels`` holds
    ``"collusive"``, ``"competitive"``, ``"mixed"`` or ``""`` (unlabeled).
    """

    members: tuple[tuple[str, ...], ...]
    n_tenders: np.ndarray
    labels: np.ndarray
    X: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        n = len(self.members)
        if self.X.shape != (n, len(self.feature_names)):
            raise ValueError(f"X has shape {self.X.shape}, expected {(n, len(self.feature_names))}")
        if len(self.labels) != n or len(self.n_tenders) != n:
            raise ValueError("labels and n_tenders must have one entry per row")
        for arr in (self.X, self.labels, self.n_tenders):
            arr.flags.writeable = False

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[FeatureVector]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> FeatureVector:
        return FeatureVector(
            coalition=Coalition(self.members[i], ()),
            features=dict(zip(self.feature_names, self.X[i].tolist())),
            n_tenders=int(self.n_tenders[i]),
            label=str(self.labels[i]),
        )

    @property
    def coalition_ids(self) -> list[str]:
        return ["+".join(m) for m in self.members]

    @property
    def y(self) -> np.ndarray:
        """Binary outcome: 1 collusive, 0 competitive (mixed/unlabeled rows raise)."""
        bad = ~np.isin(self.labels, (COLLUSIVE, COMPETITIVE))
        if bad.any():
            raise ValueError(f"{int(bad.sum())} row(s) are not labeled collusive or competitive")
        return (self.labels == COLLUSIVE).astype(np.int64)

    def take(self, rows) -> "FeatureTable":
        rows = np.asarray(rows, dtype=np.intp)
        return FeatureTable(
            members=tuple(self.members[i] for i in rows),
            n_tenders=self.n_tenders[rows].copy(),
            labels=self.labels[rows].copy(),
            X=self.X[rows].copy(),
            feature_names=self.feature_names,
        )

    def select(self, columns: Sequence[str]) -> "FeatureTable":
        idx = [self.feature_names.index(c) for c in columns]
        return FeatureTable(self.members, self.n_tenders.copy(), self.labels.copy(),
                            self.X[:, idx].copy(), tuple(columns))

    def pure(self) -> "FeatureTable":
        """Rows labeled collusive or competitive; mixed and unlabeled dropped."""
        return self.take(np.flatnonzero(np.isin(self.labels, (COLLUSIVE, COMPETITIVE))))

    def with_labels(self, labels) -> "FeatureTable":
        return FeatureTable(self.members, self.n_tenders.copy(), np.asarray(labels, dtype=object).copy(),
                            self.X.copy(), self.feature_names)

    def to_csv(self, stream: IO[str] | None = None) -> str | None:
        """Export as ``coalition_id,member_1..member_k,n_tenders,label,<features>``."""
        buf = stream if stream is not None else io.StringIO()
        k = max((len(m) for m in self.members), default=3)
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["coalition_id", *(f"member_{i + 1}" for i in range(k)), "n_tenders", "label",
                         *self.feature_names])
        for i, m in enumerate(self.members):
            writer.writerow(["+".join(m), *m, *([""] * (k - len(m))), int(self.n_tenders[i]), self.labels[i],
                             *(repr(float(v)) for v in self.X[i])])
        if stream is None:
            return buf.getvalue()
        return None

    @classmethod
    def from_csv(cls, source) -> "FeatureTable":
        """Read a table written by :meth:`to_csv`; ``label`` may be absent or empty."""
        if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
            with open(source, "r", encoding="utf-8", newline="") as fh:
                text = fh.read()
        else:
            text = source.read()
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        member_cols = [i for i, h in enumerate(header) if h.startswith("member_")]
        fixed = {"coalition_id", "n_tenders", "label"}
        feat_cols = [i for i, h in enumerate(header) if h not in fixed and not h.startswith("member_")]
        label_col = header.index("label") if "label" in header else None
        nt_col = header.index("n_tenders") if "n_tenders" in header else None
        members, labels, n_tenders, X = [], [], [], []
        for rec in reader:
            if not rec:
                continue
            members.append(tuple(rec[i] for i in member_cols if rec[i]))
            labels.append(rec[label_col] if label_col is not None else "")
            n_tenders.append(int(rec[nt_col]) if nt_col is not None and rec[nt_col] else 0)
            X.append([float(rec[i]) for i in feat_cols])
        names = tuple(header[i] for i in feat_cols)
        X = np.array(X, dtype=float).reshape(len(members), len(names))
        return cls(tuple(members), np.array(n_tenders, dtype=np.int64), np.array(labels, dtype=object), X, names)


def build_feature_table(dataset: Dataset, k: int = 3, min_joint: int = 3, stats: str = "base") -> FeatureTable:
    """Enumerate, extract, screen, aggregate and label every coalition.

    Mixed coalitions are kept (labeled ``"mixed"``); callers training a model
    should use :meth:`FeatureTable.pure`.
    """
    names = tuple(feature_names(stats))
    if not dataset.tenders:
        return FeatureTable((), np.zeros(0, dtype=np.int64), np.array([], dtype=object),
                            np.zeros((0, len(names))), names)
    coalitions = enumerate_coalitions(build_index(dataset), k=k, min_joint=min_joint)
    rows = np.empty((len(coalitions), len(names)))
    labels = np.empty(len(coalitions), dtype=object)
    n_tenders = np.empty(len(coalitions), dtype=np.int64)
    for i, c in enumerate(coalitions):
        bids, flags = _member_bids(c, dataset)
        values, _ = screen_matrix(bids)
        rows[i] = aggregate_matrix(values, stats)
        labels[i] = _label_from_flags(flags)
        n_tenders[i] = len(c.tender_ids)
    return FeatureTable(tuple(c.members for c in coalitions), n_tenders, labels, rows, names)

