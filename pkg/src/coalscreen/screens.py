"""Tender-based screens: statistics of the bid distribution within one tender.

Nine screens in three groups:

* variance: ``cv`` (coefficient of variation, percent) and ``spread``
* asymmetry: ``diffp``, ``absdiff``, ``skew``, ``rd``, ``altrd``, ``normd``
* uniformity: ``ks`` (Kolmogorov-Smirnov distance to a uniform law on the
  observed bid range)

With sorted bids b(1) <= ... <= b(n), sample mean m and sample standard
deviation s (divisor n - 1)::

    cv      = 100 * s / m
    spread  = (b(n) - b(1)) / b(1)
    diffp   = (b(2) - b(1)) / b(1)
    absdiff = b(2) - b(1)
    skew    = adjusted Fisher-Pearson skewness
    rd      = (b(2) - b(1)) / s(b(2), ..., b(n))
    altrd   = (b(2) - b(1)) / s
    normd   = (b(2) - b(1)) / (b(n) - b(1))
    ks      = max_i max(|i/n - F(b(i))|, |(i-1)/n - F(b(i))|),
              F uniform CDF on [b(1), b(n)]

When a denominator is zero the screen is reported as 0 (``ks`` as 1) and the
matching degenerate flag is raised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCREENS = ("cv", "spread", "diffp", "absdiff", "skew", "rd", "altrd", "normd", "ks")
VARIANCE_SCREENS = ("cv", "spread")
ASYMMETRY_SCREENS = ("diffp", "absdiff", "skew", "rd", "altrd", "normd")
UNIFORMITY_SCREENS = ("ks",)

# smallest bid count for which each screen is defined
MIN_BIDS = {"cv": 2, "spread": 2, "diffp": 2, "absdiff": 2, "skew": 3,
            "rd": 3, "altrd": 2, "normd": 3, "ks": 2}


class ArityError(ValueError):
    """Too few bids for the requested screen."""


@dataclass(frozen=True)
class ScreenVector:
    cv: float
    spread: float
    diffp: float
    absdiff: float
    skew: float
    rd: float
    altrd: float
    normd: float
    ks: float
    degenerate: frozenset = frozenset()

    def values(self) -> np.ndarray:
        return np.array([getattr(self, s) for s in SCREENS])

    def as_dict(self) -> dict[str, float]:
        return {s: getattr(self, s) for s in SCREENS}


def _as_matrix(bids) -> np.ndarray:
    b = np.asarray(bids, dtype=float)
    if b.ndim == 1:
        b = b[None, :]
    if b.ndim != 2:
        raise ValueError("bids must be a vector or a 2-D array of bid rows")
    if np.any(~np.isfinite(b)) or np.any(b <= 0):
        raise ValueError("bids must be positive and finite")
    return np.sort(b, axis=1)


def _check_arity(n: int, names) -> None:
    for name in names:
        if n < MIN_BIDS[name]:
            raise ArityError(f"screen {name!r} needs at least {MIN_BIDS[name]} bids, got {n}")


def _safe_ratio(num: np.ndarray, den: np.ndarray, degenerate: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num)
    ok = ~degenerate
    out[ok] = num[ok] / den[ok]
    return out


def _sample_sd(b: np.ndarray) -> np.ndarray:
    # rows with a single distinct value get an exact zero
    n = b.shape[1]
    m = b.mean(axis=1, keepdims=True)
    s = np.sqrt(((b - m) ** 2).sum(axis=1) / (n - 1))
    s[b[:, -1] == b[:, 0]] = 0.0
    return s


def _variance(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = _sample_sd(b)
    cv = 100.0 * s / b.mean(axis=1)
    spread = (b[:, -1] - b[:, 0]) / b[:, 0]
    return cv, spread


def _skewness(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = b.shape[1]
    d = b - b.mean(axis=1, keepdims=True)
    m2 = (d ** 2).mean(axis=1)
    m3 = (d ** 3).mean(axis=1)
    flat = b[:, -1] == b[:, 0]
    g1 = _safe_ratio(m3, np.where(flat, 1.0, m2) ** 1.5, flat)
    return np.sqrt(n * (n - 1.0)) / (n - 2.0) * g1, flat


def _asymmetry(b: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    n = b.shape[1]
    gap = b[:, 1] - b[:, 0]
    none = np.zeros(b.shape[0], dtype=bool)
    out = {
        "diffp": (gap / b[:, 0], none),
        "absdiff": (gap, none),
    }
    flat_all = b[:, -1] == b[:, 0]
    out["altrd"] = (_safe_ratio(gap, _sample_sd(b), flat_all), flat_all)
    if n >= 3:
        out["skew"] = _skewness(b)
        losers = b[:, 1:]
        flat_losers = losers[:, -1] == losers[:, 0]
        out["rd"] = (_safe_ratio(gap, _sample_sd(losers), flat_losers), flat_losers)
        out["normd"] = (_safe_ratio(gap, b[:, -1] - b[:, 0], flat_all), flat_all)
    return out


def _ks(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = b.shape[1]
    lo, hi = b[:, :1], b[:, -1:]
    flat = (hi == lo)[:, 0]
    width = np.where(flat[:, None], 1.0, hi - lo)
    cdf = (b - lo) / width
    i = np.arange(1, n + 1)
    d = np.maximum(np.abs(i / n - cdf), np.abs((i - 1) / n - cdf)).max(axis=1)
    d[flat] = 1.0
    return d, flat


def screen_matrix(bids) -> tuple[np.ndarray, np.ndarray]:
    """Compute all nine screens for every row of a bid matrix.

    Parameters
    ----------
    bids : array_like, shape (n_tenders, n_bids) or (n_bids,)
        One row of positive bids per tender; order within a row is ignored.

    Returns
    -------
    values : ndarray, shape (n_tenders, 9)
        Screen values in :data:`SCREENS` order.
    degenerate : ndarray of bool, same shape
        True where the zero-denominator convention was applied.
    """
    b = _as_matrix(bids)
    _check_arity(b.shape[1], SCREENS)
    cv, spread = _variance(b)
    asym = _asymmetry(b)
    ks, ks_flat = _ks(b)
    none = np.zeros(b.shape[0], dtype=bool)
    cols = {"cv": (cv, none), "spread": (spread, none), **asym, "ks": (ks, ks_flat)}
    values = np.column_stack([cols[s][0] for s in SCREENS])
    degenerate = np.column_stack([cols[s][1] for s in SCREENS])
    return values, degenerate


def variance_screens(bids) -> tuple[float, float]:
    """Return ``(cv, spread)`` for one tender's bids."""
    b = _as_matrix(bids)
    _check_arity(b.shape[1], VARIANCE_SCREENS)
    cv, spread = _variance(b)
    return float(cv[0]), float(spread[0])


def asymmetry_screens(bids) -> dict[str, float]:
    """Asymmetry screens for one tender.

    With two bids only ``diffp``, ``absdiff`` and ``altrd`` are defined and
    returned; ``skew``, ``rd`` and ``normd`` need at least three.
    """
    b = _as_matrix(bids)
    _check_arity(b.shape[1], ("diffp", "absdiff", "altrd"))
    asym = _asymmetry(b)
    return {s: float(asym[s][0][0]) for s in ASYMMETRY_SCREENS if s in asym}


def uniformity_screen(bids) -> float:
    b = _as_matrix(bids)
    _check_arity(b.shape[1], UNIFORMITY_SCREENS)
    return float(_ks(b)[0][0])


def screen_vector(bids) -> ScreenVector:
    """All nine screens for one tender (at least three bids)."""
    values, degenerate = screen_matrix(bids)
    flags = frozenset(s for s, d in zip(SCREENS, degenerate[0]) if d)
    return ScreenVector(*(float(v) for v in values[0]), degenerate=flags)
