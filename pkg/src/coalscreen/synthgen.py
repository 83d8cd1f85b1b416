"""Seeded synthetic procurement markets with known collusion.

Competitive tenders: every invited firm bids ``cost * (1 + e)`` with
independent Gaussian ``e ~ N(0, noise_sd)`` (truncated at -0.9 so bids stay
positive). Collusive tenders: a designated winner, drawn uniformly among the
cartel bidders, bids ``w = cost * (1 + e)``; every other cartel bidder submits
a cover bid ``w * (1 + u)`` with ``u ~ U(delta_min, delta_max)``. Tender cost
is ``cost_base * (1 + v)`` with ``v ~ U(-cost_dispersion, cost_dispersion)``.

Rows submitted by cartel members in collusive tenders carry
``rigged_flag = 1``; every other row carries 0.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import BidRow, Dataset


@dataclass(frozen=True)
class MarketParams:
    """Generator settings.

    ``bidders`` is an inclusive ``(low, high)`` range for the number of
    firms invited to a tender. ``cartel`` holds 0-based firm ordinals.
    ``outsiders_in_collusive`` non-cartel firms join each collusive tender
    and bid competitively (incomplete cartel). ``max_cartel_in_competitive``
    caps how many cartel members can appear in one competitive tender.
    """

    n_firms: int = 12
    n_tenders: int = 300
    bidders: tuple[int, int] = (5, 5)
    cost_base: float = 1_000_000.0
    cost_dispersion: float = 0.5
    noise_sd: float = 0.08
    cartel: tuple[int, ...] = (0, 1, 2, 3)
    collusion_share: float = 0.2
    delta_min: float = 0.02
    delta_max: float = 0.05
    outsiders_in_collusive: int = 0
    max_cartel_in_competitive: int = 1
    seed: int = 0

    def validate(self) -> None:
        lo, hi = self.bidders
        if self.n_firms < 1 or self.n_tenders < 0:
            raise ValueError("n_firms must be positive and n_tenders non-negative")
        if not 1 <= lo <= hi <= self.n_firms:
            raise ValueError(f"bidders range {self.bidders} must satisfy 1 <= low <= high <= n_firms")
        if len(set(self.cartel)) != len(self.cartel) or any(not 0 <= f < self.n_firms for f in self.cartel):
            raise ValueError("cartel must list distinct firm ordinals within the firm pool")
        if len(self.cartel) > self.n_firms:
            raise ValueError("cartel is larger than the firm pool")
        if not 0.0 <= self.collusion_share <= 1.0:
            raise ValueError("collusion_share must lie in [0, 1]")
        if not 0.0 < self.delta_min < self.delta_max:
            raise ValueError("need 0 < delta_min < delta_max")
        if not 0.0 <= self.cost_dispersion < 1.0:
            raise ValueError("cost_dispersion must lie in [0, 1)")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        outsiders = self.n_firms - len(self.cartel)
        if self.outsiders_in_collusive < 0 or self.outsiders_in_collusive > outsiders:
            raise ValueError("outsiders_in_collusive exceeds the number of non-cartel firms")
        if self.collusion_share > 0 and len(self.cartel) < 2:
            raise ValueError("a cartel needs at least two members to rig a tender")
        if self.max_cartel_in_competitive < 0:
            raise ValueError("max_cartel_in_competitive must be non-negative")
        if (1 - self.collusion_share) > 0 and lo > outsiders + min(self.max_cartel_in_competitive, len(self.cartel)):
            raise ValueError("too few eligible firms to fill competitive tenders")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bidders"] = list(self.bidders)
        d["cartel"] = list(self.cartel)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MarketParams":
        d = dict(d)
        if "bidders" in d:
            d["bidders"] = tuple(d["bidders"])
        if "cartel" in d:
            d["cartel"] = tuple(d["cartel"])
        return cls(**d)


def firm_id(i: int, n_firms: int) -> str:
    return f"F{i + 1:0{max(2, len(str(n_firms)))}d}"


def tender_id(i: int, n_tenders: int) -> str:
    return f"T{i + 1:0{max(4, len(str(n_tenders)))}d}"


def _competitive_bid(cost: float, noise_sd: float, rng: np.random.Generator) -> float:
    return cost * (1.0 + max(rng.normal(0.0, noise_sd), -0.9))


def gen_market(params: MarketParams) -> Dataset:
    """Generate a dataset; identical params (seed included) give identical data."""
    params.validate()
    rng = np.random.default_rng(params.seed)
    cartel = np.array(sorted(params.cartel), dtype=np.int64)
    in_cartel = np.zeros(params.n_firms, dtype=bool)
    in_cartel[cartel] = True
    outsiders = np.flatnonzero(~in_cartel)
    n_rigged = int(round(params.collusion_share * params.n_tenders))
    rigged = np.zeros(params.n_tenders, dtype=bool)
    rigged[rng.permutation(params.n_tenders)[:n_rigged]] = True
    lo, hi = params.bidders

    rows: list[BidRow] = []
    for t in range(params.n_tenders):
        tid = tender_id(t, params.n_tenders)
        cost = params.cost_base * (1.0 + rng.uniform(-params.cost_dispersion, params.cost_dispersion))
        n_bid = int(rng.integers(lo, hi + 1))
        bids: dict[int, tuple[float, bool]] = {}
        if rigged[t]:
            n_out = min(params.outsiders_in_collusive, n_bid - 2) if n_bid > 2 else 0
            n_out = max(n_out, 0)
            n_in = min(len(cartel), n_bid - n_out)
            members = rng.permutation(cartel)[:n_in]
            winner = members[int(rng.integers(n_in))]
            w = _competitive_bid(cost, params.noise_sd, rng)
            for f in members:
                if f == winner:
                    bids[int(f)] = (w, True)
                else:
                    bids[int(f)] = (w * (1.0 + rng.uniform(params.delta_min, params.delta_max)), True)
            for f in rng.permutation(outsiders)[:n_out]:
                bids[int(f)] = (_competitive_bid(cost, params.noise_sd, rng), False)
        else:
            chosen, n_cartel = [], 0
            for f in rng.permutation(params.n_firms):
                if len(chosen) == n_bid:
                    break
                if in_cartel[f]:
                    if n_cartel >= params.max_cartel_in_competitive:
                        continue
                    n_cartel += 1
                chosen.append(int(f))
            for f in chosen:
                bids[f] = (_competitive_bid(cost, params.noise_sd, rng), False)
        for f in sorted(bids):
            bid, flag = bids[f]
            rows.append(BidRow(tid, firm_id(f, params.n_firms), float(bid), flag))

    provenance = {"source": "synthgen", "params": json.dumps(params.to_dict(), sort_keys=True)}
    return Dataset.from_rows(rows, provenance)


ACCEPTANCE = MarketParams()


def gen_scenario_suite() -> dict[str, MarketParams]:
    """Named presets, one per cartel archetype plus the acceptance default.

    ``complete``: every firm is in the cartel and every tender is rigged.
    ``incomplete``: cartel members face one outside competitor in rigged
    tenders. ``partial``: the cartel rigs 30% of tenders and competes openly
    (even against each other) elsewhere.
    """
    return {
        "acceptance": ACCEPTANCE,
        "complete": MarketParams(n_firms=6, n_tenders=60, bidders=(3, 5), cartel=tuple(range(6)),
                                 collusion_share=1.0, max_cartel_in_competitive=6),
        "incomplete": MarketParams(n_firms=12, n_tenders=300, bidders=(5, 5), cartel=(0, 1, 2, 3, 4),
                                   collusion_share=0.25, outsiders_in_collusive=1),
        "partial": MarketParams(n_firms=10, n_tenders=300, bidders=(4, 6), cartel=(0, 1, 2, 3, 4),
                                collusion_share=0.3, max_cartel_in_competitive=5),
    }


def scenario(name: str, **overrides) -> MarketParams:
    suite = gen_scenario_suite()
    if name not in suite:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(suite)}")
    return replace(suite[name], **overrides)
