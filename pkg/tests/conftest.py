import io

import pytest
from hypothesis import settings

from coalscreen import build_feature_table, gen_market, parse_dataset
from coalscreen.synthgen import ACCEPTANCE

settings.register_profile("default", deadline=None)
settings.load_profile("default")

# Six tenders, seven firms. F1-F3 meet in T1, T2, T3 and T6; T1 also has F4 and F5.
SIX_TENDER_LAYOUT = {
    "T1": ["F1", "F2", "F3", "F4", "F5"],
    "T2": ["F1", "F2", "F3", "F6"],
    "T3": ["F1", "F2", "F3", "F7"],
    "T4": ["F4", "F5", "F6"],
    "T5": ["F5", "F6", "F7"],
    "T6": ["F1", "F2", "F3", "F4"],
}


def six_tender_csv() -> str:
    lines = ["tender_id,firm_id,bid,rigged_flag"]
    for t, firms in SIX_TENDER_LAYOUT.items():
        for j, f in enumerate(firms):
            lines.append(f"{t},{f},{1000 + 10 * int(t[1:]) + 7 * j},0")
    return "\n".join(lines) + "\n"


@pytest.fixture
def six_tenders():
    return parse_dataset(io.StringIO(six_tender_csv()))


@pytest.fixture(scope="session")
def acceptance_features():
    return build_feature_table(gen_market(ACCEPTANCE))
