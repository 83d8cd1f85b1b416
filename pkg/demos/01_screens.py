"""
Screening a single tender
=========================

Nine screens summarize the bids of one tender. Rigged tenders tend to show
tightly packed cover bids sitting just above the winner, which pushes the
variance screens down and the gap-based asymmetry screens up.
"""

# %%
import numpy as np

from coalscreen import SCREENS, screen_vector
from coalscreen.screens import screen_matrix

competitive = [1_000_000, 1_072_000, 1_131_000, 1_204_000]
rigged = [1_000_000, 1_031_000, 1_038_000, 1_046_000]

for name, bids in (("competitive", competitive), ("rigged", rigged)):
    v = screen_vector(bids)
    print(f"{name:12s}", "  ".join(f"{s}={getattr(v, s):.3f}" for s in SCREENS))

# %%
# Scaling every bid (a currency change, say) leaves all screens alone except
# absdiff, which is measured in money.
a = screen_vector(rigged)
b = screen_vector(np.array(rigged) / 7.5)
print({s: round(getattr(a, s) / getattr(b, s), 6) for s in ("cv", "rd", "ks", "absdiff")})

# %%
# Ties have nowhere to go: with three identical bids, the screens with a zero
# denominator report 0 (ks reports 1) and say so in ``degenerate``.
flat = screen_vector([500.0, 500.0, 500.0])
print(flat.cv, flat.rd, flat.ks, sorted(flat.degenerate))

# %%
# screen_matrix does the same for many tenders of equal size at once.
rng = np.random.default_rng(0)
values, degenerate = screen_matrix(rng.lognormal(13, 0.1, size=(5, 4)))
np.set_printoptions(precision=3, suppress=True, linewidth=120)
print(values)
