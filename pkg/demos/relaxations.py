"""How the selection primitives behave as the temperature drops.

Shows softmax against sparsemax on one score vector, then a relaxed top-k
mask at three temperatures. Runs in well under a second.
"""

import numpy as np

from ltrfs.functional import softmax, sparsemax
from ltrfs.selectors import relaxed_topk

np.set_printoptions(precision=3, suppress=True)

z = np.array([1.6, 1.2, 0.3, -0.4, -1.0])
print("scores       ", z)
print("softmax      ", softmax(z).data)
print("sparsemax    ", sparsemax(z).data, "(exact zeros outside the support)")

rng = np.random.default_rng(0)
gumbel = rng.gumbel(size=(2, z.size))
print("\nrelaxed top-2 mask, same Gumbel draws:")
for tau in (5.0, 1.0, 0.05):
    m = relaxed_topk(z, 2, tau, gumbel=gumbel).data
    print(f"  tau={tau:<5} {m}  sum={m.sum():.3f}")
