"""Pure-NumPy stand-ins for the compiled kernels."""

import numpy as np


def group_dot(startsA, countsA, startsB, countsB, wr,
              uidA, cvalsA, uidB, valsB, M):
    """Weighted bilinear form over aligned key groups.

    For each matched group k the contribution is
      wr[k] * sum_{i in A_k, j in B_k} cvalsA[i] * valsB[j] * M[uidA[i], uidB[j]].
    """
    total = 0.0 + 0j
    for k in range(wr.shape[0]):
        sa, ca = startsA[k], countsA[k]
        sb, cb = startsB[k], countsB[k]
        ua = uidA[sa:sa + ca]
        ub = uidB[sb:sb + cb]
        block = M[np.ix_(ua, ub)]
        total += wr[k] * (cvalsA[sa:sa + ca] @ block @ valsB[sb:sb + cb])
    return total


def coalesce_sorted(keys, vals):
    """Segment-sum of values over equal consecutive keys (keys sorted)."""
    starts = np.r_[0, np.flatnonzero(np.diff(keys)) + 1]
    return keys[starts], np.add.reduceat(vals, starts)
