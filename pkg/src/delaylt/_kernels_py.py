"""NumPy implementation of the buffer/channel matching loop.

Vectorised over blocks; the loop runs over the channel uses of a block.
"""

import numpy as np


def select_slots(order, starts, cset, h, mids, soft):
    """Buffer slot sent in each channel use, or -1 for an idle use."""
    nb, d = order.shape
    J = mids.size
    ptr = starts[:, :J].copy()
    end = starts[:, 1:]
    rows = np.arange(nb)
    src = np.full((nb, d), -1, dtype=np.int64)
    for j in range(d):
        m = cset[:, j]
        hit = ptr[rows, m] < end[rows, m]
        pick = np.where(hit, m, -1)
        if soft:
            miss = np.flatnonzero(~hit)
            if miss.size:
                dist = np.abs(h[miss, j, None] - mids[None, :])
                dist[ptr[miss] >= end[miss]] = np.inf
                k = np.argmin(dist, axis=1)          # first minimum on ties
                ok = np.isfinite(dist[np.arange(miss.size), k])
                pick[miss[ok]] = k[ok]
        sel = np.flatnonzero(pick >= 0)
        ps = pick[sel]
        src[sel, j] = order[sel, ptr[sel, ps]]
        ptr[sel, ps] += 1
    return src
