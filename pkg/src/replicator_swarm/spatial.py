"""Fixed-radius pair search for point agents in a rectangle."""

from __future__ import annotations

import numpy as np

_STENCIL = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)]


def _empty():
    return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0)


def pairs_bruteforce(pos, radius):
    """All pairs ``a < b`` with ``|p_a - p_b| <= radius``, lexicographically sorted."""
    pos = np.asarray(pos, dtype=float)
    n = pos.shape[0]
    if n < 2 or radius < 0:
        return _empty()
    a, b = np.triu_indices(n, k=1)
    d = np.hypot(*(pos[a] - pos[b]).T)
    keep = d <= radius
    return a[keep], b[keep], d[keep]


def pairs_grid(pos, radius, width, height):
    """Same contract as :func:`pairs_bruteforce`, via a uniform cell grid.

    Cell side equals ``radius`` so only the 3x3 block around each agent's
    cell needs checking.  Runs in time linear in agents plus reported pairs.
    """
    pos = np.asarray(pos, dtype=float)
    n = pos.shape[0]
    if n < 2 or radius < 0:
        return _empty()
    cell = max(float(radius), 1e-9)
    ncx = max(1, int(np.ceil(width / cell)))
    ncy = max(1, int(np.ceil(height / cell)))
    cx = np.clip((pos[:, 0] // cell).astype(np.int64), 0, ncx - 1)
    cy = np.clip((pos[:, 1] // cell).astype(np.int64), 0, ncy - 1)
    key = cx * ncy + cy
    order = np.argsort(key, kind="stable")
    skey = key[order]
    agents = np.arange(n)

    a_parts, b_parts = [], []
    for dx, dy in _STENCIL:
        nx, ny = cx + dx, cy + dy
        valid = (nx >= 0) & (nx < ncx) & (ny >= 0) & (ny < ncy)
        nkey = nx * ncy + ny
        lo = np.searchsorted(skey, nkey, side="left")
        hi = np.searchsorted(skey, nkey, side="right")
        cnt = np.where(valid, hi - lo, 0)
        total = int(cnt.sum())
        if total == 0:
            continue
        a = np.repeat(agents, cnt)
        offsets = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        b = order[np.repeat(lo, cnt) + offsets]
        keep = a < b
        a_parts.append(a[keep])
        b_parts.append(b[keep])
    if not a_parts:
        return _empty()
    a = np.concatenate(a_parts)
    b = np.concatenate(b_parts)
    d = np.hypot(*(pos[a] - pos[b]).T)
    keep = d <= radius
    a, b, d = a[keep], b[keep], d[keep]
    idx = np.lexsort((b, a))
    return a[idx], b[idx], d[idx]
