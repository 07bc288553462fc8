"""Connected component labeling: two-pass union-find over binary masks."""

from __future__ import annotations

import numpy as np
from numba import njit

from .imgcore import BinaryMask


@njit(cache=True)
def _find(parent: np.ndarray, x: int) -> int:
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


@njit(cache=True)
def _union(parent: np.ndarray, a: int, b: int) -> None:
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra < rb:
        parent[rb] = ra
    elif rb < ra:
        parent[ra] = rb


@njit(cache=True)
def _label_two_pass(bits: np.ndarray, eight: bool) -> tuple:
    h, w = bits.shape
    labels = np.zeros((h, w), np.int32)
    # worst case one fresh label per two pixels (4-connectivity checkerboard)
    parent = np.zeros(h * w // 2 + 2, np.int32)
    nxt = 1
    for i in range(h):
        for j in range(w):
            if bits[i, j] == 0:
                continue
            best = 0
            if j > 0:
                lbl = labels[i, j - 1]
                if lbl > 0:
                    best = lbl
            if i > 0:
                lbl = labels[i - 1, j]
                if lbl > 0:
                    if best == 0:
                        best = lbl
                    elif lbl != best:
                        _union(parent, best, lbl)
                if eight:
                    if j > 0:
                        lbl = labels[i - 1, j - 1]
                        if lbl > 0:
                            if best == 0:
                                best = lbl
                            elif lbl != best:
                                _union(parent, best, lbl)
                    if j < w - 1:
                        lbl = labels[i - 1, j + 1]
                        if lbl > 0:
                            if best == 0:
                                best = lbl
                            elif lbl != best:
                                _union(parent, best, lbl)
            if best == 0:
                parent[nxt] = nxt
                best = nxt
                nxt += 1
            labels[i, j] = best
    # compress equivalence classes to 1..K in first-occurrence order
    remap = np.zeros(nxt, np.int32)
    count = 0
    for p in range(1, nxt):
        r = _find(parent, p)
        if remap[r] == 0:
            count += 1
            remap[r] = count
    for i in range(h):
        for j in range(w):
            if labels[i, j] > 0:
                labels[i, j] = remap[_find(parent, labels[i, j])]
    return labels, count


def label_components(mask: BinaryMask, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Partition mask foreground into maximal connected regions.

    Returns (labels, count): labels is int32 (h, w) with background 0 and
    components numbered 1..count in raster-scan order of first occurrence;
    two foreground pixels share a label iff they are connected under the
    chosen connectivity (4 = edge-adjacent, 8 = edge- or corner-adjacent).
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    bits = np.ascontiguousarray(mask.bits, dtype=np.uint8)
    labels, count = _label_two_pass(bits, connectivity == 8)
    return labels, int(count)
