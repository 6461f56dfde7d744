"""Exact k-th nearest neighbour distances, by brute force or a bucketed k-d tree.

Both backends compute squared distances with :func:`squared_distances`, which
accumulates per-coordinate squared differences one coordinate at a time using
elementwise operations only.  That makes every pairwise value bit-identical no
matter how the points are blocked, so the two backends agree exactly.
"""

from __future__ import annotations

import numpy as np

LEAF_SIZE = 32
_BLOCK_ELEMENTS = 1 << 22


def squared_distances(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    out = np.zeros((queries.shape[0], points.shape[0]))
    for j in range(queries.shape[1]):
        diff = queries[:, j, None] - points[None, :, j]
        diff *= diff
        out += diff
    return out


def _kth_smallest_excluding_self(sq: np.ndarray, query_idx: np.ndarray, cand_idx: np.ndarray, k: int) -> np.ndarray:
    sq[query_idx[:, None] == cand_idx[None, :]] = np.inf
    return np.partition(sq, k - 1, axis=1)[:, k - 1]


def brute_force_kth_sq(points: np.ndarray, k: int) -> np.ndarray:
    n = points.shape[0]
    out = np.empty(n)
    block = max(1, _BLOCK_ELEMENTS // n)
    for s in range(0, n, block):
        q = points[s : s + block]
        sq = squared_distances(q, points)
        rows = np.arange(q.shape[0])
        sq[rows, rows + s] = np.inf
        out[s : s + q.shape[0]] = np.partition(sq, k - 1, axis=1)[:, k - 1]
    return out


class KDTree:
    """Axis-aligned median-split tree over a fixed point set.

    Nodes are stored in flat lists; ``perm[start[i]:end[i]]`` are the original
    indices of the points under node ``i``.
    """

    def __init__(self, points: np.ndarray, leaf_size: int = LEAF_SIZE):
        self.points = points
        self.leaf_size = leaf_size
        n = points.shape[0]
        self.perm = np.arange(n)
        self.start, self.end = [], []
        self.left, self.right, self.parent = [], [], []
        self.lo, self.hi = [], []
        self.leaves = []
        self._build(0, n, -1)
        self.lo = np.array(self.lo)
        self.hi = np.array(self.hi)

    def _new_node(self, s, e, parent):
        block = self.points[self.perm[s:e]]
        self.start.append(s)
        self.end.append(e)
        self.left.append(-1)
        self.right.append(-1)
        self.parent.append(parent)
        self.lo.append(block.min(axis=0))
        self.hi.append(block.max(axis=0))
        return len(self.start) - 1, block

    def _build(self, s, e, parent):
        stack = [(s, e, parent, None)]
        while stack:
            s, e, parent, side = stack.pop()
            node, block = self._new_node(s, e, parent)
            if side is not None:
                (self.left if side == 0 else self.right)[parent] = node
            width = self.hi[node] - self.lo[node]
            if e - s <= self.leaf_size or not np.any(width > 0):
                self.leaves.append(node)
                continue
            axis = int(np.argmax(width))
            order = np.argsort(block[:, axis], kind="stable")
            self.perm[s:e] = self.perm[s:e][order]
            mid = s + (e - s) // 2
            stack.append((mid, e, node, 1))
            stack.append((s, mid, node, 0))

    def size(self, node: int) -> int:
        return self.end[node] - self.start[node]

    def indices(self, node: int) -> np.ndarray:
        return self.perm[self.start[node] : self.end[node]]

    def _box_gap_sq(self, node: int, lo: np.ndarray, hi: np.ndarray) -> float:
        # same sequential accumulation as squared_distances, so never larger
        # than any point-to-point value between the two boxes
        gap = np.maximum(np.maximum(self.lo[node] - hi, lo - self.hi[node]), 0.0)
        total = 0.0
        for g in gap:
            total += g * g
        return total

    def _nodes_within(self, lo, hi, radius_sq):
        found, stack = [], [0]
        while stack:
            node = stack.pop()
            if self._box_gap_sq(node, lo, hi) > radius_sq:
                continue
            if self.left[node] < 0:
                found.append(node)
            else:
                stack.append(self.right[node])
                stack.append(self.left[node])
        return found

    def kth_sq(self, k: int) -> np.ndarray:
        out = np.empty(self.points.shape[0])
        for leaf in self.leaves:
            q_idx = self.indices(leaf)
            q = self.points[q_idx]
            # smallest enclosing subtree with at least k other points gives an upper bound
            anc = leaf
            while self.size(anc) < k + 1:
                anc = self.parent[anc]
            cand = self.indices(anc)
            bound = _kth_smallest_excluding_self(squared_distances(q, self.points[cand]), q_idx, cand, k)
            radius_sq = float(bound.max())
            near = self._nodes_within(self.lo[leaf], self.hi[leaf], radius_sq)
            cand = np.concatenate([self.indices(m) for m in near])
            out[q_idx] = _kth_smallest_excluding_self(squared_distances(q, self.points[cand]), q_idx, cand, k)
        return out
