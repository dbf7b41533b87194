"""Uniform spatial hash grid for exact nearest-neighbor queries.

Points are bucketed into cubic cells; a query expands Chebyshev rings of
cells around the query point until the best distance found so far rules out
every unvisited ring. Distances are evaluated with the same numpy expression
a brute-force scan would use, so results match an O(n^2) scan exactly.
"""

from __future__ import annotations

import itertools

import numpy as np

_ring_offsets_cache: dict[int, list] = {}


def _ring_offsets(r: int) -> list:
    offs = _ring_offsets_cache.get(r)
    if offs is None:
        if r == 0:
            offs = [(0, 0, 0)]
        else:
            offs = [
                o for o in itertools.product(range(-r, r + 1), repeat=3)
                if max(abs(o[0]), abs(o[1]), abs(o[2])) == r
            ]
        _ring_offsets_cache[r] = offs
    return offs


class GridIndex:
    def __init__(self, points: np.ndarray, cell: float | None = None):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(points) == 0:
            raise ValueError("cannot index an empty point set")
        if cell is None:
            span = points.max(axis=0) - points.min(axis=0)
            vol = float(np.prod(np.maximum(span, 1e-6)))
            # ~2x the expected point spacing: one shell usually suffices
            cell = max(2.0 * (vol / len(points)) ** (1.0 / 3.0), 1e-6)
        if cell <= 0:
            raise ValueError("cell size must be positive")
        self.points = points
        self.cell = float(cell)
        keys = np.floor(points / self.cell).astype(np.int64)
        buckets: dict[tuple, list] = {}
        for i, key in enumerate(map(tuple, keys)):
            buckets.setdefault(key, []).append(i)
        self._buckets = {k: points[idx] for k, idx in buckets.items()}

    def nearest_distance(self, q) -> float:
        """Exact Euclidean distance from q to the closest indexed point."""
        q = np.asarray(q, dtype=np.float64)
        cx, cy, cz = (int(c) for c in np.floor(q / self.cell))
        buckets = self._buckets
        best = np.inf
        r = 0
        # cells in ring r+1 only hold points at distance >= r*cell from q
        while True:
            cands = [
                pts for dx, dy, dz in _ring_offsets(r)
                if (pts := buckets.get((cx + dx, cy + dy, cz + dz)))
                is not None
            ]
            if cands:
                allc = cands[0] if len(cands) == 1 else np.concatenate(cands)
                d = np.sqrt(np.sum((allc - q) ** 2, axis=1)).min()
                if d < best:
                    best = float(d)
            if best <= r * self.cell:
                return best
            r += 1
            if r > 4:
                # far query or degenerate cell size: scan everything
                d = np.sqrt(np.sum((self.points - q) ** 2, axis=1)).min()
                return float(min(best, d))

    def nearest_distances(self, queries: np.ndarray) -> np.ndarray:
        return np.array([self.nearest_distance(q) for q in queries])

    def has_within(self, q, radius: float) -> bool:
        """True iff some indexed point lies within `radius` of q."""
        q = np.asarray(q, dtype=np.float64)
        cx, cy, cz = (int(c) for c in np.floor(q / self.cell))
        reach = int(np.ceil(radius / self.cell))
        r2 = radius * radius
        for dx, dy, dz in itertools.product(range(-reach, reach + 1),
                                            repeat=3):
            cands = self._buckets.get((cx + dx, cy + dy, cz + dz))
            if cands is None:
                continue
            if np.any(np.sum((cands - q) ** 2, axis=1) <= r2):
                return True
        return False
