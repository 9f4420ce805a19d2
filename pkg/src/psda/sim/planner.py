"""A* goal seeking on the survey site's unit grid."""

from __future__ import annotations

from heapq import heappop, heappush
from typing import Optional

import numpy as np

_SQRT2 = float(np.sqrt(2.0))
_MOVES = [
    (di, dj, _SQRT2 if di and dj else 1.0)
    for di in (-1, 0, 1)
    for dj in (-1, 0, 1)
    if (di, dj) != (0, 0)
]


def _octile(a: tuple[int, int], b: tuple[int, int]) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dx, dy) + (_SQRT2 - 1.0) * min(dx, dy)


def astar_grid(
    start: tuple[int, int],
    goal: tuple[int, int],
    shape: tuple[int, int],
    obstacles: Optional[np.ndarray] = None,
) -> Optional[list[tuple[int, int]]]:
    """8-connected A* with octile heuristic.

    Returns the cell path excluding the start (empty when start == goal),
    or None when the goal is unreachable.
    """
    ni, nj = shape

    def free(cell):
        i, j = cell
        if not (0 <= i < ni and 0 <= j < nj):
            return False
        return obstacles is None or not obstacles[i, j]

    if not free(start) or not free(goal):
        return None
    if start == goal:
        return []
    open_set: list[tuple[float, tuple[int, int]]] = []
    heappush(open_set, (_octile(start, goal), start))
    came: dict[tuple[int, int], tuple[int, int]] = {}
    g = {start: 0.0}
    closed = set()
    while open_set:
        _, cur = heappop(open_set)
        if cur == goal:
            path = [cur]
            while cur in came:
                cur = came[cur]
                path.append(cur)
            path.reverse()
            return path[1:]
        if cur in closed:
            continue
        closed.add(cur)
        for di, dj, cost in _MOVES:
            nxt = (cur[0] + di, cur[1] + dj)
            if not free(nxt):
                continue
            cand = g[cur] + cost
            if cand < g.get(nxt, np.inf):
                g[nxt] = cand
                came[nxt] = cur
                heappush(open_set, (cand + _octile(nxt, goal), nxt))
    return None
