from typing import Optional, Tuple

import numpy as np


class Terrain:
    """
    A piecewise-constant ground height profile along x.

    ``heights[i]`` applies to ``edges[i - 1] <= x < edges[i]``; there is one more height than edges.
    Flat ground is a single height and no edges.
    """

    def __init__(self, edges=(), heights=(0.0,)):
        self.edges = np.asarray(edges, dtype=float)
        self.heights = np.asarray(heights, dtype=float)
        if len(self.heights) != len(self.edges) + 1:
            raise ValueError("a terrain needs exactly one more height than edges")

    @classmethod
    def flat(cls, height: float = 0.0) -> "Terrain":
        return cls((), (height,))

    @property
    def is_flat(self) -> bool:
        return len(self.edges) == 0

    def height(self, x: float) -> float:
        return float(self.heights[np.searchsorted(self.edges, x, side="right")])

    def with_step(self, edge: float, height: float, direction: int) -> "Terrain":
        """
        A copy in which everything beyond ``edge`` (in ``direction``, +1 or -1) is at ``height``.
        """
        if direction >= 0:
            keep = self.edges < edge
            edges = np.append(self.edges[keep], edge)
            heights = np.append(self.heights[:keep.sum() + 1], height)
        else:
            keep = self.edges > edge
            n = len(self.edges) - keep.sum()
            edges = np.insert(self.edges[keep], 0, edge)
            heights = np.insert(self.heights[n:], 0, height)
        return Terrain(edges, heights)

    def wall(self, x: float, z: float) -> Optional[Tuple[float, int]]:
        """
        The step face a buried point has pushed through: (edge x, outward direction), or None.

        The face is the nearest edge whose far side lies below ``z``.
        """
        best = None
        for i, edge in enumerate(self.edges):
            left, right = self.heights[i], self.heights[i + 1]
            if x >= edge and left <= z < right:
                candidate = (edge, -1)
            elif x < edge and right <= z < left:
                candidate = (edge, 1)
            else:
                continue
            if best is None or abs(x - candidate[0]) < abs(x - best[0]):
                best = candidate
        return best

    def to_dict(self) -> dict:
        return {"edges": self.edges.tolist(), "heights": self.heights.tolist()}

    def __eq__(self, other):
        return (isinstance(other, Terrain) and np.array_equal(self.edges, other.edges)
                and np.array_equal(self.heights, other.heights))

    def __repr__(self):
        return f"Terrain(edges={self.edges.tolist()}, heights={self.heights.tolist()})"
