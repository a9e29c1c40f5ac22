"""Upper-body skeleton observations used for pointing gestures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FOREARM_MIN = 0.2
FOREARM_MAX = 0.45


@dataclass
class SkeletonFrame:
    """Head, elbow and hand of one tracked person, in the sensor frame.

    ``held`` is how long the current arm posture has been sustained.
    """

    head: np.ndarray
    elbow: np.ndarray
    hand: np.ndarray
    held: float = 0.0
    stamp: float = 0.0

    def __post_init__(self) -> None:
        self.head = np.asarray(self.head, dtype=float).reshape(3)
        self.elbow = np.asarray(self.elbow, dtype=float).reshape(3)
        self.hand = np.asarray(self.hand, dtype=float).reshape(3)
        forearm = float(np.linalg.norm(self.hand - self.elbow))
        if not FOREARM_MIN <= forearm <= FOREARM_MAX:
            raise ValueError(f"forearm length {forearm:.3f} outside [{FOREARM_MIN}, {FOREARM_MAX}]")
        if self.head[2] <= self.elbow[2]:
            raise ValueError("head must sit above the elbow")
