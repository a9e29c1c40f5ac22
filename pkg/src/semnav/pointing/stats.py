"""Angular error statistics for pointing rays, loaded from packaged data.

Values are stored in degrees exactly as measured; conversion to radians
happens at the correction boundary, nowhere else.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Union

ELBOW_HAND = "elbow_hand"
HEAD_HAND = "head_hand"
TARGET2 = "target2"
ALL_TARGETS = "all_targets"

METHODS = (ELBOW_HAND, HEAD_HAND)
SCOPES = (TARGET2, ALL_TARGETS)

_DATA_FILE = "pointing_stats_v1.json"


@dataclass(frozen=True)
class AngleStats:
    """Mean/stddev of horizontal (theta) and vertical (psi) ray offsets, degrees."""

    method: str
    scope: str
    mu_theta: float
    sigma_theta: float
    mu_psi: float
    sigma_psi: float

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown pointing method {self.method!r}")
        if self.scope not in SCOPES:
            raise ValueError(f"unknown stats scope {self.scope!r}")
        if self.sigma_theta <= 0.0 or self.sigma_psi <= 0.0:
            raise ValueError("angle stddevs must be positive")


_packaged_cache: Optional[dict] = None


def load_stats(path: Optional[Union[str, Path]] = None) -> dict[tuple[str, str], AngleStats]:
    """Load stats keyed by (method, scope), from the packaged file by default."""
    global _packaged_cache
    if path is None:
        if _packaged_cache is not None:
            return _packaged_cache
        text = resources.files("semnav.data").joinpath(_DATA_FILE).read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    if doc.get("version") != 1:
        raise ValueError(f"unsupported pointing stats version {doc.get('version')!r}")
    out: dict[tuple[str, str], AngleStats] = {}
    for row in doc["stats"]:
        stats = AngleStats(
            method=row["method"],
            scope=row["scope"],
            mu_theta=float(row["mu_theta"]),
            sigma_theta=float(row["sigma_theta"]),
            mu_psi=float(row["mu_psi"]),
            sigma_psi=float(row["sigma_psi"]),
        )
        key = (stats.method, stats.scope)
        if key in out:
            raise ValueError(f"duplicate stats row for {key}")
        out[key] = stats
    missing = [(m, s) for m in METHODS for s in SCOPES if (m, s) not in out]
    if missing:
        raise ValueError(f"stats file is missing rows: {missing}")
    if path is None:
        _packaged_cache = out
    return out
