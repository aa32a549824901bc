"""
Spatial clustering and leakage-free train/val/test splits.

Locations closer than ``eps`` metres are chained into one DBSCAN cluster
(min_pts = 2, so every pair within range joins). Clusters and unclustered
singletons are the units that get assigned to splits; a unit never
straddles two splits, which keeps every cross-split pair at least ``eps``
apart.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import DBSCAN

from ..core.numeric import SeededRng
from ..exceptions import InsufficientLocationsError, ShapeMismatchError, SplitSafetyError

logger = logging.getLogger(__name__)

EARTH_RADIUS_METRES = 6371008.8
SPLIT_NAMES = ("train", "val", "test")
NOISE = -1


def project_equirectangular(lon, lat, lon0=None, lat0=None) -> Tuple[np.ndarray, np.ndarray]:
    """Local planar metres around (lon0, lat0), defaulting to the mean position.

    Adequate for the few-kilometre distances clustering works at.
    """
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    if lon.shape != lat.shape:
        raise ShapeMismatchError(f"lon {lon.shape} and lat {lat.shape} differ")
    lon0 = float(np.mean(lon)) if lon0 is None else float(lon0)
    lat0 = float(np.mean(lat)) if lat0 is None else float(lat0)
    x = EARTH_RADIUS_METRES * np.radians(lon - lon0) * np.cos(np.radians(lat0))
    y = EARTH_RADIUS_METRES * np.radians(lat - lat0)
    return x, y


def _as_coordinates(coordinates) -> np.ndarray:
    xy = np.asarray(coordinates, dtype=np.float64)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise ShapeMismatchError(f"coordinates must be (n, 2), got {xy.shape}")
    if not np.all(np.isfinite(xy)):
        raise ShapeMismatchError("coordinates contain NaN or Inf")
    return xy


def dbscan_clusters(coordinates, eps_metres: float = 4000.0, min_pts: int = 2) -> np.ndarray:
    """Cluster id per location (-1 for unclustered).

    Points join when strictly closer than ``eps_metres``. Cluster ids are
    numbered by first appearance in input order.
    """
    xy = _as_coordinates(coordinates)
    if xy.shape[0] == 0:
        return np.zeros(0, dtype=int)
    # sklearn's neighbourhood is inclusive; step just below eps for strict "<"
    radius = np.nextafter(float(eps_metres), 0.0)
    raw = DBSCAN(eps=radius, min_samples=min_pts).fit(xy).labels_

    canonical = np.full(raw.shape, NOISE, dtype=int)
    mapping: Dict[int, int] = {}
    for i, label in enumerate(raw):
        if label == NOISE:
            continue
        if label not in mapping:
            mapping[label] = len(mapping)
        canonical[i] = mapping[label]
    n_clusters = len(mapping)
    n_noise = int(np.sum(canonical == NOISE))
    logger.info(
        f"DBSCAN: {xy.shape[0] - n_noise} locations in {n_clusters} clusters, {n_noise} unclustered"
    )
    return canonical


@dataclass
class SplitAssignment:
    """Split name and cluster id for every location."""

    splits: Dict[str, str] = field(default_factory=dict)
    clusters: Dict[str, int] = field(default_factory=dict)

    def ids(self, split: str) -> List[str]:
        return sorted(loc for loc, name in self.splits.items() if name == split)

    def counts(self) -> Dict[str, int]:
        return {name: len(self.ids(name)) for name in SPLIT_NAMES}

    def to_dict(self) -> Dict[str, Dict]:
        return {
            loc: {"split": self.splits[loc], "cluster_id": int(self.clusters[loc])}
            for loc in sorted(self.splits)
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Dict]) -> "SplitAssignment":
        return cls(
            splits={loc: entry["split"] for loc, entry in data.items()},
            clusters={loc: int(entry.get("cluster_id", NOISE)) for loc, entry in data.items()},
        )


def _units(clusters: np.ndarray) -> List[List[int]]:
    """Clusters plus singleton noise points, each a list of row indices."""
    units: Dict[Tuple[str, int], List[int]] = {}
    for i, c in enumerate(clusters):
        key = ("noise", i) if c == NOISE else ("cluster", int(c))
        units.setdefault(key, []).append(i)
    return list(units.values())


def split(
    location_ids: Sequence[str],
    clusters,
    fractions: Tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> SplitAssignment:
    """Assign shuffled units to train/val/test by cumulative location count.

    A unit goes to the split whose target interval contains the midpoint
    of its cumulative location range, so each split lands within one unit
    of its target size.
    """
    clusters = np.asarray(clusters, dtype=int)
    n = len(location_ids)
    if clusters.shape != (n,):
        raise ShapeMismatchError(f"{clusters.shape[0]} cluster ids for {n} locations")
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != len(SPLIT_NAMES) or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ShapeMismatchError(f"fractions must be three non-negative values summing to 1, got {fractions}")
    needed = sum(1 for f in fractions if f > 0)
    if n < needed:
        raise InsufficientLocationsError(f"{n} locations cannot fill {needed} non-empty splits")

    units = _units(clusters)
    order = SeededRng(seed).permutation(len(units))
    bounds = np.cumsum(fractions) * n

    assignment = SplitAssignment()
    filled = 0
    for u in order:
        members = units[u]
        midpoint = filled + len(members) / 2.0
        which = int(np.searchsorted(bounds, midpoint, side="right"))
        name = SPLIT_NAMES[min(which, len(SPLIT_NAMES) - 1)]
        for i in members:
            assignment.splits[location_ids[i]] = name
            assignment.clusters[location_ids[i]] = int(clusters[i])
        filled += len(members)

    counts = assignment.counts()
    empty = [name for name, f in zip(SPLIT_NAMES, fractions) if f > 0 and counts[name] == 0]
    if empty:
        logger.warning(f"degenerate split: {', '.join(empty)} received no locations ({counts})")
    logger.info(f"Split counts: {counts}")
    return assignment


def check_split_safety(
    location_ids: Sequence[str],
    coordinates,
    assignment: SplitAssignment,
    eps_metres: float = 4000.0,
) -> float:
    """Raise SplitSafetyError if two locations in different splits are closer than eps.

    Returns the smallest cross-split distance (inf when fewer than two splits are used).
    """
    xy = _as_coordinates(coordinates)
    groups = {name: [] for name in SPLIT_NAMES}
    for i, loc in enumerate(location_ids):
        groups[assignment.splits[loc]].append(i)

    closest = np.inf
    for a in range(len(SPLIT_NAMES)):
        for b in range(a + 1, len(SPLIT_NAMES)):
            rows_a, rows_b = groups[SPLIT_NAMES[a]], groups[SPLIT_NAMES[b]]
            if not rows_a or not rows_b:
                continue
            d = cdist(xy[rows_a], xy[rows_b])
            closest = min(closest, float(d.min()))
            if d.min() < eps_metres:
                i, j = np.unravel_index(np.argmin(d), d.shape)
                raise SplitSafetyError(
                    f"{location_ids[rows_a[i]]} ({SPLIT_NAMES[a]}) and {location_ids[rows_b[j]]} "
                    f"({SPLIT_NAMES[b]}) are {d.min():.1f} m apart"
                )
    return closest
