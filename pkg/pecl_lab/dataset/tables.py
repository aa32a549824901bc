"""Aligned per-location arrays (ids, features, labels, coordinates)."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..exceptions import ShapeMismatchError


@dataclass
class LocationTable:
    """Rows of features and labels keyed by location id, in a fixed order."""

    location_ids: List[str]
    features: np.ndarray
    labels: np.ndarray
    coordinates: Optional[np.ndarray] = None
    species_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.location_ids)
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2 or self.labels.ndim != 2:
            raise ShapeMismatchError("features and labels must be 2-D")
        if self.features.shape[0] != n or self.labels.shape[0] != n:
            raise ShapeMismatchError(
                f"{n} ids, {self.features.shape[0]} feature rows, {self.labels.shape[0]} label rows"
            )
        if self.coordinates is not None:
            self.coordinates = np.asarray(self.coordinates, dtype=np.float64)
            if self.coordinates.shape != (n, 2):
                raise ShapeMismatchError(f"coordinates must be ({n}, 2), got {self.coordinates.shape}")
        if not self.species_names:
            self.species_names = [f"species_{s}" for s in range(self.labels.shape[1])]

    def __len__(self) -> int:
        return len(self.location_ids)

    @property
    def species_count(self) -> int:
        return int(self.labels.shape[1])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def index(self) -> Dict[str, int]:
        return {loc: i for i, loc in enumerate(self.location_ids)}

    def subset(self, location_ids: Sequence[str]) -> "LocationTable":
        """Rows for the given ids, in the order given."""
        lookup = self.index()
        missing = [loc for loc in location_ids if loc not in lookup]
        if missing:
            raise ShapeMismatchError(f"unknown location ids: {missing[:5]}")
        rows = np.array([lookup[loc] for loc in location_ids], dtype=int)
        return LocationTable(
            location_ids=list(location_ids),
            features=self.features[rows] if rows.size else np.zeros((0, self.feature_dim)),
            labels=self.labels[rows] if rows.size else np.zeros((0, self.species_count)),
            coordinates=None if self.coordinates is None else self.coordinates[rows].reshape(-1, 2),
            species_names=list(self.species_names),
        )
