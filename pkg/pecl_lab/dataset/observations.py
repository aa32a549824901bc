"""Observation records to per-location encounter-rate labels."""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import MalformedInputError, NoVisitsError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObservationRecord:
    """One logged species count on one visit to a location."""

    location_id: str
    visit_date: date
    species_id: int
    count: int

    def __post_init__(self):
        if self.count < 0:
            raise MalformedInputError(f"negative count {self.count} at {self.location_id}")
        if self.species_id < 0:
            raise MalformedInputError(f"negative species index {self.species_id} at {self.location_id}")


@dataclass
class LocationRecord:
    """A location with its visit statistics and species-presence vector."""

    location_id: str
    x: float
    y: float
    n_visits: int
    n_observations: int
    label: np.ndarray = field(repr=False)

    @property
    def richness(self) -> int:
        return int(np.count_nonzero(self.label > 0))


def encounter_rates(
    records: Iterable[ObservationRecord],
    species_count: int,
    coordinates: Optional[Mapping[str, Tuple[float, float]]] = None,
    location_ids: Optional[Sequence[str]] = None,
) -> List[LocationRecord]:
    """Fraction of visits (distinct dates) on which each species was seen.

    A record with count 0 still marks a visit date but not a presence.
    ``location_ids`` lists locations expected in the output; those without
    records are dropped with a warning. Output is ordered by location_id.
    """
    visits: Dict[str, set] = defaultdict(set)
    presence: Dict[str, Dict[int, set]] = defaultdict(lambda: defaultdict(set))
    n_obs: Counter = Counter()

    for rec in records:
        if rec.species_id >= species_count:
            raise MalformedInputError(
                f"species index {rec.species_id} out of range for {species_count} species"
            )
        visits[rec.location_id].add(rec.visit_date)
        n_obs[rec.location_id] += 1
        if rec.count >= 1:
            presence[rec.location_id][rec.species_id].add(rec.visit_date)

    expected = set(location_ids or []) | set(visits)
    result = []
    for loc in sorted(expected):
        n_visits = len(visits.get(loc, ()))
        if n_visits == 0:
            logger.warning(f"{NoVisitsError.__name__}: location {loc} has no records; excluded")
            continue
        label = np.zeros(species_count)
        for species, dates in presence[loc].items():
            label[species] = len(dates) / n_visits
        x, y = (coordinates or {}).get(loc, (np.nan, np.nan))
        result.append(
            LocationRecord(
                location_id=loc,
                x=float(x),
                y=float(y),
                n_visits=n_visits,
                n_observations=int(n_obs[loc]),
                label=label,
            )
        )
    return result


def filter_locations(locations: Sequence[LocationRecord], min_observations: int = 200) -> List[LocationRecord]:
    """Keep locations with at least ``min_observations`` records."""
    kept = [loc for loc in locations if loc.n_observations >= min_observations]
    logger.info(f"Kept {len(kept)} of {len(locations)} locations with >= {min_observations} observations")
    return kept


def species_richness(locations: Sequence[LocationRecord]) -> np.ndarray:
    """Number of species ever observed at each location."""
    return np.array([loc.richness for loc in locations], dtype=int)


def visit_distribution(locations: Sequence[LocationRecord]) -> Dict[int, int]:
    """How many locations have each visit count."""
    counts = Counter(loc.n_visits for loc in locations)
    return dict(sorted(counts.items()))


def species_prevalence(locations: Sequence[LocationRecord]) -> np.ndarray:
    """Mean encounter rate of each species over locations."""
    if not locations:
        return np.zeros(0)
    return np.mean(np.stack([loc.label for loc in locations]), axis=0)
