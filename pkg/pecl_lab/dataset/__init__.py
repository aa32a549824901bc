"""Data ingestion, spatial splitting, augmentation and synthetic data."""

from .augment import RasterAugmenter, augment, zscore_bands
from .observations import (
    LocationRecord,
    ObservationRecord,
    encounter_rates,
    filter_locations,
    species_richness,
    visit_distribution,
)
from .spatial import (
    SplitAssignment,
    check_split_safety,
    dbscan_clusters,
    project_equirectangular,
    split,
)
from .synthetic import SyntheticDataset, synth_generate
from .tables import LocationTable

__all__ = [
    "LocationRecord",
    "LocationTable",
    "ObservationRecord",
    "RasterAugmenter",
    "SplitAssignment",
    "SyntheticDataset",
    "augment",
    "check_split_safety",
    "dbscan_clusters",
    "encounter_rates",
    "filter_locations",
    "project_equirectangular",
    "species_richness",
    "split",
    "synth_generate",
    "visit_distribution",
    "zscore_bands",
]
