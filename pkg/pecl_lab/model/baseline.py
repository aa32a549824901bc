"""Mean encounter rate baseline."""

from dataclasses import dataclass

import numpy as np

from ..contrastive.pairing import label_matrix
from ..exceptions import EmptySplitError


@dataclass(frozen=True)
class MeanRateModel:
    """Per-species mean encounter rate over the training split."""

    rates: np.ndarray

    @property
    def species_count(self) -> int:
        return int(self.rates.shape[0])


def mean_rate_fit(train_labels) -> MeanRateModel:
    if len(train_labels) == 0:
        raise EmptySplitError("mean rate model needs at least one training label")
    y = label_matrix(train_labels)
    return MeanRateModel(rates=np.mean(y, axis=0))


def mean_rate_predict(model: MeanRateModel, n: int) -> np.ndarray:
    """The same rate vector for every one of ``n`` locations."""
    return np.tile(model.rates, (int(n), 1))
