from __future__ import annotations

import numpy as np

from cotlab.rng import stream
from cotlab.tasks import CovarianceSpec, make_covariance, haar_orthogonal


def random_spd_spec(d: int, rng: np.random.Generator, lo: float = 0.5, hi: float = 2.0,
                    label: str = "") -> CovarianceSpec:
    return make_covariance(rng.uniform(lo, hi, size=d), basis=haar_orthogonal(d, rng), label=label)


def rng_for(*key: int) -> np.random.Generator:
    return stream(20260808, *key)
