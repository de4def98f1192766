"""Distribution sampling shared by the random generator and spec auto-fill.

A distribution is a small JSON-able dict::

    {"family": "uniform", "low": 0.2, "high": 0.6}
    {"family": "categorical", "values": [0, 0.2, 0.56], "weights": [1, 2, 1]}
    {"family": "normal", "mean": 0.4, "sd": 0.15}     # clamped to [low, high]
    {"family": "constant", "value": 0.4}
"""

from __future__ import annotations

import numpy as np

RNG_NAME = "numpy.PCG64"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def validate_distribution(dist: dict) -> None:
    family = dist.get("family")
    if family == "uniform":
        if not dist["low"] <= dist["high"]:
            raise ValueError(f"uniform needs low <= high: {dist}")
    elif family == "categorical":
        values, weights = dist["values"], dist.get("weights")
        if not values:
            raise ValueError("categorical needs at least one value")
        if weights is not None and (len(weights) != len(values) or min(weights) < 0 or sum(weights) <= 0):
            raise ValueError(f"bad categorical weights: {weights}")
    elif family == "normal":
        if dist["sd"] < 0:
            raise ValueError("normal sd must be >= 0")
    elif family == "constant":
        float(dist["value"])
    else:
        raise ValueError(f"unknown distribution family {family!r}")


def sample(dist: dict, rng: np.random.Generator, size: int | None = None):
    """Draw one value (or ``size`` values as a list) from ``dist``."""
    family = dist["family"]
    n = 1 if size is None else size
    if family == "uniform":
        out = rng.uniform(dist["low"], dist["high"], n)
    elif family == "categorical":
        values = np.asarray(dist["values"], dtype=float)
        w = dist.get("weights")
        p = None if w is None else np.asarray(w, dtype=float) / float(np.sum(w))
        out = values[rng.choice(len(values), size=n, p=p)]
    elif family == "normal":
        lo, hi = dist.get("low", 0.0), dist.get("high", 1.0)
        out = np.clip(rng.normal(dist["mean"], dist["sd"], n), lo, hi)
    elif family == "constant":
        out = np.full(n, float(dist["value"]))
    else:
        raise ValueError(f"unknown distribution family {family!r}")
    vals = [float(v) for v in out]
    return vals[0] if size is None else vals
