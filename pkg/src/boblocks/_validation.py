"""Small input-validation helpers shared across modules."""

import numbers

import numpy as np


def check_generator(seed=None):
    """Turn ``seed`` into a :class:`numpy.random.Generator`.

    Accepts ``None``, an int, a :class:`~numpy.random.SeedSequence` or an
    existing Generator (returned unchanged).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    if isinstance(seed, np.random.RandomState):
        return np.random.default_rng(seed.randint(2**31))
    raise ValueError(f"{seed!r} cannot be used to seed a Generator")


def draw_seed(rng):
    """A fresh 63-bit integer seed from ``rng``."""
    return int(rng.integers(2**63))


def check_1d(y, name="y"):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {y.shape}")
    return y


def check_positive(value, name):
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    return value
