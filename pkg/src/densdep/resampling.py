import numpy as np


def effective_sample_size(w):
    """1 / sum(w^2) for normalized weights."""
    w = np.asarray(w)
    return 1.0 / np.sum(w * w)


def systematic_resample(w, rng):
    """Ancestor indices from a single uniform offset on an evenly spaced grid."""
    n = len(w)
    positions = (rng.random() + np.arange(n)) / n
    cumsum = np.cumsum(w)
    cumsum[-1] = 1.0
    return np.searchsorted(cumsum, positions, side="right").astype(np.intp)
