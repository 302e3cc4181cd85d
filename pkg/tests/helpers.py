import numpy as np


def well_conditioned(rng, d, size=None, low=0.5, high=2.0):
    """Random ``U diag(s) V^T`` with singular values in ``[low, high]``."""
    shape = () if size is None else (size,)
    U, _ = np.linalg.qr(rng.standard_normal(shape + (d, d)))
    V, _ = np.linalg.qr(rng.standard_normal(shape + (d, d)))
    s = rng.uniform(low, high, shape + (d,))
    return (U * s[..., None, :]) @ np.swapaxes(V, -1, -2)


def random_rank(rng, d, r, size=None):
    U, _ = np.linalg.qr(rng.standard_normal((() if size is None else (size,)) + (d, d)))
    V, _ = np.linalg.qr(rng.standard_normal((() if size is None else (size,)) + (d, d)))
    s = np.zeros((() if size is None else (size,)) + (d,))
    s[..., :r] = rng.uniform(0.5, 2.0, s[..., :r].shape)
    return (U * s[..., None, :]) @ np.swapaxes(V, -1, -2)


def random_spd(rng, d, size=None, spread=0.5):
    B = rng.standard_normal((() if size is None else (size,)) + (d, d)) * spread
    return np.eye(d) + B @ np.swapaxes(B, -1, -2)
