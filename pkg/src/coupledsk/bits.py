"""Bitmask utilities shared by the enumeration engines.

A configuration of n spins is a mask in [0, 2**n); bit i set means spin i
equals -1.  All engines index tables by this mask.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

# Hard cap on the word width any enumeration engine will accept.
CONFIG_CAP = 20


@lru_cache(maxsize=None)
def spin_matrix(n: int) -> np.ndarray:
    """All 2**n configurations as a (2**n, n) float array of +-1 values."""
    if not 1 <= n <= CONFIG_CAP:
        raise ValueError(f"n must be in [1, {CONFIG_CAP}], got {n}")
    masks = np.arange(2**n, dtype=np.int64)
    bits = (masks[:, None] >> np.arange(n)) & 1
    out = 1.0 - 2.0 * bits
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def popcounts(n: int) -> np.ndarray:
    """Popcount of every mask in [0, 2**n) as an int64 array."""
    if not 1 <= n <= CONFIG_CAP:
        raise ValueError(f"n must be in [1, {CONFIG_CAP}], got {n}")
    masks = np.arange(2**n, dtype=np.int64)
    out = ((masks[:, None] >> np.arange(n)) & 1).sum(axis=1)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def magnetizations(n: int) -> np.ndarray:
    """Sum of spins per mask: n - 2*popcount."""
    out = (n - 2 * popcounts(n)).astype(np.float64)
    out.flags.writeable = False
    return out


def fwht(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along one power-of-two axis.

    Self-inverse up to a factor of the axis length.  The butterfly order is
    fixed, so results are bit-for-bit reproducible.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    a = np.moveaxis(a, axis, -1)
    m = a.shape[-1]
    if m & (m - 1):
        raise ValueError(f"axis length must be a power of two, got {m}")
    h = 1
    while h < m:
        v = a.reshape(a.shape[:-1] + (m // (2 * h), 2, h))
        lo = v[..., 0, :] + v[..., 1, :]
        hi = v[..., 0, :] - v[..., 1, :]
        a = np.stack((lo, hi), axis=-2).reshape(a.shape)
        h *= 2
    return np.moveaxis(a, -1, axis)


def xor_correlation(w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """c[m] = sum_x w1[x] * w2[x ^ m], computed in O(n 2**n) via fwht.

    Both inputs must share one power-of-two length along the last axis.
    """
    m = w1.shape[-1]
    return fwht(fwht(w1) * fwht(w2)) / m


def bucket_by_popcount(values: np.ndarray, n: int) -> np.ndarray:
    """Sum a length-2**n vector into n+1 buckets keyed by mask popcount."""
    return np.bincount(popcounts(n), weights=values, minlength=n + 1)


@lru_cache(maxsize=None)
def split_popcounts(m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-mask popcounts of the low m bits and the high n bits of m+n-bit masks."""
    masks = np.arange(2 ** (m + n), dtype=np.int64)
    lo = popcounts(m)[masks & ((1 << m) - 1)]
    hi = popcounts(n)[masks >> m]
    lo.flags.writeable = False
    hi.flags.writeable = False
    return lo, hi


def bucket_by_split_popcount(values: np.ndarray, m: int, n: int) -> np.ndarray:
    """Sum a length-2**(m+n) vector into an (m+1, n+1) popcount-pair table."""
    lo, hi = split_popcounts(m, n)
    flat = np.bincount(lo * (n + 1) + hi, weights=values, minlength=(m + 1) * (n + 1))
    return flat.reshape(m + 1, n + 1)
