"""Slow exact reference implementations used as cross-checks.

These deliberately avoid the fast transforms and DP ladders of the
production engines: each one is a direct sum over the full pair space, so
the two routes share nothing but the inputs.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .bits import magnetizations, popcounts, spin_matrix
from .configurations import OverlapConstraint
from .disorder import ExplicitDraw
from .mixture import MixtureSpec


def brute_overlap_logz(logw1: np.ndarray, logw2: np.ndarray) -> np.ndarray:
    """Direct quadratic double loop over configuration pairs, resolved by d."""
    size = logw1.size
    n = size.bit_length() - 1
    s1, s2 = float(logw1.max()), float(logw2.max())
    t1 = np.exp(logw1 - s1)
    t2 = np.exp(logw2 - s2)
    idx = np.arange(size)
    z = np.zeros(n + 1)
    pop = popcounts(n)
    for mask in range(size):
        z[pop[mask]] += float(t1 @ t2[idx ^ mask])
    return np.log(z) + s1 + s2


def brute_cavity_logz(a: np.ndarray, b: np.ndarray, d: int) -> float:
    """Field-only constrained pair sum over all 4**n pairs, no DP."""
    n = len(a)
    s = spin_matrix(n)
    e1 = s @ np.asarray(a, dtype=np.float64)
    e2 = s @ np.asarray(b, dtype=np.float64)
    pop = popcounts(n)
    vals = []
    for s1 in range(1 << n):
        for s2 in range(1 << n):
            if pop[s1 ^ s2] == d:
                vals.append(e1[s1] + e2[s2])
    return float(logsumexp(np.array(vals)))


def brute_explicit_terms(
    draw: ExplicitDraw,
    r1: np.ndarray,
    r2: np.ndarray,
    spec: MixtureSpec,
    u_prime: OverlapConstraint,
    variant: str = "limit",
) -> tuple[float, float]:
    """Both explicit-functional terms with unnormalized weights and a flat
    enumeration over increment-spin pairs (no per-site ladder, no element
    abstraction).  Returns (1/n)-scaled log sums."""
    m, n = draw.m, draw.n
    mag_m = magnetizations(m)
    z = draw.z if variant == "limit" else draw.z_finite
    y = draw.y if variant == "limit" else draw.y_finite
    s = spin_matrix(n)
    pop = popcounts(n)
    pair_ok = pop[np.arange(1 << n)[:, None] ^ np.arange(1 << n)[None, :]] == u_prime.d
    terms1 = []
    terms2 = []
    for rho1, rho2 in zip(r1, r2):
        log_w = (
            draw.trunc[0, rho1] + draw.trunc[1, rho2]
            + spec.h1 * mag_m[rho1] + spec.h2 * mag_m[rho2]
        )
        e1 = s @ (z[:, 0, rho1] + spec.h1)
        e2 = s @ (z[:, 1, rho2] + spec.h2)
        energies = e1[:, None] + e2[None, :]
        terms1.append(log_w + logsumexp(energies[pair_ok]))
        terms2.append(log_w + np.sqrt(n) * (y[0, rho1] + y[1, rho2]))
    return (
        float(logsumexp(np.array(terms1))) / n,
        float(logsumexp(np.array(terms2))) / n,
    )
