"""Exact constrained partition sums and their disorder-averaged logarithms.

Everything here is exact in the spin sum (no thermal sampling): the engine
resolves the two-copy partition function by disagreement count d through a
Walsh-Hadamard XOR convolution in O(n 2**n), and Monte Carlo enters only
through the outer average over Gaussian disorder.  All arithmetic is
log-domain with per-table max shifts; overflow is treated as a bug, not an
error path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .bits import bucket_by_popcount, magnetizations, popcounts, spin_matrix, xor_correlation
from .configurations import OverlapConstraint
from .disorder import (
    ExplicitSystemSampler,
    HamiltonianTable,
    ResourceError,
    RostFieldSampler,
    RostSpec,
    get_sampler,
)
from .mixture import MixtureSpec, mixture_functions
from .parallel import pmap, replica_seed, rng_for, summarize

WHT_CAP = 12
EXPLICIT_PAIR_CAP = 2048


class NumericalError(RuntimeError):
    """A positive-by-construction quantity was lost to rounding."""


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo scalar: across-replica mean with plain standard error."""

    mean: float
    stderr: float
    n_rep: int
    seed: int
    label: str = ""

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")


def _estimate(values, seed: int, label: str) -> Estimate:
    mean, stderr = summarize(values)
    return Estimate(mean=mean, stderr=stderr, n_rep=len(values), seed=seed, label=label)


# ---------------------------------------------------------------------------
# Overlap-resolved partition function
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class OverlapResolvedPartition:
    """log Z(d) for every disagreement count d; constraints are subset sums."""

    n: int
    log_z: np.ndarray  # shape (n+1,)

    def log_value(self, d: int) -> float:
        return float(self.log_z[d])

    def log_window(self, c: OverlapConstraint) -> float:
        d_lo, d_hi = c.window_disagreement_range()
        return float(logsumexp(self.log_z[d_lo:d_hi + 1]))

    def log_total(self) -> float:
        return float(logsumexp(self.log_z))


def overlap_resolved_logz(logw1: np.ndarray, logw2: np.ndarray) -> np.ndarray:
    """log of Z(d) = sum over pairs at disagreement d of exp(logw1 + logw2).

    Computed as an XOR correlation of the two weight tables followed by a
    popcount bucketing; matches the direct quadratic double loop to rounding.
    """
    if logw1.shape != logw2.shape or logw1.ndim != 1:
        raise ValueError("weight tables must be equal-length vectors")
    size = logw1.size
    n = size.bit_length() - 1
    if 1 << n != size:
        raise ValueError("table length must be a power of two")
    if not (np.all(np.isfinite(logw1)) and np.all(np.isfinite(logw2))):
        raise ValueError("weight tables must be finite")
    s1 = float(logw1.max())
    s2 = float(logw2.max())
    c = xor_correlation(np.exp(logw1 - s1), np.exp(logw2 - s2))
    z = bucket_by_popcount(c, n)
    if np.any(z <= 0.0):
        raise NumericalError("a disagreement class summed to a non-positive value")
    return np.log(z) + s1 + s2


def partition_by_overlap(
    table: HamiltonianTable, h1: float, h2: float
) -> OverlapResolvedPartition:
    """Resolve the coupled partition function of one disorder sample by d."""
    if table.n > WHT_CAP:
        raise ResourceError(f"engine capped at n={WHT_CAP}, got {table.n}")
    mag = magnetizations(table.n)
    logw1 = table.values[0] + h1 * mag
    logw2 = table.values[1] + h2 * mag
    return OverlapResolvedPartition(
        n=table.n, log_z=overlap_resolved_logz(logw1, logw2)
    )


# ---------------------------------------------------------------------------
# Constrained free energy estimates
# ---------------------------------------------------------------------------


def window_logz_replica(
    spec: MixtureSpec, n: int, c: OverlapConstraint, sampler: str, seed
) -> float:
    """(1/n) log of the windowed partition sum for one disorder replica."""
    table = get_sampler(spec, n, sampler).sample(seed)
    part = partition_by_overlap(table, spec.h1, spec.h2)
    return part.log_window(c) / n


def _window_worker(args) -> float:
    spec, n, k, eps, sampler, root, rep = args
    c = OverlapConstraint(n=n, k=k, eps=eps)
    return window_logz_replica(spec, n, c, sampler, replica_seed(root, rep))


def estimate_F_window(
    spec: MixtureSpec,
    n: int,
    c: OverlapConstraint,
    n_rep: int,
    seed: int,
    sampler: str = "tensor",
    threads: int = 1,
) -> Estimate:
    """Disorder average of (1/n) log of the window-constrained partition sum."""
    vals = pmap(
        _window_worker,
        [(spec, n, c.k, c.eps, sampler, seed, rep) for rep in range(n_rep)],
        threads,
    )
    return _estimate(vals, seed, label=f"F_window(n={n},k={c.k},eps={c.eps:g})")


def estimate_F(
    spec: MixtureSpec,
    n: int,
    c: OverlapConstraint,
    n_rep: int,
    seed: int,
    sampler: str = "tensor",
    threads: int = 1,
) -> Estimate:
    """Disorder average of (1/n) log of the exactly-constrained partition sum."""
    if c.eps != 0.0:
        raise ValueError("estimate_F requires an exact constraint; use estimate_F_window")
    est = estimate_F_window(spec, n, c, n_rep, seed, sampler, threads)
    return Estimate(
        mean=est.mean, stderr=est.stderr, n_rep=est.n_rep, seed=est.seed,
        label=f"F(n={n},k={c.k})",
    )


# ---------------------------------------------------------------------------
# Per-site field sums over the constrained pair set (cavity inner sum)
# ---------------------------------------------------------------------------


def cavity_logz_by_count(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log of sum over pairs at each disagreement count of the factorized
    per-site weights exp(t1_i a_i + t2_i b_i).

    Site i contributes weight 2cosh(a_i + b_i) when the pair agrees there and
    2cosh(a_i - b_i) when it disagrees, so the count-resolved sums are the
    coefficients of a product of linear polynomials.  The ladder is computed
    with a running max renormalization, O(n^2) time, log-domain throughout.
    Supports leading batch axes; returns shape (..., n+1).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("field vectors must have matching shapes")
    n = a.shape[-1]
    log_agree = np.logaddexp(a + b, -(a + b))
    log_disagree = np.logaddexp(a - b, -(a - b))
    ratios = np.exp(log_disagree - log_agree)
    batch = a.shape[:-1]
    coeffs = np.zeros(batch + (n + 1,))
    coeffs[..., 0] = 1.0
    shift = log_agree.sum(axis=-1)
    for i in range(n):
        upd = coeffs.copy()
        upd[..., 1:] += ratios[..., i, None] * coeffs[..., :-1]
        top = upd.max(axis=-1)
        coeffs = upd / top[..., None]
        shift = shift + np.log(top)
    with np.errstate(divide="ignore"):
        return np.log(coeffs) + shift[..., None]


def inner_cavity_sum(a: np.ndarray, b: np.ndarray, c: OverlapConstraint) -> float:
    """log of the field-only pair sum restricted to the exact constraint of c."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (c.n,) or b.shape != (c.n,):
        raise ValueError(f"field vectors must have length {c.n}")
    return float(cavity_logz_by_count(a, b)[c.d])


# ---------------------------------------------------------------------------
# Structure functional: cavity term minus compensator term
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GEstimate:
    """Difference functional with both terms; the difference is computed
    per replica (common weights and fields), so its stderr reflects the
    coupled estimator."""

    diff: Estimate
    term1: Estimate
    term2: Estimate


def g_terms_replica(
    rost: RostSpec,
    field_sampler: RostFieldSampler,
    spec: MixtureSpec,
    n: int,
    c: OverlapConstraint,
    root: int,
    rep: int,
) -> tuple[float, float]:
    """One replica of both structure-functional terms.

    Weights use stream 0 and fields stream 1 of the replica's seed, so
    swapping the weight law never changes the field draws.
    """
    w = rost.weights.sample(rng_for(root, rep, stream=0), rost.m)
    fields = field_sampler.sample(rng_for(root, rep, stream=1), n)
    log_b = np.array(
        [
            inner_cavity_sum(
                fields.z[:, 0, al] + spec.h1, fields.z[:, 1, al] + spec.h2, c
            )
            for al in range(rost.m)
        ]
    )
    term1 = float(logsumexp(log_b, b=w)) / n
    term2 = float(logsumexp(np.sqrt(n) * (fields.y[0] + fields.y[1]), b=w)) / n
    return term1, term2


def _g_worker(args) -> tuple[float, float]:
    return g_terms_replica(*args)


def estimate_G(
    rost: RostSpec,
    spec: MixtureSpec,
    n: int,
    c: OverlapConstraint,
    n_rep: int,
    seed: int,
    threads: int = 1,
) -> GEstimate:
    """Monte Carlo over (weights, fields) of the structure functional."""
    if c.eps != 0.0:
        raise ValueError("the structure functional uses an exact constraint")
    field_sampler = RostFieldSampler(rost, mixture_functions(spec))
    out = pmap(
        _g_worker,
        [(rost, field_sampler, spec, n, c, seed, rep) for rep in range(n_rep)],
        threads,
    )
    t1 = np.array([v[0] for v in out])
    t2 = np.array([v[1] for v in out])
    return GEstimate(
        diff=_estimate(t1 - t2, seed, f"G(n={n},k={c.k})"),
        term1=_estimate(t1, seed, "G_term1"),
        term2=_estimate(t2, seed, "G_term2"),
    )


# ---------------------------------------------------------------------------
# Explicit structure built from a constrained base system
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _constrained_pairs(m: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """All base-mask pairs at disagreement d, deterministic order."""
    masks_d = np.array(
        [x for x in range(1 << m) if x.bit_count() == d], dtype=np.int64
    )
    r1 = np.repeat(np.arange(1 << m, dtype=np.int64), masks_d.size)
    r2 = (r1.reshape(-1, masks_d.size) ^ masks_d).reshape(-1)
    r1.flags.writeable = False
    r2.flags.writeable = False
    return r1, r2


@dataclass(eq=False)
class ExplicitWeights:
    """Base-system weights: exp of the truncated big Hamiltonian plus fields,
    normalized over the constrained pair set.  Fresh tensors per draw."""

    spec: MixtureSpec
    m: int
    n: int
    k: int

    def sample(self, rng: np.random.Generator, m_count: int) -> np.ndarray:
        log_w = explicit_log_weights(
            self.spec, self.m, self.n, self.k, rng
        )
        if log_w.size != m_count:
            raise ValueError("pair-set size mismatch")
        return np.exp(log_w - logsumexp(log_w))

    def to_dict(self) -> dict:
        return {"kind": "explicit", "m": self.m, "n": self.n, "k": self.k}


def explicit_log_weights(
    spec: MixtureSpec, m: int, n: int, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Unnormalized log weights over the constrained base-pair set.

    Drawn from base-coordinate tensors with the big-system normalization,
    which matches the law of the truncated big Hamiltonian.
    """
    s = spin_matrix(m)
    big = m + n
    trunc = np.zeros((2, 1 << m))
    for p in range(1, spec.p_max + 1):
        g = rng.standard_normal((m,) * p)
        contr = None
        scale = big ** (0.5 - 0.5 * p)
        for ell in (1, 2):
            ap = spec.coeffs(ell)[p - 1]
            if ap == 0.0:
                continue
            if contr is None:
                v = np.tensordot(s, g, axes=(1, 0))
                for _ in range(p - 1):
                    v = np.einsum("ci...,ci->c...", v, s)
                contr = v
            trunc[ell - 1] += ap * scale * contr
    r1, r2 = _constrained_pairs(m, (m - k) // 2)
    mag = magnetizations(m)
    return (
        trunc[0, r1] + trunc[1, r2] + spec.h1 * mag[r1] + spec.h2 * mag[r2]
    )


def build_explicit_rost(
    spec: MixtureSpec, m: int, u_m: OverlapConstraint, n: int, u: float
) -> RostSpec:
    """The structure whose elements are constrained base pairs.

    q-matrices are pairwise overlaps of the base configurations, weights come
    from the truncated big Hamiltonian, and delta = |u_m - u| exactly.  The
    q-matrices are Gram-type by construction, so the field covariances are
    PSD for any admissible mixture.
    """
    if u_m.n != m:
        raise ValueError("constraint size must equal the base size")
    r1, r2 = _constrained_pairs(m, u_m.d)
    if r1.size > EXPLICIT_PAIR_CAP:
        raise ResourceError(
            f"pair set has {r1.size} elements > cap {EXPLICIT_PAIR_CAP}; reduce the base size"
        )
    pop = popcounts(m)

    def q_of(left: np.ndarray, right: np.ndarray) -> np.ndarray:
        # (m - 2d)/m rather than 1 - 2d/m: bitwise-identical to k/m, so the
        # diagonal matches the constraint target exactly
        return (m - 2.0 * pop[left[:, None] ^ right[None, :]]) / m

    return RostSpec(
        q11=q_of(r1, r1),
        q12=q_of(r1, r2),
        q22=q_of(r2, r2),
        weights=ExplicitWeights(spec=spec, m=m, n=n, k=u_m.k),
        delta=abs(u_m.u - u),
        u=u,
    )


@dataclass(frozen=True)
class ExplicitTerms:
    """Per-replica pieces of the explicit-structure functional."""

    term1: float
    term2: float
    log_norm: float  # (1/n) log of the weight normalizer


@lru_cache(maxsize=8)
def _cached_explicit_sampler(spec: MixtureSpec, m: int, n: int) -> ExplicitSystemSampler:
    return ExplicitSystemSampler(spec, m, n)


def explicit_terms_replica(
    spec: MixtureSpec,
    m: int,
    n: int,
    u_m: OverlapConstraint,
    u_prime: OverlapConstraint,
    variant: str,
    seed,
) -> ExplicitTerms:
    """Both terms of the explicit-structure functional for one disorder draw.

    variant 'limit' uses the exact-covariance cavity fields, 'finite' the
    big-system-normalized ones from the same tensors.
    """
    if u_prime.n != n:
        raise ValueError("increment constraint size must equal n")
    draw = _cached_explicit_sampler(spec, m, n).sample(seed)
    r1, r2 = _constrained_pairs(m, u_m.d)
    mag = magnetizations(m)
    log_w = (
        draw.trunc[0, r1] + draw.trunc[1, r2]
        + spec.h1 * mag[r1] + spec.h2 * mag[r2]
    )
    z = draw.z if variant == "limit" else draw.z_finite
    y = draw.y if variant == "limit" else draw.y_finite
    a = z[:, 0, r1].T + spec.h1  # (m_pairs, n)
    b = z[:, 1, r2].T + spec.h2
    log_b = cavity_logz_by_count(a, b)[:, u_prime.d]
    log_norm = float(logsumexp(log_w))
    lw = log_w - log_norm
    term1 = float(logsumexp(lw + log_b)) / n
    term2 = float(logsumexp(lw + np.sqrt(n) * (y[0, r1] + y[1, r2]))) / n
    return ExplicitTerms(term1=term1, term2=term2, log_norm=log_norm / n)


def _gmn_worker(args) -> tuple[float, float]:
    spec, m, n, u_m, u_prime, variant, root, rep = args
    t = explicit_terms_replica(spec, m, n, u_m, u_prime, variant, replica_seed(root, rep))
    return t.term1, t.term2


def estimate_G_MN(
    spec: MixtureSpec,
    m: int,
    n: int,
    u_m: OverlapConstraint,
    u_prime: OverlapConstraint,
    n_rep: int,
    seed: int,
    variant: str = "limit",
    threads: int = 1,
) -> GEstimate:
    """Monte Carlo average of the explicit-structure functional."""
    if variant not in ("limit", "finite"):
        raise ValueError(f"variant must be 'limit' or 'finite', got {variant!r}")
    out = pmap(
        _gmn_worker,
        [(spec, m, n, u_m, u_prime, variant, seed, rep) for rep in range(n_rep)],
        threads,
    )
    t1 = np.array([v[0] for v in out])
    t2 = np.array([v[1] for v in out])
    return GEstimate(
        diff=_estimate(t1 - t2, seed, f"G_MN(m={m},n={n},{variant})"),
        term1=_estimate(t1, seed, "G_MN_term1"),
        term2=_estimate(t2, seed, "G_MN_term2"),
    )


def zero_disorder_log_pair_count(n: int, d: int) -> float:
    """Closed form (1/n) log(2**n C(n, d)) the estimators must hit exactly
    when every coefficient and field vanishes."""
    return (n * math.log(2.0) + math.log(math.comb(n, d))) / n
