"""Coefficient mixtures and the covariance functions they generate.

A mixture holds two coefficient sequences (a_p^1), (a_p^2) for p = 1..p_max
and two external field strengths.  It generates, for copy indices l, l' in
{1, 2}, the functions

    xi_{l,l'}(x)    = sum_p a_p^l a_p^l' x^p        on [-1, 1],
    theta_{l,l'}(x) = x * xi'_{l,l'}(x) - xi_{l,l'}(x),

which encode the disorder covariance of the two coupled Hamiltonians.  The
interpolation verdicts downstream are only theorems when every xi_{l,l'} is
convex on [-1, 1]; construction warns about non-convex mixtures but does not
reject them, and the convexity-dependent checks refuse to run instead.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import xlogy

CONVEXITY_TOL = 1e-10
CONVEXITY_GRID = 1001
POSITIVITY_TOL = 1e-10

COPY_PAIRS = ((1, 1), (1, 2), (2, 2))


class DomainError(ValueError):
    """Argument outside the domain of a mixture function."""


class NonConvexMixtureError(ValueError):
    """A convexity-dependent check was invoked on a non-convex mixture."""


class ConvexityWarning(UserWarning):
    """Emitted at construction when the numerical convexity scan fails."""


@dataclass(frozen=True)
class MixtureSpec:
    """Two coefficient sequences plus external fields.

    Sequences are padded to a common length; p_max is that length.  Entries
    must be finite.  Hashable, immutable, safe to share across workers.
    """

    a1: tuple[float, ...]
    a2: tuple[float, ...]
    h1: float = 0.0
    h2: float = 0.0

    def __post_init__(self):
        a1 = tuple(float(v) for v in self.a1)
        a2 = tuple(float(v) for v in self.a2)
        p = max(len(a1), len(a2), 1)
        a1 = a1 + (0.0,) * (p - len(a1))
        a2 = a2 + (0.0,) * (p - len(a2))
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "a2", a2)
        object.__setattr__(self, "h1", float(self.h1))
        object.__setattr__(self, "h2", float(self.h2))
        if not all(math.isfinite(v) for v in a1 + a2 + (self.h1, self.h2)):
            raise ValueError("mixture entries must all be finite")
        report = check_convexity(self)
        if not report.convex:
            warnings.warn(
                f"mixture is not convex: worst second difference "
                f"{report.worst_second_difference:.3e} for pair {report.worst_pair} "
                f"near x = {report.worst_x:.4f}; convexity-dependent checks will refuse to run",
                ConvexityWarning,
                stacklevel=2,
            )

    @property
    def p_max(self) -> int:
        return len(self.a1)

    def coeffs(self, ell: int) -> tuple[float, ...]:
        if ell == 1:
            return self.a1
        if ell == 2:
            return self.a2
        raise ValueError(f"copy index must be 1 or 2, got {ell}")

    def field(self, ell: int) -> float:
        return self.h1 if ell == 1 else self.h2

    def to_json(self) -> str:
        return json.dumps(
            {"a1": list(self.a1), "a2": list(self.a2), "h1": self.h1, "h2": self.h2}
        )

    @classmethod
    def from_json(cls, text: str | dict) -> "MixtureSpec":
        data = json.loads(text) if isinstance(text, str) else text
        return cls(
            a1=tuple(data["a1"]),
            a2=tuple(data["a2"]),
            h1=data.get("h1", 0.0),
            h2=data.get("h2", 0.0),
        )


def _check_x(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x) > 1 + 1e-12):
        raise DomainError("mixture functions are defined on [-1, 1]")
    return x


class MixtureFunctions:
    """Evaluators for xi, xi', and theta derived from a MixtureSpec.

    Coefficient products c_p = a_p^l * a_p^l' are precomputed per copy pair;
    evaluation is a plain power-series sum, exact to rounding.
    """

    def __init__(self, spec: MixtureSpec):
        self.spec = spec
        a = {1: np.array(spec.a1), 2: np.array(spec.a2)}
        self._c = {(l, lp): a[l] * a[lp] for l in (1, 2) for lp in (1, 2)}
        self._p = np.arange(1, spec.p_max + 1, dtype=np.float64)

    def xi(self, ell: int, ellp: int, x) -> np.ndarray | float:
        x = _check_x(x)
        c = self._c[(ell, ellp)]
        xp = np.power.outer(x, self._p)
        return xp @ c

    def xi_prime(self, ell: int, ellp: int, x) -> np.ndarray | float:
        x = _check_x(x)
        c = self._c[(ell, ellp)] * self._p
        xp = np.power.outer(x, self._p - 1.0)
        return xp @ c

    def theta(self, ell: int, ellp: int, x) -> np.ndarray | float:
        x = _check_x(x)
        return x * self.xi_prime(ell, ellp, x) - self.xi(ell, ellp, x)


@lru_cache(maxsize=64)
def mixture_functions(spec: MixtureSpec) -> MixtureFunctions:
    return MixtureFunctions(spec)


def eval_xi(spec: MixtureSpec, ell: int, ellp: int, x) -> float:
    """xi_{l,l'}(x) = sum_p a_p^l a_p^l' x^p for |x| <= 1."""
    return float(mixture_functions(spec).xi(ell, ellp, x))


def eval_xi_prime(spec: MixtureSpec, ell: int, ellp: int, x) -> float:
    """Term-by-term derivative of xi_{l,l'} at x."""
    return float(mixture_functions(spec).xi_prime(ell, ellp, x))


def eval_theta(spec: MixtureSpec, ell: int, ellp: int, x) -> float:
    """theta_{l,l'}(x) = x * xi'(x) - xi(x)."""
    return float(mixture_functions(spec).theta(ell, ellp, x))


def binary_entropy(x) -> np.ndarray | float:
    """I(x) = ((1+x)log(1+x) + (1-x)log(1-x)) / 2 on [0, 1].

    The x = 1 endpoint is the limit log 2, with the 0*log 0 = 0 convention.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise DomainError("binary_entropy is defined on [0, 1]")
    x = np.clip(x, 0.0, 1.0)
    val = 0.5 * (xlogy(1.0 + x, 1.0 + x) + xlogy(1.0 - x, 1.0 - x))
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class ConvexityReport:
    convex: bool
    worst_second_difference: float
    worst_pair: tuple[int, int]
    worst_x: float
    structural: bool


def check_convexity(
    spec: MixtureSpec, grid_size: int = CONVEXITY_GRID, tol: float = CONVEXITY_TOL
) -> ConvexityReport:
    """Scan discrete second differences of all three xi functions on a grid.

    Also reports whether the structural sufficient condition holds: all odd-p
    coefficients zero and, for each even p, a_p^1 * a_p^2 >= 0.
    """
    a1 = np.array(spec.a1)
    a2 = np.array(spec.a2)
    p = np.arange(1, spec.p_max + 1)
    odd = p % 2 == 1
    even = ~odd
    structural = bool(
        np.all(a1[odd] == 0.0)
        and np.all(a2[odd] == 0.0)
        and np.all(a1[even] * a2[even] >= 0.0)
    )

    x = np.linspace(-1.0, 1.0, grid_size)
    funcs = MixtureFunctions(spec)
    worst = np.inf
    worst_pair = COPY_PAIRS[0]
    worst_x = 0.0
    for pair in COPY_PAIRS:
        y = funcs.xi(*pair, x)
        d2 = y[:-2] - 2.0 * y[1:-1] + y[2:]
        i = int(np.argmin(d2))
        if d2[i] < worst:
            worst = float(d2[i])
            worst_pair = pair
            worst_x = float(x[i + 1])
    return ConvexityReport(
        convex=worst >= -tol,
        worst_second_difference=worst,
        worst_pair=worst_pair,
        worst_x=worst_x,
        structural=structural,
    )


@dataclass(frozen=True)
class PositivityReport:
    minima: dict
    argmin: dict
    passed: bool


def check_positivity(
    spec: MixtureSpec, grid_size: int = 201, tol: float = POSITIVITY_TOL
) -> PositivityReport:
    """Grid minimum of xi(x) - x*xi'(y) + theta(y) per copy pair.

    The quantity is nonnegative for convex mixtures; a non-convex spec is a
    precondition failure and raises NonConvexMixtureError naming the offending
    pair and grid point.
    """
    conv = check_convexity(spec)
    if not conv.convex:
        raise NonConvexMixtureError(
            f"positivity check requires convexity; pair {conv.worst_pair} has "
            f"second difference {conv.worst_second_difference:.3e} near x = {conv.worst_x:.4f}"
        )
    funcs = MixtureFunctions(spec)
    grid = np.linspace(-1.0, 1.0, grid_size)
    minima = {}
    argmin = {}
    for pair in COPY_PAIRS:
        xi_x = funcs.xi(*pair, grid)[:, None]
        xip_y = funcs.xi_prime(*pair, grid)[None, :]
        th_y = funcs.theta(*pair, grid)[None, :]
        vals = xi_x - grid[:, None] * xip_y + th_y
        flat = int(np.argmin(vals))
        i, j = divmod(flat, grid_size)
        minima[pair] = float(vals[i, j])
        argmin[pair] = (float(grid[i]), float(grid[j]))
    return PositivityReport(
        minima=minima, argmin=argmin, passed=all(v >= -tol for v in minima.values())
    )
