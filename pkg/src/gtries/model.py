"""Problem instance: branching factor, letter distribution, and the derived
growth exponent and critical-line root lattice."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce

import numpy as np

from .errors import Explosive, NotAProbabilityVector, RootCheckFailed

SUM_TOL = 1e-9
DENOM_BOUND = 64
RATIO_TOL = 1e-9
DEFAULT_ROOT_K = 10


@dataclass(frozen=True)
class PeriodicityInfo:
    periodic: bool
    a: float
    e: tuple[int, ...] | None = None

    @property
    def log_a(self) -> float:
        return math.log(self.a)


@dataclass(frozen=True)
class ModelParams:
    """Validated instance; build through :func:`validate_params`."""

    M: int
    p: tuple[float, ...]

    @property
    def A(self) -> int:
        return len(self.p)

    @property
    def p_array(self) -> np.ndarray:
        return np.asarray(self.p, dtype=float)

    @cached_property
    def q2(self) -> float:
        return math.fsum(x * x for x in self.p)

    @cached_property
    def rho(self) -> float:
        return solve_rho(self)

    @cached_property
    def periodicity(self) -> PeriodicityInfo:
        return detect_periodicity(self)

    @property
    def uniform(self) -> bool:
        return max(self.p) - min(self.p) <= 1e-12

    def power_sum(self, s) -> complex | float:
        """sum_j p_j**s for real or complex s."""
        logs = np.log(self.p_array)
        if isinstance(s, complex) or np.iscomplexobj(s):
            return complex(np.sum(np.exp(complex(s) * logs)))
        return math.fsum(math.exp(s * lp) for lp in logs)


def validate_params(p, M) -> ModelParams:
    if isinstance(M, bool) or int(M) != M or M < 1:
        raise NotAProbabilityVector(f"M must be a positive integer, got {M!r}")
    M = int(M)
    try:
        vals = [float(Fraction(x)) if isinstance(x, str) else float(x) for x in p]
    except (TypeError, ValueError) as exc:
        raise NotAProbabilityVector(f"cannot read probabilities {p!r}") from exc
    if len(vals) < 2:
        raise NotAProbabilityVector("need at least two letters")
    if any(not (0.0 < x < 1.0) or math.isnan(x) for x in vals):
        raise NotAProbabilityVector(f"each p_j must lie in (0, 1), got {vals}")
    total = math.fsum(vals)
    if abs(total - 1.0) > SUM_TOL:
        raise NotAProbabilityVector(f"probabilities sum to {total!r}, not 1")
    vals = [x / total for x in vals]
    q2 = math.fsum(x * x for x in vals)
    if q2 * M >= 1.0:
        raise Explosive(
            f"non-explosive condition sum_j p_j^2 < 1/M violated: "
            f"sum_j p_j^2 = {q2:.12g} >= 1/M = {1.0 / M:.12g}"
        )
    return ModelParams(M=M, p=tuple(vals))


def solve_rho(params: ModelParams, width: float = 1e-14) -> float:
    """Unique real s in [1, 2) with M * sum_j p_j**s = 1, by bisection."""
    M = params.M
    logs = [math.log(x) for x in params.p]

    def excess(s):
        return M * math.fsum(math.exp(s * lp) for lp in logs) - 1.0

    if excess(1.0) <= 0.0:
        return 1.0
    lo, hi = 1.0, 2.0
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def p_func(params: ModelParams, s):
    """P(s) = 1 - M sum_j p_j**s; accepts scalars or arrays, real or complex."""
    s_arr = np.asarray(s)
    logs = np.log(params.p_array)
    out = 1.0 - params.M * np.exp(np.multiply.outer(s_arr, logs)).sum(axis=-1)
    if s_arr.ndim == 0:
        return complex(out) if np.iscomplexobj(out) else float(out)
    return out


def _rationalize(r: float) -> Fraction | None:
    frac = Fraction(r).limit_denominator(DENOM_BOUND)
    if abs(float(frac) - r) <= RATIO_TOL:
        return frac
    return None


def detect_periodicity(params: ModelParams) -> PeriodicityInfo:
    logs = [math.log(x) for x in params.p]
    fracs = []
    for lp in logs:
        f = _rationalize(lp / logs[0])
        if f is None or f <= 0:
            return PeriodicityInfo(periodic=False, a=math.e)
        fracs.append(f)
    den = reduce(math.lcm, (f.denominator for f in fracs))
    ints = [int(f * den) for f in fracs]
    g = reduce(math.gcd, ints)
    e = tuple(i // g for i in ints)
    # a from every letter at once so the result does not depend on ordering
    log_a = -math.fsum(logs) / sum(e)
    a = math.exp(log_a)
    if any(abs(x - a ** (-ej)) > RATIO_TOL for x, ej in zip(params.p, e)):
        return PeriodicityInfo(periodic=False, a=math.e)
    return PeriodicityInfo(periodic=True, a=a, e=e)


@dataclass(frozen=True)
class RootSet:
    rho: float
    log_a: float
    k_range: int
    periodic: bool
    betas: tuple[complex, ...] = field(repr=False)
    ks: tuple[int, ...] = field(repr=False)


def roots_on_critical_line(params: ModelParams, K: int = DEFAULT_ROOT_K,
                           tol: float = 1e-9) -> RootSet:
    rho = params.rho
    info = params.periodicity
    if not info.periodic:
        return RootSet(rho=rho, log_a=1.0, k_range=0, periodic=False,
                       betas=(complex(rho),), ks=(0,))
    log_a = info.log_a
    ks = tuple(range(-K, K + 1))
    betas = tuple(complex(rho, 2.0 * math.pi * k / log_a) for k in ks)
    resid = np.abs(p_func(params, np.array(betas)))
    if np.any(resid > tol):
        raise RootCheckFailed(
            f"lattice base a={info.a!r} does not give roots: max |P(beta)| = {resid.max():.3g}"
        )
    return RootSet(rho=rho, log_a=log_a, k_range=K, periodic=True, betas=betas, ks=ks)
