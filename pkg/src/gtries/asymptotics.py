"""Closed-form asymptotic predictions: the mean amplitude G_E, the periodic
fluctuation functions P_E and Q in Fourier and Poisson-summation form, the
non-uniform variance constant and Gaussian moments."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import PoleAt, UniformCase
from .model import DEFAULT_ROOT_K, ModelParams, RootSet, p_func, roots_on_critical_line

# Lanczos approximation, g = 7, nine terms
_LANCZOS_G = 7.0
_LANCZOS = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
_SQRT_2PI = math.sqrt(2.0 * math.pi)

GRID_POINTS = 1024
POISSON_REL = 1e-16


def _gamma_right(z):
    z = z - 1.0
    x = np.full_like(z, _LANCZOS[0])
    for i in range(1, len(_LANCZOS)):
        x = x + _LANCZOS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _SQRT_2PI * np.exp((z + 0.5) * np.log(t) - t) * x


def cgamma(z):
    """Complex Gamma function (Lanczos with reflection for Re z < 1/2)."""
    z_arr = np.asarray(z, dtype=complex)
    flat = np.atleast_1d(z_arr).ravel()
    out = np.empty_like(flat)
    left = flat.real < 0.5
    out[~left] = _gamma_right(flat[~left])
    zl = flat[left]
    out[left] = np.pi / (np.sin(np.pi * zl) * _gamma_right(1.0 - zl))
    out = out.reshape(np.shape(z_arr))
    return complex(out) if z_arr.ndim == 0 else out


def _denominator(params: ModelParams, s):
    """M sum_j p_j^s log p_j."""
    logs = np.log(params.p_array)
    s = np.asarray(s, dtype=complex)
    return params.M * (np.exp(np.multiply.outer(s, logs)) * logs).sum(axis=-1)


def g_e(params: ModelParams, s):
    """G_E(s) in the pole-free form -Gamma(2-s) / (s M sum_j p_j^s log p_j)."""
    s_arr = np.asarray(s, dtype=complex)
    if np.any(s_arr == 0):
        raise PoleAt("G_E has a pole at s = 0")
    val = -cgamma(2.0 - s_arr) / s_arr / _denominator(params, s_arr)
    return complex(val) if s_arr.ndim == 0 else val


def _critical_scale(params: ModelParams) -> float:
    """M (-sum_j p_j^rho log p_j), positive."""
    return -float(_denominator(params, params.rho).real)


def predicted_mean(params: ModelParams, rootset: RootSet, n) -> float:
    n_arr = np.asarray(n, dtype=float)
    betas = np.array(rootset.betas)
    terms = g_e(params, betas) * np.exp(np.multiply.outer(np.log(n_arr), betas))
    total = np.atleast_1d(terms.sum(axis=-1))
    resid = np.abs(total.imag) / np.abs(total.real)
    if np.any(resid > 1e-9):
        raise ArithmeticError(f"imaginary residue {resid.max():.3g} in the mean prediction")
    return float(total.real[0]) if n_arr.ndim == 0 else total.real


def _fourier(coef, ks, x):
    x_arr = np.asarray(x, dtype=float)
    phase = np.exp(2j * np.pi * np.multiply.outer(x_arr, np.asarray(ks, dtype=float)))
    val = (phase * coef).sum(axis=-1).real
    return float(val) if x_arr.ndim == 0 else val


def p_e_fourier(params: ModelParams, rootset: RootSet, x):
    """P_E(x) = sum_k G_E(rho + chi_k) e^{2 pi i k x}; mean ~ P_E(log_a n) n^rho."""
    return _fourier(g_e(params, np.array(rootset.betas)), rootset.ks, x)


def q_fourier(params: ModelParams, rootset: RootSet, x):
    """Q(x) = sum_k Gamma(2 - rho - chi_k) e^{2 pi i k x} / (M (-sum p^rho log p))."""
    coef = cgamma(2.0 - np.array(rootset.betas)) / _critical_scale(params)
    return _fourier(coef, rootset.ks, x)


q_func = q_fourier


def f_kernel(t):
    """f(t) = 1 - (t+1) e^{-t}, with a series near 0 to avoid cancellation."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = t < 0.1
    ts = t[small]
    # sum_{m>=2} (-1)^m (m-1) t^m / m!
    acc = np.zeros_like(ts)
    term = np.ones_like(ts)
    for m in range(1, 16):
        term = term * ts / m
        if m >= 2:
            acc += (-1) ** m * (m - 1) * term
    out[small] = acc
    tl = t[~small]
    out[~small] = 1.0 - (tl + 1.0) * np.exp(-tl)
    return out if out.ndim else float(out)


def _poisson_sum(summand, x: float, max_terms: int = 10000) -> float:
    """sum over integer v of summand(x - v), walking outward until terms drop
    below POISSON_REL of the running total on both sides."""
    total = summand(x)
    for sign in (1, -1):
        v = 0
        small_run = 0
        while v < max_terms:
            v += 1
            term = summand(x - sign * v)
            total += term
            # the kernel is unimodal, so two tiny terms in a row end the tail
            small_run = small_run + 1 if abs(term) <= POISSON_REL * abs(total) else 0
            if small_run >= 2:
                break
    return total


def _pe_summand(rho: float, L: float):
    def h(y):
        u = y * L
        if u < -30:
            # f(t) = t^2/2 - t^3/3 + O(t^4), kept in a form that cannot overflow
            return 0.5 * math.exp((2.0 - rho) * u) * (1.0 - 2.0 * math.exp(u) / 3.0)
        if u > 50:
            return math.exp(-rho * u)
        return float(f_kernel(math.exp(u))) * math.exp(-rho * u)
    return h


def _q_summand(rho: float, L: float):
    def h(y):
        u = y * L
        if u > 700:
            return 0.0
        return math.exp(-math.exp(u) + (2.0 - rho) * u)
    return h


def _poisson_form(params: ModelParams, x, make_summand, integrand):
    rho = params.rho
    scale = _critical_scale(params)
    info = params.periodicity
    x_arr = np.asarray(x, dtype=float)
    if not info.periodic:
        # the lattice degenerates: the sum over v becomes an integral
        val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=0, epsrel=1e-13, limit=400)
        out = np.full(x_arr.shape, val / scale)
        return float(out) if x_arr.ndim == 0 else out
    L = info.log_a
    h = make_summand(rho, L)
    vals = np.array([L * _poisson_sum(h, float(xi)) / scale for xi in np.atleast_1d(x_arr).ravel()])
    return float(vals[0]) if x_arr.ndim == 0 else vals.reshape(x_arr.shape)


def p_e_poisson(params: ModelParams, x):
    rho = params.rho
    return _poisson_form(params, x, _pe_summand,
                         lambda u: _pe_summand(rho, 1.0)(u))


def q_poisson(params: ModelParams, x):
    rho = params.rho
    return _poisson_form(params, x, _q_summand,
                         lambda u: _q_summand(rho, 1.0)(u))


def nonuniform_variance_constant(params: ModelParams, check_tol: float = 1e-10) -> float:
    """c = (M-1)/(M P(2 rho - 1)) - 1, cross-checked against the
    pairwise-difference form c = M W / P(2 rho - 1) with
    W = sum_{j<k} p_j p_k (p_j^{rho-1} - p_k^{rho-1})^2."""
    if params.uniform:
        raise UniformCase("the variance constant is defined for non-uniform p only")
    rho = params.rho
    if rho <= 1.0:
        raise UniformCase("rho = 1: the variance exponents of both cases coincide")
    M = params.M
    P = p_func(params, 2.0 * rho - 1.0)
    c = (M - 1) / (M * P) - 1.0
    p = params.p_array
    pw = p ** (rho - 1.0)
    W = math.fsum(p[j] * p[k] * (pw[j] - pw[k]) ** 2
                  for j in range(len(p)) for k in range(j + 1, len(p)))
    c2 = M * W / P
    if abs(c - c2) > check_tol * max(1.0, abs(c)):
        raise ArithmeticError(f"variance constant routes disagree: {c!r} vs {c2!r}")
    return c


@dataclass(frozen=True)
class UniformVarianceFit:
    """Empirical periodic amplitude: Var(S_n)/n^rho ~ c0 + sum_h (a_h cos + b_h sin)(2 pi h log_a n)."""

    exponent: float
    log_a: float
    coef: tuple[float, ...]
    n_range: tuple[int, int]
    rms_residual: float

    def amplitude(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.coef[0])
        for h in range(1, (len(self.coef) - 1) // 2 + 1):
            out = out + self.coef[2 * h - 1] * np.cos(2 * np.pi * h * x) \
                + self.coef[2 * h] * np.sin(2 * np.pi * h * x)
        return out

    def __call__(self, n):
        n = np.asarray(n, dtype=float)
        val = self.amplitude(np.log(n) / self.log_a) * n**self.exponent
        return float(val) if val.ndim == 0 else val


def fit_variance_amplitude(params: ModelParams, var_table, harmonics: int = 2,
                           n_lo: int | None = None) -> UniformVarianceFit:
    """Least-squares fit of Var(S_n)/n^rho against log_a n over the top of the table."""
    var = np.asarray(var_table, dtype=float)
    N2 = var.shape[0] - 1
    n_lo = max(16, N2 // 16) if n_lo is None else n_lo
    if n_lo >= N2:
        raise ValueError("variance table too short for an amplitude fit")
    log_a = params.periodicity.log_a if params.periodicity.periodic else 1.0
    n = np.arange(n_lo, N2 + 1, dtype=float)
    y = var[n_lo:] / n**params.rho
    x = np.log(n) / log_a
    cols = [np.ones_like(x)]
    if params.periodicity.periodic:
        for h in range(1, harmonics + 1):
            cols += [np.cos(2 * np.pi * h * x), np.sin(2 * np.pi * h * x)]
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    rms = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    return UniformVarianceFit(params.rho, log_a, tuple(float(c) for c in coef), (n_lo, N2), rms)


@lru_cache(maxsize=16)
def _default_fit(params: ModelParams) -> UniformVarianceFit:
    from .recurrence import DEFAULT_N2, exact_variance_table
    return fit_variance_amplitude(params, exact_variance_table(params, DEFAULT_N2).var)


def variance_exponent(params: ModelParams) -> float:
    if params.uniform or params.rho <= 1.0:
        return params.rho
    return 2.0 * params.rho - 1.0


def predicted_variance(params: ModelParams, rootset: RootSet, n, fit: UniformVarianceFit | None = None):
    """Non-uniform: c Q(log_a n)^2 n^{2 rho - 1}. Uniform (or rho = 1): the
    empirical amplitude fit times n^rho."""
    if params.uniform or params.rho <= 1.0:
        fit = fit or _default_fit(params)
        return fit(n)
    n_arr = np.asarray(n, dtype=float)
    c = nonuniform_variance_constant(params)
    x = np.log(n_arr) / rootset.log_a
    val = c * np.asarray(q_fourier(params, rootset, x)) ** 2 * n_arr ** (2 * params.rho - 1)
    return float(val) if n_arr.ndim == 0 else val


def gaussian_moment(m: int) -> int:
    """m-th moment of N(0, 1): (m-1)!! for even m, 0 for odd m."""
    if m < 0 or int(m) != m:
        raise ValueError("m must be a nonnegative integer")
    m = int(m)
    if m % 2:
        return 0
    return math.factorial(m) // (2 ** (m // 2) * math.factorial(m // 2))


@dataclass
class AsymptoticReport:
    rho: float
    periodic: bool
    a: float
    roots: list = field(default_factory=list)
    c: float | None = None
    leading_mean_amplitude: float = 0.0
    fluctuation_min: float = 0.0
    fluctuation_max: float = 0.0
    variance_exponent: float = 0.0

    @property
    def fluctuation_band(self):
        return self.fluctuation_min, self.fluctuation_max

    def to_dict(self) -> dict:
        return asdict(self)


def analyze(params: ModelParams, K: int = DEFAULT_ROOT_K) -> AsymptoticReport:
    rs = roots_on_critical_line(params, K)
    grid = np.arange(GRID_POINTS) / GRID_POINTS
    band = np.asarray(p_e_fourier(params, rs, grid))
    try:
        c = nonuniform_variance_constant(params)
    except UniformCase:
        c = None
    info = params.periodicity
    return AsymptoticReport(
        rho=params.rho,
        periodic=info.periodic,
        a=info.a,
        roots=[[b.real, b.imag] for b in rs.betas],
        c=c,
        leading_mean_amplitude=float(g_e(params, params.rho).real),
        fluctuation_min=float(band.min()),
        fluctuation_max=float(band.max()),
        variance_exponent=variance_exponent(params),
    )
