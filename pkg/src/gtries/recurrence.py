"""Exact moments of the G-trie size from the binomial-mixture recurrence

    a_n = M sum_j sum_k C(n,k) p_j^k (1-p_j)^(n-k) a_k + b_n,   n >= 2,  a_0 = a_1 = 0.

The k = n self-term is moved to the left-hand side, so every entry is a finite
sum over the already known prefix. Binomial weights are evaluated in log space.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from scipy.special import gammaln

from ._accel import njit, pick
from .errors import AlphaTooSmall, TruncationNotCertified
from .model import ModelParams, p_func

DEFAULT_N = 16384
DEFAULT_N2 = 4096
# binomial terms with log-weight below this cannot reach the last bit of any sum
_LOG_NEGLIGIBLE = -800.0


def _lgamma_table(n: int) -> np.ndarray:
    return gammaln(np.arange(n + 1, dtype=float) + 1.0)


def _log_probs(params: ModelParams):
    p = params.p_array
    return np.log(p), np.log1p(-p)


# ---------------------------------------------------------------- kernels


@njit
def _binom_dot(n, logp, log1mp, lg, v):
    """sum_{k=0}^{n} C(n,k) p^k (1-p)^(n-k) v[k], walking out from the mode."""
    mode = int((n + 1) * math.exp(logp))
    if mode > n:
        mode = n
    s = 0.0
    for k in range(mode, -1, -1):
        lw = lg[n] - lg[k] - lg[n - k] + k * logp + (n - k) * log1mp
        if lw < _LOG_NEGLIGIBLE and k < mode:
            break
        s += math.exp(lw) * v[k]
    for k in range(mode + 1, n + 1):
        lw = lg[n] - lg[k] - lg[n - k] + k * logp + (n - k) * log1mp
        if lw < _LOG_NEGLIGIBLE:
            break
        s += math.exp(lw) * v[k]
    return s


@njit
def _mix_solve_numba(logp, log1mp, M, toll, lg, a):
    N = a.shape[0] - 1
    A = logp.shape[0]
    for n in range(2, N + 1):
        s = 0.0
        self_mass = 0.0
        for j in range(A):
            s += _binom_dot(n, logp[j], log1mp[j], lg, a) - math.exp(n * logp[j]) * a[n]
            self_mass += math.exp(n * logp[j])
        a[n] = (M * s + toll[n]) / (1.0 - M * self_mass)
    return a


def _binom_rows(n, logp, log1mp, lg, upto):
    """Weights C(n,k) p^k (1-p)^(n-k) for k < upto, one row per letter."""
    k = np.arange(upto)
    lw = (lg[n] - lg[k] - lg[n - k])[None, :] + k[None, :] * logp[:, None] \
        + (n - k)[None, :] * log1mp[:, None]
    return np.exp(lw)


def _mix_solve_numpy(logp, log1mp, M, toll, lg, a):
    N = a.shape[0] - 1
    for n in range(2, N + 1):
        w = _binom_rows(n, logp, log1mp, lg, n)
        s = float((w @ a[:n]).sum())
        a[n] = (M * s + toll[n]) / (1.0 - M * np.exp(n * logp).sum())
    return a


_mix_solve = pick(_mix_solve_numba, _mix_solve_numpy)


@njit
def _smooth_numba(logr, log1mr, lg, v, out):
    """out[m] = E v[Bin(m, r)] for every m; r == 1 (log1mr = -inf) copies v."""
    N = v.shape[0] - 1
    if log1mr == -np.inf:
        for m in range(N + 1):
            out[m] = v[m]
        return out
    for m in range(N + 1):
        out[m] = _binom_dot(m, logr, log1mr, lg, v)
    return out


def _smooth_numpy(logr, log1mr, lg, v, out):
    N = v.shape[0] - 1
    if log1mr == -np.inf:
        out[:] = v
        return out
    for m in range(N + 1):
        out[m] = _binom_rows(m, np.array([logr]), np.array([log1mr]), lg, m + 1)[0] @ v[: m + 1]
    return out


_smooth = pick(_smooth_numba, _smooth_numpy)


@njit
def _var_toll_numba(logp, log1mp, M, lg, mu, means, cond, b):
    """b[n] = M Var(sum_j mu[B_j]) with B ~ Multinomial(n, p), in centered form.

    means[j, n] = E mu[B_j];  cond[j, i, m] = E mu[Bin(m, p_i / (1 - p_j))].
    """
    N = b.shape[0] - 1
    A = logp.shape[0]
    for n in range(2, N + 1):
        v = 0.0
        for j in range(A):
            mj = means[j, n]
            mode = int((n + 1) * math.exp(logp[j]))
            if mode > n:
                mode = n
            for direction in range(2):
                if direction == 0:
                    k, stop, step = mode, -1, -1
                else:
                    k, stop, step = mode + 1, n + 1, 1
                while k != stop:
                    lw = lg[n] - lg[k] - lg[n - k] + k * logp[j] + (n - k) * log1mp[j]
                    if lw < _LOG_NEGLIGIBLE and k != mode:
                        break
                    w = math.exp(lw)
                    dk = mu[k] - mj
                    acc = dk
                    for i in range(A):
                        if i != j:
                            acc += cond[j, i, n - k] - means[i, n]
                    v += w * dk * acc
                    k += step
        b[n] = M * v
    return b


def _var_toll_numpy(logp, log1mp, M, lg, mu, means, cond, b):
    N = b.shape[0] - 1
    A = logp.shape[0]
    for n in range(2, N + 1):
        w = _binom_rows(n, logp, log1mp, lg, n + 1)
        k = np.arange(n + 1)
        v = 0.0
        for j in range(A):
            dk = mu[: n + 1] - means[j, n]
            acc = dk.copy()
            for i in range(A):
                if i != j:
                    acc += cond[j, i, n - k] - means[i, n]
            v += float(w[j] @ (dk * acc))
        b[n] = M * v
    return b


_var_toll = pick(_var_toll_numba, _var_toll_numpy)


# ---------------------------------------------------------------- tables


@dataclass
class MomentTable:
    params: ModelParams
    mean: np.ndarray
    var: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.mean.shape[0] - 1

    @property
    def N2(self) -> int:
        return -1 if self.var is None else self.var.shape[0] - 1


def mix_solve_table(params: ModelParams, toll) -> np.ndarray:
    """Solve the recurrence for a full toll array b[0..N] (b[0], b[1] ignored)."""
    toll = np.ascontiguousarray(toll, dtype=float)
    N = toll.shape[0] - 1
    logp, log1mp = _log_probs(params)
    out = np.zeros(N + 1)
    if N < 2:
        return out
    return _mix_solve(logp, log1mp, float(params.M), toll, _lgamma_table(N), out)


def binomial_mix_solve(params: ModelParams, a_prefix, b_n: float, n: int) -> float:
    """One step of the recurrence: a_n from a_0..a_{n-1} and the toll b_n."""
    if n < 2:
        raise ValueError("the recurrence starts at n = 2")
    a = np.asarray(a_prefix, dtype=float)[:n]
    if a.shape[0] < n:
        raise ValueError(f"need a_0..a_{n - 1}, got {a.shape[0]} values")
    logp, log1mp = _log_probs(params)
    w = _binom_rows(n, logp, log1mp, _lgamma_table(n), n)
    s = float((w @ a).sum())
    return (params.M * s + b_n) / (1.0 - params.M * math.fsum(x**n for x in params.p))


def exact_mean_table(params: ModelParams, N: int = DEFAULT_N) -> MomentTable:
    if N < 2:
        raise ValueError("N must be at least 2")
    t0 = time.perf_counter()
    toll = np.ones(N + 1)
    toll[:2] = 0.0
    mean = mix_solve_table(params, toll)
    return MomentTable(params, mean, meta={"mean_seconds": time.perf_counter() - t0})


def _conditional_tables(params: ModelParams, mu: np.ndarray):
    N = mu.shape[0] - 1
    A = params.A
    lg = _lgamma_table(N)
    logp, log1mp = _log_probs(params)
    means = np.zeros((A, N + 1))
    cond = np.zeros((A, A, N + 1))
    for j in range(A):
        _smooth(logp[j], log1mp[j], lg, mu, means[j])
        for i in range(A):
            if i == j:
                continue
            if A == 2:
                logr, log1mr = 0.0, -np.inf
            else:
                r = params.p[i] / (1.0 - params.p[j])
                logr, log1mr = math.log(r), math.log1p(-r)
            _smooth(logr, log1mr, lg, mu, cond[j, i])
    return lg, logp, log1mp, means, cond


def variance_toll(params: ModelParams, mu: np.ndarray) -> np.ndarray:
    """E(Delta_n^2) for n = 0..len(mu)-1, where Delta_n = 1 - mu_n + sum_{i,j} mu[B_j^(i)].

    Uses E Delta_n = 0 (the mean recurrence) and conditions each pair of
    letters on one count, which makes every n cost O(n A^2).
    """
    mu = np.ascontiguousarray(mu, dtype=float)
    lg, logp, log1mp, means, cond = _conditional_tables(params, mu)
    b = np.zeros(mu.shape[0])
    return _var_toll(logp, log1mp, float(params.M), lg, mu, means, cond, b)


def exact_delta_second(params: ModelParams, mean, n: int) -> float:
    """E(Delta_n^2) by direct expansion over binomial and trinomial laws, O(n^2 A^2).

    Independent of :func:`variance_toll`; kept as its cross-check.
    """
    mu = np.asarray(mean, dtype=float)
    if mu.shape[0] <= n:
        raise ValueError(f"mean table must cover 0..{n}")
    if n < 2:
        return 0.0
    M = params.M
    p = params.p_array
    lg = _lgamma_table(n)
    logp, log1mp = np.log(p), np.log1p(-p)
    m = mu[: n + 1]
    w = _binom_rows(n, logp, log1mp, lg, n + 1)
    first = w @ m
    second = w @ (m * m)
    k = np.arange(n + 1)
    K, L = np.meshgrid(k, k, indexing="ij")
    inside = K + L <= n
    R = np.where(inside, n - K - L, 0)
    ey2 = float(second.sum())
    for j, i in combinations_with_replacement(range(params.A), 2):
        if i == j:
            continue
        rest = 1.0 - p[j] - p[i]
        if params.A == 2 or rest <= 0.0:
            mask = inside & (R == 0)
            log_rest = 0.0
        else:
            mask = inside
            log_rest = math.log(rest)
        lw = lg[n] - lg[K] - lg[L] - lg[R] + K * logp[j] + L * logp[i] + R * log_rest
        tri = np.where(mask, np.exp(np.where(mask, lw, -np.inf)), 0.0)
        ey2 += 2.0 * float(np.sum(tri * np.outer(m, m)))
    ey = float(first.sum())
    c0 = 1.0 - mu[n]
    return c0 * c0 + 2.0 * c0 * M * ey + M * ey2 + M * (M - 1) * ey * ey


def exact_variance_table(params: ModelParams, N2: int = DEFAULT_N2,
                         mean_table: MomentTable | None = None) -> MomentTable:
    t0 = time.perf_counter()
    if mean_table is None or mean_table.N < N2:
        mean_table = exact_mean_table(params, max(N2, 2))
    mu = mean_table.mean[: N2 + 1]
    toll = variance_toll(params, mu)
    var = mix_solve_table(params, toll)
    meta = dict(mean_table.meta)
    meta["var_seconds"] = time.perf_counter() - t0
    return MomentTable(params, mean_table.mean, var, meta)


def moment_table(params: ModelParams, N: int = DEFAULT_N, N2: int = DEFAULT_N2) -> MomentTable:
    N2 = min(N2, N)
    mt = exact_mean_table(params, N)
    return exact_variance_table(params, N2, mt)


# ---------------------------------------------------------------- tolls


@dataclass(frozen=True)
class TollSpec:
    kind: str
    alpha: float = 0.0
    c: float = 1.0
    table: tuple | None = None

    KINDS = ("constant-one", "delta-squared", "power", "custom-table")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown toll kind {self.kind!r}")

    @classmethod
    def constant_one(cls):
        return cls("constant-one")

    @classmethod
    def power(cls, alpha, c=1.0):
        return cls("power", alpha=float(alpha), c=float(c))

    @classmethod
    def custom(cls, values):
        return cls("custom-table", table=tuple(float(x) for x in values))

    @classmethod
    def delta_squared(cls, params: ModelParams, N: int):
        mu = exact_mean_table(params, max(N, 2)).mean
        return cls("delta-squared", table=tuple(variance_toll(params, mu)))

    def values(self, N: int) -> np.ndarray:
        n = np.arange(N + 1, dtype=float)
        if self.kind == "constant-one":
            b = np.ones(N + 1)
        elif self.kind == "power":
            b = self.c * n**self.alpha
        else:
            if len(self.table) < N + 1:
                raise ValueError(f"toll table covers 0..{len(self.table) - 1}, need {N}")
            b = np.array(self.table[: N + 1], dtype=float)
        b[: min(2, N + 1)] = 0.0
        return b


def solve_with_toll(params: ModelParams, toll: TollSpec, N: int) -> np.ndarray:
    return mix_solve_table(params, toll.values(N))


# ---------------------------------------------------------------- series solution


@njit
def _series_numba(n, b, logp, logM, lg, q, eps, max_level, bmax):
    """Returns (value, last level summed, certified)."""
    A = logp.shape[0]
    total = 0.0
    pairs = 0.5 * n * (n - 1)
    k = np.zeros(A, dtype=np.int64)
    for level in range(max_level + 1):
        level_sum = 0.0
        if level == 0:
            level_sum = b[n]
        else:
            for t in range(A - 1):
                k[t] = 0
            rem = level
            while True:
                k[A - 1] = rem
                logx = 0.0
                logw = level * logM + lg[level]
                for t in range(A):
                    logx += k[t] * logp[t]
                    logw -= lg[k[t]]
                log1mx = math.log1p(-math.exp(logx))
                g = 0.0
                for i in range(2, n + 1):
                    g += b[i] * math.exp(lg[n] - lg[i] - lg[n - i] + i * logx
                                         + (n - i) * log1mx + logw)
                level_sum += g
                pos = A - 2
                while pos >= 0:
                    if rem > 0:
                        k[pos] += 1
                        rem -= 1
                        break
                    rem += k[pos]
                    k[pos] = 0
                    pos -= 1
                if pos < 0:
                    break
        total += level_sum
        tail = bmax * pairs * q ** (level + 1) / (1.0 - q)
        if tail <= eps * abs(total):
            return total, level, True
    return total, max_level, False


def _compositions(level, A):
    # stars and bars: choose A-1 bar positions among level + A - 1 slots
    out = []
    for bars in _bar_positions(level + A - 1, A - 1):
        prev = -1
        parts = []
        for bar in bars:
            parts.append(bar - prev - 1)
            prev = bar
        parts.append(level + A - 1 - prev - 1)
        out.append(parts)
    return np.array(out, dtype=np.int64).reshape(-1, A)


def _bar_positions(slots, bars):
    from itertools import combinations
    return combinations(range(slots), bars)


def _series_numpy(n, b, logp, logM, lg, q, eps, max_level, bmax):
    A = logp.shape[0]
    total = 0.0
    pairs = 0.5 * n * (n - 1)
    i = np.arange(2, n + 1)
    logc = lg[n] - lg[i] - lg[n - i]
    for level in range(max_level + 1):
        if level == 0:
            level_sum = b[n]
        else:
            k = _compositions(level, A)
            logx = k @ logp
            logw = level * logM + lg[level] - lg[k].sum(axis=1)
            log1mx = np.log1p(-np.exp(logx))
            e = logc[None, :] + i[None, :] * logx[:, None] + (n - i)[None, :] * log1mx[:, None] \
                + logw[:, None]
            level_sum = float((np.exp(e) @ b[2: n + 1]).sum())
        total += level_sum
        tail = bmax * pairs * q ** (level + 1) / (1.0 - q)
        if tail <= eps * abs(total):
            return total, level, True
    return total, max_level, False


_series = pick(_series_numba, _series_numpy)


def series_solution(params: ModelParams, toll: TollSpec, n: int, epsilon: float = 1e-10,
                    max_level: int = 4000) -> float:
    """a_n as the level-by-level sum over letter compositions k with weight
    M^l multinomial(l; k), truncated once the rigorous tail bound

        max|b| C(n,2) (M sum p_j^2)^(l+1) / (1 - M sum p_j^2)

    falls below ``epsilon`` times the running total.
    """
    if n < 2:
        return 0.0
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    b = np.ascontiguousarray(toll.values(n))
    bmax = float(np.abs(b).max())
    if bmax == 0.0:
        return 0.0
    lg = _lgamma_table(max(max_level, n))
    q = params.M * params.q2
    value, level, ok = _series(n, b, np.log(params.p_array), math.log(params.M), lg,
                               q, epsilon, max_level, bmax)
    if not ok:
        raise TruncationNotCertified(
            f"tail bound still above {epsilon:g} of the total after {level} levels"
        )
    return value


# ---------------------------------------------------------------- large tolls


@dataclass
class TransferReport:
    alpha: float
    P_alpha: float
    ratio_at: list = field(default_factory=list)

    @property
    def gaps(self):
        return [abs(r - 1.0) for _, r in self.ratio_at]


def transfer_check(params: ModelParams, alpha: float, N: int = DEFAULT_N, ns=None,
                   c: float = 1.0) -> TransferReport:
    """Tabulate a_n for the toll c n^alpha and report a_n P(alpha) / (c n^alpha)."""
    if alpha <= params.rho:
        raise AlphaTooSmall(f"alpha = {alpha} must exceed rho = {params.rho}")
    a = solve_with_toll(params, TollSpec.power(alpha, c), N)
    P_alpha = p_func(params, alpha)
    if ns is None:
        ns = [2**e for e in range(8, int(math.log2(N)) + 1, 2)]
    ratios = [(int(n), float(a[n] * P_alpha / (c * n**alpha))) for n in ns if n <= N]
    return TransferReport(alpha=alpha, P_alpha=P_alpha, ratio_at=ratios)
