"""Monte Carlo simulation of S_n and the external-node counters through the
distributional recurrence, and the statistical harness for the CLT.

Large subproblems are split by multinomial draws. Subtrees of at most ``k0``
keys are drawn in one step from their exact law, which is computed once per
instance by inverting the probability generating functions on the unit circle.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence
from scipy import stats

from ._accel import njit
from .errors import BatchFailed, CapExceeded
from .gtrie import DEFAULT_NODE_CAP, StatCounters
from .model import ModelParams, roots_on_critical_line

DEFAULT_DEPTH_CAP = 1024
DEFAULT_K0 = 64
MAX_K0 = 96
MAX_TABLE_POINTS = 1 << 18
CAPPED_FRACTION = 1e-3
# mass allowed in the top quarter of the FFT window; round-off alone is ~1e-17 per bin
TAIL_TOL = 1e-12

DEFAULT_THRESHOLDS = {"skew": 0.1, "exkurt": 0.3, "ks": 0.02}

_DEPTH_HIT = -1
_NODE_HIT = -2


def trial_stream(master_seed: int, trial: int) -> Generator:
    """Private generator of one trial, a pure function of (master_seed, trial)."""
    return Generator(PCG64(SeedSequence(master_seed, spawn_key=(trial,))))


@njit
def _multinomial_into(rng, n, p, out):
    rem = n
    mass = 1.0
    A = p.shape[0]
    for j in range(A - 1):
        if rem == 0:
            out[j] = 0
            continue
        q = p[j] / mass
        if q > 1.0:
            q = 1.0
        b = rng.binomial(rem, q)
        out[j] = b
        rem -= b
        mass -= p[j]
    out[A - 1] = rem


def sample_multinomial(stream: Generator, n: int, p) -> np.ndarray:
    """Multinomial(n, p) by sequential conditional binomials."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    p = np.ascontiguousarray(p, dtype=float)
    out = np.zeros(p.shape[0], dtype=np.int64)
    _multinomial_into(stream, int(n), p, out)
    return out


# ---------------------------------------------------------------- exact small laws


@dataclass(frozen=True)
class LawTables:
    """CDFs of S_k for k = 0..k0; row k is valid on columns < lengths[k]."""

    k0: int
    cdf: np.ndarray = field(repr=False)
    lengths: np.ndarray = field(repr=False)
    mean: np.ndarray = field(repr=False)
    var: np.ndarray = field(repr=False)

    def pmf(self, k: int) -> np.ndarray:
        return np.diff(self.cdf[k, : self.lengths[k]], prepend=0.0)


def _pgf_values(params: ModelParams, k0: int, D: int) -> np.ndarray:
    """F_k(z_t) for k = 0..k0 on z_t = exp(-2 pi i t / D).

    With c_j(m) = p_j^m / m!, the one-direction PGF is
    G_k = k! [u^k] prod_j sum_m c_j(m) F_m u^m, and F_k = z G_k^M. The terms of
    G_k holding F_k itself add up to s_k F_k with s_k = sum_j p_j^k; the rest,
    H_k, only involves smaller laws, so F_k solves F = z (H_k + s_k F)^M.
    """
    M = params.M
    logp = np.log(params.p_array)
    A = logp.shape[0]
    m = np.arange(k0 + 1)
    lfact = np.array([math.lgamma(x + 1) for x in m])
    cw = np.exp(np.outer(logp, m) - lfact)
    z = np.exp(-2j * np.pi * np.arange(D) / D)
    F = np.zeros((k0 + 1, D), dtype=complex)
    F[: min(k0, 1) + 1] = 1.0
    # Q[i - 1, m] = [u^m] prod_{j <= i} (...), kept for the inner factors only
    Q = np.zeros((max(A - 2, 0), k0 + 1, D), dtype=complex)

    def prefix(i, upto):
        if i == 0:
            return cw[0, :upto, None] * F[:upto]
        return Q[i - 1, :upto]

    def coefficient(i, k):
        # degree-k coefficient of the product over letters 0..i, F_k taken as 0
        lower = prefix(i - 1, k + 1)
        return (lower * (cw[i, k::-1, None] * F[k::-1])).sum(axis=0)

    for k in range(k0 + 1):
        for i in range(1, A - 1):
            Q[i - 1, k] = coefficient(i, k)
        if k < 2:
            continue
        H = coefficient(A - 1, k) * math.exp(lfact[k])
        s = float(cw[:, k].sum() * math.exp(lfact[k]))
        if M == 1:
            Fk = z * H / (1.0 - z * s)
        else:
            Fk = z * H**M
            for _ in range(200):
                nxt = z * (H + s * Fk) ** M
                done = np.max(np.abs(nxt - Fk)) <= 1e-17
                Fk = nxt
                if done:
                    break
        F[k] = Fk
        for i in range(1, A - 1):
            Q[i - 1, k] += cw[: i + 1, k].sum() * Fk
    return F


def _tables_from_pgf(F: np.ndarray):
    k0 = F.shape[0] - 1
    D = F.shape[1]
    pmf = np.fft.ifft(F, axis=1).real
    np.clip(pmf, 0.0, None, out=pmf)
    pmf /= pmf.sum(axis=1, keepdims=True)
    tail = pmf[:, 3 * D // 4:].sum(axis=1).max()
    support = np.arange(D, dtype=float)
    mean = pmf @ support
    var = pmf @ support**2 - mean**2
    cdf = np.cumsum(pmf, axis=1)
    lengths = np.empty(k0 + 1, dtype=np.int64)
    for k in range(k0 + 1):
        # drop the flat top so inverse-CDF searches stay short
        idx = int(np.searchsorted(cdf[k], 1.0 - 1e-17))
        lengths[k] = min(D, idx + 1)
        cdf[k, lengths[k] - 1:] = 1.0
    width = int(lengths.max())
    return np.ascontiguousarray(cdf[:, :width]), lengths, mean, var, tail


@lru_cache(maxsize=8)
def law_tables(params: ModelParams, k0: int = DEFAULT_K0) -> LawTables:
    """Exact laws of S_0..S_k0, checked against the recurrence moments."""
    from .recurrence import exact_variance_table

    if not 1 <= k0 <= MAX_K0:
        raise ValueError(f"k0 must lie in [1, {MAX_K0}]")
    ref = exact_variance_table(params, max(k0, 2))
    mu = ref.mean[: k0 + 1]
    D = 1 << max(6, int(math.ceil(math.log2(mu[-1] + 20 * math.sqrt(ref.var[k0]) + 16))))
    while True:
        F = _pgf_values(params, k0, D)
        cdf, lengths, mean, var, tail = _tables_from_pgf(F)
        ok = tail < TAIL_TOL and np.allclose(mean, mu, rtol=1e-9, atol=1e-12) \
            and np.allclose(var, ref.var[: k0 + 1], rtol=1e-7, atol=1e-9)
        if ok:
            return LawTables(k0, cdf, lengths, mean, var)
        D *= 2
        if D > MAX_TABLE_POINTS:
            raise CapExceeded("table", MAX_TABLE_POINTS)


# ---------------------------------------------------------------- kernels


@njit
def _draw(rng, cdf, lengths, k):
    u = rng.random()
    return np.searchsorted(cdf[k, : lengths[k]], u, side="right")


@njit
def _simulate_size_kernel(rng, n, p, M, k0, cdf, lengths, depth_cap, node_cap):
    """S_n, or a negative code when a cap is hit."""
    if n < 2:
        return 0
    if n <= k0:
        return _draw(rng, cdf, lengths, n)
    A = p.shape[0]
    split = np.zeros(A, dtype=np.int64)
    stack_n = [n]
    stack_d = [0]
    total = 0
    nodes = 0
    while len(stack_n) > 0:
        size = stack_n.pop()
        depth = stack_d.pop()
        total += 1
        nodes += 1
        if nodes > node_cap:
            return -2
        for _ in range(M):
            _multinomial_into(rng, size, p, split)
            for j in range(A):
                b = split[j]
                if b < 2:
                    continue
                if b <= k0:
                    total += _draw(rng, cdf, lengths, b)
                    continue
                if depth + 1 > depth_cap:
                    return -1
                stack_n.append(b)
                stack_d.append(depth + 1)
    return total


@njit
def _simulate_counters_kernel(rng, n, p, M, depth_cap, node_cap, out):
    """Fills out = (S, K, R, L); returns 0, or a negative code when a cap is hit."""
    out[:] = 0
    if n == 0:
        out[2] = 1
        return 0
    if n == 1:
        out[1] = 1
        return 0
    A = p.shape[0]
    split = np.zeros(A, dtype=np.int64)
    stack_n = [n]
    stack_d = [0]
    while len(stack_n) > 0:
        size = stack_n.pop()
        depth = stack_d.pop()
        out[0] += 1
        if out[0] > node_cap:
            return -2
        leaf = True
        for _ in range(M):
            _multinomial_into(rng, size, p, split)
            for j in range(A):
                b = split[j]
                if b == 0:
                    out[2] += 1
                elif b == 1:
                    out[1] += 1
                else:
                    leaf = False
                    if depth + 1 > depth_cap:
                        return -1
                    stack_n.append(b)
                    stack_d.append(depth + 1)
        if leaf:
            out[3] += 1
    return 0


@dataclass(frozen=True)
class Caps:
    depth_cap: int = DEFAULT_DEPTH_CAP
    node_cap: int = DEFAULT_NODE_CAP


def _raise_cap(code: int, caps: Caps):
    if code == _DEPTH_HIT:
        raise CapExceeded("depth", caps.depth_cap)
    raise CapExceeded("nodes", caps.node_cap)


def _table_args(params: ModelParams, table_cutoff: int):
    if table_cutoff < 2:
        return 0, np.ones((1, 1)), np.ones(1, dtype=np.int64)
    t = law_tables(params, table_cutoff)
    return t.k0, t.cdf, t.lengths


def simulate_size(stream: Generator, params: ModelParams, n: int, caps: Caps = Caps(),
                  table_cutoff: int = DEFAULT_K0) -> int:
    """One draw of S_n. ``table_cutoff`` < 2 disables the exact small-subtree laws."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    k0, cdf, lengths = _table_args(params, table_cutoff)
    val = _simulate_size_kernel(stream, int(n), params.p_array, params.M, k0, cdf, lengths,
                                caps.depth_cap, caps.node_cap)
    if val < 0:
        _raise_cap(val, caps)
    return int(val)


def simulate_counters(stream: Generator, params: ModelParams, n: int, weights=(0.0, 0.0, 1.0),
                      caps: Caps = Caps()) -> StatCounters:
    if n < 0:
        raise ValueError("n must be nonnegative")
    out = np.zeros(4, dtype=np.int64)
    code = _simulate_counters_kernel(stream, int(n), params.p_array, params.M,
                                     caps.depth_cap, caps.node_cap, out)
    if code < 0:
        _raise_cap(code, caps)
    S, K, R, L = (int(x) for x in out)
    alpha, beta, gamma = weights
    return StatCounters(S=S, L=L, K=K, R=R, N=alpha * R + beta * K + gamma * S)


# ---------------------------------------------------------------- batches


def default_threads() -> int:
    return max(1, int(os.environ.get("GTRIE_THREADS", "1")))


def simulate_batch(params: ModelParams, n: int, trials: int, master_seed: int,
                   caps: Caps = Caps(), table_cutoff: int = DEFAULT_K0,
                   threads: int | None = None) -> np.ndarray:
    """S_n for trials 0..trials-1; capped trials are marked by negative codes.
    The result does not depend on ``threads``."""
    k0, cdf, lengths = _table_args(params, table_cutoff)
    p = params.p_array
    out = np.empty(trials, dtype=np.int64)

    def run(lo, hi):
        for t in range(lo, hi):
            out[t] = _simulate_size_kernel(trial_stream(master_seed, t), int(n), p, params.M,
                                           k0, cdf, lengths, caps.depth_cap, caps.node_cap)

    threads = threads or default_threads()
    if threads <= 1 or trials < 2:
        run(0, trials)
    else:
        bounds = np.linspace(0, trials, min(threads * 4, trials) + 1).astype(int)
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(lambda b: run(*b), zip(bounds[:-1], bounds[1:])))
    return out


@dataclass
class SummaryStats:
    n: int
    trials: int
    sample_mean: float
    sample_var: float
    skewness: float
    excess_kurtosis: float
    ks_distance: float
    standardization: str
    ref_mean: float
    ref_var: float
    standardized_mean: float
    capped: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@lru_cache(maxsize=8)
def _exact_reference(params: ModelParams, n: int):
    from .recurrence import exact_variance_table
    t = exact_variance_table(params, max(n, 2))
    return float(t.mean[n]), float(t.var[n])


def reference_moments(params: ModelParams, n: int, standardization: str = "auto",
                      table_limit: int | None = None):
    """(label, mean, var) used to standardize samples of S_n."""
    from .asymptotics import predicted_mean, predicted_variance
    from .recurrence import DEFAULT_N2

    limit = DEFAULT_N2 if table_limit is None else table_limit
    if standardization == "auto":
        standardization = "exact" if n <= limit else "asymptotic"
    if standardization == "exact":
        m, v = _exact_reference(params, n)
    elif standardization == "asymptotic":
        rs = roots_on_critical_line(params)
        m, v = predicted_mean(params, rs, n), predicted_variance(params, rs, n)
    elif standardization == "sample":
        return "sample", None, None
    else:
        raise ValueError(f"unknown standardization {standardization!r}")
    return standardization, m, v


def summarize(samples, n: int, standardization: str = "exact", ref_mean=None, ref_var=None,
              capped: int = 0) -> SummaryStats:
    x = np.asarray(samples, dtype=float)
    if x.shape[0] < 2:
        raise ValueError("need at least two samples")
    mean = math.fsum(x) / x.shape[0]
    var = math.fsum((x - mean) ** 2) / (x.shape[0] - 1)
    if ref_mean is None:
        ref_mean, ref_var = mean, var
    z = (x - ref_mean) / math.sqrt(ref_var)
    return SummaryStats(
        n=int(n),
        trials=int(x.shape[0]),
        sample_mean=mean,
        sample_var=var,
        skewness=float(stats.skew(x)),
        excess_kurtosis=float(stats.kurtosis(x)),
        ks_distance=float(stats.kstest(z, "norm").statistic),
        standardization=standardization,
        ref_mean=float(ref_mean),
        ref_var=float(ref_var),
        standardized_mean=float(math.fsum(z) / z.shape[0]),
        capped=capped,
    )


def batch_stats(params: ModelParams, n: int, trials: int, master_seed: int,
                standardization: str = "auto", caps: Caps = Caps(),
                table_cutoff: int = DEFAULT_K0, threads: int | None = None) -> SummaryStats:
    if trials < 2:
        raise ValueError("trials must be at least 2")
    raw = simulate_batch(params, n, trials, master_seed, caps, table_cutoff, threads)
    ok = raw >= 0
    capped = int(trials - ok.sum())
    if capped > CAPPED_FRACTION * trials:
        raise BatchFailed(f"{capped} of {trials} trials hit a cap at n = {n}")
    label, m, v = reference_moments(params, n, standardization)
    return summarize(raw[ok], n, label, m, v, capped)


@dataclass
class CltReport:
    master_seed: int
    trials: int
    thresholds: dict
    rungs: list
    ks_decreasing: bool
    variance_slope: float | None
    variance_exponent: float
    verdict: str

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _rung_verdict(s: SummaryStats, th) -> str:
    good = abs(s.skewness) <= th["skew"] and abs(s.excess_kurtosis) <= th["exkurt"] \
        and s.ks_distance <= th["ks"]
    return "pass" if good else "fail"


def clt_report(params: ModelParams, n_ladder, trials: int, master_seed: int,
               thresholds: dict | None = None, standardization: str = "auto",
               threads: int | None = None, table_cutoff: int = DEFAULT_K0) -> CltReport:
    """Summary statistics over an increasing ladder of n.

    The overall verdict requires the largest rung to meet every threshold and
    the KS distance to decrease along the ladder. Smaller rungs carry their own
    verdicts for information.
    """
    from .asymptotics import variance_exponent

    ladder = [int(n) for n in n_ladder]
    if not ladder or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("the n ladder must be nonempty and increasing")
    th = dict(DEFAULT_THRESHOLDS)
    th.update(thresholds or {})
    rungs = []
    summaries = []
    for n in ladder:
        s = batch_stats(params, n, trials, master_seed, standardization,
                        table_cutoff=table_cutoff, threads=threads)
        summaries.append(s)
        rungs.append({
            "n": n, "trials": s.trials, "mean": s.sample_mean, "var": s.sample_var,
            "skew": s.skewness, "exkurt": s.excess_kurtosis, "ks": s.ks_distance,
            "standardization": s.standardization, "capped": s.capped,
            "verdict": _rung_verdict(s, th),
        })
    ks = [s.ks_distance for s in summaries]
    decreasing = all(b < a for a, b in zip(ks, ks[1:]))
    slope = None
    if len(ladder) >= 2:
        slope = float(np.polyfit(np.log(ladder), np.log([s.sample_var for s in summaries]), 1)[0])
    verdict = "pass" if rungs[-1]["verdict"] == "pass" and decreasing else "fail"
    return CltReport(master_seed=master_seed, trials=trials, thresholds=th, rungs=rungs,
                     ks_decreasing=decreasing, variance_slope=slope,
                     variance_exponent=variance_exponent(params), verdict=verdict)
