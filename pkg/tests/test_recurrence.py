from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gtries.errors import AlphaTooSmall, TruncationNotCertified
from gtries.model import validate_params
from gtries.recurrence import (TollSpec, binomial_mix_solve, exact_delta_second, exact_mean_table,
                               exact_variance_table, mix_solve_table, moment_table,
                               series_solution, transfer_check, variance_toll)

from strategies import instances


def rational_mean(p, M, N):
    """Mean recurrence in exact rational arithmetic."""
    p = [Fraction(x) for x in p]
    mu = [Fraction(0), Fraction(0)]
    for n in range(2, N + 1):
        s = sum(comb(n, k) * pj**k * (1 - pj) ** (n - k) * mu[k] for pj in p for k in range(n))
        mu.append((M * s + 1) / (1 - M * sum(pj**n for pj in p)))
    return mu


def progeny_variance(params):
    # S_2 is the total progeny of a branching process with Binomial(M, q2) offspring
    m = params.M * params.q2
    s2 = params.M * params.q2 * (1 - params.q2)
    return s2 / (1 - m) ** 3


def test_mean_anchors(cfg_u, cfg_n):
    t = exact_mean_table(cfg_u, 3)
    assert t.mean[0] == t.mean[1] == 0
    assert t.mean[2] == pytest.approx(3, abs=1e-10)
    assert t.mean[3] == pytest.approx(45 / 7, abs=1e-10)
    assert exact_mean_table(cfg_n, 2).mean[2] == pytest.approx(1 / 0.24, abs=1e-10)


def test_mean_against_rational_oracle(cfg_u):
    exact = rational_mean(["1/3"] * 3, 2, 14)
    assert exact[3] == Fraction(45, 7)
    t = exact_mean_table(cfg_u, 14).mean
    for n in range(15):
        assert t[n] == pytest.approx(float(exact[n]), rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("p,M", [(["1/3"] * 3, 2), ([0.5, 0.3, 0.2], 2), ([0.7, 0.3], 1),
                                 ([0.25] * 4, 3)])
def test_var2_progeny(p, M):
    params = validate_params(p, M)
    t = exact_variance_table(params, 2)
    assert t.var[0] == t.var[1] == 0
    assert t.var[2] == pytest.approx(progeny_variance(params), abs=1e-10)
    assert t.mean[2] == pytest.approx(1 / (1 - M * params.q2), abs=1e-10)


def test_cfg_u_var2_is_12(cfg_u):
    assert exact_variance_table(cfg_u, 2).var[2] == pytest.approx(12, abs=1e-10)


def test_delta_second_anchor(cfg_u):
    mu = exact_mean_table(cfg_u, 2).mean
    assert exact_delta_second(cfg_u, mu, 2) == pytest.approx(4, abs=1e-12)
    assert exact_delta_second(cfg_u, mu, 1) == 0.0


@given(instances())
def test_centered_toll_matches_direct_expansion(params):
    mu = exact_mean_table(params, 30).mean
    fast = variance_toll(params, mu)
    for n in (2, 3, 7, 30):
        direct = exact_delta_second(params, mu, n)
        assert direct >= -1e-9
        assert fast[n] == pytest.approx(direct, rel=1e-9, abs=1e-9)


def test_binomial_mix_solve_steps(cfg_u):
    assert binomial_mix_solve(cfg_u, [0, 0], 1.0, 2) == pytest.approx(3)
    assert binomial_mix_solve(cfg_u, [0, 0, 3], 1.0, 3) == pytest.approx(45 / 7)
    t = exact_mean_table(cfg_u, 60).mean
    assert binomial_mix_solve(cfg_u, t, 1.0, 60) == pytest.approx(t[60], rel=1e-12)
    with pytest.raises(ValueError):
        binomial_mix_solve(cfg_u, [0], 1.0, 1)


def test_zero_toll(cfg_n):
    assert not mix_solve_table(cfg_n, np.zeros(50)).any()
    assert series_solution(cfg_n, TollSpec.custom([0.0] * 20), 19) == 0.0


@given(instances(max_M=2), st.lists(st.floats(0, 10), min_size=30, max_size=30),
       st.lists(st.floats(0, 10), min_size=30, max_size=30))
def test_linear_in_toll(params, b1, b2):
    a1 = mix_solve_table(params, b1)
    a2 = mix_solve_table(params, b2)
    a12 = mix_solve_table(params, np.add(b1, b2))
    assert np.allclose(a12, a1 + a2, rtol=1e-10, atol=1e-10)


def test_table_shape_invariants(cfg_u, cfg_n):
    for params in (cfg_u, cfg_n):
        t = moment_table(params, 2048, 1024)
        assert t.N == 2048 and t.N2 == 1024
        assert np.all(np.diff(t.mean) >= 0)
        assert np.all(t.var >= 0)
        n = np.arange(16, 2049)
        ratio = t.mean[16:] / n**params.rho
        assert ratio.min() > 0.5 and ratio.max() < 5
        # toll positivity keeps Var / n^rho bounded away from 0
        m = np.arange(16, 1025)
        assert (t.var[16:] / m**params.rho).min() > 1.0


@pytest.mark.parametrize("n", [2, 10, 50])
def test_series_matches_table(cfg_u, cfg_n, n):
    for params in (cfg_u, cfg_n):
        ref = exact_mean_table(params, 64).mean[n]
        val = series_solution(params, TollSpec.constant_one(), n, 1e-10)
        assert val == pytest.approx(ref, rel=1e-9)


def test_series_power_toll(cfg_n):
    toll = TollSpec.power(1.5)
    ref = mix_solve_table(cfg_n, toll.values(30))
    assert series_solution(cfg_n, toll, 30) == pytest.approx(ref[30], rel=1e-9)


def test_series_truncation_not_certified(cfg_n):
    with pytest.raises(TruncationNotCertified):
        series_solution(cfg_n, TollSpec.constant_one(), 40, 1e-12, max_level=3)
    with pytest.raises(ValueError):
        series_solution(cfg_n, TollSpec.constant_one(), 40, 0.0)


def test_toll_spec():
    with pytest.raises(ValueError):
        TollSpec("unknown")
    b = TollSpec.power(2.0, 3.0).values(4)
    assert list(b) == [0, 0, 12, 27, 48]
    with pytest.raises(ValueError):
        TollSpec.custom([1, 2]).values(5)


def test_delta_squared_toll_reproduces_variance(cfg_n):
    toll = TollSpec.delta_squared(cfg_n, 40)
    var = exact_variance_table(cfg_n, 40).var
    assert mix_solve_table(cfg_n, toll.values(40)) == pytest.approx(var, rel=1e-12)


def test_transfer(cfg_u, cfg_n):
    with pytest.raises(AlphaTooSmall):
        transfer_check(cfg_u, cfg_u.rho, 512)
    rep = transfer_check(cfg_n, 2 * cfg_n.rho - 1, 4096)
    gaps = rep.gaps
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    scaled = transfer_check(cfg_n, 2 * cfg_n.rho - 1, 4096, c=7.5)
    assert [r for _, r in scaled.ratio_at] == pytest.approx([r for _, r in rep.ratio_at], rel=1e-12)
