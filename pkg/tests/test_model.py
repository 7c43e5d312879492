import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gtries.errors import Explosive, NotAProbabilityVector
from gtries.model import (detect_periodicity, p_func, roots_on_critical_line, solve_rho,
                          validate_params)

from strategies import instances

# independent oracle: mpmath findroot at 40 digits
RHO_N = 1.7037393676767257689
RHO_U = 1 + math.log(2) / math.log(3)


def test_validate_accepts_and_caches_q2(cfg_n):
    assert cfg_n.q2 == pytest.approx(0.38, abs=1e-15)
    assert cfg_n.M == 2 and cfg_n.A == 3


def test_classical_trie_accepted(classical):
    assert classical.q2 == pytest.approx(0.5)


def test_explosive_boundary_rejected():
    with pytest.raises(Explosive, match="sum_j p_j\\^2 < 1/M"):
        validate_params([0.5, 0.5], 2)


@pytest.mark.parametrize("p", [[0.5, 0.6], [1.0, 0.0], [0.5], [-0.1, 1.1], ["a", "b"]])
def test_bad_probability_vectors(p):
    with pytest.raises(NotAProbabilityVector):
        validate_params(p, 1)


@pytest.mark.parametrize("M", [0, -1, 1.5, True])
def test_bad_branching_factor(M):
    with pytest.raises(NotAProbabilityVector):
        validate_params([0.5, 0.5], M)


def test_renormalized_exactly():
    params = validate_params([0.2 + 1e-10, 0.3, 0.5], 1)
    assert math.fsum(params.p) == pytest.approx(1.0, abs=1e-15)


def test_fraction_strings(cfg_u):
    assert cfg_u.p == pytest.approx((1 / 3,) * 3, abs=1e-16)


def test_rho_values(classical, cfg_u, cfg_n):
    assert solve_rho(classical) == pytest.approx(1.0, abs=1e-12)
    assert cfg_u.rho == pytest.approx(RHO_U, abs=1e-12)
    assert cfg_n.rho == pytest.approx(RHO_N, abs=1e-12)
    for params in (classical, cfg_u, cfg_n):
        assert abs(params.M * params.power_sum(params.rho) - 1) <= 1e-12


def test_p_func_values(cfg_u, cfg_n):
    assert abs(p_func(cfg_u, cfg_u.rho)) <= 1e-12
    assert p_func(cfg_u, 2 * cfg_u.rho - 1) == pytest.approx(0.5, abs=1e-12)
    assert p_func(cfg_n, 1.0) == pytest.approx(1 - 2, abs=1e-14)
    s = complex(1.3, 2.7)
    assert p_func(cfg_n, s.conjugate()) == pytest.approx(p_func(cfg_n, s).conjugate(), abs=1e-15)


def test_periodicity_examples():
    info = detect_periodicity(validate_params([0.5, 0.25, 0.25], 1))
    assert info.periodic and info.a == pytest.approx(2) and info.e == (1, 2, 2)
    info = detect_periodicity(validate_params(["1/3"] * 3, 2))
    assert info.periodic and info.a == pytest.approx(3) and info.e == (1, 1, 1)
    info = detect_periodicity(validate_params([0.5, 0.3, 0.2], 2))
    assert not info.periodic and info.a == math.e and info.e is None


def test_periodicity_continued_fraction_oracle():
    # no convergent of log 0.3 / log 0.5 with denominator <= 64 is within 1e-9
    from fractions import Fraction
    r = math.log(0.3) / math.log(0.5)
    x, h, k = r, (1, 0), (0, 1)
    while True:
        q = math.floor(x)
        h, k = (q * h[0] + h[1], h[0]), (q * k[0] + k[1], k[0])
        if k[0] > 64:
            break
        assert abs(Fraction(h[0], k[0]) - Fraction(r)) > 1e-9
        x = 1 / (x - q)


@given(instances(), st.randoms(use_true_random=False))
def test_periodicity_permutation_invariant(params, rnd):
    p = list(params.p)
    rnd.shuffle(p)
    other = validate_params(p, params.M)
    a, b = params.periodicity, other.periodicity
    assert a.periodic == b.periodic
    assert a.a == pytest.approx(b.a, rel=1e-12)


def test_dyadic_periodic_instances_detected():
    for p, e in [([0.5, 0.25, 0.125, 0.125], (1, 2, 3, 3)), ([0.25] * 4, (1, 1, 1, 1))]:
        info = detect_periodicity(validate_params(p, 1))
        assert info.periodic and info.e == e
        assert all(abs(x - info.a ** -ej) <= 1e-9 for x, ej in zip(p, e))


@given(instances())
def test_rho_invariants(params):
    assert 1.0 <= params.rho < 2.0
    assert abs(params.M * params.power_sum(params.rho) - 1) <= 1e-10 or params.rho == 1.0
    grid = np.linspace(1, 2, 41)
    sums = [params.power_sum(s) for s in grid]
    assert all(b < a for a, b in zip(sums, sums[1:]))


def test_root_sets(cfg_u, cfg_n):
    rs = roots_on_critical_line(cfg_n, 10)
    assert rs.betas == (complex(cfg_n.rho),)
    rs = roots_on_critical_line(cfg_u, 1)
    assert len(rs.betas) == 3
    assert rs.log_a == pytest.approx(math.log(3))
    assert any(b.imag == pytest.approx(2 * math.pi / math.log(3)) for b in rs.betas)
    rs0 = roots_on_critical_line(cfg_u, 0)
    assert rs0.betas == (complex(cfg_u.rho),)


@given(instances())
def test_root_set_invariants(params):
    rs = roots_on_critical_line(params, 10)
    vals = np.abs(p_func(params, np.array(rs.betas)))
    assert vals.max() <= 1e-9
    by_k = dict(zip(rs.ks, rs.betas))
    for k, b in by_k.items():
        assert by_k[-k] == b.conjugate()


def test_wrong_lattice_base_rejected(cfg_u, monkeypatch):
    from gtries import model
    from gtries.errors import RootCheckFailed
    wrong = model.PeriodicityInfo(periodic=True, a=2.0, e=(1, 1, 1))
    monkeypatch.setattr(type(cfg_u), "periodicity", property(lambda self: wrong))
    with pytest.raises(RootCheckFailed):
        roots_on_critical_line(cfg_u, 1)
