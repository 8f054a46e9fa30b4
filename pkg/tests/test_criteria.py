import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, special

from bnkinetic.collision_op import detailed_balance_terms
from bnkinetic.criteria import (
    CARDANO_BRACKET,
    STATED_COEFF,
    be_mass_energy,
    be_regular,
    c_gamma,
    cardano_root,
    cardano_subcritical_bound,
    critical_temperature,
    derived_coefficient,
    equilibrium_fit,
    global_criterion,
    kinetic_temperature,
    loss_lower_bounds,
    monitor_bootstrap,
    polylog_exp,
    r0_radius,
    regularity_exponent,
    subcritical_check,
)
from bnkinetic.errors import InputContractError, UnsupportedRegimeError
from bnkinetic.grid_state import Distribution, VelocityGrid, gamma_sup, moment, moments_record
from bnkinetic.kernel_geometry import CollisionTriple, KernelParams

from conftest import gaussian

Z32 = float(special.zeta(1.5))
Z52 = float(special.zeta(2.5))


def _series(beta, mu, power):
    # direct summation of the Bose series with an explicit remainder bound
    total, k = 0.0, 1
    while True:
        t = math.exp(k * beta * mu / 2) * (2 * math.pi / (k * beta)) ** 1.5 * (3 / (k * beta)) ** power
        total += t
        if t < 1e-16 * total and k > 10:
            return total
        k += 1


# ---- c_gamma


def test_c_gamma_values():
    assert c_gamma(0.0) == 2.0
    x = math.sqrt(2) - 1
    assert c_gamma(1.0) == pytest.approx((1 + x) / (1 + x * x), abs=1e-10)
    assert c_gamma(1.0) == pytest.approx((1 + math.sqrt(2)) / 2, abs=1e-10)
    xs = np.linspace(0, 10, 2_000_001)
    scan = np.max((1 + xs ** 0.5) / (1 + xs ** 2))
    assert 1 < c_gamma(0.5) < 2
    assert c_gamma(0.5) == pytest.approx(scan, abs=1e-8)
    with pytest.raises(InputContractError):
        c_gamma(1.5)


# ---- loss lower bounds


def test_loss_bounds_zero_data(hard_sphere):
    f = Distribution.zeros(VelocityGrid(3, 6, 2.0))
    lb = loss_lower_bounds(f, [0.0, 0.0, 0.0], hard_sphere)
    assert lb.q_minus == 0.0
    assert lb.lemma_l2 <= 0 and lb.uniform_linf <= 0
    assert lb.holds()


def test_loss_bounds_gaussian(hard_sphere):
    f = gaussian(12, 5.0, 0.3)
    R0 = r0_radius(moment(f), 0.3, 3)
    for v in ([0.0, 0.0, 0.0], [1.0, -0.5, 0.2], [2.5, 0.0, 0.0]):
        lb = loss_lower_bounds(f, v, hard_sphere, R0=R0)
        assert lb.gamma_hypothesis_met
        assert lb.q_minus > 0
        assert lb.holds(slack=0.01)


def test_loss_bound_hypothesis_flag_on_spike(hard_sphere):
    g = VelocityGrid(3, 8, 2.0)
    vals = np.zeros(g.size)
    vals[g.index_of([0.1, 0.1, 0.1])] = 50.0
    f = Distribution(g, vals)
    lb = loss_lower_bounds(f, [1.0, 0.0, 0.0], hard_sphere, R0=1.0)
    assert not lb.gamma_hypothesis_met
    assert lb.uniform_gamma is None


# ---- Bose-Einstein profile and moments


def test_be_regular():
    assert be_regular(1.0, -1.0, [0, 0, 0], [0, 0, 0]).value == pytest.approx(1 / (math.exp(0.5) - 1), rel=1e-14)
    assert be_regular(1.0, -1.0, [0, 0, 0], [0, 0, 0]).value == pytest.approx(1.541494, abs=1e-6)
    assert be_regular(1.0, -1.0, [0, 0, 0], [60.0, 0, 0]).value == 0.0
    sing = be_regular(2.0, 0.0, [0.5, 0, 0], [0.5, 0, 0])
    assert sing.singular and sing.value > 1e100
    with pytest.raises(InputContractError):
        be_regular(0.0, -1.0, [0, 0, 0], [0, 0, 0])


@pytest.mark.parametrize("beta,mu", [(1.0, 0.0), (1.0, -0.01), (0.3, -0.5), (2.0, -4.0), (5.0, -20.0)])
def test_be_mass_energy_matches_direct_series(beta, mu):
    m0, m2 = be_mass_energy(beta, mu)
    # mu = 0 converges slowly; use the zeta closed form there
    if mu == 0.0:
        assert m0 == pytest.approx((2 * math.pi / beta) ** 1.5 * Z32, rel=1e-12)
        assert m2 == pytest.approx(3 / beta * (2 * math.pi / beta) ** 1.5 * Z52, rel=1e-12)
    else:
        assert m0 == pytest.approx(_series(beta, mu, 0), rel=1e-11)
        assert m2 == pytest.approx(_series(beta, mu, 1), rel=1e-11)


def test_be_mass_energy_examples():
    m0, m2 = be_mass_energy(1.0, 0.0)
    assert m0 == pytest.approx(41.1443, abs=1e-3)
    assert m2 / m0 == pytest.approx(3 * Z52 / Z32, rel=1e-12)
    beta, mu = 1.0, -40.0
    maxwell = math.exp(beta * mu / 2) * (2 * math.pi / beta) ** 1.5
    assert be_mass_energy(beta, mu)[0] == pytest.approx(maxwell, rel=1e-8)
    with pytest.raises(InputContractError):
        be_mass_energy(1.0, 0.5)


@pytest.mark.parametrize("s,x", [(1.5, 1e-6), (1.5, 0.1), (2.5, 0.2), (2.0, 0.05), (3.0, 0.1), (2.5, 0.3), (1.5, 3.0)])
def test_polylog_matches_integral_oracle(s, x):
    # Bose integral representation of the polylogarithm
    val, _ = integrate.quad(lambda t: t ** (s - 1) * math.exp(-t - x) / -math.expm1(-t - x), 0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    assert polylog_exp(s, x) == pytest.approx(val / special.gamma(s), rel=1e-10)


# ---- subcriticality and temperatures


def test_subcritical_coefficients():
    assert STATED_COEFF == pytest.approx(5.1730, abs=1e-4)
    assert STATED_COEFF == pytest.approx((4 * math.pi / 3) ** 0.6 * Z32 / Z52 ** 0.6, rel=1e-14)
    assert derived_coefficient() == pytest.approx(3.4129, abs=1e-4)
    assert derived_coefficient() == pytest.approx((2 * math.pi / 3) ** 0.6 * Z32 / Z52 ** 0.6, rel=1e-12)
    assert STATED_COEFF / derived_coefficient() == pytest.approx(2 ** 0.6, rel=1e-12)


@pytest.mark.parametrize("beta", [0.2, 1.0, 7.0])
def test_subcritical_threshold_equality(beta):
    m0, m2 = be_mass_energy(beta, 0.0)
    _, coeff = subcritical_check(m0, m2, "derived")
    assert m0 == pytest.approx(coeff * m2 ** 0.6, rel=1e-8)
    assert subcritical_check(m0 * (1 - 1e-6), m2)[0]
    assert not subcritical_check(m0 * (1 + 1e-6), m2)[0]


def test_subcritical_contracts():
    with pytest.raises(UnsupportedRegimeError):
        subcritical_check(1.0, 1.0, d=4)
    with pytest.raises(InputContractError):
        subcritical_check(0.0, 1.0)
    with pytest.raises(InputContractError):
        subcritical_check(1.0, 1.0, mode="guess")


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 100), st.floats(0.01, 100), st.floats(1.0, 10.0))
def test_subcritical_monotone_in_energy(m0, m2, k):
    if subcritical_check(m0, m2)[0]:
        assert subcritical_check(m0, m2 * k)[0]


def test_critical_temperature():
    assert critical_temperature(Z32) == pytest.approx(Z52 / (2 * math.pi * Z32), rel=1e-14)
    assert critical_temperature(Z32) == pytest.approx(0.0817280, abs=1e-7)
    assert critical_temperature(8 * 2.7) == pytest.approx(4 * critical_temperature(2.7), rel=1e-13)
    with pytest.raises(InputContractError):
        critical_temperature(0.0)


@pytest.mark.parametrize("beta", [0.5, 1.0, 3.0])
def test_critical_temperature_on_threshold(beta):
    m0, m2 = be_mass_energy(beta, 0.0)
    assert kinetic_temperature(m0, m2) == pytest.approx(critical_temperature(m0), rel=1e-10)
    sub, coeff = subcritical_check(m0, m2)
    assert m0 == pytest.approx(coeff * m2 ** 0.6, rel=1e-10)


# ---- equilibrium fit


@pytest.mark.parametrize("beta", [0.3, 1.0, 4.0])
@pytest.mark.parametrize("mu", [-1e-3, -0.2, -2.0, -15.0])
def test_equilibrium_fit_round_trip(beta, mu):
    m0, m2 = be_mass_energy(beta, mu)
    fit = equilibrium_fit(m0, [0.1, 0, 0], m2)
    assert fit.m0 == 0.0
    assert fit.beta == pytest.approx(beta, rel=1e-6)
    assert fit.mu == pytest.approx(mu, rel=1e-6)
    assert fit.mu * fit.m0 == 0.0
    rm0, rm2 = be_mass_energy(fit.beta, fit.mu)
    assert rm0 == pytest.approx(m0, rel=1e-9) and rm2 == pytest.approx(m2, rel=1e-9)


def test_equilibrium_fit_supercritical():
    m2 = 50.0
    crit = derived_coefficient() * m2 ** 0.6
    fit = equilibrium_fit(2 * crit, np.zeros(3), m2)
    assert fit.mu == 0.0 and fit.supercritical
    assert fit.m0 == pytest.approx(crit, rel=1e-9)
    reg0, reg2 = be_mass_energy(fit.beta, 0.0)
    assert reg2 == pytest.approx(m2, rel=1e-12)
    assert reg0 + fit.m0 == pytest.approx(2 * crit, rel=1e-12)


def test_equilibrium_fit_condensate_decreases_with_energy():
    m0 = 30.0
    prev = math.inf
    for m2 in np.linspace(5.0, 60.0, 23):
        fit = equilibrium_fit(m0, np.zeros(3), m2)
        assert fit.m0 <= prev
        prev = fit.m0
    assert prev == 0.0


def test_fitted_equilibrium_is_stationary():
    m0, m2 = be_mass_energy(1.3, -0.4)
    fit = equilibrium_fit(m0, np.zeros(3), m2)
    rng = np.random.default_rng(1)
    for _ in range(200):
        v, vs, s = rng.normal(size=(3, 3))
        t = CollisionTriple.build(v, vs, s / np.linalg.norm(s))
        res, scale = detailed_balance_terms(fit.beta, fit.mu, t)
        assert abs(res) <= 1e-12 * scale


# ---- regularity exponent


def test_regularity_exponent():
    for s in (2.1, 3.0, 7.5):
        for gam in (0.0, 0.5, 1.0):
            assert regularity_exponent(s, 3, gam) == s
    for d in (4, 5, 7):
        for gam in (0.0, 1.0):
            assert regularity_exponent(float(d), d, gam) == d
            assert regularity_exponent(d + 0.5, d, gam) == d + 0.5
    assert regularity_exponent(3.5, 4, 0.0) == 3.5
    assert regularity_exponent(4.2, 5, 0.0) == pytest.approx(3.0, rel=1e-14)
    with pytest.raises(InputContractError):
        regularity_exponent(2.0, 3, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(3, 9), st.floats(0.0, 1.0), st.floats(0.001, 12.0))
def test_regularity_exponent_never_exceeds_s(d, gam, extra):
    s = d - 1 + extra
    sb = regularity_exponent(s, d, gam)
    assert sb <= s
    if d == 3 or s >= d:
        assert sb == s


# ---- global criterion


def test_r0_example():
    assert r0_radius(1.0, 1.0, 3) == pytest.approx((1 / (64 * math.pi)) ** (1 / 3), rel=1e-14)
    assert r0_radius(1.0, 1.0, 3) == pytest.approx(0.170696, abs=1e-6)


def test_global_criterion_formulas(hard_sphere):
    f = gaussian(12, 5.0, 0.2)
    rep = global_criterion(f, hard_sphere)
    m0 = moment(f)
    assert rep.r0 == pytest.approx((3 * m0 / (48 * 4 * math.pi * 0.2)) ** (1 / 3), rel=1e-13)
    assert rep.gamma0 == pytest.approx(m0 / (6 * rep.r0), rel=1e-13)
    assert rep.q0_bound == pytest.approx(1 / (24 * 4 * math.pi * rep.r0), rel=1e-13)
    assert rep.gamma_f0 == gamma_sup(f, rep.r0, 1.0)
    assert rep.condition_i == (rep.q_tilde0 <= rep.q0_bound)
    assert rep.condition_ii == (rep.gamma_f0 <= rep.gamma0)
    d = rep.as_dict()
    assert d["C_Q"] == pytest.approx(max(d["C_sd"], d["C_dgamma"]) * d["C_kernel"], rel=1e-14)
    # C_{3,3} = 2 pi * integral of r / (1 + r^3) = 4 pi^2 / (3 sqrt 3)
    assert d["C_sd"] == pytest.approx(4 * math.pi ** 2 / (3 * math.sqrt(3)), rel=1e-10)
    assert d["C_dgamma"] == pytest.approx(4 * math.pi / 3, rel=1e-14)


def test_global_criterion_amplitude_covariance(hard_sphere):
    f = gaussian(12, 5.0, 0.2)
    g = f.with_values(7.0 * f.values)
    a, b = global_criterion(f, hard_sphere), global_criterion(g, hard_sphere)
    assert b.r0 == pytest.approx(a.r0, rel=1e-13)
    assert b.gamma0 == pytest.approx(7 * a.gamma0, rel=1e-13)
    assert b.gamma_f0 == pytest.approx(7 * a.gamma_f0, rel=1e-13)
    assert b.condition_ii == a.condition_ii


def test_global_criterion_small_sup_regimes():
    # fixed mass, flatter data: R0 grows like linf^(-1/d)
    radii = [r0_radius(1.0, x, 3) for x in (1.0, 1e-2, 1e-4)]
    assert radii[0] < radii[1] < radii[2]
    assert radii[2] / radii[1] == pytest.approx(100 ** (1 / 3), rel=1e-12)
    f = gaussian(8, 4.0, 0.1)
    assert global_criterion(f, KernelParams(gamma=1.0)).regime_sign == 1
    assert global_criterion(f, KernelParams(gamma=0.0)).regime_sign == -1


def test_global_criterion_rejects_zero_data(hard_sphere):
    with pytest.raises(InputContractError):
        global_criterion(Distribution.zeros(VelocityGrid(3, 6, 2.0)), hard_sphere)


class _Series:
    def __init__(self, times, records):
        self.times, self.records = times, records


def _records(fs, R0):
    return [moments_record(f, 1.0, R0) for f in fs]


def test_monitor_bootstrap_not_reached_and_triggered(hard_sphere):
    f0 = gaussian(8, 4.0, 0.1)
    rep = global_criterion(f0, hard_sphere)
    flat = _Series([0.0, 1.0], _records([f0, f0], rep.r0))
    assert monitor_bootstrap(flat, rep, f0).t_M_estimate == "not reached"
    grown = [f0, f0.with_values(2.2 * f0.values), f0.with_values(3.5 * f0.values)]
    out = monitor_bootstrap(_Series([0.0, 0.5, 1.0], _records(grown, rep.r0)), rep, f0)
    assert out.t_M_estimate == 1.0
    assert out.binds_linf_2


def test_monitor_bootstrap_zero_data_never_triggers(hard_sphere):
    f0 = gaussian(8, 4.0, 0.1)
    rep = global_criterion(f0, hard_sphere)
    z = Distribution.zeros(f0.grid)
    out = monitor_bootstrap(_Series([0.0, 1.0], _records([z, z], rep.r0)), rep, z)
    assert out.t_M_estimate == "not reached"


# ---- Cardano bound


def test_cardano_bracket_and_root():
    direct = (np.cbrt(1 + math.sqrt(244 / 243)) + np.cbrt(1 - math.sqrt(244 / 243))) ** 3
    assert CARDANO_BRACKET == pytest.approx(direct, rel=1e-15)
    assert CARDANO_BRACKET == pytest.approx(1.4552, abs=1e-4)
    for R0 in (0.05, 0.3, 1.0, 4.0, 40.0):
        c = R0 ** (4 / 3) / 6 ** (2 / 3)
        roots = np.roots([1.0, 0.0, c, -R0 ** 2])
        real = roots[np.abs(roots.imag) < 1e-9].real
        assert real.size == 1
        x = cardano_root(R0)
        assert abs(x ** 3 + c * x - R0 ** 2) <= 1e-10 * R0 ** 2
        assert x == pytest.approx(optimize.brentq(lambda t: t ** 3 + c * t - R0 ** 2, 0, R0 + 1, xtol=1e-15), rel=1e-10)


def test_cardano_bound():
    b = cardano_subcritical_bound(1.0, 1.0)
    assert b == pytest.approx(CARDANO_BRACKET / (32 * math.pi ** (2 / 3)), rel=1e-14)
    assert cardano_subcritical_bound(2.0, 0.3) == pytest.approx(2 ** (5 / 3) * cardano_subcritical_bound(1.0, 0.3), rel=1e-13)
    with pytest.raises(UnsupportedRegimeError):
        cardano_subcritical_bound(1.0, 1.0, d=4)
    with pytest.raises(UnsupportedRegimeError):
        cardano_subcritical_bound(1.0, 1.0, gamma=0.5)
