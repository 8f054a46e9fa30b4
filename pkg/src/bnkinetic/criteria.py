"""Equilibria, subcriticality, and the global-existence criterion."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
from scipy import integrate, optimize, special

from .errors import FitFailureError, InputContractError, UnsupportedRegimeError
from .grid_state import Distribution, gamma_sup, moment, sup_norms
from .kernel_geometry import KernelParams, sphere_area

ZETA_32 = float(special.zeta(1.5))
ZETA_52 = float(special.zeta(2.5))


def c_gamma(gamma: float) -> float:
    """sup over x >= 0 of (1 + x^gamma) / (1 + x^2)."""
    if not 0.0 <= gamma <= 1.0:
        raise InputContractError("gamma must lie in [0, 1]")
    if gamma == 0.0:
        return 2.0

    def neg(x):
        return -(1.0 + x ** gamma) / (1.0 + x * x)

    res = optimize.minimize_scalar(neg, bounds=(0.0, 2.0), method="bounded", options={"xatol": 1e-12})
    return max(-float(res.fun), 1.0)


@dataclass(frozen=True)
class LossBounds:
    q_minus: float
    lemma_l2: float
    uniform_linf: float
    uniform_gamma: Optional[float]
    gamma_hypothesis_met: bool

    def holds(self, slack: float = 0.01) -> bool:
        tol = slack * max(abs(self.q_minus), 1e-300)
        ok = self.q_minus >= self.lemma_l2 - tol and self.q_minus >= self.uniform_linf - tol
        if self.uniform_gamma is not None:
            ok = ok and self.q_minus >= self.uniform_gamma - tol
        return ok


def loss_lower_bounds(f: Distribution, v, params: KernelParams, R0: Optional[float] = None, quad=None) -> LossBounds:
    """Measured Q-(f)(v) next to its three lower bounds.

    The bound with R0 is only reported when R0^(d-1-gamma) Gamma(f) <= M0/2.
    """
    from .collision_op import q_minus

    d, gam = params.d, params.gamma
    lb = params.l_b
    cp = params.c_phi
    m0 = moment(f)
    l12 = moment(f, weight="L1s", s=2.0)
    linf, _ = sup_norms(f)
    vn = float(np.linalg.norm(v))
    qm = q_minus(f, v, params, quad)
    b1 = cp * lb * (1.0 + vn ** gam) * m0 - cp * c_gamma(gam) * lb * l12
    if linf > 0:
        e = gam / (d - 1.0)
        b2 = cp * lb * m0 ** (1.0 + e) * linf ** (-e) / (2.0 ** (1.0 + e) * sphere_area(d) ** e)
    else:
        b2 = 0.0
    b3 = None
    met = False
    if R0 is not None:
        met = R0 ** (d - 1.0 - gam) * gamma_sup(f, R0, gam) <= 0.5 * m0
        if met:
            b3 = 0.5 * cp * lb * m0 * R0 ** gam
    return LossBounds(qm, b1, b2, b3, met)


@dataclass(frozen=True)
class BEValue:
    value: float
    singular: bool


BE_CAP = 1e300


def be_regular(beta: float, mu: float, u, v) -> BEValue:
    """Regular Bose-Einstein occupation at v; the pole at v = u (mu = 0) returns a capped value."""
    if not beta > 0:
        raise InputContractError("beta must be positive")
    if mu > 0:
        raise InputContractError("mu must be non-positive")
    r2 = float(np.sum((np.asarray(v, float) - np.asarray(u, float)) ** 2))
    x = 0.5 * beta * (r2 - mu)
    if x == 0.0:
        return BEValue(BE_CAP, True)
    if x > 700.0:
        return BEValue(math.exp(-x), False)
    return BEValue(1.0 / math.expm1(x), False)


def polylog_exp(s: float, x: float) -> float:
    """Li_s(e^-x) for x >= 0 and s > 1."""
    if x < 0:
        raise InputContractError("polylog argument must be <= 1")
    if s <= 1:
        raise InputContractError("polylog order must exceed 1")
    if x == 0.0:
        return float(special.zeta(s))
    if x >= 0.25:
        total, k = 0.0, 1
        while True:
            term = math.exp(-k * x) / k ** s
            total += term
            # geometric tail bound of the remaining terms
            if term * math.exp(-x) / (1.0 - math.exp(-x)) <= 1e-17 * total:
                return total
            k += 1
    si = round(s)
    integer = abs(s - si) < 1e-12
    total = 0.0
    if integer:
        m = int(si) - 1
        harm = sum(1.0 / j for j in range(1, m + 1))
        total += (-x) ** m / math.factorial(m) * (harm - math.log(x))
    else:
        total += special.gamma(1.0 - s) * x ** (s - 1.0)
    term_fact = 1.0
    for k in range(0, 60):
        if k > 0:
            term_fact *= -x / k
        if integer and k == int(si) - 1:
            continue
        total += float(special.zeta(s - k)) * term_fact
    return total


def be_mass_energy(beta: float, mu: float, d: int = 3) -> tuple[float, float]:
    """Mass and energy of the regular Bose-Einstein part, via the polylogarithm series."""
    if not beta > 0:
        raise InputContractError("beta must be positive")
    if mu > 0:
        raise InputContractError("mu must be non-positive")
    if d < 3:
        raise InputContractError("the mu = 0 series diverges for d < 3")
    x = -0.5 * beta * mu
    pref = (2.0 * math.pi / beta) ** (0.5 * d)
    m0 = pref * polylog_exp(0.5 * d, x)
    m2 = (d / beta) * pref * polylog_exp(0.5 * d + 1.0, x)
    if not (math.isfinite(m0) and math.isfinite(m2)):
        raise InputContractError("divergent Bose-Einstein moments")
    return m0, m2


STATED_COEFF = (4.0 * math.pi / 3.0) ** 0.6 * ZETA_32 / ZETA_52 ** 0.6


def derived_coefficient() -> float:
    m0, m2 = be_mass_energy(1.0, 0.0)
    return m0 / m2 ** 0.6


def subcritical_check(M0: float, M2: float, mode: str = "derived", d: int = 3) -> tuple[bool, float]:
    """(M0 <= coeff * M2^(3/5), coeff)."""
    if d != 3:
        raise UnsupportedRegimeError("the closed-form threshold exists only for d = 3")
    if not (M0 > 0 and M2 > 0):
        raise InputContractError("M0 and M2 must be positive")
    if mode == "stated":
        coeff = STATED_COEFF
    elif mode == "derived":
        coeff = derived_coefficient()
    else:
        raise InputContractError(f"unknown subcriticality mode {mode!r}")
    return bool(M0 <= coeff * M2 ** 0.6), coeff


def critical_temperature(M0: float, m: float = 1.0, k_B: float = 1.0) -> float:
    if not M0 > 0:
        raise InputContractError("M0 must be positive")
    return m * ZETA_52 / (2.0 * math.pi * k_B * ZETA_32) * (M0 / ZETA_32) ** (2.0 / 3.0)


def kinetic_temperature(M0: float, M2: float, m: float = 1.0, k_B: float = 1.0) -> float:
    return m * M2 / (3.0 * k_B * M0)


@dataclass(frozen=True)
class EquilibriumFit:
    m0: float
    beta: float
    mu: float
    u: np.ndarray
    iterations: int = 0
    method: str = ""

    @property
    def supercritical(self) -> bool:
        return self.m0 > 0


def _fit_residual(lb: float, y: float, M0: float, M2: float) -> np.ndarray:
    beta = math.exp(lb)
    mu = -math.exp(y)
    m0, m2 = be_mass_energy(beta, mu)
    return np.array([math.log(m0 / M0), math.log(m2 / M2)])


def _newton_fit(M0: float, M2: float, tol: float, max_iter: int):
    # classical (Maxwellian) initial guess
    beta = 3.0 * M0 / M2
    mu = 2.0 / beta * math.log(M0 / (2.0 * math.pi / beta) ** 1.5)
    x = np.array([math.log(beta), math.log(max(-mu, 1e-3))])
    r = _fit_residual(x[0], x[1], M0, M2)
    for it in range(1, max_iter + 1):
        jac = np.empty((2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = 1e-7 * max(1.0, abs(x[k]))
            jac[:, k] = (_fit_residual(*(x + e), M0, M2) - _fit_residual(*(x - e), M0, M2)) / (2 * e[k])
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        while lam > 1e-6:
            trial = x + lam * step
            try:
                rt = _fit_residual(trial[0], trial[1], M0, M2)
            except (InputContractError, OverflowError, ValueError):
                rt = None
            if rt is not None and np.linalg.norm(rt) < np.linalg.norm(r):
                break
            lam *= 0.5
        else:
            return None
        x, r = trial, rt
        if np.max(np.abs(r)) < tol:
            return math.exp(x[0]), -math.exp(x[1]), it
    return None


def _ratio_fit(M0: float, M2: float, tol: float):
    target = M2 / M0 ** (5.0 / 3.0)

    def g(logx):
        x = math.exp(logx)
        return math.log(1.5 / math.pi * polylog_exp(2.5, x) / polylog_exp(1.5, x) ** (5.0 / 3.0)) - math.log(target)

    lo, hi = -40.0, 1.0
    while g(hi) < 0:
        hi += 2.0
        if hi > 200:
            return None
    if g(lo) > 0:
        return None
    logx, res = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, full_output=True)
    x = math.exp(logx)
    beta = 2.0 * math.pi * (polylog_exp(1.5, x) / M0) ** (2.0 / 3.0)
    return beta, -2.0 * x / beta, res.iterations


def equilibrium_fit(M0: float, u, M2: float, tol: float = 1e-10, max_iter: int = 100) -> EquilibriumFit:
    """Bose-Einstein equilibrium with mass M0 and energy M2 about the bulk velocity u.

    Subcritical data (derived threshold) yield m0 = 0 and mu < 0 via damped
    Newton in (log beta, log(-mu)), with a bracketed solve on the beta-free
    ratio M2 / M0^(5/3) as fallback. Supercritical data take mu = 0 and put
    the excess mass in the condensate.
    """
    if not (M0 > 0 and M2 > 0):
        raise InputContractError("M0 and M2 must be positive")
    u = np.asarray(u, dtype=float)
    sub, _ = subcritical_check(M0, M2, "derived")
    if not sub:
        beta = (3.0 * (2.0 * math.pi) ** 1.5 * ZETA_52 / M2) ** 0.4
        reg, _ = be_mass_energy(beta, 0.0)
        return EquilibriumFit(max(M0 - reg, 0.0), beta, 0.0, u, 0, "supercritical")
    out = _newton_fit(M0, M2, tol, max_iter)
    method = "newton"
    if out is None:
        out = _ratio_fit(M0, M2, tol)
        method = "bracket"
    if out is None:
        raise FitFailureError("equilibrium fit did not converge", residuals=None)
    beta, mu, its = out
    r = _fit_residual(math.log(beta), math.log(-mu), M0, M2) if mu < 0 else np.zeros(2)
    if np.max(np.abs(r)) > 10 * tol:
        raise FitFailureError("equilibrium fit residual above tolerance", residuals=r)
    return EquilibriumFit(0.0, beta, mu, u, its, method)


def regularity_exponent(s: float, d: int, gamma: float) -> float:
    if not s > d - 1:
        raise InputContractError("s must exceed d - 1")
    return min(s, d / (1.0 + gamma) * (s - d + 1.0 + gamma + 2.0 * (1.0 + gamma) / d))


def r0_radius(M0: float, linf: float, d: int) -> float:
    return (3.0 * M0 / (48.0 * sphere_area(d) * linf)) ** (1.0 / d)


def gamma0_level(M0: float, R0: float, d: int, gamma: float) -> float:
    return M0 / (6.0 * R0 ** (d - 1.0 - gamma))


def c_sd(s: float, d: int) -> float:
    """Integral over R^(d-1) of 1 / (1 + |w|^s)."""
    if not s > d - 1:
        raise InputContractError("s must exceed d - 1")
    val, _ = integrate.quad(lambda r: r ** (d - 2) / (1.0 + r ** s), 0.0, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    return sphere_area(d - 1) * val


def c_dgamma(d: int, gamma: float) -> float:
    return sphere_area(d) / (d + gamma - 1.0)


@dataclass(frozen=True)
class CQAssembly:
    c_sd: float
    c_dgamma: float
    kernel_factor: float
    value: float


def assemble_cq(params: KernelParams, s: float) -> CQAssembly:
    a = c_sd(s, params.d)
    b = c_dgamma(params.d, params.gamma)
    k = params.c_phi * max(params.b_infinity, params.l_b)
    return CQAssembly(a, b, k, max(a, b) * k)


@dataclass(frozen=True)
class GlobalCriterionReport:
    r0: float
    gamma0: float
    q_tilde0: float
    q0_bound: float
    gamma_f0: float
    condition_i: bool
    condition_ii: bool
    t_M_estimate: Union[float, str] = "not reached"
    c_q: Optional[CQAssembly] = None
    s: float = 3.0
    regime_sign: int = 0
    linf0: float = 0.0
    binds_linf_2: bool = False
    binds_gamma_5_2: bool = False

    @property
    def compliant(self) -> bool:
        return self.condition_i and self.condition_ii

    def as_dict(self) -> dict:
        out = {
            "R0": self.r0,
            "Gamma0": self.gamma0,
            "Q_tilde0": self.q_tilde0,
            "Q0_bound": self.q0_bound,
            "Gamma_f0": self.gamma_f0,
            "condition_i": self.condition_i,
            "condition_ii": self.condition_ii,
            "t_M": self.t_M_estimate,
            "s": self.s,
            "regime_sign": self.regime_sign,
            "binds_linf_2": self.binds_linf_2,
            "binds_gamma_5_2": self.binds_gamma_5_2,
        }
        if self.c_q is not None:
            out.update(C_sd=self.c_q.c_sd, C_dgamma=self.c_q.c_dgamma, C_kernel=self.c_q.kernel_factor,
                       C_Q=self.c_q.value)
        return out


def q_tilde0(M0: float, linf: float, linf_s: float, params: KernelParams, cq: float) -> float:
    d, gam = params.d, params.gamma
    a = 1.0 + 6.0 * linf
    inner = linf_s + (3.0 * linf / M0) ** (gam / (d - 1.0)) * a * (3.0 * linf + M0)
    return 2.0 * cq / (params.c_phi * params.l_b * M0) * a * inner


def global_criterion(f0: Distribution, params: KernelParams, s: float = 3.0) -> GlobalCriterionReport:
    d, gam = params.d, params.gamma
    m0 = moment(f0)
    linf, linf_s = sup_norms(f0, s)
    if not (m0 > 0 and linf > 0):
        raise InputContractError("the criterion needs nonzero data")
    r0 = r0_radius(m0, linf, d)
    g0 = gamma0_level(m0, r0, d, gam)
    cq = assemble_cq(params, s)
    qt = q_tilde0(m0, linf, linf_s, params, cq.value)
    bound = 1.0 / (24.0 * sphere_area(d) * r0)
    gf = gamma_sup(f0, r0, gam)
    sign = int(np.sign(d * (gam - 1.0) + 1.0))
    return GlobalCriterionReport(r0, g0, qt, bound, gf, bool(qt <= bound), bool(gf <= g0),
                                 c_q=cq, s=s, regime_sign=sign, linf0=linf)


def monitor_bootstrap(series, report: GlobalCriterionReport, f0: Distribution) -> GlobalCriterionReport:
    """First time the L-infinity norm exceeds 3||f0|| or Gamma exceeds 3 Gamma0."""
    linf0, _ = sup_norms(f0)
    t_m: Union[float, str] = "not reached"
    b_linf = b_gamma = False
    for t, rec in zip(series.times, series.records):
        if rec.linf > 2.0 * linf0:
            b_linf = True
        if rec.gamma_conc > 2.5 * report.gamma0:
            b_gamma = True
        if rec.linf > 3.0 * linf0 or rec.gamma_conc > 3.0 * report.gamma0:
            t_m = float(t)
            break
    return replace(report, t_M_estimate=t_m, binds_linf_2=b_linf, binds_gamma_5_2=b_gamma)


CARDANO_BRACKET = (np.cbrt(1.0 + math.sqrt(244.0 / 243.0)) + np.cbrt(1.0 - math.sqrt(244.0 / 243.0))) ** 3


def cardano_root(R0: float) -> float:
    """Real root of x^3 + (R0^(4/3)/6^(2/3)) x - R0^2."""
    return R0 ** (2.0 / 3.0) / 2.0 ** (1.0 / 3.0) * float(np.cbrt(CARDANO_BRACKET))


def cardano_subcritical_bound(M0: float, linf_f0: float, d: int = 3, gamma: float = 1.0) -> float:
    """Lower bound on M2 implied by the concentration control (d = 3, gamma = 1)."""
    if d != 3 or gamma != 1.0:
        raise UnsupportedRegimeError("the Cardano bound is stated for d = 3, gamma = 1")
    if not (M0 > 0 and linf_f0 > 0):
        raise InputContractError("M0 and the sup norm must be positive")
    return CARDANO_BRACKET * M0 ** (5.0 / 3.0) / (32.0 * math.pi ** (2.0 / 3.0) * linf_f0 ** (2.0 / 3.0))
