"""Constructive constants, the explicit Euler scheme for the truncated equation, and its diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .collision_op import QuadratureSpec, q_apply
from .criteria import c_gamma, r0_radius
from .errors import InputContractError, StepRejectedError
from .grid_state import (
    Distribution,
    HyperplaneSample,
    MomentsRecord,
    hyperplane_values,
    moment,
    moments_record,
    momentum,
    sup_norms,
)
from .kernel_geometry import KernelParams, sphere_area


@dataclass(frozen=True)
class SchemeConstants:
    n: float
    c_L: float
    k_inf: float
    e_inf: float
    c_inf: float
    t0: float
    delta_n: float
    c_gamma: float
    c_plus: float
    c_plus_E: float
    c_d: float
    m0: float = 0.0
    m2: float = 0.0
    linf0: float = 0.0
    hyperplane_sup0: float = 0.0
    e_growth: float = 0.0

    @property
    def steps(self) -> int:
        """Number of Euler steps: the index k runs over 0..floor(T0 / Delta_n)."""
        return int(math.floor(self.t0 / self.delta_n)) + 1

    @classmethod
    def trivial(cls, n: float) -> "SchemeConstants":
        """Constants for zero data, where the scheme is the identity."""
        return cls(n, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@lru_cache(maxsize=8)
def _c_d(d: int) -> float:
    from .inequality_lab import geometric_constant

    return geometric_constant(d)


def constants_from_data(M0: float, M2: float, linf: float, hsup: float, params: KernelParams, n: float,
                        c_d: Optional[float] = None) -> SchemeConstants:
    """Scheme constants from the mass, energy, sup norm and hyperplane sup of the initial data."""
    if not M0 > 0:
        raise InputContractError("scheme constants need data with positive mass")
    if not n > 0:
        raise InputContractError("truncation level n must be positive")
    d, gam, cp = params.d, params.gamma, params.c_phi
    lb, binf = params.l_b, params.b_infinity
    S = sphere_area(d)
    cg = c_gamma(gam)
    c_d = _c_d(d) if c_d is None else c_d
    c_plus = 2.0 ** (d - 1) * cp * binf
    c_plus_E = c_d * cp * binf
    c_L = cp * lb * M0
    k_inf = 2.0 * linf / min(1.0, c_L)
    e_growth = c_plus_E * M0 * (1.0 + 2.0 * k_inf) * (S * k_inf / (d + gam - 1.0) + M0)
    e_inf = hsup + e_growth
    c_inf = cp * cg * lb * (M0 + M2) * k_inf + c_plus * e_inf * (1.0 + 2.0 * k_inf) * (S * k_inf / (1.0 + gam) + M0)
    t0 = min(1.0, k_inf * min(1.0, c_L) / (2.0 * c_inf)) if c_inf > 0 else 1.0
    loss_rate = 2.0 * cp * lb * n ** gam * M0 * (1.0 + 2.0 * k_inf)
    delta_n = min(1.0, 1.0 / loss_rate)
    out = SchemeConstants(n, c_L, k_inf, e_inf, c_inf, t0, delta_n, cg, c_plus, c_plus_E, c_d,
                          M0, M2, linf, hsup, e_growth)
    assert delta_n <= 1.0 and delta_n * loss_rate <= 1.0 + 1e-15
    assert t0 <= 1.0 and (c_inf == 0 or t0 <= k_inf * min(1.0, c_L) / (2.0 * c_inf) * (1 + 1e-15))
    return out


def scheme_constants(f0: Distribution, params: KernelParams, n: float,
                     sample: HyperplaneSample = HyperplaneSample(), c_d: Optional[float] = None) -> SchemeConstants:
    m0 = moment(f0)
    if not m0 > 0:
        raise InputContractError("scheme constants need data with positive mass")
    linf, _ = sup_norms(f0)
    hsup = float(np.max(hyperplane_values(f0, sample)))
    return constants_from_data(m0, moment(f0, 2.0), linf, hsup, params, n, c_d)


@dataclass(frozen=True)
class DriftRecord:
    mass_weak: float = 0.0
    momentum_weak: float = 0.0
    energy_weak: float = 0.0
    mass_strong: float = 0.0
    momentum_strong: float = 0.0
    energy_strong: float = 0.0


@dataclass
class TimeSeries:
    times: list = field(default_factory=list)
    records: list = field(default_factory=list)
    drift: list = field(default_factory=list)
    flags: dict = field(default_factory=lambda: {"blowup": False, "invariant_violation": False})
    loss_margin: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    dts: list = field(default_factory=list)
    t_max: Optional[float] = None
    final: Optional[Distribution] = None
    states: Optional[list] = None
    ledger: Optional[object] = None

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class _Ledger:
    """Reference moments of the run's initial data and the cumulative weak-form sums."""

    m0: float
    m1: np.ndarray
    m2: float
    weak: tuple = (0.0, 0.0, 0.0)

    def drift(self, f: Distribution) -> DriftRecord:
        scale_p = math.sqrt(max(self.m0 * self.m2, 1e-300))
        m0s = max(self.m0, 1e-300)
        m2s = max(self.m2, 1e-300)
        return DriftRecord(
            self.weak[0] / m0s,
            self.weak[1] / scale_p,
            self.weak[2] / m2s,
            (moment(f) - self.m0) / m0s,
            float(np.max(np.abs(momentum(f) - self.m1))) / scale_p,
            (moment(f, 2.0) - self.m2) / m2s,
        )


def _advance(f: Distribution, dt: float, params: KernelParams, quad, n: float):
    cf = q_apply(f, params, quad, truncation=n, weak=True)
    margin = dt * float(np.max(cf.q_minus)) if cf.q_minus.size else 0.0
    if margin > 1.0:
        raise StepRejectedError(f"positivity margin violated: dt * max Q- = {margin:.6g} > 1")
    new = f.values * (1.0 - dt * cf.q_minus) + dt * cf.q_plus
    return f.with_values(new), cf, margin


def euler_step(f_k: Distribution, constants: SchemeConstants, params: KernelParams, quad=None,
               dt: Optional[float] = None) -> Distribution:
    """f_{k+1} = f_k (1 - dt Q-_n(f_k)) + dt Q+_n(f_k), with dt = Delta_n unless given."""
    dt = constants.delta_n if dt is None else dt
    out, _, _ = _advance(f_k, dt, params, quad, constants.n)
    return out


def _record(f: Distribution, params: KernelParams, R0: float) -> MomentsRecord:
    return moments_record(f, params.gamma, R0)


def _resolve_dt(constants: SchemeConstants, dt: Optional[float]) -> float:
    if dt is None:
        return constants.delta_n
    if not 0 < dt <= constants.delta_n * (1 + 1e-12):
        raise InputContractError("practical time step must lie in (0, Delta_n]")
    return dt


def run_segment(f0: Distribution, params: KernelParams, n: float, quad: Optional[QuadratureSpec] = None, *,
                constants: Optional[SchemeConstants] = None, dt: Optional[float] = None,
                ceiling: Optional[float] = None, R0: Optional[float] = None,
                sample: HyperplaneSample = HyperplaneSample(), keep_states: bool = False,
                series: Optional[TimeSeries] = None, t_start: float = 0.0,
                ledger: Optional[_Ledger] = None, progress=None) -> tuple[TimeSeries, Distribution]:
    """One segment of the scheme: floor(T0 / dt) + 1 Euler steps from f0.

    ``series``, ``t_start`` and ``ledger`` let continuation append to an
    existing trajectory; drift is always measured against the run's first
    state. ``ceiling`` defaults to 100 times the sup norm of f0.
    """
    quad = quad if quad is not None else QuadratureSpec.default(params.d)
    zero = not np.any(f0.values)
    if constants is None:
        constants = SchemeConstants.trivial(n) if zero else scheme_constants(f0, params, n, sample)
    step = _resolve_dt(constants, dt)
    linf0, _ = sup_norms(f0)
    if ceiling is None:
        ceiling = 100.0 * linf0
    if R0 is None:
        R0 = r0_radius(moment(f0), linf0, params.d) if not zero else 1.0
    if ledger is None:
        ledger = _Ledger(moment(f0), momentum(f0), moment(f0, 2.0))
    if series is None:
        series = TimeSeries()
        series.times.append(t_start)
        series.records.append(_record(f0, params, R0))
        series.drift.append(ledger.drift(f0))
        series.loss_margin.append(0.0)
        series.dts.append(0.0)
        if keep_states:
            series.states = [f0]
    series.segments.append((len(series.times) - 1, constants, step, R0))
    f = f0
    t = series.times[-1]
    steps = int(math.floor(constants.t0 / step)) + 1
    for _ in range(steps):
        if zero:
            new, margin, w = f, 0.0, (0.0, 0.0, 0.0)
        else:
            new, cf, margin = _advance(f, step, params, quad, n)
            wk = cf.weak
            w = (wk["one"][0], float(max(abs(wk[f"v{k + 1}"][0]) for k in range(params.d))), wk["energy"][0])
        ledger = _Ledger(ledger.m0, ledger.m1, ledger.m2,
                         (ledger.weak[0] + step * w[0], ledger.weak[1] + step * w[1], ledger.weak[2] + step * w[2]))
        t = t + step
        f = new
        rec = _record(f, params, R0)
        series.times.append(t)
        series.records.append(rec)
        series.drift.append(ledger.drift(f))
        series.loss_margin.append(margin)
        series.dts.append(step)
        if keep_states:
            series.states.append(f)
        if progress is not None:
            progress(t, rec)
        if rec.linf > ceiling:
            series.flags["blowup"] = True
            series.t_max = t
            break
    series.final = f
    series.ledger = ledger
    return series, f


def continue_run(state: Distribution, params: KernelParams, n: float, segments: int,
                 quad: Optional[QuadratureSpec] = None, *, series: Optional[TimeSeries] = None,
                 dt_fraction: Optional[float] = None, ceiling: Optional[float] = None,
                 R0: Optional[float] = None, sample: HyperplaneSample = HyperplaneSample(),
                 keep_states: bool = False, progress=None) -> TimeSeries:
    """Run ``segments`` segments, recomputing the constants from the current state before each.

    The ceiling and the concentration radius are fixed by the first state.
    ``dt_fraction`` selects the practical step dt = fraction * Delta_n.
    """
    if segments < 1:
        raise InputContractError("segments must be >= 1")
    if series is not None and series.flags.get("blowup"):
        raise InputContractError("cannot continue a run that ended in blow-up")
    first = state if series is None or series.states is None else series.states[0]
    linf0, _ = sup_norms(first)
    ceiling = 100.0 * linf0 if ceiling is None else ceiling
    f = state
    ledger = getattr(series, "ledger", None) if series is not None else None
    t = series.times[-1] if series is not None else 0.0
    for _ in range(segments):
        zero = not np.any(f.values)
        const = SchemeConstants.trivial(n) if zero else scheme_constants(f, params, n, sample)
        dt = None if dt_fraction is None else dt_fraction * const.delta_n
        series, f = run_segment(f, params, n, quad, constants=const, dt=dt, ceiling=ceiling, R0=R0 or (
            r0_radius(moment(first), linf0, params.d) if np.any(first.values) else 1.0),
            sample=sample, keep_states=keep_states, series=series, t_start=t, ledger=ledger, progress=progress)
        ledger = series.ledger
        t = series.times[-1]
        if series.flags["blowup"]:
            break
    return series


@dataclass
class InvariantReport:
    steps: int
    positivity: bool
    half_bound: bool
    conservation: bool
    linf_bound: bool
    linf_margin: float
    pointwise_iii: bool
    hyperplane_bound: bool
    hyperplane_margin: float
    hyperplane_iii: bool
    moment_envelope: bool
    envelope_margin: float
    max_strong_drift: float
    first_violation: Optional[int] = None
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all((self.positivity, self.half_bound, self.conservation, self.linf_bound, self.pointwise_iii,
                    self.hyperplane_bound, self.hyperplane_iii, self.moment_envelope))

    def as_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "notes"}
        out["passed"] = self.passed
        return out


def verify_scheme_invariants(series: TimeSeries, f_steps, constants: Optional[SchemeConstants] = None,
                             params: KernelParams = KernelParams(), s: float = 3.0, strong_tol: float = 1e-3,
                             sample: HyperplaneSample = HyperplaneSample()) -> InvariantReport:
    """Check the a priori bounds of the scheme on every stored step (report only).

    Each segment is checked against its own constants; with ``constants`` given,
    the whole trajectory is treated as one segment.
    """
    from .inequality_lab import moment_growth_constant

    f_steps = list(f_steps)
    if constants is not None:
        segs = [(0, constants, constants.delta_n if len(series.dts) < 2 else series.dts[1], None)]
    else:
        segs = series.segments
    bounds = [s_[0] for s_ in segs] + [len(f_steps) - 1]
    rep = InvariantReport(len(f_steps) - 1, True, True, True, True, math.inf, True, True, math.inf, True, True,
                          math.inf, 0.0)

    def fail(k, name):
        if rep.first_violation is None:
            rep.first_violation = k
        rep.notes.append(f"step {k}: {name}")

    if not f_steps or not np.any(f_steps[0].values):
        for k, f in enumerate(f_steps):
            if np.any(f.values):
                rep.conservation = False
                fail(k, "zero data did not stay zero")
        return rep
    g = f_steps[0].grid
    vn = np.sqrt(g.radius2)
    f_ref = f_steps[0]
    m0, m2 = moment(f_ref), moment(f_ref, 2.0)
    p_ref = momentum(f_ref)
    p_scale = math.sqrt(m0 * m2)
    c_s = 1.1 * moment_growth_constant(s, g.d)
    for si, (start, const, dt, _) in enumerate(segs):
        end = bounds[si + 1]
        if start >= end:
            continue
        fs = f_steps[start]
        w = np.minimum(const.n ** params.gamma, 1.0 + vn ** params.gamma)
        running = np.zeros(g.size)
        hp0 = hyperplane_values(fs, sample)
        l1s0 = moment(fs, weight="L1s", s=s)
        l12 = moment(fs, weight="L1s", s=2.0)
        sup_f = max(sup_norms(f_steps[k])[0] for k in range(start, end + 1))
        rate = 2.0 * params.c_phi * c_s * params.b_infinity * (1.0 + 2.0 * sup_f) * l12
        for k in range(start, end + 1):
            f = f_steps[k]
            j = k - start
            if np.any(f.values < 0):
                rep.positivity = False
                fail(k, "negative value")
            if k > start and np.any(f.values < 0.5 * f_steps[k - 1].values * (1 - 1e-12)):
                rep.half_bound = False
                fail(k, "f_(k+1) >= f_k / 2 fails")
            dm = abs(moment(f) - m0) / m0
            de = abs(moment(f, 2.0) - m2) / m2
            dp = float(np.max(np.abs(momentum(f) - p_ref))) / p_scale
            rep.max_strong_drift = max(rep.max_strong_drift, dm, de, dp)
            if max(dm, de, dp) > strong_tol:
                rep.conservation = False
                fail(k, "strong-form conservation")
            lhs = f.values + dt * running
            marg = const.k_inf - float(np.max(lhs))
            rep.linf_margin = min(rep.linf_margin, marg)
            if marg < -1e-12 * const.k_inf:
                rep.linf_bound = False
                fail(k, "sup bound by K_inf")
            rhs3 = fs.values - const.c_L * dt * running + j * dt * const.c_inf
            if np.any(f.values > rhs3 + 1e-12 * max(const.k_inf, 1e-300)):
                rep.pointwise_iii = False
                fail(k, "pointwise growth bound")
            hp = hyperplane_values(f, sample)
            hm = const.e_inf - float(np.max(hp))
            rep.hyperplane_margin = min(rep.hyperplane_margin, hm)
            if hm < -1e-12 * const.e_inf:
                rep.hyperplane_bound = False
                fail(k, "hyperplane bound by E_inf")
            if np.any(hp > hp0 + j * dt * const.e_growth + 1e-12 * const.e_inf):
                rep.hyperplane_iii = False
                fail(k, "hyperplane growth bound")
            env = math.exp(rate * j * dt) * l1s0
            em = env - moment(f, weight="L1s", s=s)
            rep.envelope_margin = min(rep.envelope_margin, em / env)
            if em < -1e-12 * env:
                rep.moment_envelope = False
                fail(k, "weighted L1 growth envelope")
            running = running + w * f.values
    return rep


@dataclass(frozen=True)
class TwinResult:
    ratio: float
    rate: float
    times: tuple
    ratios: tuple
    perturbation_l1: float


def conserving_perturbation(f0: Distribution, size: float, shape=None) -> np.ndarray:
    """size * f0 * (q - P q), P the f0-weighted projection onto span{1, v, |v|^2}.

    Mass, momentum and energy of the perturbation vanish up to rounding.
    """
    g = f0.grid
    x = g.nodes
    if shape is None:
        q = np.cos(1.3 * x[:, 0] + 0.7) * np.sin(0.9 * x[:, 1] - 0.2) + 0.5 * np.cos(0.8 * x[:, 2])
    else:
        q = np.asarray(shape(x), float)
    basis = np.column_stack([np.ones(g.size), x, g.radius2])
    wgt = f0.values
    gram = basis.T @ (wgt[:, None] * basis)
    coef = np.linalg.solve(gram, basis.T @ (wgt * q))
    q = q - basis @ coef
    q = q / np.max(np.abs(q))
    return size * f0.values * q


def twin_run(f0: Distribution, perturbation_size: float, params: KernelParams, n: float, quad=None,
             segments: int = 1, shape=None, sign: float = 1.0) -> TwinResult:
    if not np.any(f0.values):
        return TwinResult(0.0, 0.0, (), (), 0.0)
    pert = sign * conserving_perturbation(f0, perturbation_size, shape)
    p1 = moment(f0.with_values(np.abs(pert)))
    if p1 == 0.0:
        return TwinResult(0.0, 0.0, (), (), 0.0)
    g0 = f0.with_values(f0.values + pert)
    quad = quad if quad is not None else QuadratureSpec.default(params.d)
    const = scheme_constants(f0, params, n)
    fa, fb = f0, g0
    times, ratios = [0.0], [1.0]
    t = 0.0
    for _ in range(segments):
        for _ in range(const.steps):
            fa = euler_step(fa, const, params, quad)
            fb = euler_step(fb, const, params, quad)
            t += const.delta_n
            times.append(t)
            ratios.append(moment(fa.with_values(np.abs(fa.values - fb.values))) / p1)
    rate = max((math.log(max(r, 1e-300)) / tt for tt, r in zip(times[1:], ratios[1:])), default=0.0)
    return TwinResult(float(max(ratios)), max(rate, 0.0), tuple(times), tuple(ratios), p1)


def twin_run_divergence(f0: Distribution, perturbation_size: float, params: KernelParams, n: float,
                        quad=None, segments: int = 1) -> float:
    """max over time of ||f - g||_1 / ||f0 - g0||_1 for a conserving perturbation of f0."""
    return twin_run(f0, perturbation_size, params, n, quad, segments).ratio
