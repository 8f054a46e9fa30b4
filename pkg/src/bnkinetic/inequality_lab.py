"""Povzner decomposition, moment weights, and numerical checks of the auxiliary lemmas.

Every constant reported here is an empirical fit over a recorded sample,
not a certified bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import InputContractError
from .grid_state import Distribution, moment, sup_norms
from .kernel_geometry import AngularKernel, SphereQuadrature, sphere_area, sphere_quadrature


def _const_F(v, vs, sig):
    return np.ones(sig.shape[:-1])


@dataclass(frozen=True)
class PovznerCase:
    """Weight psi(x) of x = |v|^2, multiplier F and angular kernel b.

    ``tag`` is ``"i"`` (x^(1+alpha), alpha > 0), ``"ii"`` (x^(1+alpha),
    -1 < alpha < 0), ``"iii"`` (x phi(x) with phi concave increasing) or
    ``"affine"`` (collision invariants).
    """

    tag: str
    psi: Callable[[np.ndarray], np.ndarray]
    alpha: float = 0.0
    phi: Optional[Callable[[np.ndarray], np.ndarray]] = None
    F: Callable = _const_F
    a: float = 1.0
    F_upper: float = 1.0
    angular: AngularKernel = field(default_factory=AngularKernel.const)
    eps: float = 0.5
    label: str = ""

    def __post_init__(self):
        if self.tag not in ("i", "ii", "iii", "affine"):
            raise InputContractError(f"unknown Povzner case {self.tag!r}")
        if not 0 < self.a <= self.F_upper:
            raise InputContractError("F bounds must satisfy 0 < a <= upper")

    @classmethod
    def power(cls, alpha: float, **kw) -> "PovznerCase":
        if alpha > 0:
            tag = "i"
        elif -1 < alpha < 0:
            tag = "ii"
        else:
            raise InputContractError("power case needs alpha > 0 or -1 < alpha < 0")
        p = 1.0 + alpha
        return cls(tag, lambda x: np.power(x, p), alpha=alpha, label=f"x^{p:g}", **kw)

    @classmethod
    def convex_xphi(cls, phi: Callable, eps: float = 0.5, label: str = "x*phi(x)", **kw) -> "PovznerCase":
        return cls("iii", lambda x: x * phi(x), phi=phi, eps=eps, label=label, **kw)

    @classmethod
    def affine(cls, c0: float = 0.0, c1: float = 1.0, **kw) -> "PovznerCase":
        return cls("affine", lambda x: c0 + c1 * np.asarray(x, float), label=f"{c0:g}+{c1:g}x", **kw)


def _rotated_rules(g: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Rule nodes rotated so that e1 maps to each row of g (same isometry as the compiled kernels)."""
    S, d = g.shape
    gn = np.linalg.norm(g, axis=1)
    ghat = np.where(gn[:, None] > 0, g / np.where(gn > 0, gn, 1.0)[:, None], np.eye(d)[0])
    # lexicographic sign of each direction
    nz = ghat != 0.0
    first = np.argmax(nz, axis=1)
    lexpos = ghat[np.arange(S), first] >= 0.0
    e1 = np.zeros(d)
    e1[0] = 1.0
    w = np.where(lexpos[:, None], e1 + ghat, e1 - ghat)
    ww = np.sum(w * w, axis=1)
    dots = np.einsum("md,sd->sm", ref, w)
    refl = ref[None, :, :] - (2.0 * dots / ww[:, None])[:, :, None] * w[:, None, :]
    return np.where(lexpos[:, None, None], -refl, refl)


@dataclass(frozen=True)
class _PairTerms:
    K: np.ndarray
    Ht: np.ndarray
    chi: np.ndarray
    scale: np.ndarray


def _pair_terms(v: np.ndarray, vs: np.ndarray, case: PovznerCase, quad: SphereQuadrature) -> _PairTerms:
    v = np.atleast_2d(np.asarray(v, float))
    vs = np.atleast_2d(np.asarray(vs, float))
    g = v - vs
    gn = np.linalg.norm(g, axis=1)
    sig = _rotated_rules(g, quad.nodes)
    cos = quad.nodes[:, 0]
    w = quad.weights
    c = 0.5 * (v + vs)
    vp = c[:, None, :] + 0.5 * gn[:, None, None] * sig
    vsp = c[:, None, :] - 0.5 * gn[:, None, None] * sig
    x, xs = np.sum(v * v, axis=1), np.sum(vs * vs, axis=1)
    xp, xsp = np.sum(vp * vp, axis=2), np.sum(vsp * vsp, axis=2)
    psi = case.psi
    p, ps = psi(x), psi(xs)
    Fp = case.F(v, vs, sig)
    Fm = case.F(v, vs, -sig)
    b_t = case.angular(cos)
    b_pi = case.angular(-cos)
    bracket = psi(xsp) + psi(xp) - ps[:, None] - p[:, None]
    K = np.sum(w * Fp * b_t * bracket, axis=1)
    beta = 0.5 * (1.0 + cos)
    Y = beta * x[:, None] + (1.0 - beta) * xs[:, None]
    jensen = beta * p[:, None] + (1.0 - beta) * ps[:, None] - psi(Y)
    Ht = np.sum(w * (b_t * Fp + b_pi * Fm) * jensen, axis=1)
    r, rs = np.sqrt(x), np.sqrt(xs)
    chi = 1.0 - ((0.5 * r < rs) & (rs < 2.0 * r)).astype(float)
    scale = np.sum(w * np.abs(Fp * b_t) * (np.abs(psi(xsp)) + np.abs(psi(xp)) + np.abs(ps)[:, None] + np.abs(p)[:, None]), axis=1)
    return _PairTerms(K, Ht, chi, scale)


def k_psi(v, v_star, case: PovznerCase, quad: Optional[SphereQuadrature] = None) -> float:
    """Sum over the sphere rule of F b [psi(|v'*|^2) + psi(|v'|^2) - psi(|v*|^2) - psi(|v|^2)]."""
    quad = quad if quad is not None else sphere_quadrature(len(v), 16)
    return float(_pair_terms(v, v_star, case, quad).K[0])


def _augmentation(v, vs, case: PovznerCase, kappa: float) -> np.ndarray:
    v = np.atleast_2d(v)
    vs = np.atleast_2d(vs)
    if case.tag != "i" or kappa == 0.0:
        return np.zeros(v.shape[0])
    x, xs = np.sum(v * v, axis=1), np.sum(vs * vs, axis=1)
    r, rs = np.sqrt(x), np.sqrt(xs)
    chi = 1.0 - ((0.5 * r < rs) & (rs < 2.0 * r)).astype(float)
    return kappa * (x + xs) ** (1.0 + case.alpha) * chi


def povzner_split(v, v_star, case: PovznerCase, quad: Optional[SphereQuadrature] = None,
                  kappa: float = 0.0) -> tuple[float, float]:
    """(G, H) with H the Jensen defect term and G = K + H.

    For tag "i" a non-negative ``kappa`` adds kappa (|v|^2 + |v*|^2)^(1+alpha) chi to H.
    """
    v = np.asarray(v, float)
    vs = np.asarray(v_star, float)
    if np.linalg.norm(v - vs) == 0.0:
        raise InputContractError("degenerate pair v = v*")
    if kappa < 0:
        raise InputContractError("kappa must be non-negative")
    quad = quad if quad is not None else sphere_quadrature(v.size, 16)
    t = _pair_terms(v, vs, case, quad)
    H = t.Ht[0] + _augmentation(v, vs, case, kappa)[0]
    return float(t.K[0] + H), float(H)


@dataclass
class PovznerReport:
    case: str
    samples: int
    seed: int
    c_g: float
    c_h: float
    c_h_tilde: float
    kappa: float
    sign_violations: int
    identity_error: float
    affine_error: float
    g_upper_xy: float = float("nan")
    bounds_ok: bool = True

    @property
    def passed(self) -> bool:
        ok = self.sign_violations == 0 and self.identity_error <= 1e-12 and self.affine_error <= 1e-12
        ok = ok and math.isfinite(self.c_g) and self.bounds_ok
        if self.case in ("i", "ii", "iii"):
            ok = ok and self.c_h > 0
        return ok

    def as_dict(self) -> dict:
        return dict(self.__dict__, passed=self.passed)


def _sample_pairs(n: int, d: int, rng: np.random.Generator, rmin=0.1, rmax=20.0):
    def draw():
        u = rng.standard_normal((n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return u * rng.uniform(rmin, rmax, n)[:, None]

    return draw(), draw()


def _shapes(v, vs, case: PovznerCase):
    r, rs = np.linalg.norm(v, axis=1), np.linalg.norm(vs, axis=1)
    if case.tag in ("i", "ii"):
        a = abs(case.alpha)
        sg = a * (r * rs) ** (1.0 + case.alpha)
        sh = a * (r ** (2 + 2 * case.alpha) + rs ** (2 + 2 * case.alpha))
    elif case.tag == "iii":
        sg = r * rs * (1.0 + case.phi(r * r)) * (1.0 + case.phi(rs * rs))
        sh = r ** (2 - case.eps) + rs ** (2 - case.eps)
    else:
        sg = r * rs
        sh = np.ones_like(r)
    return sg, sh


def check_povzner(case: PovznerCase, sample_count: int = 10_000, seed: int = 0, d: int = 3,
                  order: int = 16, chunk: int = 500) -> PovznerReport:
    """Sample (v, v*) with radii in [0.1, 20] and fit the decomposition constants."""
    if sample_count < 1:
        raise InputContractError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    quad = sphere_quadrature(d, order)
    V, VS = _sample_pairs(sample_count, d, rng)
    K = np.empty(sample_count)
    Ht = np.empty(sample_count)
    chi = np.empty(sample_count)
    scale = np.empty(sample_count)
    for s in range(0, sample_count, chunk):
        t = _pair_terms(V[s:s + chunk], VS[s:s + chunk], case, quad)
        K[s:s + chunk], Ht[s:s + chunk], chi[s:s + chunk], scale[s:s + chunk] = t.K, t.Ht, t.chi, t.scale
    # spot-check the declared F bounds on the sample
    sig = _rotated_rules(V[:50] - VS[:50], quad.nodes)
    Fs = case.F(V[:50], VS[:50], sig)
    bounds_ok = bool(np.all(Fs >= case.a * (1 - 1e-12)) and np.all(Fs <= case.F_upper * (1 + 1e-12)))

    sg, sh = _shapes(V, VS, case)
    supp = chi > 0
    htol = 1e-12 * scale
    if case.tag in ("i", "iii"):
        violations = int(np.sum(Ht < -htol))
        ch_tilde = float(np.min(Ht[supp] / sh[supp])) if supp.any() else float("nan")
    elif case.tag == "ii":
        violations = int(np.sum(Ht > htol))
        ch_tilde = float(np.min(-Ht[supp] / sh[supp])) if supp.any() else float("nan")
    else:
        violations = 0
        ch_tilde = float("nan")
    kappa = 0.5 * ch_tilde if case.tag == "i" and math.isfinite(ch_tilde) else 0.0
    H = Ht + _augmentation(V, VS, case, kappa)
    G = K + H
    identity = float(np.max(np.abs((G - H) - K) / np.maximum(scale, 1e-300)))
    if case.tag == "ii":
        c_h = float(np.min(-H[supp] / sh[supp])) if supp.any() else float("nan")
    elif case.tag in ("i", "iii"):
        c_h = float(np.min(H[supp] / sh[supp])) if supp.any() else float("nan")
    else:
        c_h = float("nan")
    c_g = float(np.max(np.abs(G) / sg))
    g_upper = float(np.max(G / (np.linalg.norm(V, axis=1) * np.linalg.norm(VS, axis=1))))
    aff = PovznerCase.affine(1.0, 1.0, angular=case.angular)
    aff_err = 0.0
    for s in range(0, min(sample_count, 2000), chunk):
        t = _pair_terms(V[s:s + chunk], VS[s:s + chunk], aff, quad)
        aff_err = max(aff_err, float(np.max(np.abs(t.K) / t.scale)))
    return PovznerReport(case.tag, sample_count, seed, c_g, c_h, ch_tilde, kappa, violations, identity, aff_err,
                         g_upper, bounds_ok)


def moment_growth_constant(s: float, d: int = 3, samples: int = 20_000, seed: int = 0, order: int = 8) -> float:
    """Fitted C_s in |v'|^s + |v'*|^s - |v|^s - |v*|^s <= C_s (|v|^(s-1)|v*| + |v||v*|^(s-1)) / 2."""
    if not s > 2:
        raise InputContractError("the moment-growth constant needs s > 2")
    rng = np.random.default_rng(seed)
    quad = sphere_quadrature(d, order)
    V, VS = _sample_pairs(samples, d, rng, 0.01, 20.0)
    case = PovznerCase("affine", lambda x: np.power(x, 0.5 * s))
    best = 0.0
    for c in range(0, samples, 1000):
        v, vs = V[c:c + 1000], VS[c:c + 1000]
        g = v - vs
        gn = np.linalg.norm(g, axis=1)
        sig = _rotated_rules(g, quad.nodes)
        cen = 0.5 * (v + vs)
        vp = cen[:, None, :] + 0.5 * gn[:, None, None] * sig
        vsp = cen[:, None, :] - 0.5 * gn[:, None, None] * sig
        r, rs = np.linalg.norm(v, axis=1), np.linalg.norm(vs, axis=1)
        gain = case.psi(np.sum(vp ** 2, axis=2)) + case.psi(np.sum(vsp ** 2, axis=2))
        delta = gain - (r ** s + rs ** s)[:, None]
        shape = 0.5 * (r ** (s - 1) * rs + r * rs ** (s - 1))
        best = max(best, float(np.max(delta / shape[:, None])))
    return best


@dataclass(frozen=True)
class MWReport:
    phi_zero: float
    increasing: bool
    concave: bool
    unbounded: bool
    limit_half: float
    growth_at_1e6: float
    growth_monotone: bool
    ladder: tuple

    @property
    def passed(self) -> bool:
        return self.phi_zero == 0.0 and self.increasing and self.concave and self.unbounded and self.growth_monotone


def mw_weight(alphas: Sequence[float] = (0.5, 0.1, 0.9), epsilons: Sequence[float] = (0.1, 0.5)):
    """psi(x) = x log(1 + x) with phi = log(1 + x), plus a numerical check of its properties."""
    phi = np.log1p

    def psi(x):
        x = np.asarray(x, float)
        return x * np.log1p(x)

    xs = np.linspace(0.0, 1e6, 200_001)
    ph = phi(xs)
    increasing = bool(np.all(np.diff(ph) > 0))
    logx = np.geomspace(1e-3, 1e6, 2000)
    # concavity on a non-uniform grid: chord slopes are non-increasing
    slopes = np.diff(phi(logx)) / np.diff(logx)
    concave = bool(np.all(np.diff(slopes) <= 1e-15 * np.abs(slopes[1:])))
    unbounded = bool(phi(1e300) > 600)
    ladder = np.geomspace(1e2, 1e12, 11)
    mono = True
    for al in alphas:
        for ep in epsilons:
            vals = (phi(ladder) - phi(al * ladder)) * ladder ** ep
            mono = mono and bool(np.all(np.diff(vals) > 0))
    lim = float(phi(1e12) - phi(0.5e12))
    growth = float((phi(1e6) - phi(0.5e6)) * 1e6 ** 0.1)
    return psi, MWReport(float(phi(0.0)), increasing, concave, unbounded, lim, growth, mono, tuple(ladder.tolist()))


def blowup_rate_fit(series=None, times=None, values=None, t_window: Optional[float] = None,
                    min_samples: int = 3) -> tuple[float, float]:
    """Least-squares fit log M = log C + e log t over the early window.

    Takes a TimeSeries (uses its M_{2+gamma} records) or explicit arrays.
    """
    if series is not None:
        times = np.asarray(series.times, float)
        values = np.asarray([r.m2_plus_gamma for r in series.records], float)
    t = np.asarray(times, float)
    m = np.asarray(values, float)
    mask = (t > 0) & (m > 0)
    if t_window is not None:
        mask &= t <= t_window
    if int(mask.sum()) < min_samples:
        raise InputContractError("insufficient early samples for the rate fit")
    A = np.vstack([np.ones(mask.sum()), np.log(t[mask])]).T
    coef, *_ = np.linalg.lstsq(A, np.log(m[mask]), rcond=None)
    return float(math.exp(coef[0])), float(coef[1])


@dataclass
class FitReport:
    name: str
    constant: float
    samples: int
    detail: dict = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.constant) and self.constant > 0


def _integration_exponent(alpha, s1, s2, d):
    return min(alpha, s1 + alpha * (s2 - s1) / d)


def riesz_potential(f: Distribution, pts: np.ndarray, alpha: float) -> np.ndarray:
    """h^d sum f_j |v - v_j|^-alpha, the cells within h/2 of v integrated exactly over a ball."""
    g = f.grid
    pts = np.atleast_2d(pts)
    out = np.empty(len(pts))
    rho = 0.5 * g.h
    ball = sphere_area(g.d) * rho ** (g.d - alpha) / (g.d - alpha)
    for k, p in enumerate(pts):
        dist = np.sqrt(np.sum((g.nodes - p) ** 2, axis=1))
        near = dist < rho
        w = np.zeros_like(dist)
        far = ~near
        w[far] = g.cell_volume / dist[far] ** alpha if alpha > 0 else g.cell_volume
        w[near] = ball if alpha > 0 else g.cell_volume
        out[k] = math.fsum((w * f.values).tolist())
    return out


def check_integration_lemma(f: Distribution, alpha: float, s1: float, s2: float, samples: int = 64,
                            seed: int = 0, vmax: float = 20.0) -> FitReport:
    """Fit C in (1+|v|)^b int f(v*)|v - v*|^-alpha dv* <= C (||f||_{L1_s1} + ||f||_{Linf_s2})."""
    d = f.grid.d
    if not s2 - s1 < d:
        raise InputContractError("need s2 - s1 < d")
    if not 0 <= alpha < d:
        raise InputContractError("need 0 <= alpha < d")
    b = _integration_exponent(alpha, s1, s2, d)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((samples, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    radii = np.linspace(0.0, vmax, samples)
    pts = u * radii[:, None]
    lhs = riesz_potential(f, pts, alpha)
    norm = moment(f, weight="L1s", s=s1) + sup_norms(f, s2)[1]
    ratio = lhs * (1.0 + radii) ** b / norm
    return FitReport("integration", float(np.max(ratio)), samples,
                     {"b": b, "argmax_radius": float(radii[np.argmax(ratio)]), "norm": norm})


def sphere_potential(rho: float, r: float, alpha: float, d: int, tol: float = 1e-12) -> float:
    """Integral over omega in S^(d-1) of |(v - a) - r omega|^-alpha with |v - a| = rho."""
    if alpha >= d - 1 and abs(rho - r) <= 1e-15 * r:
        # on the sphere the integrand behaves like theta^(d-2-alpha): divergent here
        return math.inf

    if abs(rho - r) <= 1e-15 * r:
        # factor out t^(d-2-alpha) and let the algebraic weight carry it
        e = d - 2.0 - alpha

        def smooth(t):
            if t == 0.0:
                return r ** -alpha
            return (2.0 * r * math.sin(0.5 * t)) ** -alpha * math.sin(t) ** (d - 2) / t ** e

        val, _ = integrate.quad(smooth, 0.0, math.pi, weight="alg", wvar=(e, 0.0), epsabs=0.0, epsrel=tol, limit=400)
        return sphere_area(d - 1) * val

    def integrand(t):
        q = rho * rho + r * r - 2.0 * r * rho * math.cos(t)
        return q ** (-0.5 * alpha) * math.sin(t) ** (d - 2)

    val, _ = integrate.quad(integrand, 0.0, math.pi, epsabs=0.0, epsrel=tol, limit=400)
    return sphere_area(d - 1) * val


def check_sphere_bound(a, r: float, alpha: float, d: int = 3, samples: int = 41, tol: float = 1e-10) -> FitReport:
    """Fit C_{d,alpha} = sup r^alpha int |v - v1|^-alpha d omega over sampled v, both regimes."""
    if not 0 <= alpha <= d - 1:
        raise InputContractError("need 0 <= alpha <= d - 1")
    a = np.asarray(a, float)
    # distances |v - a| / r covering the near regime [1/2, 3/2] (including 1) and the far one
    near = np.linspace(0.5, 1.5, samples)
    far = np.concatenate([np.linspace(0.0, 0.5, samples // 2, endpoint=False), np.geomspace(1.5, 20.0, samples // 2)])
    c_near = max(sphere_potential(x * r, r, alpha, d, tol) * r ** alpha for x in near)
    c_far = max(sphere_potential(x * r, r, alpha, d, tol) * r ** alpha for x in far)
    return FitReport("sphere", max(c_near, c_far), len(near) + len(far),
                     {"c_near": c_near, "c_far": c_far, "area": sphere_area(d)})


def sphere_mollifier_mass(n: float, dist: float, r: float, d: int) -> float:
    """r^-(d-2) times the integral over S_r(a) of the Gaussian mollifier of a plane at distance ``dist`` from a."""
    c = math.sqrt(n / (2.0 * math.pi))
    pk = -dist / r
    pts = [pk] if -1 < pk < 1 else None

    def integrand(x):
        return math.exp(-0.5 * n * (dist + r * x) ** 2) * (1.0 - x * x) ** (0.5 * (d - 3))

    val, _ = integrate.quad(integrand, -1.0, 1.0, points=pts, epsabs=0.0, epsrel=1e-12, limit=400)
    return r * sphere_area(d - 1) * c * val


def check_delta_concentration(plane_normal, plane_offset: float, a, r: float,
                              n_ladder: Sequence[float] = tuple(10.0 ** k for k in range(0, 7))):
    """(sup over the ladder, C_d estimate); for d = 3 the estimate is 2 pi after checking the sup."""
    nrm = np.asarray(plane_normal, float)
    d = nrm.size
    if d < 3:
        raise InputContractError("need d >= 3")
    nrm = nrm / np.linalg.norm(nrm)
    dist = float(np.dot(nrm, np.asarray(a, float)) - plane_offset)
    vals = [sphere_mollifier_mass(n, dist, r, d) for n in n_ladder]
    sup = float(max(vals))
    if d == 3:
        if sup > 2.0 * math.pi * 1.05:
            raise AssertionError(f"sphere mollifier mass {sup} exceeds 2 pi (1 + 5%)")
        return sup, 2.0 * math.pi
    return sup, 1.1 * sup


def geometric_constant(d: int) -> float:
    """The constant C_d bounding mollified plane masses on spheres."""
    if d == 3:
        return 2.0 * math.pi
    best = 0.0
    for off in (0.0, 0.5, 0.9, 0.99):
        s, _ = check_delta_concentration(np.eye(d)[0], 0.0, off * np.eye(d)[0], 1.0)
        best = max(best, s)
    return 1.1 * best


@dataclass(frozen=True)
class DecayODEReport:
    checked: int
    skipped: int
    min_margin: float
    max_oracle_error: float
    holds: bool


def check_decay_ode(C1: float, C2: float, C3: float, alpha: float, beta: float, v_samples, T: float,
                    psi0: float = 1.0, n_times: int = 200) -> DecayODEReport:
    """Integrate the extremal linear ODE and test the weighted bound at every sampled (t, |v|)."""
    if not (C1 > 0 and C2 > 0 and C3 >= 0):
        raise InputContractError("need C1, C2 > 0 and C3 >= 0")
    thr = (2.0 * C2 / C1) ** (1.0 / alpha) - 1.0
    ts = np.linspace(0.0, T, n_times)
    margin = math.inf
    err = 0.0
    checked = skipped = 0
    for vn in np.atleast_1d(np.asarray(v_samples, float)):
        if vn < thr - 1e-12:
            skipped += 1
            continue
        w = 1.0 + vn
        lam = C1 * w ** alpha - C2
        src = C3 * w ** (-beta)
        sol = integrate.solve_ivp(lambda t, y: -lam * y + src, (0.0, T), [psi0], method="Radau",
                                  t_eval=ts, rtol=1e-11, atol=1e-14, jac=lambda t, y: [[-lam]])
        if not sol.success:
            raise RuntimeError(f"ODE integration failed: {sol.message}")
        y = sol.y[0]
        exact = np.exp(-lam * ts) * psi0 + src / lam * -np.expm1(-lam * ts)
        err = max(err, float(np.max(np.abs(y - exact)) / max(psi0, src / lam, 1e-300)))
        weight = w ** (alpha + beta)
        bound = weight * psi0 + 2.0 * C3 / C1
        margin = min(margin, float(np.min(bound - weight * y)))
        checked += 1
    return DecayODEReport(checked, skipped, margin, err, bool(checked == 0 or margin >= -1e-10 * (1 + psi0)))
