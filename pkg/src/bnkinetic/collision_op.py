"""Gain, loss and full collision operators on the velocity grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import _kernels
from .errors import InputContractError, UnsupportedRegimeError
from .grid_state import Distribution, interpolate
from .kernel_geometry import CollisionTriple, KernelParams, SphereQuadrature, sphere_quadrature


@dataclass(frozen=True)
class QuadratureSpec:
    """Sphere rule for the sigma integral; the v* integral is the midpoint rule over all nodes.

    Interpolation of f at post-collision velocities is always multilinear.
    """

    sphere: SphereQuadrature
    vstar_rule: str = "midpoint"
    interpolation: str = "multilinear"

    @classmethod
    def default(cls, d: int = 3, order: int = 16) -> "QuadratureSpec":
        return cls(sphere_quadrature(d, order))

    def weighted(self, params: KernelParams) -> np.ndarray:
        """Sphere weights times b at the polar cosine of each reference node."""
        if self.sphere.d != params.d:
            raise InputContractError("quadrature dimension does not match the kernel dimension")
        return np.ascontiguousarray(self.sphere.weights * params.angular(self.sphere.nodes[:, 0]))


@dataclass(frozen=True)
class CollisionField:
    grid: object
    q_plus: np.ndarray
    q_minus: np.ndarray
    q_total: np.ndarray
    weak: Optional[dict] = field(default=None, compare=False)


def _trunc(truncation: Optional[float]) -> float:
    if truncation is None:
        return -1.0
    if not truncation > 0:
        raise InputContractError("truncation level must be positive")
    return float(truncation)


def _resolve_quad(quad: Optional[QuadratureSpec], params: KernelParams) -> QuadratureSpec:
    return quad if quad is not None else QuadratureSpec.default(params.d)


def gain_loss_at(f: Distribution, points, params: KernelParams, quad=None, truncation=None, f_at=None):
    """(Q+, Q-) at arbitrary velocities; f(v) defaults to the interpolant."""
    g = f.grid
    quad = _resolve_quad(quad, params)
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, g.d))
    if f_at is None:
        f_at = _kernels.interp_many(f.values, g.d, g.N, float(g.V), g.h, pts)
    f_at = np.ascontiguousarray(np.asarray(f_at, dtype=float).reshape(-1))
    return _kernels.gain_loss(
        f.values, g.d, g.N, float(g.V), g.h, g.nodes, pts, f_at,
        np.ascontiguousarray(quad.sphere.nodes), quad.weighted(params),
        float(params.c_phi), float(params.gamma), _trunc(truncation),
    )


def _scalar_or_array(out: np.ndarray):
    return float(out[0]) if out.size == 1 else out


def q_minus(f: Distribution, v, params: KernelParams, quad=None, truncation=None):
    """Loss operator at v (one point or an array of points)."""
    return _scalar_or_array(gain_loss_at(f, v, params, quad, truncation)[1])


def q_plus(f: Distribution, v, params: KernelParams, quad=None, truncation=None):
    """Gain operator at v (one point or an array of points)."""
    return _scalar_or_array(gain_loss_at(f, v, params, quad, truncation)[0])


STANDARD_WEAK = ("one", "v1", "v2", "v3", "energy")


def q_apply(f: Distribution, params: KernelParams, quad=None, truncation=None, weak: bool = True) -> CollisionField:
    """Gain and loss at every node; Q = Q+ - f Q-.

    For d = 3 the weak-form sums of the collision invariants are produced
    in the same pass and attached under ``weak`` as ``name -> (value, magnitude)``.
    """
    g = f.grid
    quad = _resolve_quad(quad, params)
    if params.d != g.d:
        raise InputContractError("kernel and grid dimensions differ")
    wb = quad.weighted(params)
    sig = np.ascontiguousarray(quad.sphere.nodes)
    tr = _trunc(truncation)
    weak_out = None
    if g.d == 3:
        qp, qm, ws, ms = _kernels.collide_grid3(
            f.values, g.N, float(g.V), g.h, sig, wb, float(params.c_phi), float(params.gamma), tr, weak
        )
        if weak:
            weak_out = {name: (float(ws[k]), float(ms[k])) for k, name in enumerate(STANDARD_WEAK)}
    else:
        qp, qm = _kernels.gain_loss(
            f.values, g.d, g.N, float(g.V), g.h, g.nodes, g.nodes, f.values, sig, wb,
            float(params.c_phi), float(params.gamma), tr,
        )
        if weak:
            fns = [TestFunction.one()] + [TestFunction.component(k) for k in range(g.d)] + [TestFunction.energy()]
            names = ["one"] + [f"v{k + 1}" for k in range(g.d)] + ["energy"]
            res = _weak_builtin(f, fns, params, quad, truncation)
            weak_out = {n: (r.value, r.magnitude) for n, r in zip(names, res)}
    qp = np.asarray(qp)
    qm = np.asarray(qm)
    return CollisionField(g, qp, qm, qp - f.values * qm, weak_out)


@dataclass(frozen=True)
class TestFunction:
    """Test function psi(v) for the weak form.

    Built-in kinds are evaluated inside the compiled loop; ``func`` wraps an
    arbitrary vectorized callable (rows of shape (..., d) -> values).
    """

    kind: int
    param: float = 0.0
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""

    @classmethod
    def one(cls):
        return cls(0, label="1")

    @classmethod
    def component(cls, k: int):
        return cls(1, float(k), label=f"v{k + 1}")

    @classmethod
    def energy(cls):
        return cls(2, label="|v|^2")

    @classmethod
    def radial_power(cls, p: float):
        if p < 0:
            raise InputContractError("radial power must be non-negative")
        return cls(3, float(p), label=f"|v|^{p:g}")

    @classmethod
    def from_callable(cls, fn, label: str = "callable"):
        return cls(-1, func=fn, label=label)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.func is not None:
            return np.asarray(self.func(x), dtype=float)
        if self.kind == 0:
            return np.ones(x.shape[:-1])
        if self.kind == 1:
            return x[..., int(self.param)]
        r2 = np.sum(x * x, axis=-1)
        if self.kind == 2:
            return r2
        return r2 ** (0.5 * self.param)


@dataclass(frozen=True)
class WeakFormResult:
    value: float
    magnitude: float

    @property
    def relative(self) -> float:
        return abs(self.value) / self.magnitude if self.magnitude > 0 else 0.0


def _weak_builtin(f, fns: Sequence[TestFunction], params, quad, truncation):
    g = f.grid
    kinds = np.array([t.kind for t in fns], dtype=np.int64)
    pars = np.array([t.param for t in fns], dtype=float)
    out, mag = _kernels.weak_terms(
        f.values, g.d, g.N, float(g.V), g.h, g.nodes, np.ascontiguousarray(quad.sphere.nodes),
        quad.weighted(params), float(params.c_phi), float(params.gamma), _trunc(truncation), kinds, pars,
    )
    scale = 0.5 * g.cell_volume ** 2
    return [
        WeakFormResult(scale * math.fsum(out[:, k].tolist()), scale * math.fsum(mag[:, k].tolist()))
        for k in range(len(fns))
    ]


def _rotation_matrix(ghat: np.ndarray) -> np.ndarray:
    d = ghat.size
    out = np.empty((d, d))
    buf = np.empty(d)
    for m in range(d):
        e = np.zeros(d)
        e[m] = 1.0
        _kernels._rotate(ghat, e, buf, d)
        out[:, m] = buf
    return out


def _weak_callable(f, psi: TestFunction, params, quad, truncation) -> WeakFormResult:
    g = f.grid
    nodes = g.nodes
    vals = f.values
    wb = quad.weighted(params)
    ref = quad.sphere.nodes
    tr = _trunc(truncation)
    psi_nodes = psi(nodes)
    total = []
    mag = []
    for i in np.nonzero(vals)[0]:
        diff = nodes[i] - nodes
        gn = np.linalg.norm(diff, axis=1)
        keep = vals > 0
        if params.gamma > 0:
            keep &= gn > 0
        for j in np.nonzero(keep)[0]:
            ghat = diff[j] / gn[j] if gn[j] > 0 else np.eye(g.d)[0]
            sig = ref @ _rotation_matrix(ghat).T
            c = 0.5 * (nodes[i] + nodes[j])
            x1 = c + 0.5 * gn[j] * sig
            x2 = c - 0.5 * gn[j] * sig
            fp = _kernels.interp_many(vals, g.d, g.N, float(g.V), g.h, np.ascontiguousarray(x1))
            fs = _kernels.interp_many(vals, g.d, g.N, float(g.V), g.h, np.ascontiguousarray(x2))
            r = gn[j] if tr <= 0 else min(tr, gn[j])
            phi = params.c_phi * (1.0 if params.gamma == 0 else r ** params.gamma)
            q = phi * wb * vals[i] * vals[j] * (1.0 + fp + fs)
            a1, a2 = psi(x1), psi(x2)
            total.append(float(np.dot(q, a2 + a1 - psi_nodes[j] - psi_nodes[i])))
            mag.append(float(np.dot(np.abs(q), np.abs(a1) + np.abs(a2) + abs(psi_nodes[j]) + abs(psi_nodes[i]))))
    scale = 0.5 * g.cell_volume ** 2
    return WeakFormResult(scale * math.fsum(total), scale * math.fsum(mag))


def weak_form(f: Distribution, psi: Union[TestFunction, Callable], params: KernelParams, quad=None,
              truncation=None) -> WeakFormResult:
    """(C_Phi/2) sum over (v, v*, sigma) of q(f) [psi'* + psi' - psi* - psi].

    The returned magnitude is the same sum with every term replaced by its
    absolute value, the natural scale for judging cancellation.
    """
    quad = _resolve_quad(quad, params)
    if not isinstance(psi, TestFunction):
        psi = TestFunction.from_callable(psi)
    if psi.func is None:
        return _weak_builtin(f, [psi], params, quad, truncation)[0]
    return _weak_callable(f, psi, params, quad, truncation)


def weak_form_many(f: Distribution, fns: Sequence[TestFunction], params, quad=None, truncation=None):
    quad = _resolve_quad(quad, params)
    return _weak_builtin(f, list(fns), params, quad, truncation)


def q_plus_carleman(f: Distribution, v, params: KernelParams, truncation=None, f_at=None) -> float:
    """Gain operator through the hyperplane (Carleman) representation.

    The v' integral is a lattice sum over v + h k, k != 0, which leaves out
    the ball |v' - v| < h/2 with no correction; the plane integral is a
    lattice sum with spacing h. The post-collision partner needed by the
    cubic factor is v* = v' + v'* - v.
    """
    if params.gamma > params.d - 2:
        raise UnsupportedRegimeError("the hyperplane representation needs gamma <= d - 2")
    g = f.grid
    pts = np.ascontiguousarray(np.asarray(v, dtype=float).reshape(-1, g.d))
    if f_at is None:
        f_at = _kernels.interp_many(f.values, g.d, g.N, float(g.V), g.h, pts)
    f_at = np.ascontiguousarray(np.asarray(f_at, dtype=float).reshape(-1))
    ang = params.angular
    out = _kernels.carleman_gain(
        f.values, g.d, g.N, float(g.V), g.h, pts, f_at,
        np.ascontiguousarray(ang.xs), np.ascontiguousarray(ang.bs),
        float(params.c_phi), float(params.gamma), _trunc(truncation),
    )
    return _scalar_or_array(out)


def bose_occupation(beta: float, mu: float, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    x = 0.5 * beta * (np.sum(v * v, axis=-1) - mu)
    return 1.0 / np.expm1(x)


def detailed_balance_terms(beta: float, mu: float, triple: CollisionTriple):
    """Return (residual, scale) with scale = max(f f*, f' f'*)."""
    if not beta > 0:
        raise InputContractError("beta must be positive")
    if not mu < 0:
        raise InputContractError("mu must be negative")
    f, fs, fp, fps = (
        float(bose_occupation(beta, mu, x)) for x in (triple.v, triple.v_star, triple.v_prime, triple.v_star_prime)
    )
    res = fp * fps * (1.0 + f + fs) - f * fs * (1.0 + fp + fps)
    return res, max(f * fs, fp * fps)


def detailed_balance_residual(beta: float, mu: float, triple: CollisionTriple) -> float:
    """f'f'*(1+f+f*) - ff*(1+f'+f'*) for the Bose-Einstein occupation."""
    return detailed_balance_terms(beta, mu, triple)[0]
