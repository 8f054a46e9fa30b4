"""Collision geometry, hard-potential kernel and sphere quadrature rules.

Velocities are numpy arrays of length ``d``. The pre-collision pair
``(v, v*)`` and a unit vector ``sigma`` determine the post-collision pair

    v'  = (v + v*)/2 + |v - v*| sigma / 2
    v'* = (v + v*)/2 - |v - v*| sigma / 2

and ``cos(theta) = <(v - v*)/|v - v*|, sigma>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from .errors import DegenerateDirectionError, InputContractError, InvalidKernelError

UNIT_TOL = 1e-12
_TABLE_SAMPLES = 1025


def sphere_area(d: int) -> float:
    """Surface area |S^{d-1}| of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True, eq=False)
class AngularKernel:
    """Angular part b(cos theta) of the collision kernel.

    Either a constant, or a table of ``(cos theta, b)`` knots covering
    [-1, 1] with piecewise-linear interpolation. ``func`` optionally keeps
    the exact function a table was sampled from, so the derived constants
    can be integrated without the tabulation error.
    """

    xs: np.ndarray
    bs: np.ndarray
    constant: Optional[float] = None
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    label: str = "table"

    @classmethod
    def const(cls, value: float = 1.0) -> "AngularKernel":
        value = float(value)
        if not math.isfinite(value) or value <= 0.0:
            raise InvalidKernelError(f"constant angular kernel must be positive and finite, got {value}")
        return cls(np.array([-1.0, 1.0]), np.array([value, value]), constant=value, label=f"const({value:g})")

    @classmethod
    def table(cls, xs, bs) -> "AngularKernel":
        xs = np.asarray(xs, dtype=float)
        bs = np.asarray(bs, dtype=float)
        if xs.ndim != 1 or xs.shape != bs.shape or xs.size < 2:
            raise InvalidKernelError("angular table needs matching 1-D knot and value arrays of length >= 2")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(bs))):
            raise InvalidKernelError("angular table contains non-finite entries")
        if np.any(np.diff(xs) <= 0):
            raise InvalidKernelError("angular table knots must be strictly increasing")
        if abs(xs[0] + 1.0) > 1e-12 or abs(xs[-1] - 1.0) > 1e-12:
            raise InvalidKernelError("angular table must cover cos(theta) in [-1, 1]")
        if np.any(bs < 0):
            raise InvalidKernelError("angular kernel must be non-negative")
        if not np.any(bs > 0):
            raise InvalidKernelError("angular kernel vanishes identically")
        return cls(xs, bs, label="table")

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], samples: int = _TABLE_SAMPLES) -> "AngularKernel":
        xs = np.linspace(-1.0, 1.0, samples)
        tab = cls.table(xs, np.asarray(fn(xs), dtype=float))
        return cls(tab.xs, tab.bs, func=fn, label="function")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.constant is not None:
            return np.full_like(x, self.constant)
        return np.interp(x, self.xs, self.bs)


@dataclass(frozen=True)
class KernelParams:
    """Physics of a run: C_Phi, gamma, angular kernel and dimension."""

    c_phi: float = 1.0
    gamma: float = 1.0
    angular: AngularKernel = field(default_factory=AngularKernel.const)
    d: int = 3

    def __post_init__(self):
        if not (math.isfinite(self.c_phi) and self.c_phi > 0):
            raise InputContractError(f"c_phi must be positive, got {self.c_phi}")
        if not (0.0 <= self.gamma <= 1.0):
            raise InputContractError(f"gamma must lie in [0,1], got {self.gamma}")
        if int(self.d) != self.d or self.d < 3:
            raise InputContractError(f"dimension must be an integer >= 3, got {self.d}")
        if self.gamma > self.d - 2:
            raise InputContractError("gamma must not exceed d - 2")

    @property
    def b_infinity(self) -> float:
        return angular_constants(self)[0]

    @property
    def l_b(self) -> float:
        return angular_constants(self)[1]


@dataclass(frozen=True)
class CollisionTriple:
    v: np.ndarray
    v_star: np.ndarray
    sigma: np.ndarray
    v_prime: np.ndarray
    v_star_prime: np.ndarray
    cos_theta: float
    beta: float
    Y: float
    Z: float

    @classmethod
    def build(cls, v, v_star, sigma) -> "CollisionTriple":
        v = np.asarray(v, dtype=float)
        v_star = np.asarray(v_star, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        vp, vsp = post_collision(v, v_star, sigma)
        beta, Y, Z = sigma_split(v, v_star, sigma)
        return cls(v, v_star, sigma, vp, vsp, 2.0 * beta - 1.0, beta, Y, Z)


@dataclass(frozen=True)
class SphereQuadrature:
    """Quadrature on S^{d-1}. The first coordinate is the polar axis."""

    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(self.weights, fn(self.nodes)))


def _check_unit(sigma: np.ndarray) -> None:
    if abs(np.linalg.norm(sigma) - 1.0) > UNIT_TOL:
        raise InputContractError("sigma must be a unit vector")


def post_collision(v, v_star, sigma):
    """Post-collision velocities (v', v'*)."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    _check_unit(sigma)
    c = 0.5 * (v + v_star)
    half = 0.5 * np.linalg.norm(v - v_star)
    return c + half * sigma, c - half * sigma


def post_collision_batch(v, v_star, sigma):
    """Vectorized ``post_collision`` over leading axes of shape (..., d)."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(np.abs(np.linalg.norm(sigma, axis=-1) - 1.0) > UNIT_TOL):
        raise InputContractError("sigma must be a unit vector")
    c = 0.5 * (v + v_star)
    half = 0.5 * np.linalg.norm(v - v_star, axis=-1, keepdims=True)
    return c + half * sigma, c - half * sigma


def sigma_split(v, v_star, sigma):
    """Return (beta, Y, Z) with Y + Z = |v'|^2."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    _check_unit(sigma)
    g = v - v_star
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        raise DegenerateDirectionError("v = v* leaves the collision direction undefined")
    cos_t = min(1.0, max(-1.0, float(np.dot(g, sigma)) / gn))
    beta = 0.5 + 0.5 * cos_t
    v2 = float(np.dot(v, v))
    w2 = float(np.dot(v_star, v_star))
    Y = beta * v2 + (1.0 - beta) * w2
    Z = 0.5 * gn * float(np.dot(v + v_star, sigma)) - 0.5 * cos_t * (v2 - w2)
    return beta, Y, Z


def sigma_split_batch(v, v_star, sigma):
    """Vectorized ``sigma_split``; rows with v = v* raise."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    g = v - v_star
    gn = np.linalg.norm(g, axis=-1)
    if np.any(gn == 0.0):
        raise DegenerateDirectionError("v = v* leaves the collision direction undefined")
    cos_t = np.clip(np.sum(g * sigma, axis=-1) / gn, -1.0, 1.0)
    beta = 0.5 + 0.5 * cos_t
    v2 = np.sum(v * v, axis=-1)
    w2 = np.sum(v_star * v_star, axis=-1)
    Y = beta * v2 + (1.0 - beta) * w2
    Z = 0.5 * gn * np.sum((v + v_star) * sigma, axis=-1) - 0.5 * cos_t * (v2 - w2)
    return beta, Y, Z


def cos_theta(v, v_star, sigma) -> float:
    g = np.asarray(v, dtype=float) - np.asarray(v_star, dtype=float)
    gn = float(np.linalg.norm(g))
    sigma = np.asarray(sigma, dtype=float)
    if gn == 0.0:
        # convention for the degenerate pair
        return float(sigma[0])
    return min(1.0, max(-1.0, float(np.dot(g, sigma)) / gn))


def kernel_value(v, v_star, sigma, params: KernelParams, truncation: Optional[float] = None) -> float:
    """C_Phi * |v - v*|^gamma * b(cos theta), optionally with |v - v*| capped at n."""
    sigma = np.asarray(sigma, dtype=float)
    _check_unit(sigma)
    if truncation is not None and not truncation > 0:
        raise InputContractError("truncation level must be positive")
    gn = float(np.linalg.norm(np.asarray(v, dtype=float) - np.asarray(v_star, dtype=float)))
    r = gn if truncation is None else min(float(truncation), gn)
    radial = 1.0 if params.gamma == 0 else r ** params.gamma
    b = float(params.angular(cos_theta(v, v_star, sigma)))
    return params.c_phi * radial * b


@lru_cache(maxsize=128)
def angular_constants(params: KernelParams, tol: float = 1e-12) -> tuple[float, float]:
    """(b_infinity, l_b) with l_b = |S^{d-2}| * int_0^pi b(cos t) sin^{d-2} t dt."""
    ang = params.angular
    d = params.d
    if not (np.all(np.isfinite(ang.bs)) and np.all(ang.bs >= 0)):
        raise InvalidKernelError("angular kernel must be finite and non-negative")
    s_lower = sphere_area(d - 1)
    if ang.constant is not None:
        b_inf = ang.constant
        jac = math.sqrt(math.pi) * math.gamma((d - 1) / 2.0) / math.gamma(d / 2.0)
        return b_inf, s_lower * ang.constant * jac
    expo = (d - 3) / 2.0
    if ang.func is not None:
        xs = np.linspace(-1, 1, 20001)
        b_inf = float(np.max(ang.func(xs)))
        fn = lambda x: float(ang.func(np.array([x]))[0])
        points = None
    else:
        b_inf = float(np.max(ang.bs))
        fn = lambda x: float(np.interp(x, ang.xs, ang.bs))
        points = ang.xs[1:-1] if ang.xs.size > 2 else None
    if expo == 0.0 and ang.func is None:
        # exact for a piecewise-linear table
        integral = float(np.trapezoid(ang.bs, ang.xs))
    else:
        limit = 200 if points is None else max(200, 4 * len(points))
        if points is not None and len(points) > 200:
            # integrate knot interval by knot interval
            integral = 0.0
            for a, b in zip(ang.xs[:-1], ang.xs[1:]):
                val, _ = integrate.quad(lambda x: fn(x) * (1 - x * x) ** expo, a, b, epsabs=tol, epsrel=tol)
                integral += val
        else:
            integral, _ = integrate.quad(
                lambda x: fn(x) * (1 - x * x) ** expo, -1.0, 1.0, points=points, epsabs=tol, epsrel=tol, limit=limit
            )
    if not math.isfinite(b_inf) or not math.isfinite(integral):
        raise InvalidKernelError("angular kernel constants are not finite")
    return b_inf, s_lower * integral


def _circle_rule(m: int):
    phi = 2.0 * math.pi * (np.arange(m) + 0.5) / m
    return np.stack([np.cos(phi), np.sin(phi)], axis=1), np.full(m, 2.0 * math.pi / m)


def _sphere_rule(d: int, order: int):
    if d == 2:
        return _circle_rule(2 * order)
    a = (d - 3) / 2.0
    if a == 0.0:
        t, wt = special.roots_legendre(order)
    else:
        t, wt = special.roots_jacobi(order, a, a)
    sub_nodes, sub_w = _sphere_rule(d - 1, order)
    rad = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    nodes = np.empty((order * sub_nodes.shape[0], d))
    nodes[:, 0] = np.repeat(t, sub_nodes.shape[0])
    nodes[:, 1:] = (rad[:, None, None] * sub_nodes[None, :, :]).reshape(-1, d - 1)
    weights = (wt[:, None] * sub_w[None, :]).reshape(-1)
    return nodes, weights


def sphere_quadrature(d: int = 3, order: int = 16) -> SphereQuadrature:
    """Product rule on S^{d-1}: Gauss nodes in the polar cosine, uniform azimuth.

    ``order`` Gauss nodes per polar level and ``2 * order`` azimuthal nodes;
    polynomials of degree up to ``2 * order - 1`` are integrated exactly.
    The rule is symmetric under sigma -> -sigma.
    """
    if int(d) != d or d < 3:
        raise InputContractError(f"sphere quadrature needs d >= 3, got {d}")
    if int(order) != order or order < 1 or order > 256:
        raise InputContractError(f"unsupported quadrature order {order}")
    nodes, weights = _sphere_rule(int(d), int(order))
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    return SphereQuadrature(nodes, weights, 2 * int(order) - 1)
