"""Velocity grid, distribution values and the functionals evaluated on them."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage, signal, special
from scipy.stats import norm, qmc

from . import _kernels
from .errors import InputContractError, SnapshotFormatError
from .kernel_geometry import sphere_area

SNAPSHOT_MAGIC = b"BNKF1"


@dataclass(frozen=True)
class VelocityGrid:
    """Cell-centred uniform grid on [-V, V]^d with N points per axis."""

    d: int
    N: int
    V: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 3:
            raise InputContractError(f"grid dimension must be an integer >= 3, got {self.d}")
        if int(self.N) != self.N or self.N < 4 or self.N % 2:
            raise InputContractError(f"points per axis must be an even integer >= 4, got {self.N}")
        if not (math.isfinite(self.V) and self.V > 0):
            raise InputContractError(f"half width must be positive, got {self.V}")

    @property
    def h(self) -> float:
        return 2.0 * self.V / self.N

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @property
    def size(self) -> int:
        return self.N ** self.d

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.V + (np.arange(self.N) + 0.5) * self.h

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (N^d, d), row-major (first axis slowest)."""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.ascontiguousarray(np.stack([m.reshape(-1) for m in mesh], axis=1))

    @cached_property
    def radius2(self) -> np.ndarray:
        return np.sum(self.nodes ** 2, axis=1)

    def index_of(self, v) -> int:
        """Flat index of the cell containing v (clipped to the grid)."""
        v = np.asarray(v, dtype=float)
        idx = np.clip(np.floor((v + self.V) / self.h).astype(int), 0, self.N - 1)
        return int(np.ravel_multi_index(tuple(idx), (self.N,) * self.d))

    def shape(self) -> tuple:
        return (self.N,) * self.d


@dataclass(frozen=True, eq=False)
class Distribution:
    grid: VelocityGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64).reshape(-1))
        if vals.size != self.grid.size:
            raise InputContractError(f"expected {self.grid.size} values, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise InputContractError("distribution values must be finite")
        if np.any(vals < 0):
            raise InputContractError("distribution values must be non-negative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: VelocityGrid, fn) -> "Distribution":
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float))

    @classmethod
    def zeros(cls, grid: VelocityGrid) -> "Distribution":
        return cls(grid, np.zeros(grid.size))

    def with_values(self, values) -> "Distribution":
        return Distribution(self.grid, values)

    def cube(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape())


@dataclass(frozen=True)
class MomentsRecord:
    m0: float
    m1: np.ndarray
    m2: float
    m2_plus_gamma: float
    entropy: float
    linf: float
    gamma_conc: float


def _fsum(arr) -> float:
    return math.fsum(np.asarray(arr, dtype=float).ravel().tolist())


def interpolate(f: Distribution, v) -> float:
    """Multilinear interpolant of f at v, zero outside the cube."""
    g = f.grid
    v = np.ascontiguousarray(np.asarray(v, dtype=float).reshape(-1))
    if v.size != g.d:
        raise InputContractError("query point has the wrong dimension")
    return float(_kernels.interp(f.values, g.d, g.N, float(g.V), g.h, v))


def interpolate_many(f: Distribution, pts) -> np.ndarray:
    g = f.grid
    pts = np.ascontiguousarray(np.asarray(pts, dtype=float).reshape(-1, g.d))
    return _kernels.interp_many(f.values, g.d, g.N, float(g.V), g.h, pts)


def moment(f: Distribution, alpha: float = 0.0, weight: Optional[str] = None, s: float = 0.0) -> float:
    """h^d sum |v|^alpha f, or the weighted L^1_s norm when ``weight='L1s'``."""
    g = f.grid
    if weight == "L1s":
        w = 1.0 + g.radius2 ** (0.5 * s)
    elif weight is None:
        if alpha < 0:
            raise InputContractError("plain moments need alpha >= 0")
        w = np.ones(g.size) if alpha == 0 else g.radius2 ** (0.5 * alpha)
    else:
        raise InputContractError(f"unknown weight {weight!r}")
    return g.cell_volume * _fsum(w * f.values)


def momentum(f: Distribution) -> np.ndarray:
    g = f.grid
    return np.array([g.cell_volume * _fsum(g.nodes[:, k] * f.values) for k in range(g.d)])


def weighted_l1(f: Distribution, s: float) -> float:
    return moment(f, weight="L1s", s=s)


def sup_norms(f: Distribution, s: float = 0.0) -> tuple[float, float]:
    if f.values.size == 0:
        return 0.0, 0.0
    weighted = (1.0 + f.grid.radius2 ** (0.5 * s)) * f.values
    return float(np.max(f.values)), float(np.max(weighted))


def entropy(f: Distribution) -> float:
    """h^d sum [(1+f) log(1+f) - f log f], the integrand being 0 at f = 0."""
    x = f.values
    dens = special.xlogy(1.0 + x, 1.0 + x) - special.xlogy(x, x)
    return f.grid.cell_volume * _fsum(dens)


def _singular_cell_weight(d: int, gamma: float, h: float, R0: float) -> float:
    rho = min(0.5 * h, R0)
    return sphere_area(d) * rho ** (1.0 + gamma) / (1.0 + gamma)


def gamma_concentration(f: Distribution, v0, R0: float, gamma: float) -> float:
    """Negative-moment concentration of f in the ball of radius R0 about v0.

    Sums h^d f / |v - v0|^(d-1-gamma) over the nodes of the ball; the cell
    containing v0 is replaced by the exact integral of the weight over a ball
    of radius min(h/2, R0) times the value at that cell's node.
    """
    if not R0 > 0:
        raise InputContractError("R0 must be positive")
    g = f.grid
    v0 = np.asarray(v0, dtype=float)
    expo = g.d - 1.0 - gamma
    dist = np.sqrt(np.sum((g.nodes - v0) ** 2, axis=1))
    inside_cube = bool(np.all(np.abs(v0) <= g.V))
    mask = (dist <= R0) & (dist > 0)
    total_w = np.zeros(g.size)
    total_w[mask] = g.cell_volume / dist[mask] ** expo
    if inside_cube:
        k = g.index_of(v0)
        total_w[k] = _singular_cell_weight(g.d, gamma, g.h, R0)
    return _fsum(total_w * f.values)


def _gamma_stencil(grid: VelocityGrid, R0: float, gamma: float) -> np.ndarray:
    h = grid.h
    r = min(int(math.floor(R0 / h)), grid.N - 1)
    ax = np.arange(-r, r + 1) * h
    mesh = np.meshgrid(*([ax] * grid.d), indexing="ij")
    dist = np.sqrt(sum(m * m for m in mesh))
    expo = grid.d - 1.0 - gamma
    ker = np.zeros_like(dist)
    mask = (dist <= R0) & (dist > 0)
    ker[mask] = grid.cell_volume / dist[mask] ** expo
    ker[(r,) * grid.d] = _singular_cell_weight(grid.d, gamma, h, R0)
    return ker


def gamma_field(f: Distribution, R0: float, gamma: float) -> np.ndarray:
    """Concentration functional centred at every node, as a flat array."""
    if not R0 > 0:
        raise InputContractError("R0 must be positive")
    ker = _gamma_stencil(f.grid, R0, gamma)
    cube = f.cube()
    if ker.size <= 9 ** f.grid.d:
        out = ndimage.correlate(cube, ker, mode="constant", cval=0.0)
    else:
        out = signal.fftconvolve(cube, ker[(slice(None, None, -1),) * f.grid.d], mode="same")
        out = np.maximum(out, 0.0)
    return out.reshape(-1)


def gamma_sup(f: Distribution, R0: float, gamma: float) -> float:
    """Max of the concentration functional over grid nodes (a lower bound of the sup)."""
    if not np.any(f.values):
        if not R0 > 0:
            raise InputContractError("R0 must be positive")
        return 0.0
    return float(np.max(gamma_field(f, R0, gamma)))


def _check_unit(u: np.ndarray) -> None:
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise InputContractError("plane normal must be a unit vector")


def hyperplane_integral(f: Distribution, v, u) -> float:
    """Integral of the interpolant over the plane through v orthogonal to u."""
    g = f.grid
    v = np.ascontiguousarray(np.asarray(v, dtype=float).reshape(1, g.d))
    u = np.ascontiguousarray(np.asarray(u, dtype=float).reshape(1, g.d))
    _check_unit(u[0])
    return float(_kernels.plane_integrals(f.values, g.d, g.N, float(g.V), g.h, v, u)[0])


@dataclass(frozen=True)
class HyperplaneSample:
    """Deterministic sample of planes: Halton directions times signed offsets."""

    directions: int = 16
    offsets: int = 9

    def planes(self, d: int, V: float) -> tuple[np.ndarray, np.ndarray]:
        if self.directions < 1 or self.offsets < 1:
            raise InputContractError("hyperplane sample counts must be >= 1")
        dirs = _halton_directions(d, self.directions)
        offs = _offset_ladder(self.offsets) * V * math.sqrt(d)
        normals = np.repeat(dirs, len(offs), axis=0)
        t = np.tile(offs, len(dirs))
        return np.ascontiguousarray(normals * t[:, None]), np.ascontiguousarray(normals)

    def describe(self) -> str:
        return f"halton-directions={self.directions},offsets={self.offsets}"


def _offset_ladder(k: int) -> np.ndarray:
    # 0 first, then van der Corput points mapped to (-1, 1); prefixes are nested
    vdc = qmc.Halton(d=1, scramble=False).random(k + 1)[1:, 0]
    out = 2.0 * vdc - 1.0
    return out


def _halton_directions(d: int, k: int) -> np.ndarray:
    """Nested low-discrepancy unit directions with non-negative first entry; the first is e_1."""
    pts = qmc.Halton(d=d, scramble=False).random(k + 1)[1:]
    gauss = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    gauss[0] = 0.0
    gauss[0, 0] = 1.0
    dirs = gauss / np.linalg.norm(gauss, axis=1, keepdims=True)
    dirs[dirs[:, 0] < 0] *= -1.0
    return dirs


def hyperplane_sup(f: Distribution, directions: int = 16, offsets: int = 9) -> float:
    """Max of hyperplane integrals over a nested deterministic plane sample."""
    g = f.grid
    spec = HyperplaneSample(directions, offsets)
    pts, normals = spec.planes(g.d, g.V)
    if not np.any(f.values):
        return 0.0
    vals = _kernels.plane_integrals(f.values, g.d, g.N, float(g.V), g.h, pts, normals)
    return float(np.max(vals))


def hyperplane_values(f: Distribution, sample: HyperplaneSample) -> np.ndarray:
    g = f.grid
    pts, normals = sample.planes(g.d, g.V)
    return _kernels.plane_integrals(f.values, g.d, g.N, float(g.V), g.h, pts, normals)


def moments_record(f: Distribution, gamma: float, R0: float) -> MomentsRecord:
    linf, _ = sup_norms(f)
    return MomentsRecord(
        m0=moment(f, 0.0),
        m1=momentum(f),
        m2=moment(f, 2.0),
        m2_plus_gamma=moment(f, 2.0 + gamma),
        entropy=entropy(f),
        linf=linf,
        gamma_conc=gamma_sup(f, R0, gamma),
    )


def write_snapshot(path, f: Distribution, gamma: float, c_phi: float) -> None:
    """BNKF1: magic, int64 (d, N), float64 (V, gamma, c_phi), then N^d float64, little-endian."""
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<qqddd", g.d, g.N, float(g.V), float(gamma), float(c_phi)))
        fh.write(np.asarray(f.values, dtype="<f8").tobytes())


@dataclass(frozen=True)
class SnapshotHeader:
    d: int
    N: int
    V: float
    gamma: float
    c_phi: float


def read_snapshot(path) -> tuple[Distribution, SnapshotHeader]:
    raw = Path(path).read_bytes()
    head = len(SNAPSHOT_MAGIC)
    if raw[:head] != SNAPSHOT_MAGIC:
        raise SnapshotFormatError("missing BNKF1 magic string")
    fixed = struct.calcsize("<qqddd")
    if len(raw) < head + fixed:
        raise SnapshotFormatError("truncated snapshot header")
    d, N, V, gamma, c_phi = struct.unpack("<qqddd", raw[head:head + fixed])
    body = raw[head + fixed:]
    if d < 3 or N < 4 or d > 12 or N > 4096:
        raise SnapshotFormatError(f"implausible snapshot shape d={d}, N={N}")
    expected = 8 * N ** d
    if len(body) != expected:
        raise SnapshotFormatError(f"snapshot body has {len(body)} bytes, expected {expected}")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    header = SnapshotHeader(int(d), int(N), float(V), float(gamma), float(c_phi))
    try:
        dist = Distribution(VelocityGrid(int(d), int(N), float(V)), values)
    except InputContractError as exc:
        raise SnapshotFormatError(str(exc)) from exc
    return dist, header
