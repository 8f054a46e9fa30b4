import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from bnkinetic.errors import InputContractError, SnapshotFormatError
from bnkinetic.grid_state import (
    Distribution,
    HyperplaneSample,
    VelocityGrid,
    entropy,
    gamma_concentration,
    gamma_field,
    gamma_sup,
    hyperplane_integral,
    hyperplane_sup,
    hyperplane_values,
    interpolate,
    interpolate_many,
    moment,
    moments_record,
    momentum,
    read_snapshot,
    sup_norms,
    weighted_l1,
    write_snapshot,
)

from conftest import gaussian


def test_grid_geometry():
    g = VelocityGrid(3, 8, 2.0)
    assert g.h == 0.5
    assert g.cell_volume == 0.125
    assert g.size == 512
    np.testing.assert_allclose(g.axis, -g.axis[::-1])
    assert np.min(np.abs(g.axis)) == pytest.approx(0.25)


@pytest.mark.parametrize("args", [(2, 8, 1.0), (3, 7, 1.0), (3, 2, 1.0), (3, 8, 0.0)])
def test_grid_contracts(args):
    with pytest.raises(InputContractError):
        VelocityGrid(*args)


def test_distribution_contracts():
    g = VelocityGrid(3, 4, 1.0)
    with pytest.raises(InputContractError):
        Distribution(g, -np.ones(64))
    with pytest.raises(InputContractError):
        Distribution(g, np.ones(63))
    with pytest.raises(InputContractError):
        Distribution(g, np.full(64, np.nan))


def test_interpolation_at_nodes_and_outside():
    g = VelocityGrid(3, 6, 1.5)
    rng = np.random.default_rng(0)
    f = Distribution(g, rng.random(g.size))
    for k in (0, 17, 100, g.size - 1):
        assert interpolate(f, g.nodes[k]) == pytest.approx(f.values[k], rel=1e-14)
    assert interpolate(f, [1.6, 0.0, 0.0]) == 0.0
    assert interpolate(f, [0.0, -3.0, 0.0]) == 0.0


def test_interpolation_reproduces_affine_data():
    g = VelocityGrid(3, 8, 2.0)
    a = np.array([0.3, -0.2, 0.5])
    f = Distribution.from_function(g, lambda x: 5.0 + x @ a)
    rng = np.random.default_rng(1)
    # points inside the node hull, where every stencil node is a grid node
    lo = g.axis[0]
    pts = rng.uniform(lo, -lo, size=(200, 3))
    np.testing.assert_allclose(interpolate_many(f, pts), 5.0 + pts @ a, rtol=1e-13)
    mids = np.array([[g.axis[2] + g.h / 2, g.axis[3] + g.h / 2, g.axis[5] + g.h / 2]])
    np.testing.assert_allclose(interpolate_many(f, mids), 5.0 + mids @ a, rtol=1e-13)


@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=3))
def test_interpolation_nonnegative_and_bounded(v):
    g = VelocityGrid(3, 6, 2.0)
    f = Distribution(g, np.linspace(0.0, 1.0, g.size))
    x = interpolate(f, v)
    assert 0.0 <= x <= 1.0 + 1e-15


def test_moment_examples():
    g = VelocityGrid(3, 8, 2.0)
    assert moment(Distribution.zeros(g), 2.0) == 0.0
    assert moment(Distribution(g, np.full(g.size, 0.7))) == pytest.approx(0.7 * 4.0 ** 3, rel=1e-12)


def test_gaussian_mass():
    g = VelocityGrid(3, 64, 8.0)
    f = Distribution.from_function(g, lambda x: np.exp(-np.sum(x * x, axis=1) / 2))
    assert moment(f) == pytest.approx((2 * math.pi) ** 1.5, rel=1e-4)
    # energy oracle: 3 (2 pi)^(3/2)
    assert moment(f, 2.0) == pytest.approx(3 * (2 * math.pi) ** 1.5, rel=1e-4)
    np.testing.assert_allclose(momentum(f), 0.0, atol=1e-12)


def test_weighted_l1_matches_definition():
    f = gaussian(8, 3.0, 1.0)
    g = f.grid
    direct = g.cell_volume * np.sum((1 + np.sqrt(g.radius2) ** 3) * f.values)
    assert weighted_l1(f, 3.0) == pytest.approx(direct, rel=1e-13)


def test_sup_norms():
    g = VelocityGrid(3, 8, 2.0)
    assert sup_norms(Distribution.zeros(g), 2.0) == (0.0, 0.0)
    vals = np.zeros(g.size)
    vals[77] = 3.0
    linf, lw = sup_norms(Distribution(g, vals), 2.0)
    assert linf == 3.0
    assert lw == pytest.approx(3.0 * (1 + g.radius2[77]))


def test_sup_norm_weighted_decay_family():
    out = []
    for N in (16, 32, 64):
        f = Distribution.from_function(VelocityGrid(3, N, 4.0), lambda x: 1 / (1 + np.sum(x * x, axis=1) ** 2))
        _, lw = sup_norms(f, 4.0)
        assert 1.0 <= lw <= 2.0
        out.append(lw)
    assert out[-1] <= 2.0


def test_entropy_examples():
    g = VelocityGrid(3, 4, 1.0)
    assert entropy(Distribution.zeros(g)) == 0.0
    assert entropy(Distribution(g, np.ones(g.size))) == pytest.approx(2.0 ** 3 * 2 * math.log(2), rel=1e-13)
    vals = np.zeros(g.size)
    vals[5] = math.e - 1
    expect = g.cell_volume * (math.e - (math.e - 1) * math.log(math.e - 1))
    assert entropy(Distribution(g, vals)) == pytest.approx(expect, rel=1e-13)


@given(st.lists(st.floats(0.0, 50.0, allow_nan=False), min_size=64, max_size=64))
def test_entropy_nonnegative(vals):
    f = Distribution(VelocityGrid(3, 4, 1.0), vals)
    s = entropy(f)
    assert s >= 0.0
    assert (s == 0.0) == (not np.any(f.values))


def _uniform_ball_gamma_oracle(c, R0):
    # integral of c / |x| over the ball of radius R0 in R^3
    val, _ = integrate.quad(lambda r: 4 * math.pi * r * r * c / r, 0.0, R0)
    return val


def test_gamma_concentration_constant_data():
    g = VelocityGrid(3, 64, 4.0)
    f = Distribution(g, np.full(g.size, 0.3))
    got = gamma_concentration(f, [0.0, 0.0, 0.0], 1.0, 1.0)
    oracle = _uniform_ball_gamma_oracle(0.3, 1.0)
    assert oracle == pytest.approx(2 * math.pi * 0.3)
    assert got == pytest.approx(oracle, rel=0.02)


def test_gamma_concentration_zero_and_contract():
    g = VelocityGrid(3, 8, 2.0)
    assert gamma_concentration(Distribution.zeros(g), [0, 0, 0], 1.0, 1.0) == 0.0
    with pytest.raises(InputContractError):
        gamma_concentration(Distribution.zeros(g), [0, 0, 0], 0.0, 1.0)


def test_gamma_unit_weight_is_ball_mass():
    # exponent d - 1 - gamma = 0 at gamma = 2, d = 3
    f = gaussian(32, 4.0, 1.0)
    g = f.grid
    ball = np.sqrt(g.radius2) <= 1.5
    mass = g.cell_volume * f.values[ball].sum()
    assert gamma_concentration(f, [0.0, 0.0, 0.0], 1.5, 2.0) == pytest.approx(mass, rel=0.03)


@given(st.floats(0.2, 2.0), st.floats(0.0, 1.0))
@settings(max_examples=30, deadline=None)
def test_gamma_monotone(R0, scale):
    f = gaussian(8, 2.0, 1.0)
    g = f.with_values(f.values * scale)
    v0 = [0.25, -0.25, 0.75]
    assert gamma_concentration(g, v0, R0, 1.0) <= gamma_concentration(f, v0, R0, 1.0) + 1e-15
    assert gamma_concentration(f, v0, R0, 1.0) <= gamma_concentration(f, v0, R0 + 0.5, 1.0) + 1e-15


def test_gamma_field_matches_pointwise_definition():
    f = gaussian(10, 2.0, 1.0)
    field = gamma_field(f, 0.9, 1.0)
    for k in (0, 123, 555, 999):
        assert field[k] == pytest.approx(gamma_concentration(f, f.grid.nodes[k], 0.9, 1.0), rel=1e-10, abs=1e-14)


def test_gamma_sup_examples():
    g = VelocityGrid(3, 8, 2.0)
    assert gamma_sup(Distribution.zeros(g), 1.0, 1.0) == 0.0
    vals = np.zeros(g.size)
    vals[200] = 1.0
    f = Distribution(g, vals)
    field = gamma_field(f, 1.0, 1.0)
    assert int(np.argmax(field)) == 200
    R0 = 1.0
    h = VelocityGrid(3, 48, 4.0)
    c = Distribution(h, np.full(h.size, 0.2))
    fld = gamma_field(c, R0, 1.0).reshape(h.shape())
    interior = fld[12:-12, 12:-12, 12:-12]
    np.testing.assert_allclose(interior, 2 * math.pi * 0.2 * R0 ** 2, rtol=0.05)


def test_hyperplane_examples():
    g = VelocityGrid(3, 8, 2.0)
    assert hyperplane_integral(Distribution.zeros(g), [0, 0, 0], [1, 0, 0]) == 0.0
    f = gaussian(8, 2.0, 1.0)
    assert hyperplane_integral(f, [5.0, 0, 0], [1.0, 0, 0]) == 0.0
    with pytest.raises(InputContractError):
        hyperplane_integral(f, [0, 0, 0], [1.0, 1.0, 0])


def test_hyperplane_gaussian_second_order():
    errs = []
    for N in (32, 64):
        g = VelocityGrid(3, N, 8.0)
        f = Distribution.from_function(g, lambda x: np.exp(-np.sum(x * x, axis=1) / 2))
        u = np.array([1.0, 2.0, 2.0]) / 3.0
        errs.append(hyperplane_integral(f, [0, 0, 0], u) / (2 * math.pi) - 1)
    # second order in h: halving h divides the error by about four
    assert 3.0 <= errs[0] / errs[1] <= 5.0
    assert abs(errs[1]) <= 6e-3


def test_hyperplane_sup_radial_data():
    f = gaussian(16, 4.0, 1.0)
    sample = HyperplaneSample(16, 9)
    vals = hyperplane_values(f, sample).reshape(16, 9)
    # offset index 0 is the plane through the origin; it wins for every direction
    assert np.all(np.argmax(vals, axis=1) == 0)
    assert hyperplane_sup(f, 16, 9) == pytest.approx(vals[:, 0].max(), rel=1e-14)
    # grid anisotropy between directions stays at the discretization level
    assert vals[:, 0].max() / vals[:, 0].min() - 1 < 0.05
    assert hyperplane_sup(Distribution.zeros(f.grid)) == 0.0


def test_hyperplane_sup_nested_refinement():
    rng = np.random.default_rng(2)
    g = VelocityGrid(3, 10, 2.0)
    f = Distribution(g, rng.random(g.size))
    prev = 0.0
    for k in (1, 2, 4, 8, 16):
        cur = hyperplane_sup(f, k, k)
        assert cur >= prev
        prev = cur
    assert "directions=4" in HyperplaneSample(4, 2).describe()


def test_moments_record_fields():
    f = gaussian(8, 3.0, 0.1)
    r = moments_record(f, 1.0, 0.8)
    assert r.m0 == moment(f)
    assert r.m2_plus_gamma == moment(f, 3.0)
    assert r.linf == pytest.approx(0.1)
    assert r.gamma_conc == gamma_sup(f, 0.8, 1.0)


def test_snapshot_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    g = VelocityGrid(3, 6, 1.25)
    f = Distribution(g, rng.random(g.size))
    path = tmp_path / "s.bnkf"
    write_snapshot(path, f, 0.5, 2.0)
    back, head = read_snapshot(path)
    assert back.values.tobytes() == f.values.tobytes()
    assert (head.d, head.N, head.V, head.gamma, head.c_phi) == (3, 6, 1.25, 0.5, 2.0)
    raw = path.read_bytes()
    assert raw[:5] == b"BNKF1"


def test_snapshot_malformed(tmp_path):
    bad = tmp_path / "bad.bnkf"
    bad.write_bytes(b"XXXXX" + bytes(40))
    with pytest.raises(SnapshotFormatError):
        read_snapshot(bad)
    good = tmp_path / "good.bnkf"
    write_snapshot(good, gaussian(4, 1.0, 1.0), 1.0, 1.0)
    good.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(SnapshotFormatError):
        read_snapshot(good)
