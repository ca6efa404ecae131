import math

import numpy as np
import pytest

from soqdyn.errors import ConfigError, SpaceMismatchError
from soqdyn.grid import (Direction, ScalarField, Space, SpinorField, grid_for_energy, make_grid,
                         norm2, read_density, transform, write_density)


def test_make_grid_unit_spacing():
    g = make_grid(8, 4.0, 1.0)
    assert g.dx == pytest.approx(1.0)
    assert np.max(np.abs(g.k)) == pytest.approx(math.pi)


def test_momentum_axis_scales_with_h():
    g1 = make_grid(8, 4.0, 1.0)
    g2 = make_grid(8, 4.0, 2.0)
    np.testing.assert_array_equal(g2.p, 2.0 * g1.p)


def test_desk_grid_arithmetic():
    g = make_grid(512, 40.0, 1.0)
    assert g.dx == pytest.approx(0.15625)
    assert np.max(np.abs(g.p)) == pytest.approx(20.1, abs=0.05)


def test_momentum_axis_symmetric():
    g = make_grid(64, 6.0, 1.3)
    assert abs(np.max(np.abs(g.p)) - g.h * math.pi / g.dx) <= g.dp + 1e-12


@pytest.mark.parametrize("n", [0, 4, 12, 100])
def test_rejects_bad_n(n):
    with pytest.raises(ConfigError):
        make_grid(n, 4.0, 1.0)


@pytest.mark.parametrize("extent,h", [(0.0, 1.0), (-1.0, 1.0), (4.0, 0.0), (4.0, -2.0)])
def test_rejects_bad_extent_or_h(extent, h):
    with pytest.raises(ConfigError):
        make_grid(16, extent, h)


def test_constant_field_goes_to_zero_momentum():
    g = make_grid(32, 4.0, 1.0)
    f = ScalarField(g, np.ones((32, 32)))
    m = transform(f, Direction.TO_MOMENTUM).values
    i0 = int(np.argmin(np.abs(g.p)))
    assert np.abs(m[i0, i0]) > 0
    mask = np.ones_like(m, dtype=bool)
    mask[i0, i0] = False
    assert np.max(np.abs(m[mask])) < 1e-10 * np.abs(m[i0, i0])


@pytest.mark.parametrize("h", [1.0, 2.5])
def test_gaussian_is_self_fourier(h):
    g = make_grid(128, 12.0 * math.sqrt(h), h)
    X, Y = g.mesh(Space.POSITION)
    psi = np.exp(-(X**2 + Y**2) / (2 * h)) / math.sqrt(math.pi * h)
    phi = transform(ScalarField(g, psi), Direction.TO_MOMENTUM)
    PX, PY = g.mesh(Space.MOMENTUM)
    ref = np.exp(-(PX**2 + PY**2) / (2 * h)) / math.sqrt(math.pi * h)
    np.testing.assert_allclose(np.abs(phi.values), ref, atol=1e-12)


def test_round_trip_and_parseval(rng):
    g = make_grid(64, 5.0, 1.7)
    for _ in range(100):
        v = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
        f = ScalarField(g, v)
        m = transform(f, Direction.TO_MOMENTUM)
        assert norm2(m) == pytest.approx(norm2(f), rel=1e-12)
        back = transform(m, Direction.TO_POSITION)
        assert np.max(np.abs(back.values - v)) < 1e-12 * max(1.0, np.max(np.abs(v)))


def test_norm2_scaling(rng):
    g = make_grid(16, 3.0, 1.0)
    v = rng.normal(size=(16, 16)) + 0j
    f = ScalarField(g, v)
    assert norm2(ScalarField(g, 2 * v)) == pytest.approx(4 * norm2(f))


def test_transform_space_mismatch():
    g = make_grid(16, 3.0, 1.0)
    f = ScalarField(g, np.ones((16, 16)))
    with pytest.raises(SpaceMismatchError):
        transform(f, Direction.TO_POSITION)


def test_spinor_transform_and_mismatch(rng):
    g = make_grid(16, 3.0, 1.0)
    up = rng.normal(size=(16, 16)) + 0j
    s = SpinorField.from_arrays(g, up, 1j * up)
    m = transform(s, Direction.TO_MOMENTUM)
    assert m.space is Space.MOMENTUM
    assert norm2(m) == pytest.approx(norm2(s), rel=1e-12)
    with pytest.raises(SpaceMismatchError):
        SpinorField(s.up, m.down)


def test_field_shape_checked():
    g = make_grid(16, 3.0, 1.0)
    with pytest.raises(ConfigError):
        ScalarField(g, np.ones((8, 8)))


def test_grid_for_energy_contains_shell():
    g = grid_for_energy(30.0, -192.0, 1.0)
    r = math.sqrt(2 * -192.0 + 900.0)
    assert g.extent_x >= 1.5 * r
    assert g.extent_p >= 1.5 * (30.0 + r)


def test_grid_for_energy_balance_keeps_boxes():
    plain = grid_for_energy(30.0, -192.0, 1.0, margin=1.0)
    bal = grid_for_energy(30.0, -192.0, 1.0, margin=1.0, balance=True)
    assert bal.n == plain.n
    assert bal.extent_x >= plain.extent_x
    assert bal.extent_p >= 1.0 * (30.0 + math.sqrt(516.0))


def test_grid_for_energy_cap():
    with pytest.raises(ConfigError):
        grid_for_energy(30.0, -192.0, 1.0, n_max=256)


def test_density_dump_round_trip(tmp_path, rng):
    g = make_grid(16, 3.0, 2.0)
    d = rng.random((16, 16))
    path = write_density(tmp_path / "d.bin", g, d, Space.MOMENTUM)
    g2, d2, sp = read_density(path)
    assert g2 == g and sp is Space.MOMENTUM
    np.testing.assert_array_equal(d2, d)


def test_density_dump_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"nope\n123")
    with pytest.raises(ConfigError):
        read_density(p)
