"""Compiled kernels against the numpy fallback."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soqdyn import _kernels

py = _kernels.python_backend
cy = _kernels.compiled_backend
needs_ext = pytest.mark.skipif(cy is None, reason="compiled kernels not built")

finite = st.floats(-60, 60, allow_nan=False)


def test_backend_selection():
    assert _kernels.get_backend("python") is py
    assert _kernels.get_backend() is _kernels.backend
    with pytest.raises(ValueError):
        _kernels.get_backend("fortran")


@needs_ext
@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=8, max_size=8), st.floats(0, 40), st.floats(0, 40))
def test_rhs_parity(z, vx, vy):
    z = np.array(z)
    if vx * abs(z[1]) + vy * abs(z[3]) < 1e-3:
        return
    for d in (4, 8):
        np.testing.assert_array_equal(cy.rhs_single(z[:d], vx, vy), py.rhs_single(z[:d], vx, vy))


@needs_ext
def test_integrate_dense_parity():
    z0 = np.array([3.0, 1.0, -2.0, 25.0])
    t = np.linspace(0, 30, 61)
    a = py.integrate_dense(z0, 0.0, t, 20.0, 30.0, 1e-10, 10**6)
    b = cy.integrate_dense(z0, 0.0, t, 20.0, 30.0, 1e-10, 10**6)
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1:] == b[1:]


@needs_ext
def test_advance_batch_parity(rng):
    Z = np.column_stack([rng.normal(0, 5, 20), rng.normal(0, 10, 20),
                         rng.normal(0, 5, 20), 30 + rng.normal(0, 3, 20)])
    outs = []
    for mod in (py, cy):
        W = Z.copy()
        h = np.zeros(len(W))
        s = np.zeros(len(W), dtype=np.int32)
        mod.advance_batch(W, h, s, 0.0, 10.0, 20.0, 30.0, 1e-10, 10**6)
        assert np.all(s == 0)
        outs.append(W)
    np.testing.assert_allclose(outs[0], outs[1], rtol=0, atol=1e-9)


@needs_ext
def test_section_and_lyapunov_parity():
    z0 = np.array([0.0, 5.0, 10.0, 0.0])
    sp = py.section_crossings(z0, 100.0, 3, 20.0, 30.0, 1e-10, 10**6, 1000)
    sc = cy.section_crossings(z0, 100.0, 3, 20.0, 30.0, 1e-10, 10**6, 1000)
    np.testing.assert_allclose(sp[0], sc[0], rtol=1e-13, atol=1e-12)
    np.testing.assert_allclose(sp[1], sc[1], rtol=1e-10, atol=1e-10)
    np.testing.assert_array_equal(sp[2], sc[2])
    w0 = np.array([1.0, 0.0, 0.0, 0.0])
    lp = py.lyapunov_logs(z0, w0, 20.0, 0.5, 20.0, 30.0, 1e-10, 10**6)
    lc = cy.lyapunov_logs(z0, w0, 20.0, 0.5, 20.0, 30.0, 1e-10, 10**6)
    np.testing.assert_allclose(lp[0], lc[0], rtol=1e-9, atol=1e-12)


@needs_ext
def test_spinor_and_phase_kick_parity(rng):
    n = 16
    arrs = [rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) for _ in range(5)]
    results = []
    for mod in (py, cy):
        up, dn = arrs[0].copy(), arrs[1].copy()
        mod.spinor_kick(up, dn, arrs[2], arrs[3], arrs[4])
        ph = arrs[0].copy()
        mod.phase_kick(ph, arrs[2])
        results.append((up, dn, ph))
    for a, b in zip(*results):
        np.testing.assert_allclose(a, b, rtol=1e-15, atol=1e-15)
    np.testing.assert_allclose(results[0][0], arrs[2] * arrs[0] + arrs[3] * arrs[1])
    np.testing.assert_allclose(results[0][1], arrs[4] * arrs[0] + arrs[2] * arrs[1])


@pytest.mark.parametrize("name", ["python"] + (["cython"] if cy is not None else []))
def test_status_on_nonfinite(name):
    mod = _kernels.get_backend(name)
    Z = np.array([[np.nan, 1.0, 0.0, 1.0]])
    s = np.zeros(1, dtype=np.int32)
    mod.advance_batch(Z, np.zeros(1), s, 0.0, 1.0, 20.0, 30.0, 1e-10, 1000)
    assert s[0] == _kernels.NONFINITE


@pytest.mark.parametrize("name", ["python"] + (["cython"] if cy is not None else []))
def test_status_on_step_budget(name):
    mod = _kernels.get_backend(name)
    Z = np.array([[1.0, 5.0, 0.0, 20.0]])
    s = np.zeros(1, dtype=np.int32)
    mod.advance_batch(Z, np.zeros(1), s, 0.0, 100.0, 20.0, 30.0, 1e-12, 3)
    assert s[0] == _kernels.MAXSTEPS
