"""Pure-numpy implementation of the hot kernels.

Mirrors ``_ckernels.pyx`` operation for operation (same Butcher tableau, same
step-size controller, same expression order) so both backends agree to
rounding.  Batch routines are vectorised over lanes; single-trajectory routines
treat the trajectory as a batch of one.

State layout is ``(x, p_x, y, p_y)``; the tangent-flow variant appends a
tangent vector in the same layout.

Status codes: 0 ok, 1 step-size underflow, 2 non-finite state, 3 step budget
exhausted.
"""
import math

import numpy as np

OK, UNDERFLOW, NONFINITE, MAXSTEPS = 0, 1, 2, 3

# Dormand-Prince 5(4)
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                           49.0 / 176.0, -5103.0 / 18656.0)
A71, A73, A74, A75, A76 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                           -2187.0 / 6784.0, 11.0 / 84.0)
E1, E3, E4, E5, E6, E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                          -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)
D1, D3, D4, D5, D6, D7 = (-12715105075.0 / 11282082432.0, 87487479700.0 / 32700410799.0,
                          -10690763975.0 / 1880347072.0, 701980252875.0 / 199316789632.0,
                          -1453857185.0 / 822651844.0, 69997945.0 / 29380423.0)

SAFETY, FACMIN, FACMAX = 0.9, 0.2, 5.0
HMIN_REL = 1e-13

BACKEND = "python"


def _rhs(Z, vx2, vy2):
    """EOM of the lower adiabatic Hamiltonian, optionally with tangent flow."""
    x, px, y, py = Z[:, 0], Z[:, 1], Z[:, 2], Z[:, 3]
    S = np.sqrt(vx2 * px * px + vy2 * py * py)
    pos = S > 0.0
    Ssafe = np.where(pos, S, 1.0)
    tx = np.where(pos, (vx2 * px) / Ssafe, 0.0)
    ty = np.where(pos, (vy2 * py) / Ssafe, 0.0)
    out = np.empty_like(Z)
    out[:, 0] = px - tx
    out[:, 1] = -x
    out[:, 2] = py - ty
    out[:, 3] = -y
    if Z.shape[1] == 8:
        S3 = Ssafe * Ssafe * Ssafe
        jxx = np.where(pos, 1.0 - vx2 / Ssafe + (vx2 * vx2 * px * px) / S3, 1.0)
        jxy = np.where(pos, (vx2 * vy2 * px * py) / S3, 0.0)
        jyy = np.where(pos, 1.0 - vy2 / Ssafe + (vy2 * vy2 * py * py) / S3, 1.0)
        wx, wpx, wy, wpy = Z[:, 4], Z[:, 5], Z[:, 6], Z[:, 7]
        out[:, 4] = jxx * wpx + jxy * wpy
        out[:, 5] = -wx
        out[:, 6] = jxy * wpx + jyy * wpy
        out[:, 7] = -wy
    return out


def rhs(z, vx, vy):
    """Right-hand side for a single state (length 4 or 8)."""
    z = np.asarray(z, dtype=float)
    return _rhs(z[None, :], vx * vx, vy * vy)[0]


def _wnorm(V, sk):
    d = V.shape[1]
    acc = np.zeros(V.shape[0])
    for i in range(d):
        q = V[:, i] / sk[:, i]
        acc = acc + q * q
    return np.sqrt(acc / d)


def _dopri_stages(Z, hs, k1, vx2, vy2):
    hc = hs[:, None]
    k2 = _rhs(Z + hc * (A21 * k1), vx2, vy2)
    k3 = _rhs(Z + hc * (A31 * k1 + A32 * k2), vx2, vy2)
    k4 = _rhs(Z + hc * (A41 * k1 + A42 * k2 + A43 * k3), vx2, vy2)
    k5 = _rhs(Z + hc * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4), vx2, vy2)
    k6 = _rhs(Z + hc * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5), vx2, vy2)
    Y = Z + hc * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6)
    k7 = _rhs(Y, vx2, vy2)
    errv = hc * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
    return Y, k7, errv, (k1, k3, k4, k5, k6, k7)


def _error(Z, Y, errv, tol):
    sk = tol + tol * np.maximum(np.abs(Z), np.abs(Y))
    return _wnorm(errv, sk)


def _initial_step(Z, k1, tol, vx2, vy2, span):
    sk = tol + tol * np.abs(Z)
    d0 = _wnorm(Z, sk)
    d1 = _wnorm(k1, sk)
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.where(d1 > 0, d1, 1.0))
    Z1 = Z + h0[:, None] * k1
    f1 = _rhs(Z1, vx2, vy2)
    d2 = _wnorm(f1 - k1, sk) / h0
    dm = np.maximum(d1, d2)
    h1 = np.where(dm <= 1e-15, np.maximum(1e-6, h0 * 1e-3),
                  np.power(0.01 / np.where(dm > 0, dm, 1.0), 0.2))
    h = np.minimum(100.0 * h0, h1)
    return np.minimum(h, span)


def _dense(rc, theta):
    r1, r2, r3, r4, r5 = rc
    th1 = 1.0 - theta
    return r1 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)))


def _dense_coeffs(Z, Y, ks, hs):
    k1, k3, k4, k5, k6, k7 = ks
    hc = hs[:, None]
    ydiff = Y - Z
    bspl = hc * k1 - ydiff
    r4 = ydiff - hc * k7 - bspl
    r5 = hc * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7)
    return (Z, ydiff, bspl, r4, r5)


def advance_batch(Z, h, status, t0, t1, vx, vy, tol, max_steps):
    """Integrate every lane of ``Z`` from ``t0`` to ``t1`` in place.

    ``h`` carries per-lane step proposals across calls (entries <= 0 trigger
    the automatic initial step).  Lanes with non-zero ``status`` are skipped.
    Returns the number of attempted steps summed over lanes.
    """
    vx2, vy2 = vx * vx, vy * vy
    N = Z.shape[0]
    span = t1 - t0
    if span <= 0.0 or N == 0:
        return 0
    bad = ~np.all(np.isfinite(Z), axis=1) & (status == 0)
    status[bad] = NONFINITE
    active = status == 0
    idx = np.nonzero(active)[0]
    if idx.size == 0:
        return 0
    k1 = np.zeros_like(Z)
    k1[idx] = _rhs(Z[idx], vx2, vy2)
    need = idx[h[idx] <= 0.0]
    if need.size:
        h[need] = _initial_step(Z[need], k1[need], tol, vx2, vy2, span)
    t = np.full(N, t0)
    rejected = np.zeros(N, dtype=bool)
    nstep = np.zeros(N, dtype=np.int64)
    total = 0
    while idx.size:
        Zs, ts, hprop = Z[idx], t[idx], h[idx]
        clipped = ts + hprop >= t1
        hs = np.where(clipped, t1 - ts, hprop)
        Y, k7, errv, _ = _dopri_stages(Zs, hs, k1[idx], vx2, vy2)
        err = _error(Zs, Y, errv, tol)
        nstep[idx] += 1
        total += idx.size
        finite = np.isfinite(err)
        acc = finite & (err <= 1.0)
        errsafe = np.where(finite & (err > 0.0), err, 1.0)
        fac = np.where(err > 0.0, SAFETY * np.power(errsafe, -0.2), FACMAX)
        fac = np.where(finite, fac, FACMIN)
        fac = np.clip(fac, FACMIN, FACMAX)
        rej_prev = rejected[idx]
        fac_acc = np.where(rej_prev, np.minimum(fac, 1.0), fac)
        # accepted lanes
        a = idx[acc]
        if a.size:
            Z[a] = Y[acc]
            k1[a] = k7[acc]
            ca = clipped[acc]
            t[a] = np.where(ca, t1, ts[acc] + hs[acc])
            h[a] = np.where(ca, np.maximum(hprop[acc], hs[acc] * fac_acc[acc]), hs[acc] * fac_acc[acc])
            rejected[a] = False
        r = idx[~acc]
        if r.size:
            h[r] = hs[~acc] * np.minimum(fac[~acc], 1.0)
            rejected[r] = True
            under = h[r] < HMIN_REL * np.maximum(1.0, np.abs(t[r]))
            status[r[under]] = UNDERFLOW
        over = (nstep[idx] >= max_steps) & (status[idx] == 0) & (t[idx] < t1)
        status[idx[over]] = MAXSTEPS
        done = (t >= t1) | (status != 0)
        idx = idx[~done[idx]]
    return total


class _Stepper:
    """Step-by-step DOPRI5 driver for a single trajectory (batch of one)."""

    def __init__(self, z0, t0, vx, vy, tol, max_steps, span):
        self.vx2, self.vy2 = vx * vx, vy * vy
        self.tol = tol
        self.max_steps = max_steps
        self.Z = np.array(z0, dtype=float)[None, :]
        self.t = t0
        self.k1 = _rhs(self.Z, self.vx2, self.vy2)
        self.h = float(_initial_step(self.Z, self.k1, tol, self.vx2, self.vy2, span)[0])
        self.rejected = False
        self.nstep = 0
        self.status = OK if np.all(np.isfinite(self.Z)) else NONFINITE

    def step(self, t_end):
        """Attempt steps until one is accepted; returns ``(t_prev, Z_prev, rc, k_prev)``."""
        while True:
            if self.nstep >= self.max_steps:
                self.status = MAXSTEPS
                return None
            clipped = self.t + self.h >= t_end
            hs = (t_end - self.t) if clipped else self.h
            Y, k7, errv, ks = _dopri_stages(self.Z, np.array([hs]), self.k1, self.vx2, self.vy2)
            err = float(_error(self.Z, Y, errv, self.tol)[0])
            self.nstep += 1
            finite = math.isfinite(err)
            if finite and err > 0.0:
                fac = SAFETY * math.pow(err, -0.2)
            elif finite:
                fac = FACMAX
            else:
                fac = FACMIN
            fac = min(max(fac, FACMIN), FACMAX)
            if finite and err <= 1.0:
                if self.rejected:
                    fac = min(fac, 1.0)
                rc = _dense_coeffs(self.Z, Y, ks, np.array([hs]))
                prev = (self.t, self.Z, self.k1, hs)
                self.Z = Y
                self.k1 = k7
                self.t = t_end if clipped else self.t + hs
                self.h = max(self.h, hs * fac) if clipped else hs * fac
                self.rejected = False
                return prev, rc
            self.h = hs * min(fac, 1.0)
            self.rejected = True
            if self.h < HMIN_REL * max(1.0, abs(self.t)):
                self.status = UNDERFLOW
                return None


def integrate_dense(z0, t0, t_eval, vx, vy, tol, max_steps):
    """Integrate one trajectory and sample it at ``t_eval`` by dense output.

    Returns ``(samples, nsteps, status, t_reached)``; rows of ``samples`` past
    a failure are NaN.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    d = len(z0)
    out = np.full((t_eval.size, d), np.nan)
    if t_eval.size == 0:
        return out, 0, OK, t0
    t_end = float(t_eval[-1])
    st = _Stepper(z0, t0, vx, vy, tol, max_steps, max(t_end - t0, 1e-300))
    if st.status != OK:
        return out, 0, st.status, t0
    j = 0
    while j < t_eval.size and t_eval[j] <= t0:
        out[j] = st.Z[0]
        j += 1
    while j < t_eval.size:
        res = st.step(t_end)
        if res is None:
            return out, st.nstep, st.status, st.t
        (tp, _, _, hs), rc = res
        while j < t_eval.size and t_eval[j] <= st.t:
            if t_eval[j] == st.t:
                out[j] = st.Z[0]
            else:
                theta = (t_eval[j] - tp) / hs
                out[j] = _dense(rc, theta)[0]
            j += 1
    return out, st.nstep, OK, st.t


def _single_step(z, hs, vx2, vy2):
    Z = np.asarray(z, dtype=float)[None, :]
    k1 = _rhs(Z, vx2, vy2)
    Y, _, _, _ = _dopri_stages(Z, np.array([hs]), k1, vx2, vy2)
    return Y[0]


def _hermite(g0, d0, g1, d1, s):
    s2, s3 = s * s, s * s * s
    return ((2 * s3 - 3 * s2 + 1) * g0 + (s3 - 2 * s2 + s) * d0
            + (-2 * s3 + 3 * s2) * g1 + (s3 - s2) * d1)


def _locate(tp, Zp, kp, hs, Y, kY, index, vx2, vy2):
    """Bisection on the cubic Hermite interpolant, then Newton polish."""
    g0, g1 = Zp[index], Y[index]
    d0, d1 = hs * kp[index], hs * kY[index]
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        gm = _hermite(g0, d0, g1, d1, mid)
        if (gm < 0.0) == (g0 < 0.0) and gm != 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    s = 0.5 * (lo + hi)
    tc = tp + s * hs
    zc = _single_step(Zp, s * hs, vx2, vy2)
    for _ in range(8):
        f = _rhs(zc[None, :], vx2, vy2)[0]
        g = zc[index]
        if abs(g) < 1e-13 or f[index] == 0.0:
            break
        dt = -g / f[index]
        zc = _single_step(zc, dt, vx2, vy2)
        tc += dt
    f = _rhs(zc[None, :], vx2, vy2)[0]
    return tc, zc, (1 if f[index] > 0.0 else -1)


def section_crossings(z0, t_f, index, vx, vy, tol, max_steps, max_crossings):
    """All crossings of the plane ``z[index] = 0`` on ``(0, t_f]``.

    Returns ``(times, states, signs, status)``; ``signs`` is the sign of the
    crossing velocity of that component.
    """
    vx2, vy2 = vx * vx, vy * vy
    times, states, signs = [], [], []
    st = _Stepper(z0, 0.0, vx, vy, tol, max_steps, t_f)
    if st.status != OK:
        return np.zeros(0), np.zeros((0, 4)), np.zeros(0, dtype=np.int64), st.status
    while st.t < t_f and len(times) < max_crossings:
        res = st.step(t_f)
        if res is None:
            break
        (tp, Zp, kp, hs), _ = res
        g0, g1 = Zp[0, index], st.Z[0, index]
        if g0 != 0.0 and (g1 == 0.0 or (g0 < 0.0) != (g1 < 0.0)):
            tc, zc, sgn = _locate(tp, Zp[0], kp[0], hs, st.Z[0], st.k1[0], index, vx2, vy2)
            times.append(tc)
            states.append(zc)
            signs.append(sgn)
    status = st.status
    return (np.array(times), np.array(states).reshape(-1, 4),
            np.array(signs, dtype=np.int64), status)


def lyapunov_logs(z0, w0, T, renorm_dt, vx, vy, tol, max_steps):
    """Benettin renormalisation logs of the tangent-vector growth.

    Integrates state and tangent together over ``round(T/renorm_dt)`` segments
    and returns ``(logs, z_final, status)``.
    """
    nseg = int(round(T / renorm_dt))
    Z = np.concatenate([np.asarray(z0, float), np.asarray(w0, float)])[None, :].copy()
    nrm = math.sqrt(float(np.sum(Z[0, 4:] * Z[0, 4:])))
    Z[0, 4:] /= nrm
    h = np.zeros(1)
    status = np.zeros(1, dtype=np.int32)
    logs = np.empty(nseg)
    for k in range(nseg):
        advance_batch(Z, h, status, k * renorm_dt, (k + 1) * renorm_dt, vx, vy, tol, max_steps)
        if status[0] != OK:
            return logs[:k], Z[0, :4].copy(), int(status[0])
        w = Z[0, 4:]
        g = math.sqrt(float(w[0] * w[0] + w[1] * w[1] + w[2] * w[2] + w[3] * w[3]))
        logs[k] = math.log(g)
        Z[0, 4:] = w / g
    return logs, Z[0, :4].copy(), OK


def spinor_kick(up, down, m11, m12, m21):
    """In-place ``(up, down) <- [[m11, m12], [m21, m11]] @ (up, down)``."""
    tmp = m11 * up
    tmp += m12 * down
    down *= m11
    down += m21 * up
    up[...] = tmp


def phase_kick(arr, m):
    arr *= m


rhs_single = rhs
