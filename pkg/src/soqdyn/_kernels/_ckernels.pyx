# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: DOPRI5 batch integration, dense output, section
crossings, Benettin tangent flow, fused spinor kick.

Every routine mirrors its counterpart in ``_pykernels`` expression for
expression; keep the two in lockstep.
"""
import numpy as np
from libc.math cimport sqrt, pow, fabs, log, isfinite

BACKEND = "cython"

cdef enum:
    OK = 0
    UNDERFLOW = 1
    NONFINITE = 2
    MAXSTEPS = 3

cdef double A21 = 1.0 / 5.0
cdef double A31 = 3.0 / 40.0, A32 = 9.0 / 40.0
cdef double A41 = 44.0 / 45.0, A42 = -56.0 / 15.0, A43 = 32.0 / 9.0
cdef double A51 = 19372.0 / 6561.0, A52 = -25360.0 / 2187.0, A53 = 64448.0 / 6561.0, A54 = -212.0 / 729.0
cdef double A61 = 9017.0 / 3168.0, A62 = -355.0 / 33.0, A63 = 46732.0 / 5247.0
cdef double A64 = 49.0 / 176.0, A65 = -5103.0 / 18656.0
cdef double A71 = 35.0 / 384.0, A73 = 500.0 / 1113.0, A74 = 125.0 / 192.0
cdef double A75 = -2187.0 / 6784.0, A76 = 11.0 / 84.0
cdef double E1 = 71.0 / 57600.0, E3 = -71.0 / 16695.0, E4 = 71.0 / 1920.0
cdef double E5 = -17253.0 / 339200.0, E6 = 22.0 / 525.0, E7 = -1.0 / 40.0
cdef double D1 = -12715105075.0 / 11282082432.0, D3 = 87487479700.0 / 32700410799.0
cdef double D4 = -10690763975.0 / 1880347072.0, D5 = 701980252875.0 / 199316789632.0
cdef double D6 = -1453857185.0 / 822651844.0, D7 = 69997945.0 / 29380423.0

cdef double SAFETY = 0.9, FACMIN = 0.2, FACMAX = 5.0
cdef double HMIN_REL = 1e-13


cdef struct Work:
    double k1[8]
    double k2[8]
    double k3[8]
    double k4[8]
    double k5[8]
    double k6[8]
    double k7[8]
    double y[8]
    double tmp[8]
    double errv[8]


cdef inline double dmax(double a, double b) nogil:
    return a if a > b else b


cdef inline double dmin(double a, double b) nogil:
    return a if a < b else b


cdef void rhs(const double* z, double* out, int d, double vx2, double vy2) noexcept nogil:
    cdef double x = z[0], px = z[1], y = z[2], py = z[3]
    cdef double S = sqrt(vx2 * px * px + vy2 * py * py)
    cdef double tx = 0.0, ty = 0.0, S3, jxx, jxy, jyy
    if S > 0.0:
        tx = (vx2 * px) / S
        ty = (vy2 * py) / S
    out[0] = px - tx
    out[1] = -x
    out[2] = py - ty
    out[3] = -y
    if d == 8:
        if S > 0.0:
            S3 = S * S * S
            jxx = 1.0 - vx2 / S + (vx2 * vx2 * px * px) / S3
            jxy = (vx2 * vy2 * px * py) / S3
            jyy = 1.0 - vy2 / S + (vy2 * vy2 * py * py) / S3
        else:
            jxx = 1.0
            jxy = 0.0
            jyy = 1.0
        out[4] = jxx * z[5] + jxy * z[7]
        out[5] = -z[4]
        out[6] = jxy * z[5] + jyy * z[7]
        out[7] = -z[6]


def rhs_single(z, double vx, double vy):
    cdef double zz[8]
    cdef double out[8]
    cdef int d = len(z), i
    for i in range(d):
        zz[i] = z[i]
    rhs(zz, out, d, vx * vx, vy * vy)
    return np.array([out[i] for i in range(d)])


cdef double wnorm(const double* v, const double* sk, int d) noexcept nogil:
    cdef double acc = 0.0, q
    cdef int i
    for i in range(d):
        q = v[i] / sk[i]
        acc = acc + q * q
    return sqrt(acc / d)


cdef double dopri_stages(const double* z, double hs, Work* w, int d, double vx2, double vy2,
                         double tol) noexcept nogil:
    """Fill w.y, w.k2..k7 from w.k1; return the scaled error norm."""
    cdef int i
    cdef double sk[8]
    for i in range(d):
        w.tmp[i] = z[i] + hs * (A21 * w.k1[i])
    rhs(w.tmp, w.k2, d, vx2, vy2)
    for i in range(d):
        w.tmp[i] = z[i] + hs * (A31 * w.k1[i] + A32 * w.k2[i])
    rhs(w.tmp, w.k3, d, vx2, vy2)
    for i in range(d):
        w.tmp[i] = z[i] + hs * (A41 * w.k1[i] + A42 * w.k2[i] + A43 * w.k3[i])
    rhs(w.tmp, w.k4, d, vx2, vy2)
    for i in range(d):
        w.tmp[i] = z[i] + hs * (A51 * w.k1[i] + A52 * w.k2[i] + A53 * w.k3[i] + A54 * w.k4[i])
    rhs(w.tmp, w.k5, d, vx2, vy2)
    for i in range(d):
        w.tmp[i] = z[i] + hs * (A61 * w.k1[i] + A62 * w.k2[i] + A63 * w.k3[i] + A64 * w.k4[i]
                                + A65 * w.k5[i])
    rhs(w.tmp, w.k6, d, vx2, vy2)
    for i in range(d):
        w.y[i] = z[i] + hs * (A71 * w.k1[i] + A73 * w.k3[i] + A74 * w.k4[i] + A75 * w.k5[i]
                              + A76 * w.k6[i])
    rhs(w.y, w.k7, d, vx2, vy2)
    for i in range(d):
        w.errv[i] = hs * (E1 * w.k1[i] + E3 * w.k3[i] + E4 * w.k4[i] + E5 * w.k5[i]
                          + E6 * w.k6[i] + E7 * w.k7[i])
        sk[i] = tol + tol * dmax(fabs(z[i]), fabs(w.y[i]))
    return wnorm(w.errv, sk, d)


cdef double initial_step(const double* z, const double* k1, double tol, int d, double vx2,
                         double vy2, double span) noexcept nogil:
    cdef double sk[8]
    cdef double z1[8]
    cdef double f1[8]
    cdef double df[8]
    cdef double d0, d1, d2, dm, h0, h1, h
    cdef int i
    for i in range(d):
        sk[i] = tol + tol * fabs(z[i])
    d0 = wnorm(z, sk, d)
    d1 = wnorm(k1, sk, d)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    for i in range(d):
        z1[i] = z[i] + h0 * k1[i]
    rhs(z1, f1, d, vx2, vy2)
    for i in range(d):
        df[i] = f1[i] - k1[i]
    d2 = wnorm(df, sk, d) / h0
    dm = dmax(d1, d2)
    if dm <= 1e-15:
        h1 = dmax(1e-6, h0 * 1e-3)
    else:
        h1 = pow(0.01 / dm, 0.2)
    h = dmin(100.0 * h0, h1)
    return dmin(h, span)


cdef inline int all_finite(const double* z, int d) noexcept nogil:
    cdef int i
    for i in range(d):
        if not isfinite(z[i]):
            return 0
    return 1


cdef int advance_one(double* z, double* hptr, double t0, double t1, int d, double vx2,
                     double vy2, double tol, long max_steps, long* nsteps) noexcept nogil:
    cdef Work w
    cdef double t = t0, hprop, hs, err, fac
    cdef int clipped, rejected = 0, finite, i
    cdef long n = 0
    rhs(z, w.k1, d, vx2, vy2)
    if hptr[0] <= 0.0:
        hptr[0] = initial_step(z, w.k1, tol, d, vx2, vy2, t1 - t0)
    while t < t1:
        hprop = hptr[0]
        clipped = t + hprop >= t1
        hs = (t1 - t) if clipped else hprop
        err = dopri_stages(z, hs, &w, d, vx2, vy2, tol)
        n += 1
        finite = isfinite(err)
        if finite and err > 0.0:
            fac = SAFETY * pow(err, -0.2)
        elif finite:
            fac = FACMAX
        else:
            fac = FACMIN
        fac = dmin(dmax(fac, FACMIN), FACMAX)
        if finite and err <= 1.0:
            if rejected:
                fac = dmin(fac, 1.0)
            for i in range(d):
                z[i] = w.y[i]
                w.k1[i] = w.k7[i]
            if clipped:
                t = t1
                hptr[0] = dmax(hprop, hs * fac)
            else:
                t = t + hs
                hptr[0] = hs * fac
            rejected = 0
        else:
            hptr[0] = hs * dmin(fac, 1.0)
            rejected = 1
            if hptr[0] < HMIN_REL * dmax(1.0, fabs(t)):
                nsteps[0] += n
                return UNDERFLOW
        if n >= max_steps and t < t1:
            nsteps[0] += n
            return MAXSTEPS
    nsteps[0] += n
    return OK


def advance_batch(double[:, ::1] Z, double[::1] h, int[::1] status, double t0, double t1,
                  double vx, double vy, double tol, long max_steps):
    cdef Py_ssize_t N = Z.shape[0], j
    cdef int d = Z.shape[1]
    cdef double vx2 = vx * vx, vy2 = vy * vy
    cdef long total = 0
    if t1 - t0 <= 0.0 or N == 0:
        return 0
    with nogil:
        for j in range(N):
            if status[j] != OK:
                continue
            if not all_finite(&Z[j, 0], d):
                status[j] = NONFINITE
                continue
            status[j] = advance_one(&Z[j, 0], &h[j], t0, t1, d, vx2, vy2, tol, max_steps, &total)
    return total


cdef struct Stepper:
    double z[8]
    double t
    double h
    int rejected
    long nstep
    int status
    # previous accepted step
    double zp[8]
    double kp[8]
    double tp
    double hs
    double rc[5][8]


cdef void stepper_init(Stepper* st, Work* w, const double* z0, double t0, int d, double vx2,
                       double vy2, double tol, double span) noexcept nogil:
    cdef int i
    for i in range(d):
        st.z[i] = z0[i]
    st.t = t0
    st.rejected = 0
    st.nstep = 0
    st.status = OK
    if not all_finite(z0, d):
        st.status = NONFINITE
        return
    rhs(st.z, w.k1, d, vx2, vy2)
    st.h = initial_step(st.z, w.k1, tol, d, vx2, vy2, span)


cdef int stepper_step(Stepper* st, Work* w, double t_end, int d, double vx2, double vy2,
                      double tol, long max_steps) noexcept nogil:
    """Advance until one step is accepted.  Returns 1 on success, 0 on failure."""
    cdef int clipped, finite, i
    cdef double hs, err, fac, ydiff, bspl
    while True:
        if st.nstep >= max_steps:
            st.status = MAXSTEPS
            return 0
        clipped = st.t + st.h >= t_end
        hs = (t_end - st.t) if clipped else st.h
        err = dopri_stages(st.z, hs, w, d, vx2, vy2, tol)
        st.nstep += 1
        finite = isfinite(err)
        if finite and err > 0.0:
            fac = SAFETY * pow(err, -0.2)
        elif finite:
            fac = FACMAX
        else:
            fac = FACMIN
        fac = dmin(dmax(fac, FACMIN), FACMAX)
        if finite and err <= 1.0:
            if st.rejected:
                fac = dmin(fac, 1.0)
            for i in range(d):
                ydiff = w.y[i] - st.z[i]
                bspl = hs * w.k1[i] - ydiff
                st.rc[0][i] = st.z[i]
                st.rc[1][i] = ydiff
                st.rc[2][i] = bspl
                st.rc[3][i] = ydiff - hs * w.k7[i] - bspl
                st.rc[4][i] = hs * (D1 * w.k1[i] + D3 * w.k3[i] + D4 * w.k4[i] + D5 * w.k5[i]
                                    + D6 * w.k6[i] + D7 * w.k7[i])
                st.zp[i] = st.z[i]
                st.kp[i] = w.k1[i]
                st.z[i] = w.y[i]
                w.k1[i] = w.k7[i]
            st.tp = st.t
            st.hs = hs
            if clipped:
                st.t = t_end
                st.h = dmax(st.h, hs * fac)
            else:
                st.t = st.t + hs
                st.h = hs * fac
            st.rejected = 0
            return 1
        st.h = hs * dmin(fac, 1.0)
        st.rejected = 1
        if st.h < HMIN_REL * dmax(1.0, fabs(st.t)):
            st.status = UNDERFLOW
            return 0


def integrate_dense(z0, double t0, t_eval, double vx, double vy, double tol, long max_steps):
    cdef double[::1] te = np.ascontiguousarray(t_eval, dtype=np.float64)
    cdef Py_ssize_t m = te.shape[0], j = 0
    cdef int d = len(z0), i
    out_arr = np.full((m, d), np.nan)
    cdef double[:, ::1] out = out_arr
    cdef double zz[8]
    cdef Stepper st
    cdef Work w
    cdef double vx2 = vx * vx, vy2 = vy * vy, t_end, theta, th1
    if m == 0:
        return out_arr, 0, OK, t0
    for i in range(d):
        zz[i] = z0[i]
    t_end = te[m - 1]
    with nogil:
        stepper_init(&st, &w, zz, t0, d, vx2, vy2, tol, dmax(t_end - t0, 1e-300))
    if st.status != OK:
        return out_arr, 0, st.status, t0
    with nogil:
        while j < m and te[j] <= t0:
            for i in range(d):
                out[j, i] = st.z[i]
            j += 1
        while j < m:
            if not stepper_step(&st, &w, t_end, d, vx2, vy2, tol, max_steps):
                break
            while j < m and te[j] <= st.t:
                if te[j] == st.t:
                    for i in range(d):
                        out[j, i] = st.z[i]
                else:
                    theta = (te[j] - st.tp) / st.hs
                    th1 = 1.0 - theta
                    for i in range(d):
                        out[j, i] = st.rc[0][i] + theta * (st.rc[1][i] + th1 * (
                            st.rc[2][i] + theta * (st.rc[3][i] + th1 * st.rc[4][i])))
                j += 1
    if st.status != OK:
        return out_arr, st.nstep, st.status, st.t
    return out_arr, st.nstep, OK, st.t


cdef void single_step(const double* z, double hs, double* out, double vx2, double vy2) noexcept nogil:
    cdef Work w
    cdef int i
    rhs(z, w.k1, 4, vx2, vy2)
    dopri_stages(z, hs, &w, 4, vx2, vy2, 1.0)
    for i in range(4):
        out[i] = w.y[i]


cdef inline double hermite(double g0, double d0, double g1, double d1, double s) noexcept nogil:
    cdef double s2 = s * s, s3 = s * s * s
    return ((2 * s3 - 3 * s2 + 1) * g0 + (s3 - 2 * s2 + s) * d0
            + (-2 * s3 + 3 * s2) * g1 + (s3 - s2) * d1)


cdef int locate(Stepper* st, const double* kY, int index, double vx2, double vy2,
                double* tc_out, double* zc) noexcept nogil:
    cdef double g0 = st.zp[index], g1 = st.z[index]
    cdef double d0 = st.hs * st.kp[index], d1 = st.hs * kY[index]
    cdef double lo = 0.0, hi = 1.0, mid, gm, s, tc, g, dt
    cdef double f[4]
    cdef double tmp[4]
    cdef int it, i
    for it in range(60):
        mid = 0.5 * (lo + hi)
        gm = hermite(g0, d0, g1, d1, mid)
        if ((gm < 0.0) == (g0 < 0.0)) and gm != 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    s = 0.5 * (lo + hi)
    tc = st.tp + s * st.hs
    single_step(st.zp, s * st.hs, zc, vx2, vy2)
    for it in range(8):
        rhs(zc, f, 4, vx2, vy2)
        g = zc[index]
        if fabs(g) < 1e-13 or f[index] == 0.0:
            break
        dt = -g / f[index]
        single_step(zc, dt, tmp, vx2, vy2)
        for i in range(4):
            zc[i] = tmp[i]
        tc += dt
    rhs(zc, f, 4, vx2, vy2)
    tc_out[0] = tc
    return 1 if f[index] > 0.0 else -1


def section_crossings(z0, double t_f, int index, double vx, double vy, double tol,
                      long max_steps, long max_crossings):
    cdef double zz[4]
    cdef double zc[4]
    cdef double tc, g0, g1
    cdef Stepper st
    cdef Work w
    cdef double vx2 = vx * vx, vy2 = vy * vy
    cdef int i, sgn
    times, states, signs = [], [], []
    for i in range(4):
        zz[i] = z0[i]
    stepper_init(&st, &w, zz, 0.0, 4, vx2, vy2, tol, t_f)
    if st.status != OK:
        return np.zeros(0), np.zeros((0, 4)), np.zeros(0, dtype=np.int64), st.status
    while st.t < t_f and len(times) < max_crossings:
        if not stepper_step(&st, &w, t_f, 4, vx2, vy2, tol, max_steps):
            break
        g0 = st.zp[index]
        g1 = st.z[index]
        if g0 != 0.0 and (g1 == 0.0 or ((g0 < 0.0) != (g1 < 0.0))):
            sgn = locate(&st, w.k1, index, vx2, vy2, &tc, zc)
            times.append(tc)
            states.append([zc[0], zc[1], zc[2], zc[3]])
            signs.append(sgn)
    return (np.array(times), np.array(states, dtype=float).reshape(-1, 4),
            np.array(signs, dtype=np.int64), st.status)


def lyapunov_logs(z0, w0, double T, double renorm_dt, double vx, double vy, double tol,
                  long max_steps):
    cdef long nseg = int(round(T / renorm_dt)), k
    cdef double zz[8]
    cdef double hstep = 0.0, nrm, g
    cdef double vx2 = vx * vx, vy2 = vy * vy
    cdef long total = 0
    cdef int i, status = OK
    logs_arr = np.empty(nseg)
    cdef double[::1] logs = logs_arr
    for i in range(4):
        zz[i] = z0[i]
        zz[4 + i] = w0[i]
    nrm = sqrt(zz[4] * zz[4] + zz[5] * zz[5] + zz[6] * zz[6] + zz[7] * zz[7])
    for i in range(4):
        zz[4 + i] = zz[4 + i] / nrm
    with nogil:
        for k in range(nseg):
            if not all_finite(zz, 8):
                status = NONFINITE
                break
            status = advance_one(zz, &hstep, k * renorm_dt, (k + 1) * renorm_dt, 8, vx2, vy2,
                                 tol, max_steps, &total)
            if status != OK:
                break
            g = sqrt(zz[4] * zz[4] + zz[5] * zz[5] + zz[6] * zz[6] + zz[7] * zz[7])
            logs[k] = log(g)
            for i in range(4):
                zz[4 + i] = zz[4 + i] / g
    zf = np.array([zz[0], zz[1], zz[2], zz[3]])
    if status != OK:
        return logs_arr[:k].copy(), zf, status
    return logs_arr, zf, OK


def spinor_kick(double complex[:, ::1] up, double complex[:, ::1] down,
                const double complex[:, ::1] m11, const double complex[:, ::1] m12,
                const double complex[:, ::1] m21):
    cdef Py_ssize_t n0 = up.shape[0], n1 = up.shape[1], i, j
    cdef double complex a, b
    with nogil:
        for i in range(n0):
            for j in range(n1):
                a = up[i, j]
                b = down[i, j]
                up[i, j] = m11[i, j] * a + m12[i, j] * b
                down[i, j] = m21[i, j] * a + m11[i, j] * b


def phase_kick(double complex[:, ::1] arr, const double complex[:, ::1] m):
    cdef Py_ssize_t n0 = arr.shape[0], n1 = arr.shape[1], i, j
    with nogil:
        for i in range(n0):
            for j in range(n1):
                arr[i, j] = arr[i, j] * m[i, j]
