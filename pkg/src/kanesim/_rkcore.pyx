# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Dormand-Prince 8(5,3) integrator for the dephasing master equation.

Integrates

    d rho / dt = -(i / hbar) [H(t), rho] - W * rho      (elementwise product)

with ``H(t) = h0 + cos(omega t + phase) hc + sin(omega t + phase) hs``. The
right-hand side keeps Hermitian inputs Hermitian: the commutator is formed as
``M - M^dag`` with ``M = H rho``. Step-size control follows the DOP853
error estimate and step controller of Hairer, Norsett and Wanner (the same
rules scipy's ``DOP853`` uses); coefficients are passed in from Python.

Internally every d x d complex matrix is a flat array of 2 d^2 doubles
(interleaved real and imaginary parts), so the Runge-Kutta linear
combinations are plain real loops the compiler can vectorize.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, fabs, pow, fmax, fmin
from scipy.linalg.cython_blas cimport zgemm

cnp.import_array()

cdef double SAFETY = 0.9
cdef double MIN_FACTOR = 0.2
cdef double MAX_FACTOR = 10.0
cdef double EPS = 2.220446049250313e-16


cdef struct Rhs:
    int d
    bint driven
    double omega
    double phase
    double inv_hbar
    double *h0
    double *hc
    double *hs
    double *w
    double *hbuf
    double *mbuf
    long nfev


cdef void rhs_eval(Rhs *r, double t, double *y, double *out) noexcept nogil:
    """out = -(i/hbar)(H y - (H y)^dag) - W * y on interleaved storage."""
    cdef int d = r.d
    cdef int n2 = 2 * d * d
    cdef int i, j, p, q
    cdef double c, s, ar, ai, br, bi
    cdef double complex one = 1.0
    cdef double complex zero = 0.0
    cdef char trans = b'N'
    cdef double *hh
    if r.driven:
        c = cos(r.omega * t + r.phase)
        s = sin(r.omega * t + r.phase)
        for p in range(n2):
            r.hbuf[p] = r.h0[p] + c * r.hc[p] + s * r.hs[p]
        hh = r.hbuf
    else:
        hh = r.h0
    # Row-major M = H y is the column-major product y^T H^T.
    zgemm(&trans, &trans, &d, &d, &d, &one, <double complex *> y, &d,
          <double complex *> hh, &d, &zero, <double complex *> r.mbuf, &d)
    cdef double ih = r.inv_hbar
    for i in range(d):
        for j in range(d):
            p = 2 * (i * d + j)
            q = 2 * (j * d + i)
            # diff = M_ij - conj(M_ji)
            ar = r.mbuf[p] - r.mbuf[q]
            ai = r.mbuf[p + 1] + r.mbuf[q + 1]
            # -(i / hbar) diff = (ai - i ar) / hbar
            out[p] = ai * ih - r.w[i * d + j] * y[p]
            out[p + 1] = -ar * ih - r.w[i * d + j] * y[p + 1]
    r.nfev += 1


cdef double rms_scaled(double *a, double *scale, int n) noexcept nogil:
    """RMS over the n complex entries of a / scale (scale is per entry)."""
    cdef int m
    cdef double acc = 0.0, sr
    for m in range(n):
        sr = scale[m]
        acc += (a[2 * m] * a[2 * m] + a[2 * m + 1] * a[2 * m + 1]) / (sr * sr)
    return sqrt(acc / n)


cdef void combine(double *base, int ncoef, double *coefs, double **kptr,
                  double *out, int n2) noexcept nogil:
    """out = base + sum_k coefs[k] * kptr[k] (base may be NULL for zero)."""
    cdef int p, k
    cdef double c
    cdef double *kp
    if base != NULL:
        for p in range(n2):
            out[p] = base[p]
    else:
        for p in range(n2):
            out[p] = 0.0
    for k in range(ncoef):
        c = coefs[k]
        kp = kptr[k]
        for p in range(n2):
            out[p] += c * kp[p]


def integrate(rho0, h0, hc, hs, double omega, double phase, w, double hbar,
              double t0, t_out, double rtol, double atol, double first_step,
              long max_steps, A, B, C, E3, E5, bint driven=True):
    """Integrate from ``t0`` through every time in ``t_out`` (increasing).

    Returns ``(states, nsteps, nrejected, nfev, t_reached, status)`` where
    ``status`` is 0 on success, 1 if the step size underflowed and 2 if
    ``max_steps`` was exceeded. ``states`` holds the solution at each output
    time reached.
    """
    y_np = np.array(rho0, dtype=complex, order="C")
    cdef int d = y_np.shape[0]
    cdef int n = d * d
    cdef int n2 = 2 * n

    h0_np = np.array(h0, dtype=complex, order="C").view(float).reshape(-1)
    hc_np = np.array(hc, dtype=complex, order="C").view(float).reshape(-1)
    hs_np = np.array(hs, dtype=complex, order="C").view(float).reshape(-1)
    w_np = np.array(w, dtype=float, order="C").reshape(-1)
    hbuf_np = np.zeros(n2)
    mbuf_np = np.zeros(n2)
    cdef double[::1] vh0 = h0_np, vhc = hc_np, vhs = hs_np, vw = w_np
    cdef double[::1] vhbuf = hbuf_np, vmbuf = mbuf_np

    cdef Rhs r
    r.d = d
    r.driven = driven
    r.omega = omega
    r.phase = phase
    r.inv_hbar = 1.0 / hbar
    r.h0 = &vh0[0]
    r.hc = &vhc[0]
    r.hs = &vhs[0]
    r.w = &vw[0]
    r.hbuf = &vhbuf[0]
    r.mbuf = &vmbuf[0]
    r.nfev = 0

    cdef double[:, ::1] a = np.ascontiguousarray(A, dtype=float)
    cdef double[::1] b = np.ascontiguousarray(B, dtype=float)
    cdef double[::1] cc = np.ascontiguousarray(C, dtype=float)
    cdef double[::1] e3 = np.ascontiguousarray(E3, dtype=float)
    cdef double[::1] e5 = np.ascontiguousarray(E5, dtype=float)
    cdef double[::1] tout = np.ascontiguousarray(t_out, dtype=float)
    cdef int n_stages = b.shape[0]
    cdef int n_out = tout.shape[0]

    out_np = np.zeros((n_out, d, d), dtype=complex)
    cdef double[::1] vout = out_np.view(float).reshape(-1)
    cdef double[::1] vy = y_np.view(float).reshape(-1)
    cdef double[:, ::1] K = np.zeros((n_stages + 1, n2))
    cdef double[::1] ystage = np.zeros(n2)
    cdef double[::1] ynew = np.zeros(n2)
    cdef double[::1] tmp = np.zeros(n2)
    cdef double[::1] scale = np.zeros(n)

    cdef double *y = &vy[0]
    cdef double *kbase = &K[0, 0]
    cdef double[::1] coefs = np.zeros(n_stages + 1)
    cdef double *kptr[32]
    cdef int ncoef
    cdef double t = t0, h_abs, h_try, t_target, err_norm, e5n, e3n, denom, factor, coef
    cdef double d0, d1, d2, h0s, h1s, x5r, x5i, x3r, x3i, mag, magn, sc
    cdef int p, m, s, k, io = 0
    cdef long nsteps = 0, nrej = 0
    cdef int status = 0
    cdef bint rejected = False
    cdef double err_exp = -1.0 / 8.0

    # Output times at or before t0 are filled immediately.
    while io < n_out and tout[io] <= t0:
        for p in range(n2):
            vout[io * n2 + p] = y[p]
        io += 1
    if io == n_out:
        return out_np, 0, 0, r.nfev, t, 0

    with nogil:
        rhs_eval(&r, t, y, &K[0, 0])

        # Initial step (Hairer, Norsett and Wanner, section II.4).
        if first_step > 0:
            h_abs = first_step
        else:
            for m in range(n):
                scale[m] = atol + sqrt(y[2 * m] * y[2 * m] + y[2 * m + 1] * y[2 * m + 1]) * rtol
            d0 = rms_scaled(y, &scale[0], n)
            d1 = rms_scaled(&K[0, 0], &scale[0], n)
            if d0 < 1e-5 or d1 < 1e-5:
                h0s = 1e-6 * (tout[n_out - 1] - t0)
            else:
                h0s = 0.01 * d0 / d1
            h0s = fmin(h0s, tout[n_out - 1] - t0)
            for p in range(n2):
                ystage[p] = y[p] + h0s * K[0, p]
            rhs_eval(&r, t + h0s, &ystage[0], &K[1, 0])
            for p in range(n2):
                tmp[p] = K[1, p] - K[0, p]
            d2 = rms_scaled(&tmp[0], &scale[0], n) / h0s
            if d1 <= 1e-15 and d2 <= 1e-15:
                h1s = fmax(1e-6, h0s * 1e-3)
            else:
                h1s = pow(0.01 / fmax(d1, d2), 1.0 / 8.0)
            h_abs = fmin(100 * h0s, h1s)

        while io < n_out:
            t_target = tout[io]
            if nsteps >= max_steps:
                status = 2
                break
            if h_abs <= 10 * EPS * fmax(fabs(t), 1e-300):
                status = 1
                break
            h_try = fmin(h_abs, t_target - t)

            for s in range(1, n_stages):
                ncoef = 0
                for k in range(s):
                    if a[s, k] != 0.0:
                        coefs[ncoef] = h_try * a[s, k]
                        kptr[ncoef] = kbase + k * n2
                        ncoef += 1
                combine(y, ncoef, &coefs[0], &kptr[0], &ystage[0], n2)
                rhs_eval(&r, t + cc[s] * h_try, &ystage[0], kbase + s * n2)

            ncoef = 0
            for k in range(n_stages):
                if b[k] != 0.0:
                    coefs[ncoef] = h_try * b[k]
                    kptr[ncoef] = kbase + k * n2
                    ncoef += 1
            combine(y, ncoef, &coefs[0], &kptr[0], &ynew[0], n2)
            rhs_eval(&r, t + h_try, &ynew[0], kbase + n_stages * n2)

            # Error estimate: err5 and err3 combinations of all stages.
            ncoef = 0
            for k in range(n_stages + 1):
                if e5[k] != 0.0:
                    coefs[ncoef] = e5[k]
                    kptr[ncoef] = kbase + k * n2
                    ncoef += 1
            combine(NULL, ncoef, &coefs[0], &kptr[0], &ystage[0], n2)
            ncoef = 0
            for k in range(n_stages + 1):
                if e3[k] != 0.0:
                    coefs[ncoef] = e3[k]
                    kptr[ncoef] = kbase + k * n2
                    ncoef += 1
            combine(NULL, ncoef, &coefs[0], &kptr[0], &tmp[0], n2)
            e5n = 0.0
            e3n = 0.0
            for m in range(n):
                mag = sqrt(y[2 * m] * y[2 * m] + y[2 * m + 1] * y[2 * m + 1])
                magn = sqrt(ynew[2 * m] * ynew[2 * m] + ynew[2 * m + 1] * ynew[2 * m + 1])
                sc = atol + fmax(mag, magn) * rtol
                sc = sc * sc
                x5r = ystage[2 * m]
                x5i = ystage[2 * m + 1]
                x3r = tmp[2 * m]
                x3i = tmp[2 * m + 1]
                e5n += (x5r * x5r + x5i * x5i) / sc
                e3n += (x3r * x3r + x3i * x3i) / sc
            if e5n == 0.0 and e3n == 0.0:
                err_norm = 0.0
            else:
                denom = e5n + 0.01 * e3n
                err_norm = h_try * e5n / sqrt(denom * n)

            if err_norm < 1.0:
                if err_norm == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = fmin(MAX_FACTOR, SAFETY * pow(err_norm, err_exp))
                if rejected:
                    factor = fmin(1.0, factor)
                # A step shortened to land on an output time keeps the
                # proposal of the full step.
                if h_try < h_abs:
                    h_abs = fmax(h_abs, h_try * factor)
                else:
                    h_abs = h_try * factor
                rejected = False
                nsteps += 1
                if h_try == t_target - t:
                    t = t_target
                else:
                    t = t + h_try
                for p in range(n2):
                    y[p] = ynew[p]
                    K[0, p] = K[n_stages, p]
                while io < n_out and tout[io] <= t:
                    for p in range(n2):
                        vout[io * n2 + p] = y[p]
                    io += 1
            else:
                h_abs = h_try * fmax(MIN_FACTOR, SAFETY * pow(err_norm, err_exp))
                rejected = True
                nrej += 1

    return out_np[:io], nsteps, nrej, r.nfev, t, status
