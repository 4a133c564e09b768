# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Same algorithms and signatures as ``_kernels_py``."""

import numpy as np
from libc.math cimport sqrt, fabs, copysign, INFINITY

cdef int JACOBI_MAX_SWEEPS = 100
cdef double MIN_STEP = 1e-20


def jacobi_eigh(a_in):
    cdef double[:, ::1] a = np.array(a_in, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = a.shape[0]
    v_arr = np.eye(n)
    cdef double[:, ::1] v = v_arr
    cdef Py_ssize_t p, q, i, sweep
    cdef double scale = 0.0, thresh, off, apq, theta, t, c, s, x, y
    for i in range(n):
        scale += fabs(a[i, i])
    thresh = 1e-14 * scale
    for sweep in range(JACOBI_MAX_SWEEPS):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                if fabs(a[p, q]) > off:
                    off = fabs(a[p, q])
        if off <= thresh or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = copysign(1.0, theta) / (fabs(theta) + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for i in range(n):
                    x = a[i, p]
                    y = a[i, q]
                    a[i, p] = c * x - s * y
                    a[i, q] = s * x + c * y
                for i in range(n):
                    x = a[p, i]
                    y = a[q, i]
                    a[p, i] = c * x - s * y
                    a[q, i] = s * x + c * y
                a[p, q] = 0.0
                a[q, p] = 0.0
                for i in range(n):
                    x = v[i, p]
                    y = v[i, q]
                    v[i, p] = c * x - s * y
                    v[i, q] = s * x + c * y
    w = np.empty(n)
    cdef double[::1] wv = w
    for i in range(n):
        wv[i] = a[i, i]
    return w, v_arr


cdef list _level_offsets(Py_ssize_t d, int m):
    cdef list offsets = [0]
    cdef Py_ssize_t size = 1
    cdef int k
    for k in range(m + 1):
        offsets.append(offsets[k] + size)
        size *= d
    return offsets


def chen_product(a_in, b_in, Py_ssize_t d, int m):
    cdef double[::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef list offsets = _level_offsets(d, m)
    out_arr = np.zeros(offsets[m + 1])
    cdef double[::1] out = out_arr
    cdef int k, i, j
    cdef Py_ssize_t oa, ob, oc, na, nb, ia, ib
    cdef double av
    for k in range(m + 1):
        oc = offsets[k]
        for i in range(k + 1):
            j = k - i
            oa = offsets[i]
            na = offsets[i + 1] - oa
            ob = offsets[j]
            nb = offsets[j + 1] - ob
            for ia in range(na):
                av = a[oa + ia]
                if av == 0.0:
                    continue
                for ib in range(nb):
                    out[oc + ia * nb + ib] += av * b[ob + ib]
    return out_arr


def signature_from_increments(increments_in, int m):
    cdef double[:, ::1] inc = np.ascontiguousarray(increments_in, dtype=np.float64)
    cdef Py_ssize_t nseg = inc.shape[0]
    cdef Py_ssize_t d = inc.shape[1]
    cdef list offsets = _level_offsets(d, m)
    sig_arr = np.zeros(offsets[m + 1])
    cdef double[::1] sig = sig_arr
    # powers[j] holds delta^{(x)j}/j! at the same offsets as the signature
    pw_arr = np.zeros(offsets[m + 1])
    cdef double[::1] pw = pw_arr
    cdef Py_ssize_t seg, k, j, ia, ib, na, nb, olow, opw, ok, prev_o, prev_n
    cdef double lv
    sig[0] = 1.0
    pw[0] = 1.0
    for seg in range(nseg):
        for j in range(1, m + 1):
            prev_o = offsets[j - 1]
            prev_n = offsets[j] - prev_o
            ok = offsets[j]
            for ia in range(prev_n):
                for ib in range(d):
                    pw[ok + ia * d + ib] = pw[prev_o + ia] * inc[seg, ib] / j
        for k in range(m, 0, -1):
            ok = offsets[k]
            for j in range(1, k + 1):
                olow = offsets[k - j]
                na = offsets[k - j + 1] - olow
                opw = offsets[j]
                nb = offsets[j + 1] - opw
                for ia in range(na):
                    lv = sig[olow + ia]
                    if lv == 0.0:
                        continue
                    for ib in range(nb):
                        sig[ok + ia * nb + ib] += lv * pw[opw + ib]
    return sig_arr


cdef void _project(double[::1] v, double[::1] out, double[::1] work) noexcept:
    # sort-and-threshold projection; work is scratch of len n
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t i, j, rho = 0
    cdef double css = 0.0, theta_css = 0.0, x
    for i in range(n):
        work[i] = v[i]
    # insertion sort descending; n is small
    for i in range(1, n):
        x = work[i]
        j = i - 1
        while j >= 0 and work[j] < x:
            work[j + 1] = work[j]
            j -= 1
        work[j + 1] = x
    for i in range(n):
        css += work[i]
        if work[i] + (1.0 - css) / (i + 1) > 0:
            rho = i
            theta_css = css
    x = (theta_css - 1.0) / (rho + 1)
    for i in range(n):
        out[i] = v[i] - x if v[i] - x > 0.0 else 0.0


def project_simplex(v_in):
    cdef double[::1] v = np.array(v_in, dtype=np.float64, copy=True).ravel()
    out_arr = np.empty(v.shape[0])
    work = np.empty(v.shape[0])
    _project(v, out_arr, work)
    return out_arr


cdef double _objective(double[::1] mu, double[:, ::1] sigma, double[::1] anchor,
                       double lam, double[::1] phi) noexcept:
    cdef Py_ssize_t n = phi.shape[0]
    cdef Py_ssize_t i, j
    cdef double var = 0.0, ret = 0.0, row, pen = 0.0, diff, val
    for i in range(n):
        row = 0.0
        for j in range(n):
            row += sigma[i, j] * phi[j]
        var += phi[i] * row
        ret += mu[i] * phi[i]
    if var <= 0.0:
        return -INFINITY
    val = ret / sqrt(var)
    if lam != 0.0:
        for i in range(n):
            diff = phi[i] - anchor[i]
            pen += diff * diff
        val -= lam * pen
    return val


def penalized_sharpe(mu, sigma, anchor, double lam, phi):
    return _objective(np.ascontiguousarray(mu, dtype=np.float64),
                      np.ascontiguousarray(sigma, dtype=np.float64),
                      np.ascontiguousarray(anchor, dtype=np.float64), lam,
                      np.ascontiguousarray(phi, dtype=np.float64))


def pga_maximize(mu_in, sigma_in, anchor_in, double lam, start, double step_init,
                 double tol, long max_iters):
    cdef double[::1] mu = np.ascontiguousarray(mu_in, dtype=np.float64)
    cdef double[:, ::1] sigma = np.ascontiguousarray(sigma_in, dtype=np.float64)
    cdef double[::1] anchor = np.ascontiguousarray(anchor_in, dtype=np.float64)
    cdef Py_ssize_t n = mu.shape[0]
    phi_arr = np.empty(n)
    cdef double[::1] phi = phi_arr
    cdef double[::1] cand = np.empty(n)
    cdef double[::1] trial = np.empty(n)
    cdef double[::1] grad = np.empty(n)
    cdef double[::1] sp = np.empty(n)
    cdef double[::1] work = np.empty(n)
    cdef double[::1] s0 = np.array(start, dtype=np.float64, copy=True).ravel()
    cdef Py_ssize_t i, j
    cdef long it = 0
    cdef double f, fc, var, sd, ret, t, move, diff
    cdef bint accepted
    _project(s0, phi, work)
    f = _objective(mu, sigma, anchor, lam, phi)
    while it < max_iters:
        it += 1
        var = 0.0
        ret = 0.0
        for i in range(n):
            sp[i] = 0.0
            for j in range(n):
                sp[i] += sigma[i, j] * phi[j]
            var += phi[i] * sp[i]
            ret += mu[i] * phi[i]
        sd = sqrt(var)
        for i in range(n):
            grad[i] = mu[i] / sd - (ret / (var * sd)) * sp[i]
            if lam != 0.0:
                grad[i] -= 2.0 * lam * (phi[i] - anchor[i])
        t = step_init
        accepted = False
        while t >= MIN_STEP:
            for i in range(n):
                trial[i] = phi[i] + t * grad[i]
            _project(trial, cand, work)
            fc = _objective(mu, sigma, anchor, lam, cand)
            if fc > f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        move = 0.0
        for i in range(n):
            diff = cand[i] - phi[i]
            move += diff * diff
            phi[i] = cand[i]
        move = sqrt(move)
        f = fc
        if move / t <= tol:
            break
    return phi_arr, f, it
