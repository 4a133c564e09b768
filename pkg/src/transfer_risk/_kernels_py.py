"""Pure-Python/numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` line for line in algorithm and are used when
the compiled extension is unavailable (or forced off with
``TRANSFER_RISK_PURE_PYTHON=1``).
"""

import math

import numpy as np

JACOBI_MAX_SWEEPS = 100
MIN_STEP = 1e-20


def jacobi_eigh(a):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors in columns, in
    the order the rotations leave them (unsorted).
    """
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    scale = float(np.sum(np.abs(np.diag(a))))
    thresh = 1e-14 * scale
    for _ in range(JACOBI_MAX_SWEEPS):
        off = 0.0
        for p in range(n - 1):
            row_max = np.max(np.abs(a[p, p + 1:]))
            if row_max > off:
                off = row_max
        if off <= thresh or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def _level_offsets(d, m):
    offsets = [0]
    size = 1
    for _ in range(m + 1):
        offsets.append(offsets[-1] + size)
        size *= d
    return offsets


def chen_product(a, b, d, m):
    """Truncated tensor product of two flat level-major signatures."""
    offsets = _level_offsets(d, m)
    out = np.zeros(offsets[-1])
    for k in range(m + 1):
        acc = np.zeros(d ** k)
        for i in range(k + 1):
            j = k - i
            ai = a[offsets[i]:offsets[i + 1]]
            bj = b[offsets[j]:offsets[j + 1]]
            acc += np.outer(ai, bj).ravel()
        out[offsets[k]:offsets[k + 1]] = acc
    return out


def signature_from_increments(increments, m):
    """Signature of the piecewise-linear path with the given increments."""
    increments = np.asarray(increments, dtype=np.float64)
    d = increments.shape[1]
    offsets = _level_offsets(d, m)
    sig = np.zeros(offsets[-1])
    sig[0] = 1.0
    for delta in increments:
        powers = [np.ones(1)]
        for j in range(1, m + 1):
            powers.append(np.outer(powers[-1], delta).ravel() / j)
        for k in range(m, 0, -1):
            acc = sig[offsets[k]:offsets[k + 1]].copy()
            for j in range(1, k + 1):
                lower = sig[offsets[k - j]:offsets[k - j + 1]]
                acc += np.outer(lower, powers[j]).ravel()
            sig[offsets[k]:offsets[k + 1]] = acc
    return sig


def project_simplex(v):
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = 0
    for i in range(u.size):
        if u[i] + (1.0 - css[i]) / (i + 1) > 0:
            rho = i
    theta = (css[rho] - 1.0) / (rho + 1)
    return np.maximum(v - theta, 0.0)


def penalized_sharpe(mu, sigma, anchor, lam, phi):
    var = float(phi @ sigma @ phi)
    if var <= 0.0:
        return -math.inf
    val = float(mu @ phi) / math.sqrt(var)
    if lam != 0.0:
        diff = phi - anchor
        val -= lam * float(diff @ diff)
    return val


def pga_maximize(mu, sigma, anchor, lam, start, step_init, tol, max_iters):
    """Projected-gradient ascent of the penalized Sharpe ratio on the simplex.

    Backtracking halves the step from ``step_init`` until the objective
    strictly increases; the step resets every iteration.  Stops when no
    ascent step exists, when the gradient-mapping norm falls below ``tol``,
    or after ``max_iters`` iterations.  Returns ``(phi, value, iterations)``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    anchor = np.asarray(anchor, dtype=np.float64)
    phi = project_simplex(start)
    f = penalized_sharpe(mu, sigma, anchor, lam, phi)
    it = 0
    while it < max_iters:
        it += 1
        sp = sigma @ phi
        var = float(phi @ sp)
        sd = math.sqrt(var)
        ret = float(mu @ phi)
        grad = mu / sd - (ret / (var * sd)) * sp
        if lam != 0.0:
            grad = grad - 2.0 * lam * (phi - anchor)
        t = step_init
        accepted = False
        while t >= MIN_STEP:
            cand = project_simplex(phi + t * grad)
            fc = penalized_sharpe(mu, sigma, anchor, lam, cand)
            if fc > f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        move = float(np.sqrt(np.sum((cand - phi) ** 2)))
        phi, f = cand, fc
        if move / t <= tol:
            break
    return phi, f, it
