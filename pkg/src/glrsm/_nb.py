"""Numba kernels for the likelihood recursions, fits and window sweeps.

Every function here has a twin with the same signature in :mod:`glrsm._np`.
Conventions shared by both:

* ``w`` is a window of observations; recursions start at ``w[0]`` with all
  pre-window observations and residuals equal to zero.
* ``s`` is the first index whose log-likelihood term is counted, so a fit on
  ``(w, s)`` uses observations ``w[:s]`` only as conditioning history.
* GARCH recursions start from ``sigma2_0 = v0`` which the caller supplies.
* Optimizer status codes: 0 gradient converged, 1 stalled at a stationary
  point, 2 line-search failure, 3 iteration limit, 4 non-finite start.
"""

import math

import numpy as np
from numba import njit

LOG2PI = math.log(2.0 * math.pi)
EPS = np.finfo(np.float64).eps
GARCH_SUM_CAP = 1.0 - 1e-4
MAXITER = 500
GTOL = 1e-6

ARMA = 1
GARCH = 2


# ---------------------------------------------------------------------------
# AR: closed-form least squares
# ---------------------------------------------------------------------------


@njit(cache=True)
def _ar_accumulate(w, lo, hi, floor_idx, p, mean, A, b):
    """Add rows ``lo <= i < hi`` to the normal equations; lags below
    ``floor_idx`` are treated as zero."""
    k = p + mean
    z = np.zeros(k)
    yy = 0.0
    for i in range(lo, hi):
        if mean:
            z[0] = 1.0
        for j in range(1, p + 1):
            z[mean + j - 1] = w[i - j] if i - j >= floor_idx else 0.0
        y = w[i]
        yy += y * y
        for a in range(k):
            b[a] += z[a] * y
            for c in range(a, k):
                A[a, c] += z[a] * z[c]
    for a in range(k):
        for c in range(a):
            A[a, c] = A[c, a]
    return yy


@njit(cache=True)
def _ar_solve(A, b, yy, nobs):
    k = b.shape[0]
    if k == 0:
        beta = np.zeros(0)
        ssr = yy
    else:
        beta = np.linalg.lstsq(A, b, rcond=1e-12)[0]
        ssr = yy - np.dot(beta, b)
    if ssr < 0.0:
        ssr = 0.0
    floor = EPS * yy / nobs if yy > 0.0 else EPS
    sig2 = ssr / nobs
    degenerate = sig2 <= floor
    if degenerate:
        sig2 = floor
    loglik = -0.5 * nobs * (LOG2PI + math.log(sig2)) - 0.5 * ssr / sig2
    return beta, sig2, loglik, degenerate


@njit(cache=True)
def ar_fit(w, s, p, mean):
    k = p + mean
    A = np.zeros((k, k))
    b = np.zeros(k)
    yy = _ar_accumulate(w, s, w.shape[0], 0, p, mean, A, b)
    return _ar_solve(A, b, yy, w.shape[0] - s)


@njit(cache=True)
def ar_scan(x, ts, h, p, mean):
    k = p + mean
    out = np.empty(ts.shape[0])
    for idx in range(ts.shape[0]):
        t = ts[idx]
        a = t - h
        Al = np.zeros((k, k))
        bl = np.zeros(k)
        Ar = np.zeros((k, k))
        br = np.zeros(k)
        yyl = _ar_accumulate(x, a, t, a, p, mean, Al, bl)
        yyr = _ar_accumulate(x, t, t + h, a, p, mean, Ar, br)
        L1 = _ar_solve(Al, bl, yyl, h)[2]
        L2 = _ar_solve(Ar, br, yyr, h)[2]
        L = _ar_solve(Al + Ar, bl + br, yyl + yyr, 2 * h)[2]
        out[idx] = (L1 + L2 - L) / h
    return out


@njit(cache=True)
def ar_split_profile(w, ks, p, mean):
    """Left/right maximized log-likelihoods for every split ``k`` in ``ks``.

    The left piece is ``w[:k]``; the right piece counts ``w[k:]`` conditioned
    on the preceding window observations.
    """
    k_dim = p + mean
    n = w.shape[0]
    left = np.empty(ks.shape[0])
    right = np.empty(ks.shape[0])
    for idx in range(ks.shape[0]):
        k = ks[idx]
        Al = np.zeros((k_dim, k_dim))
        bl = np.zeros(k_dim)
        yyl = _ar_accumulate(w, 0, k, 0, p, mean, Al, bl)
        Ar = np.zeros((k_dim, k_dim))
        br = np.zeros(k_dim)
        yyr = _ar_accumulate(w, k, n, 0, p, mean, Ar, br)
        left[idx] = _ar_solve(Al, bl, yyl, k)[2]
        right[idx] = _ar_solve(Ar, br, yyr, n - k)[2]
    return left, right


# ---------------------------------------------------------------------------
# Objectives in unconstrained coordinates (f = -loglik / nobs)
# ---------------------------------------------------------------------------


@njit(cache=True)
def garch_from_u(u):
    e1 = math.exp(u[1])
    e2 = math.exp(u[2])
    d = 1.0 + e1 + e2
    return math.exp(u[0]), GARCH_SUM_CAP * e1 / d, GARCH_SUM_CAP * e2 / d


@njit(cache=True)
def garch_to_u(omega, alpha, beta):
    alpha = max(alpha, 1e-8)
    beta = max(beta, 1e-8)
    tot = alpha + beta
    if tot > 0.999 * GARCH_SUM_CAP:
        alpha *= 0.999 * GARCH_SUM_CAP / tot
        beta *= 0.999 * GARCH_SUM_CAP / tot
    r = 1.0 - (alpha + beta) / GARCH_SUM_CAP
    u = np.empty(3)
    u[0] = math.log(max(omega, 1e-300))
    u[1] = math.log(alpha / (GARCH_SUM_CAP * r))
    u[2] = math.log(beta / (GARCH_SUM_CAP * r))
    return u


@njit(cache=True)
def _garch_obj(u, w, s, v0):
    g = np.zeros(3)
    for j in range(3):
        if abs(u[j]) > 60.0:
            return np.inf, g
    omega, alpha, beta = garch_from_u(u)
    sig2 = v0
    x2prev = 0.0
    dw = 0.0
    da = 0.0
    db = 0.0
    loglik = 0.0
    gw = 0.0
    ga = 0.0
    gb = 0.0
    for i in range(w.shape[0]):
        db = sig2 + beta * db
        dw = 1.0 + beta * dw
        da = x2prev + beta * da
        sig2 = omega + alpha * x2prev + beta * sig2
        x2 = w[i] * w[i]
        if i >= s:
            if not sig2 > 0.0:
                return np.inf, g
            inv = 1.0 / sig2
            loglik -= 0.5 * (LOG2PI + math.log(sig2) + x2 * inv)
            dl = -0.5 * (inv - x2 * inv * inv)
            gw += dl * dw
            ga += dl * da
            gb += dl * db
        x2prev = x2
    nobs = w.shape[0] - s
    c = GARCH_SUM_CAP
    g[0] = -gw * omega / nobs
    g[1] = -(ga * alpha * (1.0 - alpha / c) - gb * alpha * beta / c) / nobs
    g[2] = -(-ga * alpha * beta / c + gb * beta * (1.0 - beta / c)) / nobs
    return -loglik / nobs, g


@njit(cache=True)
def _arma_residuals(coef, w, p, q):
    n = w.shape[0]
    k = p + q
    e = np.zeros(n)
    de = np.zeros((n, k))
    for i in range(n):
        ei = w[i]
        for j in range(1, p + 1):
            if i - j >= 0:
                ei -= coef[j - 1] * w[i - j]
        for j in range(1, q + 1):
            if i - j >= 0:
                ei -= coef[p + j - 1] * e[i - j]
        e[i] = ei
        for m in range(k):
            d = 0.0
            if m < p:
                if i - m - 1 >= 0:
                    d = -w[i - m - 1]
            else:
                if i - (m - p) - 1 >= 0:
                    d = -e[i - (m - p) - 1]
            for j in range(1, q + 1):
                if i - j >= 0:
                    d -= coef[p + j - 1] * de[i - j, m]
            de[i, m] = d
    return e, de


@njit(cache=True)
def _arma_obj(u, w, s, p, q, bound):
    k = p + q
    g = np.zeros(k)
    coef = np.empty(k)
    for j in range(k):
        coef[j] = bound * math.tanh(u[j])
    e, de = _arma_residuals(coef, w, p, q)
    ssr = 0.0
    for i in range(s, w.shape[0]):
        ssr += e[i] * e[i]
    nobs = w.shape[0] - s
    if not (ssr > 0.0 and math.isfinite(ssr)):
        return np.inf, g
    for m in range(k):
        acc = 0.0
        for i in range(s, w.shape[0]):
            acc += e[i] * de[i, m]
        th = math.tanh(u[m])
        g[m] = acc / ssr * bound * (1.0 - th * th)
    f = 0.5 * (LOG2PI + math.log(ssr / nobs) + 1.0)
    return f, g


@njit(cache=True)
def _objective(family, u, w, s, v0, p, q, bound):
    if family == GARCH:
        return _garch_obj(u, w, s, v0)
    return _arma_obj(u, w, s, p, q, bound)


# ---------------------------------------------------------------------------
# BFGS with backtracking line search
# ---------------------------------------------------------------------------


@njit(cache=True)
def _bfgs(family, u0, w, s, v0, p, q, bound, maxiter, gtol):
    k = u0.shape[0]
    u = u0.copy()
    f, g = _objective(family, u, w, s, v0, p, q, bound)
    if not math.isfinite(f):
        return u, f, 4
    H = np.eye(k)
    status = 3
    reset = False
    stall = 0
    for _ in range(maxiter):
        if np.max(np.abs(g)) < gtol:
            status = 0
            break
        d = -(H @ g)
        slope = np.dot(d, g)
        if not slope < 0.0:
            H = np.eye(k)
            d = -g
            slope = -np.dot(g, g)
        dmax = np.max(np.abs(d))
        step = 1.0 if dmax <= 5.0 else 5.0 / dmax
        ok = False
        fn = f
        gn = g
        un = u
        for _ls in range(50):
            un = u + step * d
            fn, gn = _objective(family, un, w, s, v0, p, q, bound)
            if math.isfinite(fn) and fn <= f + 1e-4 * step * slope:
                ok = True
                break
            step *= 0.5
        if not ok:
            if reset:
                status = 2
                break
            H = np.eye(k)
            reset = True
            continue
        reset = False
        sk = un - u
        yk = gn - g
        sy = np.dot(sk, yk)
        if sy > 1e-14:
            rho = 1.0 / sy
            Hy = H @ yk
            yHy = np.dot(yk, Hy)
            H = H + ((sy + yHy) * rho * rho) * np.outer(sk, sk) - rho * (
                np.outer(Hy, sk) + np.outer(sk, Hy)
            )
        if f - fn <= 1e-12 * max(1.0, abs(f)):
            stall += 1
        else:
            stall = 0
        u = un
        f = fn
        g = gn
        if stall >= 3:
            status = 1
            break
    if status == 3 and np.max(np.abs(g)) < gtol:
        status = 0
    return u, f, status


@njit(cache=True)
def _multistart(family, seeds_u, w, s, v0, p, q, bound):
    best_u = seeds_u[0].copy()
    best_f = np.inf
    best_status = 4
    for m in range(seeds_u.shape[0]):
        u, f, status = _bfgs(family, seeds_u[m], w, s, v0, p, q, bound, MAXITER, GTOL)
        if f < best_f:
            best_u = u
            best_f = f
            best_status = status
    return best_u, best_f, best_status


# ---------------------------------------------------------------------------
# GARCH(1,1)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _garch_seeds_u(seeds):
    out = np.empty((seeds.shape[0], 3))
    for m in range(seeds.shape[0]):
        out[m] = garch_to_u(seeds[m, 0], seeds[m, 1], seeds[m, 2])
    return out


@njit(cache=True)
def garch_fit(w, s, v0, seeds):
    u, f, status = _multistart(GARCH, _garch_seeds_u(seeds), w, s, v0, 0, 0, 0.0)
    omega, alpha, beta = garch_from_u(u)
    theta = np.array([omega, alpha, beta])
    return theta, -f * (w.shape[0] - s), status


@njit(cache=True)
def _canonical_garch_u(v0):
    return garch_to_u(max(v0, 1e-12) * 0.4, 0.1, 0.5)


@njit(cache=True)
def _white_garch_u(v0):
    # near the alpha = beta = 0 corner, which also stands in for the flat
    # alpha -> 0, beta -> 1 ridge when v0 is the window mean square
    return garch_to_u(max(v0, 1e-12) * 0.98, 0.01, 0.01)


@njit(cache=True)
def garch_scan(x, ts, h):
    m = ts.shape[0]
    out = np.empty(m)
    status = np.zeros(m, dtype=np.int64)
    seeds = np.empty((3, 3))
    split_seeds = np.empty((4, 3))
    warm_p = np.zeros(3)
    warm_l = np.zeros(3)
    warm_r = np.zeros(3)
    for idx in range(m):
        t = ts[idx]
        w = x[t - h:t + h]
        v0 = np.mean(w * w)
        canon = _canonical_garch_u(v0)
        white = _white_garch_u(v0)
        seeds[0] = canon if idx == 0 else warm_p
        seeds[1] = canon
        seeds[2] = white
        up, fp, sp = _multistart(GARCH, seeds, w, 0, v0, 0, 0, 0.0)
        # halves: warm start, pooled optimum (keeps S >= 0), fixed starts
        split_seeds[0] = up if idx == 0 else warm_l
        split_seeds[1] = up
        split_seeds[2] = canon
        split_seeds[3] = white
        ul, fl, sl = _multistart(GARCH, split_seeds, w[:h], 0, v0, 0, 0, 0.0)
        split_seeds[0] = up if idx == 0 else warm_r
        ur, fr, sr = _multistart(GARCH, split_seeds, w, h, v0, 0, 0, 0.0)
        warm_p = up
        warm_l = ul
        warm_r = ur
        # f is -loglik/nobs; S = (L1 + L2 - L) / h
        out[idx] = (-fl * h - fr * h + fp * 2 * h) / h
        status[idx] = max(sp, max(sl, sr))
    return out, status


@njit(cache=True)
def garch_split_profile(w, ks, v0):
    m = ks.shape[0]
    n = w.shape[0]
    left = np.empty(m)
    right = np.empty(m)
    th_l = np.empty((m, 3))
    th_r = np.empty((m, 3))
    status = np.zeros(m, dtype=np.int64)
    canon = _canonical_garch_u(v0)
    seeds = np.empty((2, 3))
    warm_l = canon
    warm_r = canon
    for idx in range(m):
        k = ks[idx]
        seeds[0] = warm_l
        seeds[1] = canon
        ul, fl, sl = _multistart(GARCH, seeds, w[:k], 0, v0, 0, 0, 0.0)
        seeds[0] = warm_r
        seeds[1] = canon
        ur, fr, sr = _multistart(GARCH, seeds, w, k, v0, 0, 0, 0.0)
        warm_l = ul
        warm_r = ur
        left[idx] = -fl * k
        right[idx] = -fr * (n - k)
        a, b, c = garch_from_u(ul)
        th_l[idx, 0] = a
        th_l[idx, 1] = b
        th_l[idx, 2] = c
        a, b, c = garch_from_u(ur)
        th_r[idx, 0] = a
        th_r[idx, 1] = b
        th_r[idx, 2] = c
        status[idx] = max(sl, sr)
    return left, right, th_l, th_r, status


@njit(cache=True)
def garch_obs(theta, w, v0):
    """Per-observation log-likelihood terms and scores in (omega, alpha, beta)."""
    n = w.shape[0]
    omega = theta[0]
    alpha = theta[1]
    beta = theta[2]
    ll = np.empty(n)
    D = np.empty((n, 3))
    sig2 = v0
    x2prev = 0.0
    dw = 0.0
    da = 0.0
    db = 0.0
    for i in range(n):
        db = sig2 + beta * db
        dw = 1.0 + beta * dw
        da = x2prev + beta * da
        sig2 = omega + alpha * x2prev + beta * sig2
        x2 = w[i] * w[i]
        inv = 1.0 / sig2
        ll[i] = -0.5 * (LOG2PI + math.log(sig2) + x2 * inv)
        dl = -0.5 * (inv - x2 * inv * inv)
        D[i, 0] = dl * dw
        D[i, 1] = dl * da
        D[i, 2] = dl * db
        x2prev = x2
    return ll, D


@njit(cache=True)
def garch_variance_path(theta, w, v0):
    n = w.shape[0]
    out = np.empty(n)
    sig2 = v0
    x2prev = 0.0
    for i in range(n):
        sig2 = theta[0] + theta[1] * x2prev + theta[2] * sig2
        out[i] = sig2
        x2prev = w[i] * w[i]
    return out


# ---------------------------------------------------------------------------
# ARMA(p, q) conditional sum of squares
# ---------------------------------------------------------------------------


@njit(cache=True)
def _arma_seeds_u(seeds, bound):
    out = np.empty(seeds.shape)
    for m in range(seeds.shape[0]):
        for j in range(seeds.shape[1]):
            r = seeds[m, j] / bound
            r = min(max(r, -0.999), 0.999)
            out[m, j] = math.atanh(r)
    return out


@njit(cache=True)
def _arma_unpack(u, w, s, p, q, bound):
    k = p + q
    theta = np.empty(k + 1)
    for j in range(k):
        theta[j] = bound * math.tanh(u[j])
    e, _ = _arma_residuals(theta[:k], w, p, q)
    ssr = 0.0
    for i in range(s, w.shape[0]):
        ssr += e[i] * e[i]
    theta[k] = ssr / (w.shape[0] - s)
    return theta


@njit(cache=True)
def arma_fit(w, s, p, q, bound, seeds):
    nobs = w.shape[0] - s
    if p + q == 0:
        ssr = 0.0
        for i in range(s, w.shape[0]):
            ssr += w[i] * w[i]
        sig2 = max(ssr / nobs, EPS)
        theta = np.array([sig2])
        return theta, -0.5 * nobs * (LOG2PI + math.log(sig2)) - 0.5 * ssr / sig2, 0
    u, f, status = _multistart(ARMA, _arma_seeds_u(seeds, bound), w, s, 0.0, p, q, bound)
    theta = _arma_unpack(u, w, s, p, q, bound)
    return theta, -f * nobs, status


@njit(cache=True)
def arma_split_profile(w, ks, p, q, bound, seed):
    """Split profile for ARMA; ``seed`` is the canonical coefficient start."""
    m = ks.shape[0]
    n = w.shape[0]
    k_dim = p + q
    left = np.empty(m)
    right = np.empty(m)
    th_l = np.empty((m, k_dim + 1))
    th_r = np.empty((m, k_dim + 1))
    status = np.zeros(m, dtype=np.int64)
    canon = _arma_seeds_u(seed.reshape((1, k_dim)), bound)[0]
    seeds = np.empty((2, k_dim))
    warm_l = canon
    warm_r = canon
    for idx in range(m):
        k = ks[idx]
        seeds[0] = warm_l
        seeds[1] = canon
        ul, fl, sl = _multistart(ARMA, seeds, w[:k], 0, 0.0, p, q, bound)
        seeds[0] = warm_r
        seeds[1] = canon
        ur, fr, sr = _multistart(ARMA, seeds, w, k, 0.0, p, q, bound)
        warm_l = ul
        warm_r = ur
        left[idx] = -fl * k
        right[idx] = -fr * (n - k)
        th_l[idx] = _arma_unpack(ul, w[:k], 0, p, q, bound)
        th_r[idx] = _arma_unpack(ur, w, k, p, q, bound)
        status[idx] = max(sl, sr)
    return left, right, th_l, th_r, status


@njit(cache=True)
def arma_obs(theta, w, p, q):
    """Per-observation log-likelihood terms and scores; theta ends with sigma2."""
    k = p + q
    sig2 = theta[k]
    e, de = _arma_residuals(theta[:k], w, p, q)
    n = w.shape[0]
    ll = np.empty(n)
    D = np.empty((n, k + 1))
    for i in range(n):
        ll[i] = -0.5 * (LOG2PI + math.log(sig2)) - 0.5 * e[i] * e[i] / sig2
        for m in range(k):
            D[i, m] = -e[i] * de[i, m] / sig2
        D[i, k] = -0.5 / sig2 + 0.5 * e[i] * e[i] / (sig2 * sig2)
    return ll, D


# ---------------------------------------------------------------------------
# Simulation recursions
# ---------------------------------------------------------------------------


@njit(cache=True)
def sim_arma(phi, ma, eps, x_hist, e_hist):
    """x_t = sum phi_j x_{t-j} + e_t + sum ma_j e_{t-j}; ``eps`` already scaled.

    ``x_hist``/``e_hist`` hold the most recent values last.
    """
    p = phi.shape[0]
    q = ma.shape[0]
    n = eps.shape[0]
    hp = x_hist.shape[0]
    hq = e_hist.shape[0]
    xs = np.empty(hp + n)
    es = np.empty(hq + n)
    xs[:hp] = x_hist
    es[:hq] = e_hist
    for i in range(n):
        v = eps[i]
        for j in range(1, p + 1):
            idx = hp + i - j
            if idx >= 0:
                v += phi[j - 1] * xs[idx]
        for j in range(1, q + 1):
            idx = hq + i - j
            if idx >= 0:
                v += ma[j - 1] * es[idx]
        xs[hp + i] = v
        es[hq + i] = eps[i]
    return xs[hp:]


@njit(cache=True)
def sim_garch(omega, alpha, beta, z, x_prev, sig2_prev):
    n = z.shape[0]
    x = np.empty(n)
    sig = np.empty(n)
    xp = x_prev
    sp = sig2_prev
    for i in range(n):
        sp = omega + alpha * xp * xp + beta * sp
        xp = math.sqrt(sp) * z[i]
        x[i] = xp
        sig[i] = sp
    return x, sig
