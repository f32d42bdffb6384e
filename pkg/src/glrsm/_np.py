"""Pure numpy/scipy implementations of the kernels in :mod:`glrsm._nb`.

Recursions are expressed as linear filters (``scipy.signal.lfilter``) and the
optimizer is scipy's BFGS with a Nelder-Mead retry on line-search failure.
Signatures, conventions and status codes match the numba module.
"""

import math

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

LOG2PI = math.log(2.0 * math.pi)
EPS = np.finfo(np.float64).eps
GARCH_SUM_CAP = 1.0 - 1e-4
MAXITER = 500
GTOL = 1e-6

ARMA = 1
GARCH = 2


# ---------------------------------------------------------------------------
# AR
# ---------------------------------------------------------------------------


def _lag_matrix(w, p, mean):
    n = w.shape[0]
    Z = np.zeros((n, p + mean))
    if mean:
        Z[:, 0] = 1.0
    for j in range(1, p + 1):
        Z[j:, mean + j - 1] = w[: n - j]
    return Z


def _ar_solve(A, b, yy, nobs):
    if b.shape[0] == 0:
        beta = np.zeros(0)
        ssr = yy
    else:
        beta = np.linalg.lstsq(A, b, rcond=1e-12)[0]
        ssr = yy - beta @ b
    ssr = max(ssr, 0.0)
    floor = EPS * yy / nobs if yy > 0.0 else EPS
    sig2 = ssr / nobs
    degenerate = sig2 <= floor
    if degenerate:
        sig2 = floor
    loglik = -0.5 * nobs * (LOG2PI + math.log(sig2)) - 0.5 * ssr / sig2
    return beta, sig2, loglik, bool(degenerate)


def _normal_eq(Z, y):
    return Z.T @ Z, Z.T @ y, float(y @ y)


def ar_fit(w, s, p, mean):
    Z = _lag_matrix(w, p, mean)[s:]
    A, b, yy = _normal_eq(Z, w[s:])
    return _ar_solve(A, b, yy, w.shape[0] - s)


def ar_scan(x, ts, h, p, mean):
    out = np.empty(len(ts))
    for idx, t in enumerate(ts):
        w = x[t - h : t + h]
        Z = _lag_matrix(w, p, mean)
        Al, bl, yyl = _normal_eq(Z[:h], w[:h])
        Ar, br, yyr = _normal_eq(Z[h:], w[h:])
        L1 = _ar_solve(Al, bl, yyl, h)[2]
        L2 = _ar_solve(Ar, br, yyr, h)[2]
        L = _ar_solve(Al + Ar, bl + br, yyl + yyr, 2 * h)[2]
        out[idx] = (L1 + L2 - L) / h
    return out


def ar_split_profile(w, ks, p, mean):
    n = w.shape[0]
    Z = _lag_matrix(w, p, mean)
    left = np.empty(len(ks))
    right = np.empty(len(ks))
    for idx, k in enumerate(ks):
        left[idx] = _ar_solve(*_normal_eq(Z[:k], w[:k]), k)[2]
        right[idx] = _ar_solve(*_normal_eq(Z[k:], w[k:]), n - k)[2]
    return left, right


# ---------------------------------------------------------------------------
# GARCH(1,1)
# ---------------------------------------------------------------------------


def garch_from_u(u):
    e1 = math.exp(u[1])
    e2 = math.exp(u[2])
    d = 1.0 + e1 + e2
    return math.exp(u[0]), GARCH_SUM_CAP * e1 / d, GARCH_SUM_CAP * e2 / d


def garch_to_u(omega, alpha, beta):
    alpha = max(alpha, 1e-8)
    beta = max(beta, 1e-8)
    tot = alpha + beta
    if tot > 0.999 * GARCH_SUM_CAP:
        alpha *= 0.999 * GARCH_SUM_CAP / tot
        beta *= 0.999 * GARCH_SUM_CAP / tot
    r = 1.0 - (alpha + beta) / GARCH_SUM_CAP
    return np.array(
        [
            math.log(max(omega, 1e-300)),
            math.log(alpha / (GARCH_SUM_CAP * r)),
            math.log(beta / (GARCH_SUM_CAP * r)),
        ]
    )


def _garch_paths(theta, w, v0):
    omega, alpha, beta = theta
    x2 = w * w
    x2prev = np.concatenate(([0.0], x2[:-1]))
    a = [1.0, -beta]
    sig2 = lfilter([1.0], a, omega + alpha * x2prev, zi=[beta * v0])[0]
    sig2prev = np.concatenate(([v0], sig2[:-1]))
    dw = lfilter([1.0], a, np.ones_like(w))
    da = lfilter([1.0], a, x2prev)
    db = lfilter([1.0], a, sig2prev)
    return x2, sig2, np.column_stack((dw, da, db))


def garch_obs(theta, w, v0):
    x2, sig2, dsig = _garch_paths(np.asarray(theta, dtype=float), w, v0)
    ll = -0.5 * (LOG2PI + np.log(sig2) + x2 / sig2)
    dl = -0.5 * (1.0 / sig2 - x2 / sig2**2)
    return ll, dl[:, None] * dsig


def garch_variance_path(theta, w, v0):
    return _garch_paths(np.asarray(theta, dtype=float), w, v0)[1]


def _garch_obj(u, w, s, v0):
    if np.any(np.abs(u) > 60.0):
        return np.inf, np.zeros(3)
    omega, alpha, beta = garch_from_u(u)
    x2, sig2, dsig = _garch_paths((omega, alpha, beta), w, v0)
    x2, sig2, dsig = x2[s:], sig2[s:], dsig[s:]
    if not np.all(sig2 > 0.0):
        return np.inf, np.zeros(3)
    nobs = w.shape[0] - s
    loglik = -0.5 * np.sum(LOG2PI + np.log(sig2) + x2 / sig2)
    gw, ga, gb = (-0.5 * (1.0 / sig2 - x2 / sig2**2)) @ dsig
    c = GARCH_SUM_CAP
    g = np.array(
        [
            gw * omega,
            ga * alpha * (1.0 - alpha / c) - gb * alpha * beta / c,
            -ga * alpha * beta / c + gb * beta * (1.0 - beta / c),
        ]
    )
    return -loglik / nobs, -g / nobs


# ---------------------------------------------------------------------------
# ARMA
# ---------------------------------------------------------------------------


def _shift(v, j):
    out = np.zeros_like(v)
    out[j:] = v[: v.shape[0] - j]
    return out


def _arma_residuals(coef, w, p, q):
    phi = coef[:p]
    ma = coef[p : p + q]
    den = np.concatenate(([1.0], ma))
    e = lfilter(np.concatenate(([1.0], -phi)), den, w)
    de = np.empty((w.shape[0], p + q))
    for j in range(1, p + 1):
        de[:, j - 1] = -lfilter([1.0], den, _shift(w, j))
    for j in range(1, q + 1):
        de[:, p + j - 1] = -lfilter([1.0], den, _shift(e, j))
    return e, de


def _arma_obj(u, w, s, p, q, bound):
    k = p + q
    th = np.tanh(u)
    e, de = _arma_residuals(bound * th, w, p, q)
    e, de = e[s:], de[s:]
    with np.errstate(over="ignore", invalid="ignore"):
        ssr = float(e @ e)
    if not (ssr > 0.0 and math.isfinite(ssr)):
        return np.inf, np.zeros(k)
    nobs = w.shape[0] - s
    g = (e @ de) / ssr * bound * (1.0 - th * th)
    return 0.5 * (LOG2PI + math.log(ssr / nobs) + 1.0), g


def _arma_unpack(u, w, s, p, q, bound):
    coef = bound * np.tanh(u)
    e, _ = _arma_residuals(coef, w, p, q)
    e = e[s:]
    return np.concatenate((coef, [float(e @ e) / (w.shape[0] - s)]))


def _arma_seeds_u(seeds, bound):
    return np.arctanh(np.clip(np.asarray(seeds, dtype=float) / bound, -0.999, 0.999))


def arma_obs(theta, w, p, q):
    theta = np.asarray(theta, dtype=float)
    k = p + q
    sig2 = theta[k]
    e, de = _arma_residuals(theta[:k], w, p, q)
    ll = -0.5 * (LOG2PI + math.log(sig2)) - 0.5 * e * e / sig2
    D = np.empty((w.shape[0], k + 1))
    D[:, :k] = -e[:, None] * de / sig2
    D[:, k] = -0.5 / sig2 + 0.5 * e * e / sig2**2
    return ll, D


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


def _objective(family, u, w, s, v0, p, q, bound):
    if family == GARCH:
        return _garch_obj(u, w, s, v0)
    return _arma_obj(u, w, s, p, q, bound)


def _bfgs(family, u0, w, s, v0, p, q, bound, maxiter=MAXITER, gtol=GTOL):
    def fun(u):
        return _objective(family, u, w, s, v0, p, q, bound)

    f0 = fun(u0)[0]
    if not math.isfinite(f0):
        return np.array(u0, dtype=float), f0, 4
    with np.errstate(all="ignore"):
        res = minimize(fun, u0, jac=True, method="BFGS", options={"gtol": gtol, "maxiter": maxiter})
    u, f = res.x, float(res.fun)
    if res.success:
        return u, f, 0
    if res.nit >= maxiter:
        return u, f, 3
    # line-search failure: polish with a simplex search
    with np.errstate(all="ignore"):
        nm = minimize(
            lambda v: fun(v)[0], u, method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 2000},
        )
    if nm.fun < f:
        u, f = nm.x, float(nm.fun)
    return u, f, 1 if nm.success else 2


def _multistart(family, seeds_u, w, s, v0, p, q, bound):
    best_u = np.array(seeds_u[0], dtype=float)
    best_f = np.inf
    best_status = 4
    for seed in seeds_u:
        u, f, status = _bfgs(family, np.array(seed, dtype=float), w, s, v0, p, q, bound)
        if f < best_f:
            best_u, best_f, best_status = u, f, status
    return best_u, best_f, best_status


def _garch_seeds_u(seeds):
    return np.array([garch_to_u(*row) for row in np.asarray(seeds, dtype=float)])


def _canonical_garch_u(v0):
    return garch_to_u(max(v0, 1e-12) * 0.4, 0.1, 0.5)


def _white_garch_u(v0):
    return garch_to_u(max(v0, 1e-12) * 0.98, 0.01, 0.01)


def garch_fit(w, s, v0, seeds):
    u, f, status = _multistart(GARCH, _garch_seeds_u(seeds), w, s, v0, 0, 0, 0.0)
    return np.array(garch_from_u(u)), -f * (w.shape[0] - s), status


def garch_scan(x, ts, h):
    out = np.empty(len(ts))
    status = np.zeros(len(ts), dtype=np.int64)
    warm = None
    for idx, t in enumerate(ts):
        w = x[t - h : t + h]
        v0 = float(np.mean(w * w))
        canon, white = _canonical_garch_u(v0), _white_garch_u(v0)
        up, fp, sp = _multistart(GARCH, [canon if warm is None else warm[0], canon, white], w, 0, v0, 0, 0, 0.0)
        ul, fl, sl = _multistart(GARCH, [up if warm is None else warm[1], up, canon, white], w[:h], 0, v0, 0, 0, 0.0)
        ur, fr, sr = _multistart(GARCH, [up if warm is None else warm[2], up, canon, white], w, h, v0, 0, 0, 0.0)
        warm = (up, ul, ur)
        out[idx] = (-fl * h - fr * h + fp * 2 * h) / h
        status[idx] = max(sp, sl, sr)
    return out, status


def garch_split_profile(w, ks, v0):
    n = w.shape[0]
    m = len(ks)
    left = np.empty(m)
    right = np.empty(m)
    th_l = np.empty((m, 3))
    th_r = np.empty((m, 3))
    status = np.zeros(m, dtype=np.int64)
    canon = _canonical_garch_u(v0)
    warm_l = warm_r = canon
    for idx, k in enumerate(ks):
        ul, fl, sl = _multistart(GARCH, [warm_l, canon], w[:k], 0, v0, 0, 0, 0.0)
        ur, fr, sr = _multistart(GARCH, [warm_r, canon], w, k, v0, 0, 0, 0.0)
        warm_l, warm_r = ul, ur
        left[idx] = -fl * k
        right[idx] = -fr * (n - k)
        th_l[idx] = garch_from_u(ul)
        th_r[idx] = garch_from_u(ur)
        status[idx] = max(sl, sr)
    return left, right, th_l, th_r, status


def arma_fit(w, s, p, q, bound, seeds):
    nobs = w.shape[0] - s
    if p + q == 0:
        ssr = float(w[s:] @ w[s:])
        sig2 = max(ssr / nobs, EPS)
        return np.array([sig2]), -0.5 * nobs * (LOG2PI + math.log(sig2)) - 0.5 * ssr / sig2, 0
    u, f, status = _multistart(ARMA, _arma_seeds_u(seeds, bound), w, s, 0.0, p, q, bound)
    return _arma_unpack(u, w, s, p, q, bound), -f * nobs, status


def arma_split_profile(w, ks, p, q, bound, seed):
    n = w.shape[0]
    m = len(ks)
    k_dim = p + q
    left = np.empty(m)
    right = np.empty(m)
    th_l = np.empty((m, k_dim + 1))
    th_r = np.empty((m, k_dim + 1))
    status = np.zeros(m, dtype=np.int64)
    canon = _arma_seeds_u(np.reshape(seed, (1, k_dim)), bound)[0]
    warm_l = warm_r = canon
    for idx, k in enumerate(ks):
        ul, fl, sl = _multistart(ARMA, [warm_l, canon], w[:k], 0, 0.0, p, q, bound)
        ur, fr, sr = _multistart(ARMA, [warm_r, canon], w, k, 0.0, p, q, bound)
        warm_l, warm_r = ul, ur
        left[idx] = -fl * k
        right[idx] = -fr * (n - k)
        th_l[idx] = _arma_unpack(ul, w[:k], 0, p, q, bound)
        th_r[idx] = _arma_unpack(ur, w, k, p, q, bound)
        status[idx] = max(sl, sr)
    return left, right, th_l, th_r, status


# ---------------------------------------------------------------------------
# Simulation recursions
# ---------------------------------------------------------------------------


def sim_arma(phi, ma, eps, x_hist, e_hist):
    phi = np.asarray(phi, dtype=float)
    ma = np.asarray(ma, dtype=float)
    p, q = phi.shape[0], ma.shape[0]
    xh = _last(np.asarray(x_hist, dtype=float), p)
    eh = _last(np.asarray(e_hist, dtype=float), q)
    b = np.concatenate(([1.0], ma))
    a = np.concatenate(([1.0], -phi))
    if p == 0 and q == 0:
        return np.array(eps, dtype=float)
    zi = _lfilter_state(b, a, xh[::-1], eh[::-1])
    return lfilter(b, a, eps, zi=zi)[0]


def _last(v, k):
    out = np.zeros(k)
    if k:
        tail = v[-k:]
        out[k - len(tail):] = tail
    return out


def _lfilter_state(b, a, x_past, e_past):
    """Direct-form-II-transposed state from past outputs/inputs (most recent first)."""
    m = max(len(a), len(b)) - 1
    b = np.concatenate((b, np.zeros(m + 1 - len(b))))
    a = np.concatenate((a, np.zeros(m + 1 - len(a))))
    y = np.concatenate((x_past, np.zeros(m - len(x_past))))
    u = np.concatenate((e_past, np.zeros(m - len(e_past))))
    zi = np.zeros(m)
    for i in range(m):
        zi[i] = np.sum(b[i + 1 :] * u[: m - i]) - np.sum(a[i + 1 :] * y[: m - i])
    return zi


def sim_garch(omega, alpha, beta, z, x_prev, sig2_prev):
    n = z.shape[0]
    x = np.empty(n)
    sig = np.empty(n)
    xp, sp = x_prev, sig2_prev
    for i in range(n):
        sp = omega + alpha * xp * xp + beta * sp
        xp = math.sqrt(sp) * z[i]
        x[i] = xp
        sig[i] = sp
    return x, sig
