"""Conditional Gaussian quasi-likelihood models: AR(p), ARMA(p, q), GARCH(1,1).

All likelihoods condition on zero pre-sample observations and residuals.
Parameter vectors are laid out as

* AR:    ``[c], phi_1..phi_p, sigma2``  (``c`` only when ``mean=True``)
* ARMA:  ``phi_1..phi_p, theta_1..theta_q, sigma2``
* GARCH: ``omega, alpha, beta``

GARCH variance recursions start from ``sigma2_0 = v0``; when ``v0`` is not
given it is the mean square of the series passed in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import minimize

from glrsm._backend import kernels as K
from glrsm.errors import ConvergenceError, DomainError, InsufficientDataError

LOG2PI = float(np.log(2.0 * np.pi))
GARCH_SEEDS = ((0.1, 0.5), (0.05, 0.9), (0.2, 0.2), (0.01, 0.01))


class Family(str, Enum):
    AR = "ar"
    ARMA = "arma"
    GARCH = "garch"


@dataclass(frozen=True)
class ModelSpec:
    """A model family with its integer orders.

    ``mean`` adds an intercept to AR models; ``bound`` is the box half-width
    for ARMA coefficients.
    """

    family: Family
    p: int = 0
    q: int = 0
    mean: bool = False
    bound: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.p < 0 or self.q < 0:
            raise ValueError("model orders must be non-negative")
        if self.family is Family.GARCH and (self.p, self.q) != (1, 1):
            raise ValueError("GARCH orders are fixed at (1, 1)")
        if self.family is Family.AR and self.q != 0:
            raise ValueError("AR models have no MA order")
        if self.mean and self.family is not Family.AR:
            raise ValueError("an intercept is only supported for AR models")

    @classmethod
    def ar(cls, p: int, mean: bool = False) -> ModelSpec:
        return cls(Family.AR, p, 0, mean)

    @classmethod
    def arma(cls, p: int, q: int, bound: float = 2.0) -> ModelSpec:
        return cls(Family.ARMA, p, q, bound=bound)

    @classmethod
    def garch(cls) -> ModelSpec:
        return cls(Family.GARCH, 1, 1)

    @property
    def dim(self) -> int:
        if self.family is Family.GARCH:
            return 3
        return self.p + self.q + int(self.mean) + 1

    @property
    def orders(self) -> tuple[int, ...]:
        if self.family is Family.AR:
            return (self.p,)
        return (self.p, self.q)

    @property
    def min_fit_length(self) -> int:
        return max(20, 5 * self.dim)

    @property
    def param_names(self) -> list[str]:
        if self.family is Family.GARCH:
            return ["omega", "alpha", "beta"]
        names = ["c"] if self.mean else []
        names += [f"phi{j}" for j in range(1, self.p + 1)]
        names += [f"theta{j}" for j in range(1, self.q + 1)]
        return names + ["sigma2"]

    def __str__(self):
        if self.family is Family.GARCH:
            return "GARCH(1,1)"
        if self.family is Family.AR:
            return f"AR({self.p}{', mean' if self.mean else ''})"
        return f"ARMA({self.p},{self.q})"


@dataclass(frozen=True)
class FittedModel:
    """Maximized quasi-likelihood on ``window`` (half-open, 0-based)."""

    spec: ModelSpec
    params: np.ndarray = field(compare=False)
    loglik: float
    window: tuple[int, int]
    degenerate: bool = False
    status: int = 0

    @property
    def nobs(self) -> int:
        return self.window[1] - self.window[0]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.spec.param_names, map(float, self.params)))


def as_series(x) -> np.ndarray:
    """Validate and convert to a 1-d float array of finite values."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 1:
        raise ValueError("a time series must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValueError(f"non-finite observation at index {bad}")
    return arr


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------


def _ar_stationary(phi) -> bool:
    phi = np.asarray(phi, dtype=float)
    if phi.size == 0:
        return True
    roots = np.roots(np.concatenate((-phi[::-1], [1.0])))
    return bool(np.all(np.abs(roots) > 1.0 + 1e-10))


def split_params(spec: ModelSpec, theta):
    """Return ``(c, phi, ma, sigma2)`` for AR/ARMA parameter vectors."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.dim,):
        raise DomainError(f"{spec} expects {spec.dim} parameters, got shape {theta.shape}")
    off = int(spec.mean)
    c = theta[0] if spec.mean else 0.0
    phi = theta[off : off + spec.p]
    ma = theta[off + spec.p : off + spec.p + spec.q]
    return c, phi, ma, theta[-1]


def check_params(spec: ModelSpec, theta, stationary: bool = False) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.dim,) or not np.all(np.isfinite(theta)):
        raise DomainError(f"{spec} expects {spec.dim} finite parameters")
    if spec.family is Family.GARCH:
        omega, alpha, beta = theta
        if omega <= 0 or alpha < 0 or beta < 0:
            raise DomainError("GARCH requires omega > 0, alpha >= 0, beta >= 0")
        if stationary and alpha + beta >= 1:
            raise DomainError("GARCH requires alpha + beta < 1 for stationarity")
    else:
        _, phi, _, sig2 = split_params(spec, theta)
        if sig2 <= 0:
            raise DomainError("innovation variance must be positive")
        if stationary and not _ar_stationary(phi):
            raise DomainError(f"AR polynomial of {spec} is not stationary")
    return theta


# ---------------------------------------------------------------------------
# per-observation terms
# ---------------------------------------------------------------------------


def _ar_residuals(spec, theta, x):
    c, phi, _, _ = split_params(spec, theta)
    e = x - c
    for j in range(1, spec.p + 1):
        e[j:] -= phi[j - 1] * x[:-j]
    return e


def _ar_regressors(spec, x):
    n = x.shape[0]
    Z = np.zeros((n, spec.p + int(spec.mean)))
    if spec.mean:
        Z[:, 0] = 1.0
    off = int(spec.mean)
    for j in range(1, spec.p + 1):
        Z[j:, off + j - 1] = x[:-j]
    return Z


def _garch_v0(x, v0):
    return float(np.mean(x * x)) if v0 is None else float(v0)


def loglik_terms(spec: ModelSpec, theta, x, v0: float | None = None) -> np.ndarray:
    """Per-observation conditional log-likelihood terms ``l_t``."""
    x = as_series(x)
    theta = check_params(spec, theta)
    if spec.family is Family.AR:
        sig2 = theta[-1]
        e = _ar_residuals(spec, theta, x)
        ll = -0.5 * (LOG2PI + np.log(sig2)) - 0.5 * e * e / sig2
    elif spec.family is Family.ARMA:
        ll = K.arma_obs(theta, x, spec.p, spec.q)[0]
    else:
        ll = K.garch_obs(theta, x, _garch_v0(x, v0))[0]
    if not np.all(np.isfinite(ll)):
        bad = int(np.flatnonzero(~np.isfinite(ll))[0])
        raise DomainError(f"non-finite likelihood term at index {bad}")
    return ll


def conditional_loglik(spec: ModelSpec, theta, x, start: int = 0, v0: float | None = None) -> float:
    """Sum of ``l_t`` over ``x[start:]``, conditioning on ``x[:start]``."""
    return float(np.sum(loglik_terms(spec, theta, x, v0)[start:]))


def scores(spec: ModelSpec, theta, x, v0: float | None = None) -> np.ndarray:
    """Per-observation gradients ``dl_t/dtheta`` as an ``(n, d)`` array."""
    x = as_series(x)
    theta = check_params(spec, theta)
    if spec.family is Family.AR:
        sig2 = theta[-1]
        e = _ar_residuals(spec, theta, x)
        D = np.empty((x.shape[0], spec.dim))
        D[:, :-1] = _ar_regressors(spec, x) * (e / sig2)[:, None]
        D[:, -1] = -0.5 / sig2 + 0.5 * e * e / sig2**2
        return D
    if spec.family is Family.ARMA:
        return K.arma_obs(theta, x, spec.p, spec.q)[1]
    return K.garch_obs(theta, x, _garch_v0(x, v0))[1]


def score(spec: ModelSpec, theta, x, t: int, v0: float | None = None) -> np.ndarray:
    x = as_series(x)
    if not -x.shape[0] <= t < x.shape[0]:
        raise IndexError(f"observation index {t} out of range for length {x.shape[0]}")
    return scores(spec, theta, x, v0)[t]


def _window_slice(n, window):
    if window is None:
        return slice(0, n)
    if isinstance(window, slice):
        lo, hi, _ = window.indices(n)
    else:
        lo, hi = window
    if not 0 <= lo < hi <= n:
        raise ValueError(f"window {window!r} is empty or outside [0, {n})")
    return slice(lo, hi)


def hessian(spec: ModelSpec, theta, x, window=None, v0: float | None = None) -> np.ndarray:
    """Average of ``d2 l_t / dtheta dtheta'`` over ``window``.

    Analytic for AR; central differences of the analytic scores otherwise.
    """
    x = as_series(x)
    theta = check_params(spec, theta)
    sl = _window_slice(x.shape[0], window)
    if spec.family is Family.AR:
        sig2 = theta[-1]
        e = _ar_residuals(spec, theta, x)[sl]
        Z = _ar_regressors(spec, x)[sl]
        k = Z.shape[1]
        H = np.empty((spec.dim, spec.dim))
        H[:k, :k] = -(Z.T @ Z) / (len(e) * sig2)
        H[:k, k] = H[k, :k] = -(Z.T @ e) / (len(e) * sig2**2)
        H[k, k] = np.mean(0.5 / sig2**2 - e * e / sig2**3)
    else:
        if spec.family is Family.GARCH:
            v0 = _garch_v0(x, v0)
        H = np.empty((spec.dim, spec.dim))
        for j in range(spec.dim):
            step = 1e-5 * max(abs(theta[j]), 1e-3)
            up = theta.copy()
            dn = theta.copy()
            up[j] += step
            dn[j] -= step
            if spec.family is Family.GARCH and dn[j] < 0:
                dn[j] = theta[j]
                step_dn = 0.0
            else:
                step_dn = step
            gu = scores(spec, up, x, v0)[sl].mean(axis=0)
            gd = scores(spec, dn, x, v0)[sl].mean(axis=0)
            H[:, j] = (gu - gd) / (step + step_dn)
        H = 0.5 * (H + H.T)
    if not np.all(np.isfinite(H)):
        raise FloatingPointError("non-finite Hessian entry")
    return H


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def _ensure_length(spec, nobs):
    if nobs < spec.min_fit_length:
        raise InsufficientDataError(
            f"{spec} needs at least {spec.min_fit_length} observations, got {nobs}"
        )


def garch_default_seeds(v: float) -> np.ndarray:
    v = max(v, 1e-12)
    return np.array([[v * (1 - a - b), a, b] for a, b in GARCH_SEEDS])


def _polish(family, u, w, s, v0, p, q, bound):
    """Simplex search from ``u``; returns the improved point and objective."""
    def fun(v):
        return K._objective(family, np.asarray(v, dtype=float), w, s, v0, p, q, bound)[0]

    with np.errstate(all="ignore"):
        res = minimize(fun, u, method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": 4000})
    return res.x, float(res.fun), bool(res.success)


def fit_mle(spec: ModelSpec, x, start: int = 0, v0: float | None = None, seeds=None) -> FittedModel:
    """Maximize the conditional quasi-likelihood of ``x[start:]``.

    AR models are solved by least squares. ARMA and GARCH use a
    deterministic multi-start BFGS; ``seeds`` (natural parameters, rows) are
    tried before the built-in starts and the lowest-index seed wins ties.
    """
    x = as_series(x)
    n = x.shape[0]
    if not 0 <= start < n:
        raise InsufficientDataError(f"start {start} leaves no observations")
    _ensure_length(spec, n - start)
    window = (start, n)

    if spec.family is Family.AR:
        beta, sig2, ll, degenerate = K.ar_fit(x, start, spec.p, int(spec.mean))
        return FittedModel(spec, np.append(beta, sig2), float(ll), window, bool(degenerate))

    if spec.family is Family.GARCH:
        v0 = _garch_v0(x, v0)
        v = float(np.mean(x[start:] ** 2))
        if v == 0.0:
            eps = np.finfo(float).eps
            theta = np.array([eps, 0.0, 0.0])
            ll = -0.5 * (n - start) * (LOG2PI + np.log(eps))
            return FittedModel(spec, theta, float(ll), window, degenerate=True)
        seed_arr = garch_default_seeds(v)
        if seeds is not None:
            seed_arr = np.vstack((np.atleast_2d(np.asarray(seeds, dtype=float)), seed_arr))
        theta, ll, status = K.garch_fit(x, start, v0, seed_arr)
        if status >= 2:
            u0 = np.asarray(K.garch_to_u(*theta))
            u, f, ok = _polish(K.GARCH, u0, x, start, v0, 0, 0, 0.0)
            if -f * (n - start) > ll:
                theta, ll = np.array(K.garch_from_u(u)), -f * (n - start)
                status = 1 if ok else status
        if not np.isfinite(ll):
            raise ConvergenceError("GARCH likelihood maximization failed", best=theta)
        return FittedModel(spec, np.asarray(theta), float(ll), window, status=int(status))

    k = spec.p + spec.q
    base = np.zeros((1, k))
    if spec.p:
        phi = K.ar_fit(x, start, spec.p, 0)[0]
        ls = np.zeros((1, k))
        ls[0, : spec.p] = np.clip(phi, -0.95 * spec.bound, 0.95 * spec.bound)
        base = np.vstack((base, ls))
    if seeds is not None:
        base = np.vstack((np.atleast_2d(np.asarray(seeds, dtype=float))[:, :k], base))
    theta, ll, status = K.arma_fit(x, start, spec.p, spec.q, spec.bound, base)
    if status >= 2 and k:
        u0 = np.arctanh(np.clip(theta[:k] / spec.bound, -0.999, 0.999))
        u, f, ok = _polish(K.ARMA, u0, x, start, 0.0, spec.p, spec.q, spec.bound)
        if -f * (n - start) > ll:
            theta = np.asarray(K._arma_unpack(u, x, start, spec.p, spec.q, spec.bound))
            ll = -f * (n - start)
            status = 1 if ok else status
    if not np.isfinite(ll):
        raise ConvergenceError("ARMA likelihood maximization failed", best=theta)
    return FittedModel(spec, np.asarray(theta), float(ll), window, status=int(status))


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


def simulate(spec: ModelSpec, theta, n: int, seed=None, burn_in: int = 500) -> np.ndarray:
    """Simulate ``n`` observations after discarding ``burn_in`` warm-up values."""
    theta = check_params(spec, theta, stationary=True)
    if n < 1 or burn_in < 0:
        raise ValueError("n must be positive and burn_in non-negative")
    z = np.random.default_rng(seed).standard_normal(burn_in + n)
    return _simulate_from(spec, theta, z)[burn_in:]


def _simulate_from(spec, theta, z):
    if spec.family is Family.GARCH:
        omega, alpha, beta = theta
        return K.sim_garch(omega, alpha, beta, z, 0.0, omega / (1.0 - alpha - beta))[0]
    c, phi, ma, sig2 = split_params(spec, theta)
    # an intercept enters the recursion as a shift of every innovation
    return K.sim_arma(phi, ma, np.sqrt(sig2) * z + c, np.zeros(0), np.zeros(0))


def stationary_variance(spec: ModelSpec, theta) -> float:
    """Closed-form stationary variance (AR(1)/ARMA via the MA(inf) weights)."""
    theta = check_params(spec, theta, stationary=True)
    if spec.family is Family.GARCH:
        return theta[0] / (1.0 - theta[1] - theta[2])
    _, phi, ma, sig2 = split_params(spec, theta)
    impulse = np.zeros(4000)
    impulse[0] = 1.0
    psi = K.sim_arma(phi, ma, impulse, np.zeros(0), np.zeros(0))
    return float(sig2 * np.sum(psi**2))
