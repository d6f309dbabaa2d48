"""Maximum-likelihood fits: bulk below a threshold, Pareto tail above it, and
the continuous lognormal-Pareto composite with a free threshold (M7)."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .distributions import DistributionSpec, Family, cdf, logpdf
from .tailselect import sorted_sample

__all__ = [
    "BulkFit",
    "FitMode",
    "ScollnikFit",
    "TailFit",
    "bulk_loglik",
    "fit_bulk",
    "fit_pareto_tail",
    "fit_scollnik",
    "pareto_loglik",
    "scollnik_loglik",
    "scollnik_weight",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class FitMode(str, enum.Enum):
    TRUNCATED = "truncated"
    PLAIN = "plain"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        return {"truncatedlikelihood": cls.TRUNCATED, "plainlikelihood": cls.PLAIN}.get(v) or cls(v)


@dataclass(frozen=True)
class BulkFit:
    spec: DistributionSpec
    b: float
    mode: FitMode
    loglik: float
    converged: bool
    n: int = 0


@dataclass(frozen=True)
class TailFit:
    alpha: float
    beta: float
    b: float
    n_exceed: int
    loglik: float
    boundary: bool = False

    @property
    def spec(self) -> DistributionSpec:
        return DistributionSpec(Family.PARETO2, self.alpha, self.beta)


@dataclass(frozen=True)
class ScollnikFit:
    mu: float
    sigma: float
    alpha: float
    beta: float
    b: float
    r: float
    loglik: float
    n_below: int = 0
    profile: tuple = field(default=(), repr=False, compare=False)

    @property
    def bulk(self) -> DistributionSpec:
        return DistributionSpec(Family.LOGNORMAL, self.mu, self.sigma)

    @property
    def tail(self) -> DistributionSpec:
        return DistributionSpec(Family.PARETO2, self.alpha, self.beta)


# ---------------------------------------------------------------------------
# bulk
# ---------------------------------------------------------------------------

def bulk_loglik(spec: DistributionSpec, data, b: float, mode: FitMode | str = FitMode.TRUNCATED) -> float:
    """Log-likelihood of ``data`` (all ``<= b``) under the plain or right-truncated bulk."""
    mode = FitMode.parse(mode)
    data = np.asarray(data, dtype=float)
    ll = float(np.sum(logpdf(spec, data)))
    if mode is FitMode.TRUNCATED:
        ll -= data.size * math.log(float(cdf(spec, b)))
    return ll


def _to_spec(family: Family, x) -> DistributionSpec:
    if family is Family.LOGNORMAL:
        return DistributionSpec(family, x[0], math.exp(x[1]))
    return DistributionSpec(family, math.exp(x[0]), math.exp(x[1]))


def _from_spec(spec: DistributionSpec) -> np.ndarray:
    a, s = spec.params
    if spec.family is Family.LOGNORMAL:
        return np.array([a, math.log(s)])
    return np.log([a, s])


def _initial_specs(family: Family, z: np.ndarray) -> list[DistributionSpec]:
    """Moment-based starting points, plus two perturbations for restarts."""
    m, v = float(np.mean(z)), float(np.var(z))
    lz = np.log(z)
    v = max(v, 1e-12 * m * m)
    if family is Family.GAMMA:
        base = (m * m / v, v / m)
    elif family is Family.LOGNORMAL:
        base = (float(np.mean(lz)), max(float(np.std(lz)), 1e-6))
    elif family is Family.WEIBULL:
        cv = math.sqrt(v) / m
        k = max(cv ** -1.086, 0.05)
        base = (k, m / math.gamma(1.0 + 1.0 / k))
    elif family is Family.LOGGAMMA:
        y = np.maximum(lz, 1e-12)
        my, vy = float(np.mean(y)), max(float(np.var(y)), 1e-12)
        base = (my * my / vy, my / vy)
    else:
        raise ValueError(f"{family.value} is not a bulk family")
    out = [DistributionSpec(family, *base)]
    if family is Family.LOGNORMAL:
        out += [DistributionSpec(family, base[0] + 0.5 * base[1], 1.5 * base[1]),
                DistributionSpec(family, base[0] - 0.5 * base[1], 0.7 * base[1])]
    else:
        out += [DistributionSpec(family, 2.0 * base[0], base[1]),
                DistributionSpec(family, 0.5 * base[0], 1.5 * base[1])]
    return out


def _minimize(fun, x0, restarts: list, tol=1e-10):
    """Nelder-Mead from each start, then a quasi-Newton polish of the best."""
    best = None
    for start in [x0, *restarts]:
        res = optimize.minimize(
            fun, start, method="Nelder-Mead",
            options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000, "maxfev": 8000,
                     "adaptive": len(start) > 2},
        )
        if best is None or res.fun < best.fun:
            best = res
    polished = optimize.minimize(fun, best.x, method="BFGS", options={"gtol": 1e-9})
    if np.isfinite(polished.fun) and polished.fun <= best.fun:
        x, f = polished.x, polished.fun
    else:
        x, f = best.x, best.fun
    converged = (bool(best.success) or bool(polished.success)) and np.isfinite(f)
    if not converged and np.isfinite(f):
        # line searches often stop on rounding noise at the optimum; accept a flat gradient
        converged = _max_gradient(fun, x) < 1e-6
    return x, f, converged


def _max_gradient(fun, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g = max(g, abs(fun(x + e) - fun(x - e)) / (2 * h))
    return g


def _lognormal_closed_form(z: np.ndarray) -> DistributionSpec:
    lz = np.log(z)
    return DistributionSpec(Family.LOGNORMAL, float(np.mean(lz)), float(np.std(lz)))


def fit_bulk(data_below, family: Family | str, b: float,
             mode: FitMode | str = FitMode.TRUNCATED) -> BulkFit:
    """Maximum-likelihood fit of a bulk family to the observations at or below ``b``.

    ``mode="truncated"`` maximises the right-truncated likelihood, ``"plain"``
    the ordinary one.  The reported ``loglik`` is the maximised objective.
    """
    family = Family.parse(family)
    mode = FitMode.parse(mode)
    z = np.asarray(data_below, dtype=float).ravel()
    if z.size == 0:
        raise ValueError("fit_bulk: no observations below the threshold")
    if z.size < 5:
        raise ValueError(f"fit_bulk: need at least 5 observations, got {z.size}")
    if np.any(z <= 0) or np.any(z > b * (1 + 1e-12)):
        raise ValueError("fit_bulk: data must lie in (0, b]")
    if family is Family.LOGGAMMA and np.any(z <= 1.0):
        raise ValueError("fit_bulk: loggamma needs all observations above 1")
    if family is Family.LOGGAMMA:
        # exact reparameterisation: ln Z is Gamma(shape, rate) truncated at ln b
        g = fit_bulk(np.log(z), Family.GAMMA, math.log(b), mode)
        spec = DistributionSpec(Family.LOGGAMMA, g.spec.param1, 1.0 / g.spec.param2)
        return BulkFit(spec, b, mode, bulk_loglik(spec, z, b, mode), g.converged, z.size)
    if family is Family.LOGNORMAL and mode is FitMode.PLAIN:
        spec = _lognormal_closed_form(z)
        return BulkFit(spec, b, mode, bulk_loglik(spec, z, b, mode), True, z.size)

    # rescale to unit median so the optimiser sees comparable magnitudes
    scale = float(np.median(z))
    zs, bs = z / scale, b / scale
    logs = np.log(zs)
    sum_log = float(np.sum(logs))
    n = z.size

    def negll(x):
        try:
            spec = _to_spec(family, x)
        except ValueError:
            return np.inf
        a, s = spec.params
        if family is Family.GAMMA:
            ll = (a - 1.0) * sum_log - np.sum(zs) / s - n * (special.gammaln(a) + a * math.log(s))
            log_mass = math.log(special.gammainc(a, bs / s)) if mode is FitMode.TRUNCATED else 0.0
        elif family is Family.WEIBULL:
            ll = n * math.log(a / s) + (a - 1.0) * (sum_log - n * math.log(s)) - np.sum((zs / s) ** a)
            log_mass = math.log(-math.expm1(-((bs / s) ** a))) if mode is FitMode.TRUNCATED else 0.0
        else:  # lognormal, truncated
            ll = -sum_log - n * (math.log(s) + _LOG_SQRT_2PI) - 0.5 * np.sum(((logs - a) / s) ** 2)
            log_mass = float(special.log_ndtr((math.log(bs) - a) / s))
        val = -(ll - n * log_mass) / n  # per observation, so tolerances do not scale with n
        return val if np.isfinite(val) else np.inf

    def unscale(spec):
        a, s = spec.params
        if family is Family.LOGNORMAL:
            return DistributionSpec(family, a + math.log(scale), s)
        return DistributionSpec(family, a, s * scale)

    starts = [_from_spec(sp) for sp in _initial_specs(family, zs)]
    if family is Family.LOGNORMAL:
        starts.insert(0, _from_spec(_lognormal_closed_form(zs)))
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        x, _, converged = _minimize(negll, starts[0], starts[1:])
    spec = unscale(_to_spec(family, x))
    return BulkFit(spec, b, mode, bulk_loglik(spec, z, b, mode), converged, n)


# ---------------------------------------------------------------------------
# Pareto tail
# ---------------------------------------------------------------------------

def pareto_loglik(alpha: float, beta: float, y) -> float:
    y = np.asarray(y, dtype=float)
    return float(y.size * math.log(alpha / beta) - (alpha + 1.0) * np.sum(np.log1p(y / beta)))


def _profile(y: np.ndarray, log_beta: float) -> tuple[float, float]:
    beta = math.exp(log_beta)
    s = float(np.sum(np.log1p(y / beta)))
    alpha = y.size / s
    return alpha, pareto_loglik(alpha, beta, y)


def fit_pareto_tail(exceedances, b: float = 0.0) -> TailFit:
    """Pareto type II MLE for excesses ``y = z - b`` by profiling over ``beta``.

    For fixed ``beta`` the shape has the closed form ``n / sum(log1p(y/beta))``;
    the remaining one-dimensional search runs over ``log(beta)``.  When the
    profile keeps increasing as ``beta`` grows (exponential-like data) the
    fit is returned at the search boundary with ``boundary=True``.
    """
    y = np.asarray(exceedances, dtype=float).ravel()
    if y.size < 2:
        raise ValueError("fit_pareto_tail: need at least 2 exceedances")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise ValueError("fit_pareto_tail: exceedances must be positive")
    scale = float(np.mean(y))
    ys = y / scale
    lo, hi = math.log(1e-8), math.log(1e8)
    grid = np.linspace(lo, hi, 161)
    prof = np.array([_profile(ys, g)[1] for g in grid])
    i = int(np.argmax(prof))
    boundary = i in (0, grid.size - 1) or np.ptp(ys) == 0
    if not boundary:
        res = optimize.minimize_scalar(
            lambda g: -_profile(ys, g)[1], bracket=(grid[i - 1], grid[i], grid[i + 1]),
            tol=1e-12,
        )
        g_hat = float(res.x)
    else:
        g_hat = float(grid[i])
    alpha, _ = _profile(ys, g_hat)
    beta = math.exp(g_hat) * scale
    if boundary:
        warnings.warn("fit_pareto_tail: likelihood maximised at the search boundary",
                      RuntimeWarning, stacklevel=2)
    return TailFit(alpha, beta, b, y.size, pareto_loglik(alpha, beta, y), boundary)


# ---------------------------------------------------------------------------
# continuous lognormal-Pareto composite (M7)
# ---------------------------------------------------------------------------

def scollnik_weight(mu: float, sigma: float, alpha: float, beta: float, b: float) -> float:
    """Mixing weight that makes the lognormal-Pareto density continuous at ``b``."""
    zeta = (math.log(b) - mu) / sigma
    # rho = sqrt(2 pi) alpha b sigma Phi(zeta) exp(zeta^2 / 2), evaluated in logs
    log_rho = (0.5 * math.log(2.0 * math.pi) + math.log(alpha * b * sigma)
               + float(special.log_ndtr(zeta)) + 0.5 * zeta * zeta)
    # r = rho / (rho + beta) = 1 / (1 + exp(log beta - log rho))
    return float(special.expit(log_rho - math.log(beta)))


def _log_weights(mu, sigma, alpha, beta, b):
    zeta = (math.log(b) - mu) / sigma
    log_rho = (0.5 * math.log(2.0 * math.pi) + math.log(alpha * b * sigma)
               + float(special.log_ndtr(zeta)) + 0.5 * zeta * zeta)
    d = log_rho - math.log(beta)
    # log r and log (1 - r) without cancellation
    return -float(np.logaddexp(0.0, -d)), -float(np.logaddexp(0.0, d)), zeta


def scollnik_loglik(sample, mu, sigma, alpha, beta, b) -> float:
    z = np.asarray(sample, dtype=float)
    below = z[z <= b]
    above = z[z > b] - b
    log_r, log_1r, zeta = _log_weights(mu, sigma, alpha, beta, b)
    lz = np.log(below)
    ll_below = (below.size * (log_r - math.log(sigma) - _LOG_SQRT_2PI - float(special.log_ndtr(zeta)))
                - float(np.sum(lz)) - 0.5 * float(np.sum(((lz - mu) / sigma) ** 2)))
    ll_above = above.size * (log_1r + math.log(alpha / beta)) - (alpha + 1.0) * float(np.sum(np.log1p(above / beta)))
    return float(ll_below + ll_above)


class _ScollnikObjective:
    """Negative log-likelihood at a fixed split of the sorted sample.

    The lognormal part only needs the count, sum and sum of squares of the
    logs below the split, taken from prefix sums.
    """

    def __init__(self, z: np.ndarray):
        self.z = z
        self.lz = np.log(z)
        self.c1 = np.concatenate(([0.0], np.cumsum(self.lz)))
        self.c2 = np.concatenate(([0.0], np.cumsum(self.lz**2)))

    def value(self, theta, b: float, m: int) -> float:
        mu, log_sigma, log_alpha, log_beta = theta
        sigma, alpha, beta = math.exp(log_sigma), math.exp(log_alpha), math.exp(log_beta)
        if not (1e-8 < sigma < 1e4 and 1e-8 < alpha < 1e6 and 1e-12 < beta < 1e12):
            return np.inf
        log_r, log_1r, zeta = _log_weights(mu, sigma, alpha, beta, b)
        s1, s2 = self.c1[m], self.c2[m]
        ll_below = (m * (log_r - log_sigma - _LOG_SQRT_2PI - float(special.log_ndtr(zeta)))
                    - s1 - 0.5 * (s2 - 2.0 * mu * s1 + m * mu * mu) / (sigma * sigma))
        y = self.z[m:] - b
        k = y.size
        ll_above = k * (log_1r + log_alpha - log_beta) - (alpha + 1.0) * float(np.sum(np.log1p(y / beta)))
        val = -(ll_below + ll_above)
        return val if np.isfinite(val) else np.inf

    def start(self, m: int, b: float):
        lz = self.lz[:m]
        mu, sd = float(np.mean(lz)), max(float(np.std(lz)), 1e-3)
        y = self.z[m:] - b
        y = y[y > 0]
        if y.size >= 2:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    t = fit_pareto_tail(y)
                alpha, beta = t.alpha, t.beta
            except ValueError:
                alpha, beta = 1.5, float(np.mean(y)) if y.size else b
        else:
            alpha, beta = 1.5, b
        return np.array([mu, math.log(sd), math.log(alpha), math.log(beta)])

    def fit_at(self, m: int, x0=None):
        b = float(self.z[m - 1])
        starts = [self.start(m, b)] if x0 is None else [np.asarray(x0, float), self.start(m, b)]
        best = None
        for s in starts:
            res = optimize.minimize(self.value, s, args=(b, m), method="Nelder-Mead",
                                    options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 3000,
                                             "adaptive": True})
            if best is None or res.fun < best.fun:
                best = res
        return best.x, float(best.fun)


def _candidate_indices(n: int, lo: int, hi: int, coarse: int) -> np.ndarray:
    if hi - lo + 1 <= coarse:
        return np.arange(lo, hi + 1)
    # log-spaced in the number of exceedances: resolution where the tail is thin
    k = np.unique(np.round(np.geomspace(n - hi, n - lo, coarse)).astype(int))
    return np.unique(np.clip(n - k, lo, hi))


def fit_scollnik(sample, coarse: int = 64, refine: int = 8) -> ScollnikFit:
    """Joint MLE of ``(mu, sigma, alpha, beta, b)`` for the continuous lognormal-Pareto model.

    The threshold is profiled over interior order statistics (ranks 5 to
    n-5).  A coarse log-spaced scan locates the best region, which is then
    scanned at full resolution before a final joint polish with ``b`` free.
    Ties in the profile are broken towards the smaller threshold.
    """
    z = sorted_sample(sample)
    n = z.size
    if n < 20:
        raise ValueError("fit_scollnik: need n >= 20")
    obj = _ScollnikObjective(z)
    lo, hi = 5, n - 5
    profile: dict[int, tuple[float, np.ndarray]] = {}

    def visit(m, x0=None):
        if m not in profile:
            with np.errstate(all="ignore"):
                x, f = obj.fit_at(m, x0)
            profile[m] = (f, x)
        return profile[m]

    for m in _candidate_indices(n, lo, hi, coarse):
        visit(int(m))
    for _ in range(refine):
        order = sorted(profile, key=lambda m: (profile[m][0], m))
        best_m = order[0]
        known = sorted(profile)
        pos = known.index(best_m)
        left = known[pos - 1] if pos > 0 else best_m
        right = known[pos + 1] if pos + 1 < len(known) else best_m
        todo = [m for m in range(left, right + 1) if m not in profile]
        if not todo:
            break
        if len(todo) > 24:
            todo = sorted(set(np.linspace(left, right, 24).round().astype(int)) - set(profile))
        for m in todo:
            visit(int(m), profile[best_m][1])
    finite = [(f, m) for m, (f, _) in profile.items() if np.isfinite(f)]
    if not finite:
        raise RuntimeError("fit_scollnik: all profile candidates failed")
    f_best, m_best = min(finite)
    x_best = profile[m_best][1]

    # joint polish with b free inside the bracket of neighbouring order statistics
    b_lo, b_hi = float(z[m_best - 1]), float(z[m_best]) if m_best < n else float(z[m_best - 1])

    def joint(v):
        b = v[4]
        if not (b_lo <= b < b_hi) and b != b_lo:
            return np.inf
        return obj.value(v[:4], b, m_best)

    v0 = np.concatenate((x_best, [b_lo]))
    with np.errstate(all="ignore"):
        res = optimize.minimize(joint, v0, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000, "adaptive": True})
    v = res.x if res.fun <= f_best else v0
    mu, sigma, alpha, beta, b = v[0], math.exp(v[1]), math.exp(v[2]), math.exp(v[3]), float(v[4])
    r = scollnik_weight(mu, sigma, alpha, beta, b)
    ll = scollnik_loglik(z, mu, sigma, alpha, beta, b)
    prof = tuple(sorted((float(z[m - 1]), -f) for m, (f, _) in profile.items()))
    return ScollnikFit(float(mu), sigma, alpha, beta, b, r, ll, m_best, prof)
