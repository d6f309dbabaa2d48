"""Severity families used for the bulk and the tail of a composite model.

Five two-parameter families are supported:

==========  ===================  ==================
family      param1               param2
==========  ===================  ==================
gamma       shape                scale
lognormal   mu (log-scale mean)  sigma
weibull     shape                scale
loggamma    shape                rate
pareto2     shape alpha          scale beta
==========  ===================  ==================

``loggamma`` is the law of ``exp(X)`` with ``X ~ Gamma(shape, rate)``, so its
support is ``[1, inf)``.  ``pareto2`` (Lomax) lives on ``[0, inf)``; as a tail
model it is applied to the excess ``z - b``.

All evaluation functions are vectorised over ``z`` / ``p``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

__all__ = [
    "DegenerateTruncationError",
    "DistributionSpec",
    "DomainError",
    "Family",
    "TruncatedSpec",
    "cdf",
    "inverse_sampler",
    "logpdf",
    "mean",
    "pdf",
    "quantile",
    "sample",
    "truncated_cdf",
    "truncated_pdf",
    "truncated_quantile",
    "truncated_sample",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class DomainError(ValueError):
    """Argument outside the support or parameter space of a distribution."""


class DegenerateTruncationError(ValueError):
    """Right truncation point carries no probability mass."""


class Family(str, enum.Enum):
    GAMMA = "gamma"
    LOGNORMAL = "lognormal"
    WEIBULL = "weibull"
    LOGGAMMA = "loggamma"
    PARETO2 = "pareto2"

    @classmethod
    def parse(cls, value: "str | Family") -> "Family":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "ga": "gamma",
            "ln": "lognormal",
            "lnorm": "lognormal",
            "we": "weibull",
            "lg": "loggamma",
            "pareto": "pareto2",
            "paretoii": "pareto2",
            "lomax": "pareto2",
        }
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown distribution family {value!r}") from None


BULK_FAMILIES = (Family.GAMMA, Family.LOGNORMAL, Family.WEIBULL, Family.LOGGAMMA)


@dataclass(frozen=True)
class DistributionSpec:
    """A family tag plus its two parameters (see the module table)."""

    family: Family
    param1: float
    param2: float

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        p1, p2 = float(self.param1), float(self.param2)
        object.__setattr__(self, "param1", p1)
        object.__setattr__(self, "param2", p2)
        if not (math.isfinite(p1) and math.isfinite(p2)):
            raise DomainError(f"non-finite parameters for {self.family.value}: {p1}, {p2}")
        if p2 <= 0 or (self.family is not Family.LOGNORMAL and p1 <= 0):
            raise DomainError(f"invalid parameters for {self.family.value}: {p1}, {p2}")

    @property
    def params(self) -> tuple[float, float]:
        return (self.param1, self.param2)

    def __str__(self):
        return f"{self.family.value}({self.param1:.6g}, {self.param2:.6g})"


@dataclass(frozen=True)
class TruncatedSpec:
    """``base`` conditioned on ``Z <= upper``."""

    base: DistributionSpec
    upper: float

    def __post_init__(self):
        upper = float(self.upper)
        object.__setattr__(self, "upper", upper)
        if not (upper > 0 and math.isfinite(upper)):
            raise DomainError(f"truncation point must be positive and finite, got {upper}")
        if float(cdf(self.base, upper)) <= 0.0:
            raise DegenerateTruncationError(f"{self.base} has no mass below {upper}")

    @property
    def mass(self) -> float:
        return float(cdf(self.base, self.upper))


def _check_z(spec: DistributionSpec, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise DomainError("non-finite argument")
    if spec.family is Family.PARETO2:
        if np.any(z < 0):
            raise DomainError("pareto2 is supported on [0, inf)")
    elif np.any(z <= 0):
        raise DomainError(f"{spec.family.value} requires z > 0")
    return z


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def logpdf(spec: DistributionSpec, z):
    """Log density; ``-inf`` outside the support."""
    z = _check_z(spec, z)
    a, s = spec.params
    fam = spec.family
    with np.errstate(divide="ignore", invalid="ignore"):
        if fam is Family.GAMMA:
            out = (a - 1.0) * np.log(z) - z / s - special.gammaln(a) - a * math.log(s)
        elif fam is Family.LOGNORMAL:
            lz = np.log(z)
            out = -lz - math.log(s) - _LOG_SQRT_2PI - 0.5 * ((lz - a) / s) ** 2
        elif fam is Family.WEIBULL:
            t = z / s
            out = math.log(a / s) + (a - 1.0) * np.log(t) - t**a
        elif fam is Family.LOGGAMMA:
            lz = np.log(z)
            out = np.where(
                z > 1.0,
                a * math.log(s) + (a - 1.0) * np.log(np.where(z > 1.0, lz, 1.0))
                - (s + 1.0) * lz - special.gammaln(a),
                -np.inf,
            )
        else:
            out = math.log(a / s) - (a + 1.0) * np.log1p(z / s)
    return _out(out)


def pdf(spec: DistributionSpec, z):
    return _out(np.exp(logpdf(spec, z)))


def cdf(spec: DistributionSpec, z):
    z = _check_z(spec, z)
    a, s = spec.params
    fam = spec.family
    if fam is Family.GAMMA:
        out = special.gammainc(a, z / s)
    elif fam is Family.LOGNORMAL:
        out = special.ndtr((np.log(z) - a) / s)
    elif fam is Family.WEIBULL:
        out = -np.expm1(-((z / s) ** a))
    elif fam is Family.LOGGAMMA:
        out = special.gammainc(a, s * np.log(np.maximum(z, 1.0)))
    else:
        out = -np.expm1(-a * np.log1p(z / s))
    return _out(out)


def _gamma_std_quantile(a: float, p):
    """Quantile of Gamma(a, 1), Newton-polished against ``gammainc``."""
    p = np.asarray(p, dtype=float)
    x = special.gammaincinv(a, p)
    lg = special.gammaln(a)
    for _ in range(3):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            dens = np.exp((a - 1.0) * np.log(x) - x - lg)
            step = (special.gammainc(a, x) - p) / dens
        ok = np.isfinite(step) & (dens > 0)
        x_new = np.where(ok, x - step, x)
        # never leave the support or overshoot to a worse point
        x = np.where(x_new > 0, x_new, 0.5 * x)
    return x


def quantile(spec: DistributionSpec, p):
    """Inverse cdf for ``0 < p < 1``."""
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0) | ~(p < 1)):
        raise DomainError("quantile requires 0 < p < 1")
    a, s = spec.params
    fam = spec.family
    if fam is Family.GAMMA:
        out = s * _gamma_std_quantile(a, p)
    elif fam is Family.LOGNORMAL:
        out = np.exp(a + s * special.ndtri(p))
    elif fam is Family.WEIBULL:
        out = s * (-np.log1p(-p)) ** (1.0 / a)
    elif fam is Family.LOGGAMMA:
        out = np.exp(_gamma_std_quantile(a, p) / s)
    else:
        out = s * np.expm1(-np.log1p(-p) / a)
    return _out(out)


def mean(spec: DistributionSpec) -> float:
    """Expectation of the untruncated law (``inf`` where it diverges)."""
    a, s = spec.params
    fam = spec.family
    if fam is Family.GAMMA:
        return a * s
    if fam is Family.LOGNORMAL:
        return math.exp(a + 0.5 * s * s)
    if fam is Family.WEIBULL:
        return s * math.gamma(1.0 + 1.0 / a)
    if fam is Family.LOGGAMMA:
        return (s / (s - 1.0)) ** a if s > 1 else math.inf
    return s / (a - 1.0) if a > 1 else math.inf


def _pareto_from_uniform(alpha: float, beta: float, u):
    return beta * np.expm1(-np.log1p(-u) / alpha)


def sample(spec: DistributionSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. values."""
    if count < 1:
        raise ValueError("count must be >= 1")
    a, s = spec.params
    fam = spec.family
    if fam is Family.GAMMA:
        return rng.gamma(a, s, size=count)
    if fam is Family.LOGNORMAL:
        return rng.lognormal(a, s, size=count)
    if fam is Family.WEIBULL:
        return s * rng.weibull(a, size=count)
    if fam is Family.LOGGAMMA:
        return np.exp(rng.gamma(a, 1.0 / s, size=count))
    return _pareto_from_uniform(a, s, rng.random(count))


def truncated_pdf(trunc: TruncatedSpec, z):
    z = np.asarray(z, dtype=float)
    dens = np.asarray(pdf(trunc.base, z)) / trunc.mass
    return _out(np.where(z <= trunc.upper, dens, 0.0))


def truncated_cdf(trunc: TruncatedSpec, z):
    z = np.minimum(np.asarray(z, dtype=float), trunc.upper)
    return _out(np.asarray(cdf(trunc.base, z)) / trunc.mass)


def truncated_quantile(trunc: TruncatedSpec, u):
    """``quantile(base, u * F(upper))`` for ``0 <= u <= 1``; exact inversion.

    ``u = 0`` maps to the lower support endpoint and ``u = 1`` to ``upper``.
    """
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)):
        raise DomainError("u must lie in [0, 1]")
    pu = u * trunc.mass
    lower = 1.0 if trunc.base.family is Family.LOGGAMMA else 0.0
    inner = (pu > 0) & (pu < 1)
    q = np.asarray(quantile(trunc.base, np.where(inner, pu, 0.5)), dtype=float)
    q = np.where(pu <= 0, lower, q)
    q = np.where(u >= 1, trunc.upper, q)
    return _out(np.minimum(q, trunc.upper))


def truncated_sample(trunc: TruncatedSpec, rng: np.random.Generator, count: int = 1):
    """Inversion sampling of the truncated law, ``U`` uniform on ``[0, 1)``."""
    return np.asarray(truncated_quantile(trunc, rng.random(count)), dtype=float)


class _StdGamma:
    # density/cdf pair in the form UNU.RAN's PINV expects
    def __init__(self, a: float):
        self.a = a
        self._lg = special.gammaln(a)

    def pdf(self, x):
        if x <= 0:
            return 0.0
        return math.exp((self.a - 1.0) * math.log(x) - x - self._lg)

    def cdf(self, x):
        return special.gammainc(self.a, x)


def _pinv_gamma(a: float, upper: float) -> Callable[[np.ndarray], np.ndarray] | None:
    from scipy.stats.sampling import NumericalInversePolynomial

    center = min(max(a - 1.0, 0.5 * upper), upper) if a > 1 else 0.5 * upper
    try:
        gen = NumericalInversePolynomial(
            _StdGamma(a), domain=(0.0, upper), center=center, u_resolution=1e-12
        )
    except Exception:  # noqa: BLE001 - UNU.RAN raises several error types on setup
        return None
    return gen.ppf


def inverse_sampler(trunc: TruncatedSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Fast vectorised version of :func:`truncated_quantile` for bulk Monte Carlo.

    Closed-form families invert directly.  Gamma and log-gamma use a
    polynomial interpolation of the inverse cdf (u-error below 1e-12),
    falling back to exact inversion when the interpolant cannot be set up.
    """
    base, b, mass = trunc.base, trunc.upper, trunc.mass
    a, s = base.params
    fam = base.family
    if fam is Family.GAMMA:
        ppf = _pinv_gamma(a, b / s)
        if ppf is not None:
            return lambda u: np.minimum(s * ppf(u), b)
    elif fam is Family.LOGGAMMA:
        ppf = _pinv_gamma(a, s * math.log(b))
        if ppf is not None:
            return lambda u: np.minimum(np.exp(ppf(u) / s), b)
    elif fam is Family.LOGNORMAL:
        return lambda u: np.minimum(np.exp(a + s * special.ndtri(u * mass)), b)
    elif fam is Family.WEIBULL:
        return lambda u: np.minimum(s * (-np.log1p(-u * mass)) ** (1.0 / a), b)
    elif fam is Family.PARETO2:
        return lambda u: np.minimum(_pareto_from_uniform(a, s, u * mass), b)
    return lambda u: np.asarray(truncated_quantile(trunc, u), dtype=float)
