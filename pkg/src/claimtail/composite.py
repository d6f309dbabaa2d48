"""Composite severity model: truncated bulk below ``b``, shifted Pareto above.

Density::

    f(z) = p * f_bulk(z) / F_bulk(b)            for 0 < z <= b
    f(z) = (1 - p) * f_pareto(z - b)            for z > b

with ``p`` the probability of a claim at or below the threshold.  With
``p = F_bulk(b)`` the lower branch is the untruncated bulk density.
"""
from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass

import numpy as np

from . import distributions as dist
from .distributions import DistributionSpec, Family, TruncatedSpec
from .fitting import BulkFit, FitMode, ScollnikFit, TailFit, fit_bulk, fit_pareto_tail

__all__ = [
    "CompositeModel",
    "PMode",
    "build_composite",
    "composite_cdf",
    "composite_pdf",
    "composite_quantile",
    "fit_composite",
    "from_record",
    "model_digest",
    "p_below_empirical",
    "p_below_theoretical",
    "sample_composite",
    "scollnik_model",
    "to_record",
]


class PMode(str, enum.Enum):
    EMPIRICAL = "empirical"
    THEORETICAL = "theoretical"
    FIXED = "fixed"  # true model, or the continuity weight of the M7 fit

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


@dataclass(frozen=True)
class CompositeModel:
    bulk: DistributionSpec
    tail: DistributionSpec
    b: float
    p_below: float
    p_mode: PMode = PMode.FIXED

    def __post_init__(self):
        if self.tail.family is not Family.PARETO2:
            raise ValueError("tail must be pareto2")
        if not (0.0 <= self.p_below <= 1.0):
            raise ValueError(f"p_below must lie in [0, 1], got {self.p_below}")
        if self.p_below > 0:
            TruncatedSpec(self.bulk, self.b)  # raises on zero bulk mass below b

    @property
    def truncated_bulk(self) -> TruncatedSpec:
        return TruncatedSpec(self.bulk, self.b)

    def with_p(self, p_below: float, p_mode: PMode | None = None) -> "CompositeModel":
        return CompositeModel(self.bulk, self.tail, self.b, float(p_below), p_mode or self.p_mode)

    def mean(self) -> float:
        """Expected claim size, by quadrature of the bulk branch."""
        from scipy import integrate

        tail_mean = self.b + dist.mean(self.tail)
        if self.p_below == 0:
            return tail_mean
        tr = self.truncated_bulk
        lower = 1.0 if self.bulk.family is Family.LOGGAMMA else 0.0
        bulk_mean, _ = integrate.quad(lambda z: z * dist.truncated_pdf(tr, z), lower, self.b,
                                      epsabs=1e-13, epsrel=1e-12, limit=200)
        return self.p_below * bulk_mean + (1.0 - self.p_below) * tail_mean


def build_composite(bulk: BulkFit | DistributionSpec, tail: TailFit | DistributionSpec,
                    p_below: float, b: float | None = None,
                    p_mode: PMode | str = PMode.FIXED) -> CompositeModel:
    """Assemble a composite model from fitted (or given) bulk and tail laws."""
    b_bulk = bulk.b if isinstance(bulk, BulkFit) else None
    b_tail = tail.b if isinstance(tail, TailFit) else None
    known = [x for x in (b, b_bulk, b_tail) if x is not None]
    if not known:
        raise ValueError("threshold b not given")
    if any(not math.isclose(x, known[0], rel_tol=1e-12, abs_tol=0.0) for x in known):
        raise ValueError(f"threshold mismatch between bulk and tail: {known}")
    spec_bulk = bulk.spec if isinstance(bulk, BulkFit) else bulk
    spec_tail = tail.spec if isinstance(tail, TailFit) else tail
    return CompositeModel(spec_bulk, spec_tail, float(known[0]), float(p_below), PMode.parse(p_mode))


def scollnik_model(fit: ScollnikFit) -> CompositeModel:
    return CompositeModel(fit.bulk, fit.tail, fit.b, fit.r, PMode.FIXED)


def p_below_empirical(sample, b_hat: float) -> float:
    z = np.asarray(sample, dtype=float)
    if z.size == 0:
        raise ValueError("empty sample")
    return float(np.count_nonzero(z <= b_hat)) / z.size


def p_below_theoretical(bulk: BulkFit | DistributionSpec, b_hat: float) -> float:
    if isinstance(bulk, BulkFit):
        if not bulk.converged:
            raise ValueError("bulk fit did not converge")
        bulk = bulk.spec
    if math.isinf(b_hat):
        return 1.0
    return float(dist.cdf(bulk, b_hat))


@dataclass(frozen=True)
class CompositeFit:
    model: CompositeModel
    bulk: BulkFit
    tail: TailFit
    p_raw: float  # estimate of p before any clamping


def fit_composite(sample, b_hat: float, family: Family | str, p_mode: PMode | str = PMode.EMPIRICAL,
                  fit_mode: FitMode | str = FitMode.TRUNCATED, clamp: bool = False) -> CompositeFit:
    """Fit bulk and Pareto tail at a fixed threshold and assemble the composite.

    With ``clamp`` the mixing weight is held inside ``[1/(n+1), n/(n+1)]``.
    """
    z = np.asarray(sample, dtype=float)
    p_mode = PMode.parse(p_mode)
    tail = fit_pareto_tail(z[z > b_hat] - b_hat, b_hat)
    bulk = fit_bulk(z[z <= b_hat], family, b_hat, fit_mode)
    if p_mode is PMode.EMPIRICAL:
        p = p_below_empirical(z, b_hat)
    elif p_mode is PMode.THEORETICAL:
        p = p_below_theoretical(bulk, b_hat)
    else:
        raise ValueError("p_mode must be empirical or theoretical")
    n = z.size
    p_used = min(max(p, 1.0 / (n + 1)), n / (n + 1.0)) if clamp else p
    return CompositeFit(build_composite(bulk, tail, p_used, p_mode=p_mode), bulk, tail, p)


def _positive(z):
    z = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(z)) or np.any(z <= 0):
        raise dist.DomainError("composite model requires z > 0")
    return z


def composite_pdf(model: CompositeModel, z):
    z = _positive(z)
    below = z <= model.b
    out = np.zeros_like(z)
    if model.p_below > 0 and np.any(below):
        out[below] = model.p_below * np.asarray(dist.truncated_pdf(model.truncated_bulk, z[below]))
    if np.any(~below):
        out[~below] = (1.0 - model.p_below) * np.asarray(dist.pdf(model.tail, z[~below] - model.b))
    return float(out) if out.ndim == 0 else out


def composite_cdf(model: CompositeModel, z):
    z = _positive(z)
    below = z <= model.b
    out = np.empty_like(z)
    if np.any(below):
        out[below] = (model.p_below * np.asarray(dist.truncated_cdf(model.truncated_bulk, z[below]))
                      if model.p_below > 0 else 0.0)
    if np.any(~below):
        out[~below] = model.p_below + (1.0 - model.p_below) * np.asarray(
            dist.cdf(model.tail, z[~below] - model.b))
    return float(out) if out.ndim == 0 else out


def composite_quantile(model: CompositeModel, u):
    """Inverse of :func:`composite_cdf` for ``0 <= u < 1``."""
    u = np.asarray(u, dtype=float)
    p = model.p_below
    out = np.empty_like(u)
    below = u <= p
    if np.any(below):
        out[below] = dist.truncated_quantile(model.truncated_bulk, u[below] / p) if p > 0 else model.b
    if np.any(~below):
        v = (u[~below] - p) / (1.0 - p)
        a, s = model.tail.params
        out[~below] = model.b + s * np.expm1(-np.log1p(-v) / a)
    return float(out) if out.ndim == 0 else out


def sample_composite(model: CompositeModel, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` claims: a Bernoulli(p) branch, then truncated-bulk or shifted-Pareto inversion."""
    if count < 1:
        raise ValueError("count must be >= 1")
    branch = rng.random(count) < model.p_below
    n_below = int(np.count_nonzero(branch))
    out = np.empty(count)
    if n_below:
        out[branch] = dist.inverse_sampler(model.truncated_bulk)(rng.random(n_below))
    if n_below < count:
        a, s = model.tail.params
        out[~branch] = model.b + s * np.expm1(-np.log1p(-rng.random(count - n_below)) / a)
    return out


# ---------------------------------------------------------------------------
# flat key=value record
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def to_record(model: CompositeModel) -> str:
    """Serialise to ``key=value`` lines with 12 significant digits."""
    fields = [
        ("bulk_family", model.bulk.family.value),
        ("bulk_param1", _fmt(model.bulk.param1)),
        ("bulk_param2", _fmt(model.bulk.param2)),
        ("tail_family", model.tail.family.value),
        ("tail_alpha", _fmt(model.tail.param1)),
        ("tail_beta", _fmt(model.tail.param2)),
        ("b", _fmt(model.b)),
        ("p_below", _fmt(model.p_below)),
        ("p_mode", model.p_mode.value),
    ]
    return "".join(f"{k}={v}\n" for k, v in fields)


def from_record(text: str) -> CompositeModel:
    kv = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    try:
        bulk = DistributionSpec(kv["bulk_family"], float(kv["bulk_param1"]), float(kv["bulk_param2"]))
        tail = DistributionSpec(kv.get("tail_family", "pareto2"), float(kv["tail_alpha"]), float(kv["tail_beta"]))
        return CompositeModel(bulk, tail, float(kv["b"]), float(kv["p_below"]),
                              PMode.parse(kv.get("p_mode", "fixed")))
    except KeyError as exc:
        raise ValueError(f"model record lacks field {exc.args[0]!r}") from None


def model_digest(model: CompositeModel) -> str:
    return hashlib.sha256(to_record(model).encode()).hexdigest()[:12]
