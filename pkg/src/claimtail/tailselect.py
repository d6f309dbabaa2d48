"""Fixed-threshold selectors M1-M6.

Every selector takes a claim sample, sorts it, and returns the threshold as
one of the order statistics.  Indices are 1-based order-statistic ranks:
``index = i`` means ``b_hat = z_(i)``, the i-th smallest value.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HillEstimate",
    "InsufficientDataError",
    "Method",
    "NoThresholdFoundError",
    "SecondOrderEstimates",
    "SecondOrderError",
    "ThresholdEstimate",
    "exponentiality_statistics",
    "gertensgarbe_series",
    "hill",
    "estimate_second_order",
    "nearest_index",
    "select",
    "select_empirical_rule",
    "select_exponentiality",
    "select_fixed_quantile",
    "select_gertensgarbe",
    "select_min_amse_hill",
    "select_square_root",
    "sorted_sample",
]


class InsufficientDataError(ValueError):
    pass


class NoThresholdFoundError(RuntimeError):
    pass


class SecondOrderError(RuntimeError):
    pass


class Method(str, enum.Enum):
    M1 = "m1"  # fixed quantile
    M2 = "m2"  # square root rule
    M3 = "m3"  # empirical rule
    M4 = "m4"  # minimum AMSE of the Hill estimator
    M5 = "m5"  # exponentiality test
    M6 = "m6"  # Gertensgarbe plot
    M7 = "m7"  # simultaneous (Scollnik) estimation, see fitting.fit_scollnik

    @classmethod
    def parse(cls, value: "str | Method") -> "Method":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())

    @property
    def label(self) -> str:
        return self.name


@dataclass(frozen=True)
class ThresholdEstimate:
    method: Method
    k: float
    index: int
    b_hat: float
    warning: str | None = None

    @property
    def flagged(self) -> bool:
        return self.warning is not None


@dataclass(frozen=True)
class HillEstimate:
    k: int
    xi_hat: float


@dataclass(frozen=True)
class SecondOrderEstimates:
    rho_hat: float
    lambda_hat: float
    k1: int


def sorted_sample(values) -> np.ndarray:
    """Ascending float copy of ``values``; rejects non-positive or non-finite data."""
    z = np.sort(np.asarray(values, dtype=float).ravel())
    if z.size and not (np.all(np.isfinite(z)) and z[0] > 0):
        raise ValueError("claim sample must be positive and finite")
    return z


def nearest_index(x: float) -> int:
    """Closest integer to ``x >= 0``, halves rounded away from zero."""
    return int(math.floor(x + 0.5))


def _from_k(z: np.ndarray, method: Method, k: float, warning=None) -> ThresholdEstimate:
    n = z.size
    index = nearest_index(n - k)
    if not 1 <= index <= n - 1:
        raise InsufficientDataError(
            f"{method.label}: index {index} outside [1, {n - 1}] (n={n}, k={k:.4g})"
        )
    return ThresholdEstimate(method, k, index, float(z[index - 1]), warning)


def select_fixed_quantile(sample, eps: float = 0.05) -> ThresholdEstimate:
    z = sorted_sample(sample)
    n = z.size
    if n * eps < 1:
        raise InsufficientDataError(f"M1 needs n*eps >= 1, got {n * eps:.4g}")
    return _from_k(z, Method.M1, eps * n)


def select_square_root(sample) -> ThresholdEstimate:
    z = sorted_sample(sample)
    if z.size < 4:
        raise InsufficientDataError("M2 needs n >= 4")
    return _from_k(z, Method.M2, math.sqrt(z.size))


def select_empirical_rule(sample) -> ThresholdEstimate:
    z = sorted_sample(sample)
    n = z.size
    if n < 16:
        raise InsufficientDataError("M3 needs n >= 16")
    return _from_k(z, Method.M3, n ** (2.0 / 3.0) / math.log(math.log(n)))


def hill(sample, k: int) -> HillEstimate:
    """Hill estimate of the tail index from the ``k`` largest observations."""
    z = sorted_sample(sample)
    n = z.size
    k = int(k)
    if not 1 <= k <= n - 1:
        raise InsufficientDataError(f"hill: k={k} outside [1, {n - 1}]")
    logs = np.log(z[n - k:])
    return HillEstimate(k, float(np.mean(logs - math.log(z[n - k - 1]))))


def _log_spacings(z: np.ndarray, k: int) -> np.ndarray:
    """``U_i = i (ln z_(n-i+1) - ln z_(n-i))`` for ``i = 1..k``."""
    logs = np.log(z)
    n = z.size
    top = logs[n - k:][::-1]  # ln z_(n), ..., ln z_(n-k+1)
    nxt = logs[n - k - 1:n - 1][::-1]  # ln z_(n-1), ..., ln z_(n-k)
    return np.arange(1, k + 1) * (top - nxt)


def estimate_second_order(sample) -> SecondOrderEstimates:
    """Second-order parameters of the Hall class for the Hill bias.

    ``rho`` comes from the log-moment ratio statistic with tuning ``tau = 0``
    and ``lambda`` from the companion scale estimator, both at
    ``k1 = floor(n**0.999)``.
    """
    z = sorted_sample(sample)
    n = z.size
    if n < 100:
        raise InsufficientDataError("second-order estimation needs n >= 100")
    k1 = min(int(math.floor(n**0.999)), n - 1)
    logs = np.log(z)
    d = logs[n - k1:] - logs[n - k1 - 1]
    m1, m2, m3 = (float(np.mean(d**j)) for j in (1, 2, 3))
    if not (m1 > 0 and m2 > 0 and m3 > 0):
        raise SecondOrderError("degenerate log-spacings")
    num = math.log(m1) - 0.5 * math.log(m2 / 2.0)
    den = 0.5 * math.log(m2 / 2.0) - math.log(m3 / 6.0) / 3.0
    if den == 0:
        raise SecondOrderError("log-moment ratio undefined")
    t = num / den
    if t == 3.0:
        raise SecondOrderError("log-moment ratio at its pole")
    rho = -abs(3.0 * (t - 1.0) / (t - 3.0))
    if not (math.isfinite(rho) and rho < 0):
        raise SecondOrderError(f"rho estimate not negative: {rho}")

    u = _log_spacings(z, k1)
    w = np.arange(1, k1 + 1) / k1

    def dk(a):
        return float(np.mean(w ** (-a)))

    def Dk(a):
        return float(np.mean(w ** (-a) * u))

    d_r = dk(rho)
    denom = d_r * Dk(rho) - Dk(2.0 * rho)
    if denom == 0:
        raise SecondOrderError("scale estimator denominator vanishes")
    lam = (k1 / n) ** rho * (d_r * Dk(0.0) - Dk(rho)) / denom
    if not math.isfinite(lam) or lam == 0:
        raise SecondOrderError(f"lambda estimate unusable: {lam}")
    return SecondOrderEstimates(rho, abs(lam), k1)


def amse_optimal_k(rho: float, lam: float, n: int) -> float:
    """Unclamped real-valued ``k0`` before taking the integer part."""
    with np.errstate(over="ignore", divide="ignore"):
        log_inner = 2.0 * math.log1p(-rho) - 2.0 * rho * math.log(n) - math.log(-2.0 * rho * lam * lam)
        return math.exp(log_inner / (1.0 - 2.0 * rho)) if log_inner < 700 else math.inf


def select_min_amse_hill(sample, second_order: SecondOrderEstimates | None = None) -> ThresholdEstimate:
    z = sorted_sample(sample)
    n = z.size
    so = second_order if second_order is not None else estimate_second_order(z)
    k_real = amse_optimal_k(so.rho_hat, so.lambda_hat, n)
    k0 = math.floor(k_real) if math.isfinite(k_real) else n
    warning = None
    if not 1 <= k0 <= n - 1:
        warning = f"k0={k_real:.4g} clamped to [1, {n - 1}]"
        warnings.warn(f"M4: {warning}", RuntimeWarning, stacklevel=2)
        k0 = min(max(k0, 1), n - 1)
    return ThresholdEstimate(Method.M4, k0, n - k0, float(z[n - k0 - 1]), warning)


def exponentiality_statistics(sample) -> tuple[np.ndarray, np.ndarray]:
    """``T_n(k)`` for ``k = 1..n-1`` and ``Q_n(k)`` for admissible ``k``.

    Returns ``(T, Q)`` where ``T[k-1] = T_n(k)`` and ``Q[k-1] = Q_n(k)`` for
    ``k + floor(k/2) < n`` (``Q`` is shorter than ``T``).  Linear time.
    """
    z = sorted_sample(sample)
    n = z.size
    u = _log_spacings(z, n - 1)
    k = np.arange(1, n, dtype=float)
    s0 = np.cumsum(u)
    s1 = np.cumsum(np.arange(1, n) * u)
    num = (k + 1.0) * s0 - 2.0 * s1
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.sqrt(3.0 / k**3) * num / (s0 / k)
    t = np.where(s0 > 0, t, 0.0)
    kmax = 0
    while (kmax + 1) + (kmax + 1) // 2 < n:
        kmax += 1
    ks = np.arange(1, kmax + 1)
    half = ks // 2
    c = np.concatenate(([0.0], np.cumsum(t**2)))
    window = c[ks + half] - c[ks - half - 1]
    q = np.sqrt(window / (2 * half + 1))
    return t, q


def select_exponentiality(sample, critical: float = 1.25, fallback: bool = True) -> ThresholdEstimate:
    """Smallest ``k`` from which ``Q_n(j) >= critical`` for every larger admissible ``j``.

    When no such ``k`` exists the selector either raises
    :class:`NoThresholdFoundError` (``fallback=False``) or returns
    ``k = n - 1`` with a warning.
    """
    z = sorted_sample(sample)
    n = z.size
    if n < 3:
        raise InsufficientDataError("M5 needs n >= 3")
    _, q = exponentiality_statistics(z)
    below = np.flatnonzero(q < critical)
    if below.size == 0:
        k_hat = 1
    elif below[-1] == q.size - 1:
        msg = f"Q_n stays below {critical} at the largest admissible k={q.size}"
        if not fallback:
            raise NoThresholdFoundError(msg)
        warnings.warn(f"M5: {msg}; using k=n-1", RuntimeWarning, stacklevel=2)
        return ThresholdEstimate(Method.M5, n - 1, 1, float(z[0]), msg)
    else:
        k_hat = int(below[-1]) + 2
    return ThresholdEstimate(Method.M5, k_hat, n - k_hat, float(z[n - k_hat - 1]))


def _progressive_counts(delta: np.ndarray) -> np.ndarray:
    """``n_k = #{j < k : delta_j < delta_k}`` via a Fenwick tree over ranks."""
    m = delta.size
    ranks = np.searchsorted(np.unique(delta), delta)  # 0-based dense ranks
    size = int(ranks.max()) + 1 if m else 0
    tree = [0] * (size + 1)
    out = np.empty(m, dtype=np.int64)
    for pos in range(m):
        r = int(ranks[pos])
        # count of earlier values with rank < r (strict)
        i, acc = r, 0
        while i > 0:
            acc += tree[i]
            i -= i & -i
        out[pos] = acc
        i = r + 1
        while i <= size:
            tree[i] += 1
            i += i & -i
    return out


def _mk_series(delta: np.ndarray, classical: bool) -> np.ndarray:
    i = np.arange(1, delta.size + 1, dtype=float)
    s = np.cumsum(_progressive_counts(delta))
    factor = (i - 1.0) if classical else (i + 1.0)
    var = i * factor * (2.0 * i + 5.0) / 72.0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (s - i * (i - 1.0) / 4.0) / np.sqrt(var)
    return np.where(var > 0, u, 0.0)


def gertensgarbe_series(sample, classical_variance: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Progressive and aligned retrograde sequential Mann-Kendall series.

    Position ``p`` (0-based) of both arrays refers to the spacing
    ``z_(p+2) - z_(p+1)``.  The retrograde series is computed on the reversed
    spacings, flipped back onto the same positions and negated, so that a
    trend change shows up as an intersection of the two curves.
    """
    z = sorted_sample(sample)
    delta = np.diff(z)
    forward = _mk_series(delta, classical_variance)
    backward = -_mk_series(delta[::-1], classical_variance)[::-1]
    return forward, backward


def select_gertensgarbe(sample, classical_variance: bool = False) -> ThresholdEstimate:
    z = sorted_sample(sample)
    n = z.size
    if n < 10:
        raise InsufficientDataError("M6 needs n >= 10")
    u, ut = gertensgarbe_series(z, classical_variance)
    diff = u - ut
    sign = np.sign(diff)
    crossing = None
    for i in range(1, diff.size):
        if sign[i] != sign[i - 1]:
            crossing = i - 1 if abs(diff[i - 1]) <= abs(diff[i]) else i
            break
    if crossing is None:
        raise NoThresholdFoundError("M6: progressive and retrograde series never cross")
    # spacing position p sits between z_(p+1) and z_(p+2); the threshold is its lower end
    index = min(max(crossing + 1, 1), n - 1)
    return ThresholdEstimate(Method.M6, n - index, index, float(z[index - 1]))


_SELECTORS = {
    Method.M1: select_fixed_quantile,
    Method.M2: select_square_root,
    Method.M3: select_empirical_rule,
    Method.M4: select_min_amse_hill,
    Method.M5: select_exponentiality,
    Method.M6: select_gertensgarbe,
}


def select(sample, method: "Method | str") -> ThresholdEstimate:
    """Dispatch to one of the fixed-threshold selectors M1-M6."""
    method = Method.parse(method)
    if method is Method.M7:
        raise ValueError("M7 estimates the threshold jointly; use fitting.fit_scollnik")
    return _SELECTORS[method](sample)
