"""Scalar statistical primitives: chi-square distribution functions and
kurtosis statistics used by every estimator in the package.

The chi-square c.d.f. is evaluated through the regularized lower incomplete
gamma function P(a, x) with the usual switch between the power series
(x < a + 1) and the Lentz continued fraction for the upper tail.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DegenerateInputError, DomainError

__all__ = [
    "KurtosisEstimate",
    "chi2_cdf",
    "chi2_pdf",
    "chi2_quantile",
    "elliptical_kurtosis",
    "gammainc_lower",
    "kurtosis_lower_bound",
    "sample_kurtosis",
]

_EPS = 1e-16
_TINY = sys.float_info.min / _EPS
_MAX_ITER = 100_000


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) by the power series; valid for x < a + 1
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    # Q(a, x) = 1 - P(a, x) by modified Lentz; valid for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma function P(a, x)."""
    if a <= 0:
        raise DomainError(f"shape a must be positive, got {a}")
    if x < 0:
        raise DomainError(f"x must be nonnegative, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_cf(a, x))


def _check_dof(k) -> float:
    if k <= 0:
        raise DomainError(f"degrees of freedom must be positive, got {k}")
    return float(k)


def chi2_cdf(x: float, k: float) -> float:
    """C.d.f. of the chi-square distribution with ``k`` degrees of freedom."""
    k = _check_dof(k)
    if x < 0 or math.isnan(x):
        raise DomainError(f"chi2_cdf requires x >= 0, got {x}")
    return gammainc_lower(0.5 * k, 0.5 * x)


def chi2_pdf(x: float, k: float) -> float:
    """Density of the chi-square distribution with ``k`` degrees of freedom."""
    k = _check_dof(k)
    if x < 0:
        return 0.0
    a = 0.5 * k
    if x == 0:
        if a < 1:
            return math.inf
        return 0.5 if a == 1 else 0.0
    return math.exp((a - 1.0) * math.log(x) - 0.5 * x - a * math.log(2.0) - math.lgamma(a))


def chi2_quantile(q: float, k: float) -> float:
    """Inverse of :func:`chi2_cdf` in its first argument.

    Safeguarded Newton iteration started from the Wilson-Hilferty
    approximation, falling back to bisection whenever a Newton step leaves
    the current bracket.
    """
    k = _check_dof(k)
    if not 0.0 < q < 1.0:
        raise DomainError(f"chi2_quantile requires 0 < q < 1, got {q}")

    lo, hi = 0.0, max(1.0, k)
    while chi2_cdf(hi, k) < q:
        lo, hi = hi, 2.0 * hi

    # Wilson-Hilferty start
    z = math.sqrt(2.0) * _erfinv(2.0 * q - 1.0)
    h = 2.0 / (9.0 * k)
    x = k * max(1.0 - h + z * math.sqrt(h), 1e-3) ** 3
    if not lo < x < hi:
        x = 0.5 * (lo + hi)

    for _ in range(200):
        f = chi2_cdf(x, k) - q
        if f == 0.0:
            return x
        if f < 0:
            lo = x
        else:
            hi = x
        dens = chi2_pdf(x, k)
        step = f / dens if dens > 0 else math.inf
        x_new = x - step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-15 * max(1.0, x):
            return x_new
        x = x_new
    return x


def _erfinv(y: float) -> float:
    # Winitzki's approximation polished by two Newton steps on erf
    if y <= -1.0:
        return -math.inf
    if y >= 1.0:
        return math.inf
    a = 0.147
    ln = math.log(1.0 - y * y)
    t = 2.0 / (math.pi * a) + ln / 2.0
    x = math.copysign(math.sqrt(math.sqrt(t * t - ln / a) - t), y)
    for _ in range(2):
        err = math.erf(x) - y
        x -= err / (2.0 / math.sqrt(math.pi) * math.exp(-x * x))
    return x


def _is_complex(values) -> bool:
    return np.iscomplexobj(values)


def sample_kurtosis(column, field: str | None = None) -> float:
    """Excess kurtosis of a zero-mean sample.

    Moments are taken about zero, not the sample mean: the data model fixes
    the location at the origin.

    Parameters
    ----------
    column : array_like
        One-dimensional real or complex sample.
    field : {"real", "complex"}, optional
        Inferred from the dtype when omitted.

    Returns
    -------
    float
        ``m4 / m2**2 - 3`` for real data, ``m4 / m2**2 - 2`` for complex data,
        where ``m_k`` is the sample mean of ``|x|**k``.
    """
    x = np.asarray(column)
    if x.ndim != 1:
        raise DomainError("sample_kurtosis expects a one-dimensional sample")
    if x.size < 4:
        raise DomainError(f"sample_kurtosis needs at least 4 samples, got {x.size}")
    if field is None:
        field = "complex" if _is_complex(x) else "real"
    a2 = np.abs(x) ** 2
    m2 = a2.mean()
    if m2 == 0:
        raise DegenerateInputError("sample_kurtosis of an all-zero column")
    m4 = (a2 * a2).mean()
    excess = 2.0 if field == "complex" else 3.0
    return float(m4 / m2**2 - excess)


def kurtosis_lower_bound(p: int, field: str) -> float:
    """Smallest admissible elliptical kurtosis for dimension ``p``."""
    return -1.0 / (p + 1) if field == "complex" else -2.0 / (p + 2)


@dataclass(frozen=True)
class KurtosisEstimate:
    kappa_hat: float
    per_column_kurtosis: list[float] = dc_field(repr=False)
    field: str
    raw: float
    clipped: bool


def elliptical_kurtosis(X, clip_margin: float = 1e-6) -> KurtosisEstimate:
    """Estimate the elliptical kurtosis parameter from marginal kurtoses.

    Averages the per-column excess kurtoses, divides by 3 (real) or 2
    (complex), and clips the result from below at the theoretical bound
    ``-2/(p+2)`` (real) or ``-1/(p+1)`` (complex) plus ``clip_margin`` so
    that ``1 + kappa`` stays strictly positive.
    """
    X = np.asarray(getattr(X, "values", X))
    if X.ndim != 2:
        raise DomainError("elliptical_kurtosis expects an n x p matrix")
    n, p = X.shape
    if n < 4:
        raise DomainError(f"elliptical_kurtosis needs n >= 4, got {n}")
    field = "complex" if _is_complex(X) else "real"
    kurts = [sample_kurtosis(X[:, j], field) for j in range(p)]
    raw = float(np.mean(kurts)) / (2.0 if field == "complex" else 3.0)
    floor = kurtosis_lower_bound(p, field) + clip_margin
    kappa = max(raw, floor)
    return KurtosisEstimate(kappa, kurts, field, raw, kappa != raw)
