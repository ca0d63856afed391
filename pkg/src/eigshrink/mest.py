"""M-estimators of scatter: weight functions, the fixed-point solver and the
population consistency factor.

Data are ``n x p`` arrays holding one observation per row. For complex data
all transposes are Hermitian transposes.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg, optimize

from .elliptical import GeneratorSpec, RadialDistribution, radial_moment
from .errors import (
    ConditioningError,
    DomainError,
    InsufficientSampleError,
    RootBracketError,
)
from .numerics import chi2_cdf, chi2_quantile

__all__ = [
    "PopulationTarget",
    "ScatterEstimate",
    "WeightSpec",
    "as_array",
    "fixed_point",
    "huber_tuning",
    "one_step",
    "quad_forms",
    "scm",
    "solve_sigma",
    "weight_eval",
    "winsorize",
]

logger = logging.getLogger(__name__)

WEIGHT_KINDS = ("gaussian", "huber", "tyler", "mvt")


def as_array(X) -> np.ndarray:
    """Return the raw ``n x p`` array behind a DataMatrix or array-like."""
    X = np.asarray(getattr(X, "values", X))
    if X.ndim != 2:
        raise DomainError(f"expected an n x p data matrix, got shape {X.shape}")
    return X


def field_of(X) -> str:
    return "complex" if np.iscomplexobj(X) else "real"


def huber_tuning(p: int, q: float, field: str = "real") -> tuple[float, float]:
    """Threshold ``c**2`` and scaling ``b`` of Huber's weight.

    ``c**2`` is the ``q`` quantile of ``r**2`` at the (complex) normal law and
    ``b`` makes the estimator Fisher consistent for the covariance matrix
    there. ``q = 1`` returns ``(inf, 1.0)``, i.e. the Gaussian weight.
    """
    if not 0.0 < q <= 1.0:
        raise DomainError(f"Huber quantile level q must lie in (0, 1], got {q}")
    if q == 1.0:
        return math.inf, 1.0
    if field == "complex":
        # 2 r^2 ~ chi2_{2p} under the circular complex normal
        c2 = chi2_quantile(q, 2 * p) / 2.0
        b = chi2_cdf(2 * c2, 2 * p + 2) + c2 * (1.0 - chi2_cdf(2 * c2, 2 * p)) / p
    else:
        c2 = chi2_quantile(q, p)
        b = chi2_cdf(c2, p + 2) + c2 * (1.0 - chi2_cdf(c2, p)) / p
    return c2, b


@dataclass(frozen=True)
class WeightSpec:
    """Weight function ``u(t)`` of an M-estimator and its tuning state."""

    kind: str
    q: float = 1.0
    c2: float = math.inf
    b: float = 1.0
    nu: float = 0.0
    field: str = "real"
    gaussian_consistent: bool = False

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise DomainError(f"unknown weight kind {self.kind!r}")
        if self.field not in ("real", "complex"):
            raise DomainError(f"unknown field {self.field!r}")
        if self.kind == "mvt" and self.nu < 0:
            raise DomainError(f"mvt weight needs nu >= 0, got {self.nu}")
        if self.kind == "huber" and not (self.b > 0 and self.c2 > 0):
            raise DomainError("huber weight needs positive c2 and b")

    @classmethod
    def gaussian(cls, field: str = "real") -> "WeightSpec":
        return cls("gaussian", field=field)

    @classmethod
    def huber(cls, p: int, q: float = 0.7, field: str = "real") -> "WeightSpec":
        c2, b = huber_tuning(p, q, field)
        return cls("huber", q=q, c2=c2, b=b, field=field)

    @classmethod
    def tyler(cls, field: str = "real") -> "WeightSpec":
        return cls("tyler", field=field)

    @classmethod
    def mvt(cls, nu: float, field: str = "real", gaussian_consistent: bool = False) -> "WeightSpec":
        return cls("mvt", nu=nu, field=field, gaussian_consistent=gaussian_consistent)

    def u(self, t, p: int):
        """Vectorized weight ``u(t)`` in dimension ``p``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "gaussian":
            return np.ones_like(t)
        if self.kind == "huber":
            with np.errstate(divide="ignore"):
                return np.where(t <= self.c2, 1.0 / self.b, self.c2 / (t * self.b))
        if self.kind == "tyler":
            if np.any(t <= 0):
                raise DomainError("Tyler's weight is singular at t = 0")
            return p / t
        if self.field == "complex":
            return (2 * p + self.nu) / (self.nu + 2 * t)
        return (p + self.nu) / (self.nu + t)

    def psi(self, t, p: int):
        """``psi(t) = u(t) * t``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "tyler":
            return np.full_like(t, float(p))
        if self.kind == "huber":
            return np.minimum(t, self.c2) / self.b
        return self.u(t, p) * t

    def with_field(self, field: str) -> "WeightSpec":
        return replace(self, field=field)


def weight_eval(spec: WeightSpec, t: float, p: int) -> float:
    """Scalar weight ``u(t)``."""
    if t < 0:
        raise DomainError(f"weight argument must be nonnegative, got {t}")
    return float(spec.u(t, p))


@dataclass(frozen=True)
class ScatterEstimate:
    matrix: np.ndarray
    weight: WeightSpec
    beta: float = 1.0
    iterations: int = 0
    converged: bool = True

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


@dataclass(frozen=True)
class PopulationTarget:
    sigma0: np.ndarray
    sigma_factor: float


def scm(X) -> np.ndarray:
    """Sample covariance matrix about the origin, ``(1/n) sum x x^H``."""
    X = as_array(X)
    S = X.T @ X.conj() / X.shape[0]
    return 0.5 * (S + S.conj().T)


def quad_forms(X, sigma) -> np.ndarray:
    """``x_i^H sigma^{-1} x_i`` for every row of ``X``."""
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise ConditioningError("scatter iterate is not positive definite") from None
    Z = linalg.solve_triangular(L, X.T, lower=True, check_finite=False)
    return np.sum(Z.real**2 + Z.imag**2, axis=0) if np.iscomplexobj(Z) else np.sum(Z * Z, axis=0)


def _weighted_scm(X, w) -> np.ndarray:
    S = (X.T * w) @ X.conj() / X.shape[0]
    return 0.5 * (S + S.conj().T)


def fixed_point(
    X,
    spec: WeightSpec,
    tol: float = 1e-8,
    max_iter: int = 500,
    init=None,
) -> ScatterEstimate:
    """Solve the M-estimating equation by fixed-point iteration.

    Starts from the SCM (identity for Tyler, whose iterates are renormalized
    to trace ``p``) unless ``init`` is given, and stops once the relative
    Frobenius change drops below ``tol``. A run that hits ``max_iter`` is
    returned with ``converged=False`` and a warning.
    """
    X = as_array(X)
    n, p = X.shape
    if spec.kind == "gaussian":
        return ScatterEstimate(scm(X), spec, iterations=1, converged=True)
    if n <= p:
        raise InsufficientSampleError(f"{spec.kind} M-estimator needs n > p (n={n}, p={p})")
    if spec.field != field_of(X):
        spec = spec.with_field(field_of(X))

    tyler = spec.kind == "tyler"
    if init is not None:
        sigma = np.array(init, dtype=X.dtype if np.iscomplexobj(X) else float)
    elif tyler:
        sigma = np.eye(p, dtype=X.dtype)
    else:
        sigma = scm(X)
    if tyler:
        sigma = sigma * (p / np.trace(sigma).real)

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        t = quad_forms(X, sigma)
        new = _weighted_scm(X, spec.u(t, p))
        if tyler:
            new *= p / np.trace(new).real
        delta = np.linalg.norm(new - sigma) / np.linalg.norm(sigma)
        sigma = new
        if not np.isfinite(delta):
            raise ConditioningError("fixed-point iterate became non-finite")
        if delta < tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"{spec.kind} fixed point did not converge in {max_iter} iterations "
            f"(last relative change {delta:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )

    if spec.kind == "mvt" and spec.gaussian_consistent:
        radial = RadialDistribution(GeneratorSpec("gaussian", field=spec.field), p)
        sigma = sigma / solve_sigma(replace(spec, gaussian_consistent=False), radial, p)
    return ScatterEstimate(sigma, spec, 1.0, it, converged)


def fixed_point_residual(X, estimate: ScatterEstimate) -> float:
    """Relative Frobenius residual of the estimating equation at ``estimate``."""
    X = as_array(X)
    p = X.shape[1]
    sigma = estimate.matrix
    rhs = _weighted_scm(X, estimate.weight.u(quad_forms(X, sigma), p))
    if estimate.weight.kind == "tyler":
        rhs *= p / np.trace(rhs).real
    return float(np.linalg.norm(sigma - rhs) / np.linalg.norm(sigma))


def winsorize(x, Sigma, c2: float, b: float) -> np.ndarray:
    """Radially truncate observation(s) at the Huber threshold.

    ``x`` may be a single ``p``-vector or an ``n x p`` matrix of rows. Each
    observation is scaled by ``1/sqrt(b)`` and, when its Mahalanobis radius
    exceeds ``c``, pulled back onto the radius-``c`` ellipsoid.
    """
    x = np.asarray(x)
    rows = np.atleast_2d(x)
    r2 = quad_forms(rows, np.asarray(Sigma))
    with np.errstate(divide="ignore"):
        scale = np.where(r2 <= c2, 1.0, np.sqrt(c2 / r2))
    out = rows * (scale / math.sqrt(b))[:, None]
    return out[0] if x.ndim == 1 else out


def one_step(X, spec: WeightSpec, Sigma0) -> np.ndarray:
    """1-step estimator ``(1/n) sum u(x_i^H Sigma0^{-1} x_i) x_i x_i^H``."""
    X = as_array(X)
    p = X.shape[1]
    if spec.kind == "gaussian":
        return scm(X)
    return _weighted_scm(X, spec.u(quad_forms(X, np.asarray(Sigma0)), p))


def solve_sigma(
    spec: WeightSpec,
    radial: RadialDistribution,
    p: int | None = None,
    scatter=None,
    method: str = "quad",
) -> float:
    """Consistency factor ``sigma`` with ``E[psi(r**2 / sigma)] = p``.

    The M-functional of an elliptical law with scatter ``Sigma`` is
    ``sigma * Sigma``. Tyler's weight satisfies the equation for every
    ``sigma``; its factor is fixed by the trace normalization instead,
    ``sigma = p / tr(Sigma)``, which needs ``scatter``.
    """
    p = radial.p if p is None else p
    if spec.kind == "tyler":
        if scatter is None:
            raise DomainError("Tyler's consistency factor p/tr(Sigma) needs the scatter matrix")
        return float(p / np.trace(np.asarray(scatter)).real)
    if spec.kind == "gaussian" or (spec.kind == "huber" and math.isinf(spec.c2)):
        m = radial_moment(radial, lambda t: t, method=method).value
        return m / (p * spec.b) if spec.kind == "huber" else m / p

    spec = spec.with_field(radial.generator.field)

    def excess(s: float) -> float:
        brk = (spec.c2 * s,) if spec.kind == "huber" else ()
        return radial_moment(radial, lambda t: spec.psi(t / s, p), method=method, breakpoints=brk).value - p

    lo, hi = 0.5, 2.0
    f_lo, f_hi = excess(lo), excess(hi)
    for _ in range(60):
        if f_lo > 0 > f_hi:
            break
        if f_lo <= 0:
            hi, f_hi = lo, f_lo
            lo /= 2.0
            f_lo = excess(lo)
        else:
            lo, f_lo = hi, f_hi
            hi *= 2.0
            f_hi = excess(hi)
    else:
        raise RootBracketError(
            "no sign change of E[psi(r^2/sigma)] - p in the search bracket",
            {"lo": lo, "hi": hi, "f_lo": f_lo, "f_hi": f_hi, "weight": spec.kind},
        )
    xtol = 1e-13 if method == "quad" else 1e-10
    return float(optimize.brentq(excess, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps))
