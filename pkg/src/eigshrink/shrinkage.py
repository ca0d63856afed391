"""Eigenvalue shrinkage of M-estimators toward the scaled identity.

A shrinkage estimator is ``beta * Sigma_hat + (1 - beta) * (tr(Sigma_hat)/p) I``.
The coefficient ``beta`` approximates the MMSE choice for the 1-step
estimator under elliptical sampling and depends on the data only through the
sphericity ``gamma = p tr(Sigma0^2) / tr(Sigma0)^2`` and the constant
``psi1 = E[psi(r^2/sigma)^2] / (p(p+2))`` (``p(p+1)`` for complex data).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .elliptical import make_rng
from .errors import DegenerateInputError, DomainError, InsufficientSampleError, PreconditionError
from .mest import (
    ScatterEstimate,
    WeightSpec,
    as_array,
    field_of,
    fixed_point,
    quad_forms,
    scm,
    winsorize,
)
from .numerics import elliptical_kurtosis

__all__ = [
    "DofEstimate",
    "METHODS",
    "Psi1Estimate",
    "ShrinkageReport",
    "SphericityEstimate",
    "UnbiasednessConstants",
    "beta_from_moments",
    "beta_general",
    "beta_rscm",
    "beta_tyler",
    "cwh",
    "estimate",
    "estimate_dof",
    "lemma_moments",
    "mse_at_optimum",
    "mse_c_beta",
    "psi1_estimate",
    "rscm_cv",
    "shrink",
    "sphericity",
    "sphericity_ell1",
    "sphericity_ell2",
    "theta_unbiased",
    "unbiasedness_constants",
]

logger = logging.getLogger(__name__)

METHODS = ("rscm", "rhub", "rtyl", "rmvt")


def sphericity(S) -> float:
    """``p tr(S^2) / tr(S)^2`` of a Hermitian matrix."""
    S = np.asarray(S)
    p = S.shape[0]
    return float(p * np.linalg.norm(S) ** 2 / np.trace(S).real ** 2)


@dataclass(frozen=True)
class SphericityEstimate:
    gamma_hat: float
    method: str
    raw: float


@dataclass(frozen=True)
class Psi1Estimate:
    psi1_hat: float
    source: str


@dataclass(frozen=True)
class DofEstimate:
    nu_hat: float
    nu0: float
    iterations: int
    eta_trace: list[float]
    delta: float = 1e-3
    nu_max: float = 1e3
    converged: bool = False


@dataclass(frozen=True)
class ShrinkageReport:
    beta: float
    gamma: SphericityEstimate
    psi1: Psi1Estimate
    kappa_hat: float
    eta_o_hat: float
    method: str
    nu: DofEstimate | None = None
    notes: tuple[str, ...] = dc_field(default=())


@dataclass(frozen=True)
class UnbiasednessConstants:
    a_n: float
    b_n: float
    field: str


def _clip(raw: float, p: int) -> float:
    return float(min(p, max(1.0, raw)))


def sphericity_ell1(X) -> SphericityEstimate:
    """Spatial-sign estimate of sphericity, clipped to ``[1, p]``.

    With ``S_sign = (1/n) sum x x^H / ||x||^2`` the raw value is
    ``n/(n-1) * (p tr(S_sign^2) - p/n)``.
    """
    X = as_array(X)
    n, p = X.shape
    if n < 2:
        raise DomainError("sphericity_ell1 needs n >= 2")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise DegenerateInputError("sphericity_ell1: data contain a zero row")
    U = X / norms[:, None]
    S_sign = U.T @ U.conj() / n
    raw = n / (n - 1) * (p * np.linalg.norm(S_sign) ** 2 - p / n)
    return SphericityEstimate(_clip(raw, p), "ell1", float(raw))


def unbiasedness_constants(psi1: float, n: int, field: str = "real") -> UnbiasednessConstants:
    """Constants ``a_n, b_n`` of the unbiased ``tr(Sigma0^2)/p`` statistic."""
    a_n = n / (n + psi1 - 1.0)
    k = 2.0 if field == "complex" else 3.0
    b_n = n / (n - 1.0) * (n - 1.0 + psi1) / (n - 1.0 + k * psi1)
    return UnbiasednessConstants(a_n, b_n, field)


def theta_unbiased(C, psi1: float, n: int, field: str | None = None) -> float:
    """Unbiased estimate of ``tr(Sigma0^2)/p`` from a 1-step estimator ``C``."""
    C = np.asarray(C)
    p = C.shape[0]
    field = field or field_of(C)
    k = unbiasedness_constants(psi1, n, field)
    tr_c2 = np.linalg.norm(C) ** 2
    tr_c = np.trace(C).real
    return float(k.b_n * (tr_c2 / p - psi1 * k.a_n * (p / n) * (tr_c / p) ** 2))


def _matrix_and_field(Sigma_hat, field):
    if isinstance(Sigma_hat, ScatterEstimate):
        return Sigma_hat.matrix, field or Sigma_hat.weight.field
    m = np.asarray(Sigma_hat)
    return m, field or field_of(m)


def sphericity_ell2(Sigma_hat, psi1, n: int, field: str | None = None) -> SphericityEstimate:
    """Plug-in sphericity estimate built on the unbiased ``tr(Sigma0^2)/p`` statistic."""
    if isinstance(Sigma_hat, ScatterEstimate) and Sigma_hat.beta != 1.0:
        raise DomainError("sphericity_ell2 expects an unshrunk estimate (beta = 1)")
    S, field = _matrix_and_field(Sigma_hat, field)
    psi = psi1.psi1_hat if isinstance(psi1, Psi1Estimate) else float(psi1)
    p = S.shape[0]
    k = unbiasedness_constants(psi, n, field)
    raw = k.b_n * (sphericity(S) - psi * k.a_n * p / n)
    return SphericityEstimate(_clip(raw, p), "ell2", float(raw))


def psi1_estimate(
    spec: WeightSpec,
    X,
    Sigma_hat=None,
    nu_hat: float | None = None,
    empirical: bool = False,
) -> Psi1Estimate:
    """Estimate ``psi1`` for the weight ``spec``.

    Gaussian: ``1 + kappa_hat`` from marginal kurtoses. Huber: the same on
    winsorized data. Tyler: exact ``p/(p+2)`` (``p/(p+1)`` complex). MVT:
    closed form in ``nu_hat``. ``empirical=True`` instead averages
    ``psi(x_i^H Sigma_hat^{-1} x_i)^2`` over the sample.
    """
    X = as_array(X)
    n, p = X.shape
    field = field_of(X)
    denom = p * (p + 1) if field == "complex" else p * (p + 2)
    if empirical:
        if Sigma_hat is None:
            raise PreconditionError("empirical psi1 needs the fitted scatter matrix")
        S = Sigma_hat.matrix if isinstance(Sigma_hat, ScatterEstimate) else np.asarray(Sigma_hat)
        psi = spec.with_field(field).psi(quad_forms(X, S), p)
        return Psi1Estimate(float(np.mean(psi**2) / denom), "empirical")

    if spec.kind == "gaussian":
        return Psi1Estimate(1.0 + elliptical_kurtosis(X).kappa_hat, "gaussian_kurtosis")
    if spec.kind == "huber":
        if Sigma_hat is None:
            raise PreconditionError("huber psi1 needs the fitted Huber scatter matrix")
        S = Sigma_hat.matrix if isinstance(Sigma_hat, ScatterEstimate) else np.asarray(Sigma_hat)
        W = winsorize(X, S, spec.c2, spec.b)
        return Psi1Estimate(1.0 + elliptical_kurtosis(W).kappa_hat, "huber_winsorized")
    if spec.kind == "tyler":
        return Psi1Estimate(p / (p + 1) if field == "complex" else p / (p + 2), "tyler_exact")
    if nu_hat is None:
        raise PreconditionError("mvt psi1 needs a d.o.f. estimate nu_hat")
    if field == "complex":
        return Psi1Estimate((2 * p + nu_hat) / (2 + 2 * p + nu_hat), "mvt_dof")
    return Psi1Estimate((p + nu_hat) / (2 + p + nu_hat), "mvt_dof")


def beta_general(gamma: float, psi1: float, n: int, p: int, field: str = "real") -> float:
    """Oracle shrinkage coefficient for elliptical samples.

    ``n(g-1) / [n(g-1)(1-1/n) + psi1 (1-1/p)(2g+p)]``; complex data use
    ``g+p`` in place of ``2g+p``. Returns 0 at ``g = 1``.
    """
    if gamma <= 1.0:
        return 0.0
    lin = gamma + p if field == "complex" else 2.0 * gamma + p
    num = n * (gamma - 1.0)
    return float(num / (num * (1.0 - 1.0 / n) + psi1 * (1.0 - 1.0 / p) * lin))


def beta_rscm(gamma: float, kappa: float, n: int, p: int, field: str = "real") -> float:
    """MMSE coefficient of the shrinkage SCM given elliptical kurtosis ``kappa``."""
    if gamma <= 1.0:
        return 0.0
    if field == "complex":
        a = kappa * (gamma * (1.0 - 1.0 / p) + p - 1.0) - gamma / p
    else:
        a = kappa * (2.0 * gamma * (1.0 - 1.0 / p) + p - 1.0) + gamma * (1.0 - 2.0 / p)
    num = n * (gamma - 1.0)
    return float(num / (num + p + a))


def beta_tyler(gamma: float, n: int, p: int, field: str = "real") -> float:
    """Oracle coefficient for shrinking Tyler's estimator."""
    if gamma <= 1.0:
        return 0.0
    num = n * (gamma - 1.0)
    if field == "complex":
        load = (p - 1.0) / (p + 1.0) * (gamma + p)
    else:
        load = (p - 1.0) / (p + 2.0) * (2.0 * gamma + p)
    return float(num / (num * (1.0 - 1.0 / n) + load))


def lemma_moments(Sigma0, psi1: float, n: int, field: str = "real") -> tuple[float, float]:
    """Closed forms of ``E[tr(C^2)]`` and ``E[tr(C)^2]`` under elliptical sampling."""
    Sigma0 = np.asarray(Sigma0)
    t2 = float(np.linalg.norm(Sigma0) ** 2)
    t1sq = float(np.trace(Sigma0).real ** 2)
    if field == "complex":
        e_trc2 = (1 + (psi1 - 1) / n) * t2 + psi1 / n * t1sq
        e_trcsq = psi1 / n * t2 + (1 + (psi1 - 1) / n) * t1sq
    else:
        e_trc2 = (1 + (2 * psi1 - 1) / n) * t2 + psi1 / n * t1sq
        e_trcsq = 2 * psi1 / n * t2 + (1 + (psi1 - 1) / n) * t1sq
    return e_trc2, e_trcsq


def _mse_terms(Sigma0, e_trc2: float, e_trcsq: float):
    Sigma0 = np.asarray(Sigma0)
    p = Sigma0.shape[0]
    t2 = float(np.linalg.norm(Sigma0) ** 2)
    tr0 = float(np.trace(Sigma0).real)
    a1 = e_trc2 - t2
    a3 = (e_trcsq - tr0**2) / p
    a2 = a3 + t2 - tr0**2 / p
    return a1, a2, a3


def mse_c_beta(Sigma0, e_trc2: float, e_trcsq: float, beta: float) -> float:
    """``E||C_beta - Sigma0||_F^2`` from the two second moments of ``C``."""
    a1, a2, a3 = _mse_terms(Sigma0, e_trc2, e_trcsq)
    return beta**2 * a1 + (1 - beta) ** 2 * a2 + 2 * beta * (1 - beta) * a3


def beta_from_moments(Sigma0, e_trc2: float, e_trcsq: float) -> float:
    """Minimizer of :func:`mse_c_beta` for a known ``Sigma0``."""
    a1, a2, a3 = _mse_terms(Sigma0, e_trc2, e_trcsq)
    return float((a2 - a3) / ((a1 - a3) + (a2 - a3)))


def mse_at_optimum(Sigma0, e_trcsq: float, beta_opt: float) -> float:
    """MSE of ``C_beta`` at the oracle coefficient.

    ``(E[tr(C)^2] - tr(Sigma0)^2)/p + (1 - beta) ||Sigma0 - eta I||_F^2``
    with ``eta = tr(Sigma0)/p``.
    """
    Sigma0 = np.asarray(Sigma0)
    p = Sigma0.shape[0]
    tr0 = float(np.trace(Sigma0).real)
    dev = np.linalg.norm(Sigma0 - tr0 / p * np.eye(p)) ** 2
    return float((e_trcsq - tr0**2) / p + (1.0 - beta_opt) * dev)


def shrink(Sigma_hat, beta: float):
    """Shrink eigenvalues toward their mean: ``beta S + (1-beta) tr(S)/p I``.

    Returns a :class:`ScatterEstimate` when given one, otherwise an array.
    """
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")
    S = Sigma_hat.matrix if isinstance(Sigma_hat, ScatterEstimate) else np.asarray(Sigma_hat)
    p = S.shape[0]
    out = beta * S + (1.0 - beta) * (np.trace(S).real / p) * np.eye(p)
    if isinstance(Sigma_hat, ScatterEstimate):
        return replace(Sigma_hat, matrix=out, beta=float(beta))
    return out


def estimate_dof(
    X,
    T_max: int = 5,
    delta: float = 1e-3,
    nu_max: float = 1e3,
    tol: float = 1e-8,
    max_iter: int = 500,
) -> DofEstimate:
    """Data-adaptive degrees of freedom of a multivariate t model.

    Starts from ``nu0 = 2/(max(0, kappa_hat) + delta) + 4`` and repeatedly
    fits the t M-estimator, maps ``eta = tr(SCM)/tr(Sigma_t)`` to
    ``nu = 2 eta/(eta - 1)`` and stops when the relative change falls below
    1 % or after ``T_max`` updates. ``eta <= 1`` caps ``nu`` at ``nu_max``.
    """
    X = as_array(X)
    n, p = X.shape
    if n <= p:
        raise InsufficientSampleError(f"estimate_dof needs n > p (n={n}, p={p})")
    field = field_of(X)
    kappa = elliptical_kurtosis(X).kappa_hat
    nu0 = min(nu_max, 2.0 / (max(0.0, kappa) + delta) + 4.0)
    tr_scm = float(np.trace(scm(X)).real)

    nu = nu0
    etas: list[float] = []
    sigma = None
    converged = False
    it = 0
    for it in range(1, T_max + 1):
        fit = fixed_point(X, WeightSpec.mvt(nu, field), tol=tol, max_iter=max_iter, init=sigma)
        sigma = fit.matrix
        eta = tr_scm / fit.trace()
        etas.append(eta)
        nu_next = nu_max if eta <= 1.0 else min(nu_max, 2.0 * eta / (eta - 1.0))
        change = abs(nu_next - nu) / nu
        nu = nu_next
        if change < 0.01:
            converged = True
            break
    return DofEstimate(float(nu), float(nu0), it, etas, delta, nu_max, converged)


def _parse_method(method: str, sph: str | None) -> tuple[str, str]:
    name = method.lower()
    if "-" in name:
        name, _, suffix = name.partition("-")
        if sph is not None and sph != suffix:
            raise DomainError(f"conflicting sphericity choices {suffix!r} and {sph!r}")
        sph = suffix
    sph = (sph or "ell1").lower()
    if name not in METHODS:
        raise DomainError(f"unknown method {method!r}; expected one of {METHODS}")
    if sph not in ("ell1", "ell2"):
        raise DomainError(f"unknown sphericity estimator {sph!r}")
    if name == "rtyl" and sph == "ell2":
        raise DomainError("RTyl is defined with the Ell1 sphericity estimator only")
    return name, sph


def estimate(
    X,
    method: str = "rscm",
    sphericity_method: str | None = None,
    q: float = 0.7,
    T_max: int = 5,
    gaussian_consistent: bool = False,
    tol: float = 1e-8,
    max_iter: int = 500,
) -> tuple[ScatterEstimate, ShrinkageReport]:
    """Fit a shrinkage M-estimator end to end.

    Parameters
    ----------
    X : array_like or DataMatrix
        ``n x p`` data, rows are observations.
    method : {"rscm", "rhub", "rtyl", "rmvt"}
        Weight function; a ``-ell1``/``-ell2`` suffix selects the sphericity
        estimator as well.
    sphericity_method : {"ell1", "ell2"}, optional
        Defaults to ``"ell1"``.
    q : float
        Quantile level fixing Huber's threshold.
    T_max : int
        Iteration budget of the d.o.f. estimate (rmvt).
    gaussian_consistent : bool
        Rescale the rmvt fit to be consistent for the covariance at the
        normal law.

    Returns
    -------
    estimate : ScatterEstimate
        The shrunk matrix, carrying ``beta``.
    report : ShrinkageReport
        All intermediate quantities.
    """
    name, sph = _parse_method(method, sphericity_method)
    X = as_array(X)
    n, p = X.shape
    field = field_of(X)
    if name != "rscm" and n <= p:
        raise InsufficientSampleError(f"{name} needs n > p (n={n}, p={p})")

    kurt = elliptical_kurtosis(X)
    notes: list[str] = []
    if kurt.clipped:
        notes.append(f"kappa_hat clipped from {kurt.raw:.6g} to its lower bound")
    nu = None

    if name == "rscm":
        spec = WeightSpec.gaussian(field)
        fit = ScatterEstimate(scm(X), spec, iterations=1)
        psi1 = Psi1Estimate(1.0 + kurt.kappa_hat, "gaussian_kurtosis")
    elif name == "rhub":
        spec = WeightSpec.huber(p, q, field)
        fit = fixed_point(X, spec, tol, max_iter)
        psi1 = psi1_estimate(spec, X, fit)
        notes.append("huber psi1 assumes sigma = 1")
    elif name == "rtyl":
        spec = WeightSpec.tyler(field)
        fit = fixed_point(X, spec, tol, max_iter)
        psi1 = psi1_estimate(spec, X)
    else:
        nu = estimate_dof(X, T_max, tol=tol, max_iter=max_iter)
        spec = WeightSpec.mvt(nu.nu_hat, field, gaussian_consistent)
        fit = fixed_point(X, spec, tol, max_iter)
        psi1 = psi1_estimate(spec, X, fit, nu_hat=nu.nu_hat)
        notes.append("rmvt psi1 assumes sigma = 1")
    if not fit.converged:
        notes.append("fixed point did not converge")

    if sph == "ell1":
        gamma = sphericity_ell1(X)
    else:
        gamma = sphericity_ell2(fit, psi1, n, field)

    if name == "rscm":
        beta = beta_rscm(gamma.gamma_hat, kurt.kappa_hat, n, p, field)
    elif name == "rtyl":
        beta = beta_tyler(gamma.gamma_hat, n, p, field)
    else:
        beta = beta_general(gamma.gamma_hat, psi1.psi1_hat, n, p, field)

    report = ShrinkageReport(
        beta=beta,
        gamma=gamma,
        psi1=psi1,
        kappa_hat=kurt.kappa_hat,
        eta_o_hat=fit.trace() / p,
        method=f"{name}-{sph}",
        nu=nu,
        notes=tuple(notes),
    )
    return shrink(fit, beta), report


def cwh(X, beta: float, tol: float = 1e-8, max_iter: int = 500, init=None) -> ScatterEstimate:
    """Diagonally loaded Tyler iteration with fixed loading ``1 - beta``.

    Iterates ``Sigma = beta (p/n) sum x x^H / (x^H V^{-1} x) + (1-beta) I``
    and ``V = p Sigma / tr(Sigma)``; returns the limiting ``V``.
    """
    if not 0.0 < beta < 1.0:
        raise DomainError(f"CWH needs a fixed beta in (0, 1), got {beta}")
    X = as_array(X)
    n, p = X.shape
    if np.any(np.linalg.norm(X, axis=1) == 0):
        raise DegenerateInputError("CWH: data contain a zero row")
    eye = np.eye(p)
    V = eye.astype(X.dtype) if init is None else np.array(init, dtype=X.dtype if np.iscomplexobj(X) else float)
    V = V * (p / np.trace(V).real)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        t = quad_forms(X, V)
        S = (X.T * (1.0 / t)) @ X.conj() * (beta * p / n) + (1.0 - beta) * eye
        S = 0.5 * (S + S.conj().T)
        new = p * S / np.trace(S).real
        delta = np.linalg.norm(new - V) / np.linalg.norm(V)
        V = new
        if delta < tol:
            converged = True
            break
    return ScatterEstimate(V, WeightSpec.tyler(field_of(X)), float(beta), it, converged)


def rscm_cv(
    X,
    folds: int = 5,
    grid_step: float = 0.05,
    seed: int | None = None,
) -> tuple[ScatterEstimate, float]:
    """Shrinkage SCM with ``beta`` chosen by k-fold cross-validation.

    The fit criterion is ``||S_beta(train) - S(validation)||_F`` averaged
    over folds; folds are contiguous equal splits, after a shuffle when
    ``seed`` is given. Ties go to the smaller ``beta``.
    """
    X = as_array(X)
    n, p = X.shape
    if n < folds:
        raise InsufficientSampleError(f"rscm_cv needs n >= folds (n={n}, folds={folds})")
    grid = np.linspace(0.0, 1.0, int(round(1.0 / grid_step)) + 1)
    order = np.arange(n) if seed is None else make_rng(seed).permutation(n)
    eye = np.eye(p)
    scores = np.zeros_like(grid)
    for val_idx in np.array_split(order, folds):
        mask = np.ones(n, bool)
        mask[val_idx] = False
        S_tr, S_val = scm(X[mask]), scm(X[val_idx])
        target = np.trace(S_tr).real / p * eye
        for k, b in enumerate(grid):
            scores[k] += np.linalg.norm(b * S_tr + (1.0 - b) * target - S_val)
    scores /= folds
    best = scores.min()
    k = int(np.flatnonzero(scores <= best + 1e-12 * max(1.0, abs(best)))[0])
    beta = float(grid[k])
    fit = ScatterEstimate(scm(X), WeightSpec.gaussian(field_of(X)), iterations=1)
    return shrink(fit, beta), beta
