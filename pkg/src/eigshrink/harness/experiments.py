"""Monte Carlo drivers: NMSE and shape studies, shrinkage traces, d.o.f.
convergence and the statistical validation of the closed-form moments.

Every trial draws its data from a stream seeded by
``trial_seed(cfg.seed, ...)`` so results do not depend on how trials are
distributed over workers; aggregation always runs in trial order.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

from .. import __version__
from ..elliptical import RadialDistribution, ScatterSpec, build_scatter, radial_moment, sample, trial_seed
from ..errors import ConfigError
from ..mest import WeightSpec, one_step, solve_sigma
from ..shrinkage import (
    beta_general,
    beta_tyler,
    cwh,
    estimate,
    estimate_dof,
    lemma_moments,
    mse_at_optimum,
    rscm_cv,
    sphericity,
    sphericity_ell1,
    theta_unbiased,
)
from .config import ExperimentConfig
from .results import ExperimentResult, ResultRow, aggregate, median_se

__all__ = [
    "beta_trace_experiment",
    "check_rows",
    "dof_experiment",
    "nmse_experiment",
    "run_experiment",
    "shape_nmse_experiment",
    "validation_suite",
    "weight_psi1",
]

GRID_EXPERIMENTS = ("nmse_vs_n", "nmse_vs_rho", "beta_vs_n")
VALIDATION_EXPERIMENTS = ("lemma_validation", "theta_unbiased", "beta_oracle")
ORACLE_BETA_TOL = 0.05


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    chunk = max(1, len(items) // (8 * threads))
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


def _metadata(cfg: ExperimentConfig, **extra) -> dict:
    import scipy

    config = cfg.to_dict()
    del config["threads"]  # results must not depend on it
    meta = {
        "config": config,
        "versions": {"eigshrink": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
        "threads": cfg.threads,
    }
    meta.update(extra)
    return meta


def _scatter(cfg: ExperimentConfig, rho: float) -> np.ndarray:
    return build_scatter(ScatterSpec.ar1(cfg.p, rho, cfg.tau))


# ---------------------------------------------------------------------------
# grid studies (NMSE, shape NMSE, beta traces)


def _target_sigmas(cfg: ExperimentConfig) -> dict[str, float]:
    """Scale of each method's population target relative to ``Sigma``.

    Tyler-type methods target the shape matrix, recorded as NaN here and
    handled separately. The rmvt weight is matched to the data (or made
    Gaussian-consistent) so its factor is 1.
    """
    gen = cfg.generator_spec()
    radial = RadialDistribution(gen, cfg.p)
    out = {}
    for m in cfg.methods:
        kind = m.split("-")[0]
        if kind in ("rscm", "cv"):
            out[m] = solve_sigma(WeightSpec.gaussian(cfg.field), radial)
        elif kind == "rhub":
            out[m] = solve_sigma(WeightSpec.huber(cfg.p, cfg.huber_q, cfg.field), radial)
        elif kind == "rmvt":
            if gen.kind == "mvt":
                out[m] = solve_sigma(WeightSpec.mvt(gen.nu, cfg.field), radial)
            elif cfg.gaussian_consistent_rmvt:
                out[m] = 1.0
            else:
                raise ConfigError("rmvt at Gaussian data needs rmvt_gaussian_consistent=true for a known target")
        else:
            out[m] = math.nan
    return out


def _fit(cfg: ExperimentConfig, method: str, X, seed: int) -> tuple[np.ndarray, float]:
    kind = method.split("-")[0]
    n, p = X.shape
    if kind == "cwh":
        beta = beta_tyler(sphericity_ell1(X).gamma_hat, n, p, cfg.field)
        if beta <= 0.0:
            return np.eye(p), 0.0
        return cwh(X, beta).matrix, beta
    if kind == "cv":
        est, beta = rscm_cv(X, cfg.cv_folds, cfg.cv_step, seed=seed)
        return est.matrix, beta
    est, rep = estimate(
        X,
        method,
        q=cfg.huber_q,
        T_max=cfg.T_max,
        gaussian_consistent=(kind == "rmvt" and cfg.gaussian_consistent_rmvt),
    )
    return est.matrix, rep.beta


def _grid_unit(item, cfg: ExperimentConfig, sigmas: dict, shape: bool):
    trial, i_n, i_rho = item
    n, rho = cfg.n_grid[i_n], cfg.rho_grid[i_rho]
    Sigma = _scatter(cfg, rho)
    p = cfg.p
    X = sample(n, Sigma, cfg.generator_spec(), trial_seed(cfg.seed, trial, i_n, i_rho)).values
    V = p * Sigma / np.trace(Sigma).real
    out = []
    for k, m in enumerate(cfg.methods):
        S, beta = _fit(cfg, m, X, trial_seed(cfg.seed, trial, i_n, i_rho, k + 1))
        if shape:
            target = V
            if m.split("-")[0] not in ("cwh", "rtyl"):
                S = p * S / np.trace(S).real
        else:
            target = V if math.isnan(sigmas[m]) else sigmas[m] * Sigma
        nmse = np.linalg.norm(S - target) ** 2 / np.linalg.norm(target) ** 2
        out.append((float(nmse), float(beta)))
    return out


def _run_grid(cfg: ExperimentConfig, shape: bool) -> ExperimentResult:
    t0 = time.perf_counter()
    sigmas = {} if shape else _target_sigmas(cfg)
    items = [
        (t, i_n, i_r)
        for i_n in range(len(cfg.n_grid))
        for i_r in range(len(cfg.rho_grid))
        for t in range(cfg.trials)
    ]
    outs = _map(partial(_grid_unit, cfg=cfg, sigmas=sigmas, shape=shape), items, cfg.threads)
    rows: list[ResultRow] = []
    samples: dict = {}
    pos = 0
    for i_n, n in enumerate(cfg.n_grid):
        for i_r, rho in enumerate(cfg.rho_grid):
            block = np.array(outs[pos : pos + cfg.trials], float)  # trials x methods x 2
            pos += cfg.trials
            for k, m in enumerate(cfg.methods):
                nm, be = block[:, k, 0], block[:, k, 1]
                samples[(m, n, rho)] = nm
                rows.append(aggregate(m, n, rho, "nmse", nm))
                rows.append(ResultRow(m, n, rho, "nmse_median", float(np.median(nm)), median_se(nm), nm.size))
                rows.append(aggregate(m, n, rho, "beta", be))
    meta = _metadata(
        cfg,
        target="shape" if shape else "sigma*Sigma",
        sigma={m: s for m, s in sigmas.items() if not math.isnan(s)},
        wall_time_s=time.perf_counter() - t0,
    )
    return ExperimentResult(rows, meta, samples)


def nmse_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """NMSE ``||S - Sigma0||_F^2 / ||Sigma0||_F^2`` of each method.

    ``Sigma0 = sigma Sigma`` with ``sigma`` from :func:`solve_sigma` for the
    method's weight; Tyler-type methods are scored against the shape
    matrix ``p Sigma / tr(Sigma)``.
    """
    return _run_grid(cfg, shape=False)


def shape_nmse_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """NMSE of trace-normalized estimates ``p S / tr(S)`` against the shape matrix."""
    return _run_grid(cfg, shape=True)


def beta_trace_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Average shrinkage coefficient per method and ``n`` (rows named ``beta``)."""
    return _run_grid(cfg, shape=False)


# ---------------------------------------------------------------------------
# degrees of freedom


def _dof_unit(item, cfg: ExperimentConfig):
    trial, i_n = item
    n = cfg.n_grid[i_n]
    Sigma = _scatter(cfg, cfg.rho_grid[0])
    X = sample(n, Sigma, cfg.generator_spec(), trial_seed(cfg.seed, trial, i_n)).values
    fits = [estimate_dof(X, T_max=T) for T in cfg.tmax_grid]
    return [fits[0].nu0] + [f.nu_hat for f in fits]


def dof_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Distribution of the adaptive d.o.f. estimate for each iteration budget.

    Rows: ``nu0`` (the kurtosis-based start), ``nu_hat_T{T}`` for each
    ``T`` in ``tmax_grid`` and ``nu_absdiff_T{a}_T{b}``, the per-trial
    ``|nu_hat(T=b) - nu_hat(T=a)|`` between the smallest and largest budget.
    """
    t0 = time.perf_counter()
    rows = []
    rho = cfg.rho_grid[0]
    for i_n, n in enumerate(cfg.n_grid):
        items = [(t, i_n) for t in range(cfg.trials)]
        vals = np.array(_map(partial(_dof_unit, cfg=cfg), items, cfg.threads), float)
        rows.append(aggregate("dof", n, rho, "nu0", vals[:, 0]))
        for j, T in enumerate(cfg.tmax_grid):
            rows.append(aggregate("dof", n, rho, f"nu_hat_T{T}", vals[:, j + 1]))
        if len(cfg.tmax_grid) > 1:
            a, b = cfg.tmax_grid[0], cfg.tmax_grid[-1]
            diff = np.abs(vals[:, -1] - vals[:, 1])
            rows.append(aggregate("dof", n, rho, f"nu_absdiff_T{a}_T{b}", diff))
    expected = cfg.generator_spec().nu
    return ExperimentResult(rows, _metadata(cfg, true_nu=expected, wall_time_s=time.perf_counter() - t0))


# ---------------------------------------------------------------------------
# validation of the closed forms


def _weight(cfg: ExperimentConfig, name: str) -> WeightSpec:
    if name == "gaussian":
        return WeightSpec.gaussian(cfg.field)
    if name == "huber":
        return WeightSpec.huber(cfg.p, cfg.huber_q, cfg.field)
    if name == "tyler":
        return WeightSpec.tyler(cfg.field)
    gen = cfg.generator_spec()
    if gen.kind != "mvt":
        raise ConfigError("the mvt weight is validated at matched t data; set generator kind 'mvt'")
    return WeightSpec.mvt(gen.nu, cfg.field)


def weight_psi1(spec: WeightSpec, radial: RadialDistribution, sigma: float) -> float:
    """``psi1 = E[psi(r^2/sigma)^2] / (p(p+2))`` (``p(p+1)`` for complex data).

    Tyler's weight gives ``p/(p+2)`` (``p/(p+1)``) exactly.
    """
    p = radial.p
    denom = p * (p + 1) if radial.generator.is_complex else p * (p + 2)
    if spec.kind == "tyler":
        return p * p / denom
    brk = (spec.c2 * sigma,) if spec.kind == "huber" else ()
    m2 = radial_moment(radial, lambda t: spec.psi(t / sigma, p) ** 2, breakpoints=brk).value
    return m2 / denom


def _validation_unit(item, cfg: ExperimentConfig, specs, sigma0s):
    trial, i_n, i_r = item
    n = cfg.n_grid[i_n]
    Sigma = _scatter(cfg, cfg.rho_grid[i_r])
    X = sample(n, Sigma, cfg.generator_spec(), trial_seed(cfg.seed, i_n, i_r, trial)).values
    p = cfg.p
    out = []
    for spec, (S0, psi1) in zip(specs, sigma0s[(i_n, i_r)]):
        C = one_step(X, spec, S0)
        trC = float(np.trace(C).real)
        m = trC / p
        D = C - m * np.eye(p)
        E = m * np.eye(p) - S0
        out.append((
            float(np.linalg.norm(C) ** 2),
            trC**2,
            theta_unbiased(C, psi1, n, cfg.field),
            float(np.linalg.norm(D) ** 2),
            float(np.real(np.vdot(D, E))),
            float(np.linalg.norm(E) ** 2),
        ))
    return out


def _oracle_beta(A, B, D, grid):
    """Grid minimizer of the mean of ``beta^2 A + 2 beta B + D``."""
    losses = grid**2 * np.mean(A) + 2 * grid * np.mean(B) + np.mean(D)
    return float(grid[int(np.argmin(losses))])


def validation_suite(cfg: ExperimentConfig, checks=("lemma", "theta", "beta_oracle")) -> ExperimentResult:
    """Monte Carlo check of the second moments of ``C``, of the unbiased
    ``tr(Sigma0^2)/p`` statistic and of the oracle shrinkage coefficient.

    For every weight in ``cfg.weights`` and every ``(n, rho)``, the
    1-step estimator ``C`` is formed at the known M-functional
    ``Sigma0 = sigma Sigma``. Emitted rows (``expected`` holds the closed
    form, so ``row.z`` is the z-score):

    ``trC2``, ``trC_sq``
        ``E[tr(C^2)]`` and ``E[tr(C)^2]``.
    ``theta``
        mean of the unbiased statistic; expected ``tr(Sigma0^2)/p``.
    ``beta_mc``
        grid (``beta_grid_step``) minimizer of the MC mean loss; the SE
        is from 20 batch means. Expected: the closed-form coefficient.
    ``mse_at_beta_mc``
        mean loss at ``beta_mc``; expected: the closed-form MSE at the
        optimum.
    """
    t0 = time.perf_counter()
    radial = RadialDistribution(cfg.generator_spec(), cfg.p)
    specs = [_weight(cfg, w) for w in cfg.weights]
    sigma0s = {}
    consts = {}
    for i_n, n in enumerate(cfg.n_grid):
        for i_r, rho in enumerate(cfg.rho_grid):
            Sigma = _scatter(cfg, rho)
            entry = []
            for spec in specs:
                sigma = solve_sigma(spec, radial, scatter=Sigma)
                psi1 = weight_psi1(spec, radial, sigma)
                entry.append((sigma * Sigma, psi1))
                consts[(spec.kind, n, rho)] = {"sigma": sigma, "psi1": psi1}
            sigma0s[(i_n, i_r)] = entry

    items = [
        (t, i_n, i_r)
        for i_n in range(len(cfg.n_grid))
        for i_r in range(len(cfg.rho_grid))
        for t in range(cfg.trials)
    ]
    outs = _map(partial(_validation_unit, cfg=cfg, specs=specs, sigma0s=sigma0s), items, cfg.threads)

    grid = np.round(np.arange(0.0, 1.0 + cfg.beta_grid_step / 2, cfg.beta_grid_step), 12)
    rows = []
    pos = 0
    for i_n, n in enumerate(cfg.n_grid):
        for i_r, rho in enumerate(cfg.rho_grid):
            block = np.array(outs[pos : pos + cfg.trials], float)  # trials x weights x 6
            pos += cfg.trials
            for k, (spec, (S0, psi1)) in enumerate(zip(specs, sigma0s[(i_n, i_r)])):
                w = cfg.weights[k]
                trc2, trcsq, theta, A, B, D = block[:, k, :].T
                e_trc2, e_trcsq = lemma_moments(S0, psi1, n, cfg.field)
                if "lemma" in checks:
                    rows.append(aggregate(w, n, rho, "trC2", trc2, e_trc2))
                    rows.append(aggregate(w, n, rho, "trC_sq", trcsq, e_trcsq))
                if "theta" in checks:
                    rows.append(aggregate(w, n, rho, "theta", theta, np.linalg.norm(S0) ** 2 / cfg.p))
                if "beta_oracle" in checks:
                    b_formula = beta_general(sphericity(S0), psi1, n, cfg.p, cfg.field)
                    b_mc = _oracle_beta(A, B, D, grid)
                    batches = [
                        _oracle_beta(a, b, d, grid)
                        for a, b, d in zip(*(np.array_split(v, 20) for v in (A, B, D)))
                    ]
                    se = float(np.std(batches, ddof=1) / math.sqrt(len(batches))) if cfg.trials >= 40 else math.nan
                    rows.append(ResultRow(w, n, rho, "beta_mc", b_mc, se, cfg.trials, b_formula))
                    loss = b_mc**2 * A + 2 * b_mc * B + D
                    rows.append(aggregate(w, n, rho, "mse_at_beta_mc", loss, mse_at_optimum(S0, e_trcsq, b_formula)))
    meta = _metadata(
        cfg,
        constants={f"{k[0]}/n={k[1]}/rho={k[2]}": v for k, v in consts.items()},
        wall_time_s=time.perf_counter() - t0,
    )
    return ExperimentResult(rows, meta)


def check_rows(result: ExperimentResult, z_max: float = 3.0, beta_tol: float = ORACLE_BETA_TOL):
    """Pass/fail of every row that carries an expected value.

    ``beta_mc`` rows pass when within ``beta_tol`` of the closed form; all
    others when ``|z| <= z_max``.
    """
    verdicts = []
    for r in result.rows:
        if math.isnan(r.expected):
            continue
        if r.statistic == "beta_mc":
            ok = abs(r.mean - r.expected) <= beta_tol
        else:
            ok = abs(r.z) <= z_max
        verdicts.append((r, ok))
    return verdicts


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Dispatch on ``cfg.experiment``."""
    e = cfg.experiment
    if e in ("nmse_vs_n", "nmse_vs_rho"):
        return nmse_experiment(cfg)
    if e == "beta_vs_n":
        return beta_trace_experiment(cfg)
    if e == "shape_nmse":
        return shape_nmse_experiment(cfg)
    if e == "dof_convergence":
        return dof_experiment(cfg)
    if e == "lemma_validation":
        return validation_suite(cfg, ("lemma",))
    if e == "theta_unbiased":
        return validation_suite(cfg, ("theta",))
    return validation_suite(cfg, ("beta_oracle",))
