"""Declarative Monte Carlo study configuration (JSON, schema version 1)."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from dataclasses import field as dc_field
from pathlib import Path

from ..elliptical import GeneratorSpec
from ..errors import ConfigError

__all__ = ["EXPERIMENTS", "ExperimentConfig", "load_config", "parse_config"]

SCHEMA_VERSION = 1

EXPERIMENTS = (
    "nmse_vs_n",
    "nmse_vs_rho",
    "beta_vs_n",
    "shape_nmse",
    "lemma_validation",
    "beta_oracle",
    "theta_unbiased",
    "dof_convergence",
)

GRID_METHODS = ("rscm", "rscm-ell2", "rhub", "rhub-ell2", "rtyl", "rmvt", "rmvt-ell2", "cwh", "cv")
WEIGHTS = ("gaussian", "huber", "tyler", "mvt")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    p: int
    n_grid: tuple[int, ...]
    field: str = "real"
    rho_grid: tuple[float, ...] = (0.6,)
    tau: float = 10.0
    generator: dict = dc_field(default_factory=lambda: {"kind": "gaussian"})
    methods: tuple[str, ...] = ("rscm", "rhub", "rmvt")
    weights: tuple[str, ...] = ("gaussian",)
    trials: int = 100
    seed: int = 0
    huber_q: float = 0.7
    threads: int = 1
    T_max: int = 5
    tmax_grid: tuple[int, ...] = (2, 5)
    beta_grid_step: float = 0.01
    cv_folds: int = 5
    cv_step: float = 0.05
    rmvt_gaussian_consistent: bool | None = None
    schema: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {self.schema}; expected {SCHEMA_VERSION}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.field not in ("real", "complex"):
            raise ConfigError(f"field must be 'real' or 'complex', got {self.field!r}")
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not self.n_grid:
            raise ConfigError("n_grid must not be empty")
        if any(not 0.0 <= r < 1.0 for r in self.rho_grid):
            raise ConfigError("rho values must lie in [0, 1)")
        if not 0.0 < self.huber_q <= 1.0:
            raise ConfigError("huber_q must lie in (0, 1]")
        for m in self.methods:
            if m not in GRID_METHODS:
                raise ConfigError(f"unknown method {m!r}; expected one of {GRID_METHODS}")
        for w in self.weights:
            if w not in WEIGHTS:
                raise ConfigError(f"unknown weight {w!r}; expected one of {WEIGHTS}")
        if self.experiment in ("nmse_vs_n", "nmse_vs_rho", "beta_vs_n", "shape_nmse", "dof_convergence"):
            robust = [m for m in self.methods if m not in ("rscm", "rscm-ell2", "cv")]
            if (robust or self.experiment == "dof_convergence") and min(self.n_grid) <= self.p:
                raise ConfigError(f"every n in n_grid must exceed p={self.p} for methods {robust or ['dof']}")
        self.generator_spec()  # validates

    def generator_spec(self) -> GeneratorSpec:
        g = dict(self.generator)
        kind = g.pop("kind", None)
        if kind == "mvt" and "nu" not in g:
            raise ConfigError("generator kind 'mvt' needs 'nu'")
        nu = g.pop("nu", math.inf)
        if g:
            raise ConfigError(f"unknown generator keys {sorted(g)}")
        try:
            return GeneratorSpec(kind, float(nu), self.field)
        except Exception as exc:
            raise ConfigError(f"invalid generator {self.generator!r}: {exc}") from None

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return parse_config(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @property
    def gaussian_consistent_rmvt(self) -> bool:
        if self.rmvt_gaussian_consistent is not None:
            return self.rmvt_gaussian_consistent
        return self.generator.get("kind") == "gaussian"


_TUPLE_KEYS = {"n_grid", "rho_grid", "methods", "weights", "tmax_grid"}


def parse_config(data: dict) -> ExperimentConfig:
    """Build a config from a decoded JSON object, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    missing = [k for k in ("experiment", "p", "n_grid") if k not in data]
    if missing:
        raise ConfigError(f"missing required config keys {missing}")
    kw = {}
    for k, v in data.items():
        if k in _TUPLE_KEYS:
            if not isinstance(v, (list, tuple)):
                v = [v]
            v = tuple(v)
        kw[k] = v
    try:
        return ExperimentConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(data)
