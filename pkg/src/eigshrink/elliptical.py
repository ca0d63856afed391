"""Synthetic elliptically symmetric data (real and circular complex).

Only the Gaussian and multivariate-t generators are provided. Observations
are stored row-wise in an ``n x p`` array.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, stats

from .errors import ConfigError, DivergenceError, DomainError

__all__ = [
    "DataMatrix",
    "GeneratorSpec",
    "MomentResult",
    "RadialDistribution",
    "ScatterSpec",
    "build_scatter",
    "make_rng",
    "radial_moment",
    "parse_data_csv",
    "read_data_csv",
    "sample",
    "sample_radial_squared",
    "trial_seed",
    "write_data_csv",
]

FIELDS = ("real", "complex")


def _check_field(field: str) -> str:
    if field not in FIELDS:
        raise DomainError(f"field must be 'real' or 'complex', got {field!r}")
    return field


@dataclass(frozen=True)
class ScatterSpec:
    kind: str = "ar1"
    p: int = 2
    rho: float = 0.0
    tau: float = 1.0
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("ar1", "explicit"):
            raise DomainError(f"unknown scatter kind {self.kind!r}")
        if self.kind == "ar1":
            if self.p < 1:
                raise DomainError("p must be >= 1")
            if not 0.0 <= self.rho < 1.0:
                raise DomainError(f"AR(1) correlation must lie in [0, 1), got {self.rho}")
            if self.tau <= 0:
                raise DomainError(f"tau must be positive, got {self.tau}")
        elif self.matrix is None:
            raise DomainError("explicit scatter requires a matrix")

    @classmethod
    def ar1(cls, p: int, rho: float, tau: float = 1.0) -> "ScatterSpec":
        return cls("ar1", p, rho, tau)

    @classmethod
    def explicit(cls, matrix) -> "ScatterSpec":
        m = np.asarray(matrix)
        return cls("explicit", m.shape[0], matrix=m)


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "gaussian"
    nu: float = math.inf
    field: str = "real"

    def __post_init__(self):
        if self.kind not in ("gaussian", "mvt"):
            raise DomainError(f"unknown generator kind {self.kind!r}")
        if self.kind == "mvt" and not self.nu > 0:
            raise DomainError(f"mvt generator needs nu > 0, got {self.nu}")
        _check_field(self.field)

    @property
    def is_complex(self) -> bool:
        return self.field == "complex"


@dataclass(frozen=True)
class RadialDistribution:
    """Law of ``r = ||Sigma^{-1/2} x||`` for a generator in dimension ``p``."""

    generator: GeneratorSpec
    p: int

    def squared_law(self):
        """Frozen scipy distribution of ``r**2``."""
        g, p = self.generator, self.p
        if g.kind == "gaussian":
            if g.is_complex:
                return stats.gamma(a=p)
            return stats.chi2(p)
        # r^2 / p is F-distributed; the complex case doubles the numerator d.o.f.
        d1 = 2 * p if g.is_complex else p
        return stats.f(d1, g.nu, scale=p)

    def tail_exponent(self) -> float:
        """Power ``a`` such that the density of ``r**2`` decays like ``t**-(a+1)``."""
        if self.generator.kind == "gaussian":
            return math.inf
        return self.generator.nu / 2.0


@dataclass(frozen=True)
class DataMatrix:
    values: np.ndarray
    field: str = "real"

    def __post_init__(self):
        _check_field(self.field)
        v = self.values
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DomainError(f"DataMatrix must be a non-empty 2-D array, got shape {v.shape}")
        if self.field == "real" and np.iscomplexobj(v):
            raise DomainError("real DataMatrix holds complex values")

    @classmethod
    def from_array(cls, values) -> "DataMatrix":
        v = np.asarray(values)
        if np.iscomplexobj(v):
            return cls(v.astype(complex), "complex")
        return cls(v.astype(float), "real")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def build_scatter(spec: ScatterSpec) -> np.ndarray:
    """Realize the ``p x p`` scatter matrix described by ``spec``."""
    if spec.kind == "ar1":
        idx = np.arange(spec.p)
        lag = np.abs(idx[:, None] - idx[None, :])
        return spec.tau * np.power(float(spec.rho), lag)
    m = np.asarray(spec.matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError("explicit scatter must be square")
    if not np.allclose(m, m.conj().T, rtol=0, atol=1e-12 * np.abs(m).max()):
        raise DomainError("explicit scatter is not symmetric/Hermitian")
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise DomainError("explicit scatter is not positive definite") from None
    return m.copy()


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def trial_seed(seed: int, *index: int) -> int:
    """Derive an independent 64-bit seed for one Monte Carlo unit."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, index)])
    return int(ss.generate_state(1, np.uint64)[0])


def sample(n: int, scatter, gen: GeneratorSpec, seed) -> DataMatrix:
    """Draw ``n`` i.i.d. observations from an elliptical law.

    ``scatter`` is a :class:`ScatterSpec` or an explicit matrix. MVN draws are
    ``L z`` with ``Sigma = L L^H``; MVT draws divide an MVN draw by
    ``sqrt(s / nu)`` with ``s ~ chi2_nu``. Complex draws use circular complex
    normal components with ``E[z z^H] = I``.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    sigma = build_scatter(scatter) if isinstance(scatter, ScatterSpec) else np.asarray(scatter)
    p = sigma.shape[0]
    L = np.linalg.cholesky(sigma)
    rng = make_rng(seed)
    if gen.is_complex:
        z = (rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))) / math.sqrt(2.0)
    else:
        z = rng.standard_normal((n, p))
    x = z @ L.T
    if gen.kind == "mvt":
        s = rng.chisquare(gen.nu, size=n)
        x = x / np.sqrt(s / gen.nu)[:, None]
    return DataMatrix(x, gen.field)


def sample_radial_squared(dist: RadialDistribution, size: int, seed) -> np.ndarray:
    """Draw ``r**2`` directly from the normal / chi-square construction."""
    rng = make_rng(seed)
    g, p = dist.generator, dist.p
    if g.is_complex:
        t = 0.5 * rng.chisquare(2 * p, size=size)
    else:
        t = rng.chisquare(p, size=size)
    if g.kind == "mvt":
        t = t / (rng.chisquare(g.nu, size=size) / g.nu)
    return t


class MomentResult(NamedTuple):
    value: float
    method: str
    stderr: float


def _growth_exponent(h: Callable[[float], float], t: float = 1e12) -> float:
    a, b = abs(h(t)), abs(h(2.0 * t))
    if a == 0 or b == 0 or not (math.isfinite(a) and math.isfinite(b)):
        return 0.0 if a == b == 0 else math.inf
    return math.log(b / a) / math.log(2.0)


def radial_moment(
    dist: RadialDistribution,
    h: Callable[[float], float],
    method: str = "quad",
    breakpoints: Sequence[float] = (),
    n_draws: int = 10**6,
    seed: int = 0,
) -> MomentResult:
    """Expectation ``E[h(r**2)]`` under the radial law ``dist``.

    ``method="quad"`` integrates ``h`` against the closed-form density of
    ``r**2``; ``method="mc"`` averages ``n_draws`` direct draws and reports
    the Monte Carlo standard error. ``breakpoints`` marks kinks of ``h``.
    """
    tail = dist.tail_exponent()
    if math.isfinite(tail) and _growth_exponent(h) >= tail - 1e-9:
        raise DivergenceError(
            f"E[h(r^2)] diverges: h grows like t^{_growth_exponent(h):.3g} "
            f"against a t^-{tail + 1:.3g} density tail"
        )
    if method == "mc":
        t = sample_radial_squared(dist, n_draws, seed)
        vals = np.array([h(v) for v in t]) if not _vectorizes(h) else np.asarray(h(t), float)
        return MomentResult(float(vals.mean()), "mc", float(vals.std(ddof=1) / math.sqrt(n_draws)))
    if method != "quad":
        raise DomainError(f"unknown radial_moment method {method!r}")

    pdf = _squared_density(dist)
    cuts = set(_default_cuts(dist))
    cuts.update(float(b) for b in breakpoints if b > 0 and math.isfinite(b))
    edges = [0.0, *sorted(cuts)]

    def integrand(t):
        return float(h(t)) * pdf(t)

    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)[0]
    last = edges[-1]
    if math.isfinite(tail):
        # t = last * u**(-1/a) maps a t**-(a+1) tail onto a bounded integrand on (0, 1]
        a = tail

        def mapped(u):
            # quad never evaluates the endpoint u = 0
            t = last * u ** (-1.0 / a)
            return integrand(t) * t / (a * u)

        total += integrate.quad(mapped, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=400)[0]
    else:
        total += integrate.quad(integrand, last, math.inf, epsabs=0.0, epsrel=1e-13, limit=400)[0]
    return MomentResult(total, "quad", 0.0)



@lru_cache(maxsize=256)
def _default_cuts(dist: RadialDistribution) -> tuple[float, ...]:
    law = dist.squared_law()
    return tuple(float(law.ppf(q)) for q in (1e-3, 0.25, 0.5, 0.75, 0.999))


@lru_cache(maxsize=256)
def _squared_density(dist: RadialDistribution) -> Callable[[float], float]:
    # scalar closed forms; scipy's frozen pdf is too slow inside quad
    g, p = dist.generator, dist.p
    if g.kind == "gaussian":
        a, scale = (float(p), 1.0) if g.is_complex else (p / 2.0, 2.0)
        const = -math.lgamma(a) - a * math.log(scale)

        def pdf(t):
            if t <= 0:
                return 0.0
            return math.exp(const + (a - 1.0) * math.log(t) - t / scale)

        return pdf
    d1 = 2.0 * p if g.is_complex else float(p)
    d2 = g.nu
    # density of t = p * F(d1, d2)
    const = (
        math.lgamma((d1 + d2) / 2) - math.lgamma(d1 / 2) - math.lgamma(d2 / 2)
        + (d1 / 2) * math.log(d1 / d2) - math.log(p)
    )

    def pdf(t):
        if t <= 0:
            return 0.0
        y = t / p
        return math.exp(const + (d1 / 2 - 1.0) * math.log(y) - ((d1 + d2) / 2) * math.log1p(d1 * y / d2))

    return pdf


def _vectorizes(h) -> bool:
    try:
        out = np.asarray(h(np.array([1.0, 2.0])))
    except Exception:
        return False
    return out.shape == (2,)


def write_data_csv(data: DataMatrix, path=None) -> str:
    """Serialize ``data``; real rows plain, complex rows as interleaved re,im."""
    buf = io.StringIO()
    if data.field == "complex":
        buf.write("#field=complex\n")
    writer = csv.writer(buf, lineterminator="\n")
    for row in data.values:
        if data.field == "complex":
            cells = [c for z in row for c in (z.real, z.imag)]
        else:
            cells = row
        writer.writerow([format(float(v), ".17g") for v in cells])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_data_csv(path) -> DataMatrix:
    """Load a data CSV file; see :func:`parse_data_csv`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path}: {exc}") from exc
    return parse_data_csv(text)


def parse_data_csv(text: str) -> DataMatrix:
    """Parse data CSV text.

    Raises :class:`ConfigError` with a line number on malformed input.
    """
    field = "real"
    rows: list[list[float]] = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, _, val = stripped[1:].partition("=")
            if key.strip() == "field":
                if rows:
                    raise ConfigError(f"line {lineno}: field directive after data rows")
                field = val.strip()
                if field not in FIELDS:
                    raise ConfigError(f"line {lineno}: unknown field {field!r}")
            continue
        cells = next(csv.reader([stripped]))
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise ConfigError(f"line {lineno}: non-numeric cell in {stripped!r}") from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ConfigError(f"line {lineno}: expected {width} columns, found {len(vals)}")
        rows.append(vals)
    if not rows:
        raise ConfigError("data file contains no observations")
    arr = np.array(rows)
    if field == "complex":
        if arr.shape[1] % 2:
            raise ConfigError("complex data needs an even number of columns (re, im pairs)")
        return DataMatrix(arr[:, 0::2] + 1j * arr[:, 1::2], "complex")
    return DataMatrix(arr, "real")
