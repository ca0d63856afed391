"""Tidy (long-format) experiment results and their CSV representation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError

__all__ = ["ExperimentResult", "ResultRow", "aggregate", "median_se"]

COLUMNS = ("method", "n", "rho", "statistic", "mean", "se", "trials", "expected")


@dataclass(frozen=True)
class ResultRow:
    method: str
    n: int
    rho: float
    statistic: str
    mean: float
    se: float
    trials: int
    expected: float = math.nan

    @property
    def z(self) -> float:
        if math.isnan(self.expected):
            return math.nan
        if self.se == 0:
            return 0.0 if self.mean == self.expected else math.inf
        return (self.mean - self.expected) / self.se

    def same_as(self, other: "ResultRow") -> bool:
        def eq(a, b):
            return a == b or (isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b))

        return all(eq(getattr(self, c), getattr(other, c)) for c in COLUMNS)


def median_se(x) -> float:
    """Distribution-free standard error of the sample median.

    Half the width of the order-statistic 95 % confidence interval, divided
    by 1.96.
    """
    x = np.sort(np.asarray(x, float))
    m = x.size
    if m < 3:
        return math.nan
    half = 1.96 * math.sqrt(m) / 2.0
    lo = max(0, int(math.floor(m / 2.0 - half)))
    hi = min(m - 1, int(math.ceil(m / 2.0 + half)))
    return float((x[hi] - x[lo]) / (2 * 1.96))


def aggregate(method: str, n: int, rho: float, statistic: str, values, expected=math.nan) -> ResultRow:
    v = np.asarray(values, float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return ResultRow(method, int(n), float(rho), statistic, float(v.mean()), se, int(v.size), float(expected))


@dataclass
class ExperimentResult:
    rows: list[ResultRow]
    metadata: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict, repr=False, compare=False)

    def get(self, method: str, statistic: str, n: int | None = None, rho: float | None = None) -> ResultRow:
        hits = [
            r for r in self.rows
            if r.method == method and r.statistic == statistic
            and (n is None or r.n == n) and (rho is None or math.isclose(r.rho, rho))
        ]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {(method, statistic, n, rho)}")
        return hits[0]

    def to_csv(self, path=None) -> str:
        """CSV with a leading ``# {json}`` metadata line; floats as %.17g."""
        buf = io.StringIO()
        meta = {k: v for k, v in self.metadata.items() if k not in _VOLATILE}
        buf.write("# " + json.dumps(meta, sort_keys=True, default=_json_default) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([
                r.method, r.n, format(r.rho, ".17g"), r.statistic,
                format(r.mean, ".17g"), format(r.se, ".17g"), r.trials, format(r.expected, ".17g"),
            ])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> "ExperimentResult":
        lines = text.splitlines()
        meta = {}
        if lines and lines[0].startswith("#"):
            meta = json.loads(lines[0][1:])
            lines = lines[1:]
        reader = csv.reader(lines)
        header = next(reader, None)
        if tuple(header or ()) != COLUMNS:
            raise ConfigError(f"unexpected result header {header}")
        rows = []
        for lineno, rec in enumerate(reader, start=3 if meta else 2):
            try:
                m, n, rho, stat, mean, se, trials, exp = rec
                rows.append(ResultRow(m, int(n), float(rho), stat, float(mean), float(se), int(trials), float(exp)))
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: malformed result row: {exc}") from None
        return cls(rows, meta)


# not serialized: they vary between otherwise identical runs
_VOLATILE = {"wall_time_s", "threads"}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o)}")
