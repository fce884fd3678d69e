"""Point-forecast accuracy metrics: sMAPE, explained variance, RMSE,
range-normalized RMSE, R^2 and Spearman rank correlation."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import IO, Sequence

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


class LengthMismatch(MetricError):
    pass


class Empty(MetricError):
    pass


class ZeroRange(MetricError):
    pass


class ZeroVariance(MetricError):
    pass


class DegenerateRanks(MetricError):
    pass


REPORT_COLUMNS = (
    "model", "dataset", "smape", "explained_variance", "rmse",
    "normalized_rmse", "r2", "spearman", "n",
)


def _pair(actual, forecast, min_len: int = 1):
    a = np.asarray(actual, dtype=np.float64).reshape(-1)
    f = np.asarray(forecast, dtype=np.float64).reshape(-1)
    if len(a) != len(f):
        raise LengthMismatch(f"{len(a)} actual vs {len(f)} forecast points")
    if len(a) == 0:
        raise Empty("no points to compare")
    if len(a) < min_len:
        raise MetricError(f"need at least {min_len} points")
    return a, f


def smape(actual, forecast) -> float:
    """Mean of ``2|f - a| / (|a| + |f|)``; a 0/0 term counts as 0. Range [0, 2]."""
    a, f = _pair(actual, forecast)
    num = 2.0 * np.abs(f - a)
    den = np.abs(a) + np.abs(f)
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(terms.mean())


def rmse(actual, forecast) -> float:
    a, f = _pair(actual, forecast)
    return float(np.sqrt(np.mean((a - f) ** 2)))


def normalized_rmse(actual, forecast) -> float:
    """RMSE divided by the range of ``actual``."""
    a, f = _pair(actual, forecast)
    span = a.max() - a.min()
    if span <= 0:
        raise ZeroRange("actual values are constant")
    return rmse(a, f) / span


def r2_score(actual, forecast) -> float:
    a, f = _pair(actual, forecast, min_len=2)
    ss_tot = np.sum((a - a.mean()) ** 2)
    if ss_tot <= 0:
        raise ZeroVariance("actual values have zero variance")
    return float(1.0 - np.sum((a - f) ** 2) / ss_tot)


def explained_variance(actual, forecast) -> float:
    a, f = _pair(actual, forecast, min_len=2)
    var_a = np.var(a)
    if var_a <= 0:
        raise ZeroVariance("actual values have zero variance")
    return float(1.0 - np.var(a - f) / var_a)


def spearman(actual, forecast) -> float:
    """Pearson correlation of average ranks."""
    a, f = _pair(actual, forecast, min_len=2)
    if np.all(a == a[0]) or np.all(f == f[0]):
        raise DegenerateRanks("one side has no distinct values")
    ra = rankdata(a) - (len(a) + 1) / 2.0
    rf = rankdata(f) - (len(f) + 1) / 2.0
    rho = np.sum(ra * rf) / np.sqrt(np.sum(ra * ra) * np.sum(rf * rf))
    return float(np.clip(rho, -1.0, 1.0))


@dataclass
class MetricReport:
    smape: float | None
    explained_variance: float | None
    rmse: float | None
    normalized_rmse: float | None
    r2: float | None
    spearman: float | None
    n: int
    undefined: dict[str, str] = field(default_factory=dict)

    def as_tuple(self) -> tuple:
        return (self.smape, self.explained_variance, self.rmse, self.normalized_rmse, self.r2, self.spearman)

    def row(self, model: str, dataset: str) -> dict:
        d = asdict(self)
        d.pop("undefined")
        return {"model": model, "dataset": dataset, **d}


_METRICS = (
    ("smape", smape),
    ("explained_variance", explained_variance),
    ("rmse", rmse),
    ("normalized_rmse", normalized_rmse),
    ("r2", r2_score),
    ("spearman", spearman),
)


def evaluate(actual, forecast) -> MetricReport:
    """All six metrics on one aligned pair.

    Length problems raise; metrics undefined for the data (constant actuals,
    tied ranks) are set to ``None`` with the reason kept in ``undefined``.
    """
    a, f = _pair(actual, forecast)
    values: dict[str, float | None] = {}
    undefined: dict[str, str] = {}
    for name, fn in _METRICS:
        try:
            values[name] = fn(a, f)
        except (LengthMismatch, Empty):
            raise
        except MetricError as exc:
            values[name] = None
            undefined[name] = f"{type(exc).__name__}: {exc}"
    return MetricReport(n=len(a), undefined=undefined, **values)


def write_report(rows: Sequence[dict], csv_fh: IO[str] | None = None, json_fh: IO[str] | None = None) -> None:
    """Write report rows (from :meth:`MetricReport.row`) as CSV and/or JSON."""
    if csv_fh is not None:
        writer = csv.DictWriter(csv_fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: ("" if r[k] is None else r[k]) for k in REPORT_COLUMNS})
    if json_fh is not None:
        json.dump([{k: r[k] for k in REPORT_COLUMNS} for r in rows], json_fh, indent=1)
        json_fh.write("\n")
