"""Random-intercept mixed model and paired t-tests for cohort summaries."""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from .errors import DegenerateTestError, IdentifiabilityError
from .geometry import FEATURE_REGIONS

REFERENCE_REGION = "anterior"
COHORT_COLUMNS = ("case_id", "region", "d_es_mm", "thickness_mm", "eat_ml", "alpha")


@dataclass(frozen=True)
class CohortTable:
    case_id: np.ndarray  # str
    region: np.ndarray  # str
    columns: dict = field(default_factory=dict)  # name -> float array

    def __post_init__(self):
        n = len(self.case_id)
        if len(self.region) != n or any(len(v) != n for v in self.columns.values()):
            raise ValueError("all cohort columns must have the same length")
        pairs = set(zip(self.case_id.tolist(), self.region.tolist()))
        if len(pairs) != n:
            raise ValueError("(case_id, region) pairs must be unique")

    def __len__(self) -> int:
        return len(self.case_id)

    @property
    def cases(self) -> list[str]:
        return sorted(set(self.case_id.tolist()))

    def take(self, idx) -> "CohortTable":
        return CohortTable(self.case_id[idx], self.region[idx], {k: v[idx] for k, v in self.columns.items()})

    def wide(self, column: str, regions: Sequence[str] = FEATURE_REGIONS) -> np.ndarray:
        """cases x regions matrix of one column (NaN where missing)."""
        cases = self.cases
        M = np.full((len(cases), len(regions)), np.nan)
        ci = {c: i for i, c in enumerate(cases)}
        ri = {r: j for j, r in enumerate(regions)}
        for c, r, v in zip(self.case_id, self.region, self.columns[column]):
            if r in ri:
                M[ci[c], ri[r]] = v
        return M


def read_cohort_csv(path) -> CohortTable:
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(line for line in fh if not line.startswith("#"))]
    if not rows:
        raise ValueError(f"{path}: no rows")
    numeric = [k for k in rows[0] if k not in ("case_id", "region")]
    return CohortTable(
        np.array([r["case_id"] for r in rows]),
        np.array([r["region"] for r in rows]),
        {k: np.array([float(r[k]) for r in rows]) for k in numeric},
    )


def write_cohort_csv(table: CohortTable, path) -> None:
    names = list(table.columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case_id", "region", *names])
        for i in range(len(table)):
            w.writerow([table.case_id[i], table.region[i], *(repr(float(table.columns[k][i])) for k in names)])


@dataclass(frozen=True)
class LmmFit:
    names: tuple[str, ...]
    beta: np.ndarray
    se: np.ndarray
    p_values: np.ndarray
    sigma2_u: float
    sigma2: float
    log_likelihood: float
    converged: bool

    def coef(self, name: str) -> float:
        return float(self.beta[self.names.index(name)])

    def as_dict(self) -> dict:
        return {
            "fixed_effects": {n: {"estimate": float(b), "se": float(s), "p_value": float(p)}
                              for n, b, s, p in zip(self.names, self.beta, self.se, self.p_values)},
            "random_intercept_variance": self.sigma2_u,
            "residual_variance": self.sigma2,
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
        }


def design_matrix(table: CohortTable, covariate: str, reference: str = REFERENCE_REGION):
    """Intercept, treatment-coded regions (``reference`` omitted), covariate."""
    levels = [r for r in FEATURE_REGIONS if r in set(table.region.tolist())]
    levels += sorted(set(table.region.tolist()) - set(levels))
    if reference not in levels:
        raise IdentifiabilityError(f"reference region {reference!r} absent from the table")
    others = [r for r in levels if r != reference]
    cols = [np.ones(len(table))] + [(table.region == r).astype(float) for r in others]
    cols.append(np.asarray(table.columns[covariate], dtype=float))
    names = ("intercept", *(f"region[{r}]" for r in others), covariate)
    return np.column_stack(cols), names


def _group_index(case_id: np.ndarray):
    cases, inv = np.unique(case_id, return_inverse=True)
    return inv, len(cases)


def _profile(gamma, X, y, groups, n_groups, want_cov=False):
    """ML profile log-likelihood of the random-intercept model at ratio gamma = sigma_u^2 / sigma^2.

    V / sigma^2 is block diagonal: I + gamma J in each group, with inverse
    I - gamma / (1 + gamma n_g) J.
    """
    n = len(y)
    ng = np.bincount(groups, minlength=n_groups).astype(float)
    c = gamma / (1.0 + gamma * ng)

    def vinv(A):
        sums = np.zeros((n_groups,) + A.shape[1:])
        np.add.at(sums, groups, A)
        return A - (c[:, None] * sums)[groups] if A.ndim == 2 else A - (c * sums)[groups]

    ViX = vinv(X)
    Viy = vinv(y)
    XtViX = X.T @ ViX
    beta = np.linalg.solve(XtViX, X.T @ Viy)
    r = y - X @ beta
    q = float(r @ vinv(r))
    sigma2 = q / n
    logdet = float(np.sum(np.log1p(gamma * ng)))
    ll = -0.5 * (n * np.log(2 * np.pi * sigma2) + logdet + n)
    if want_cov:
        return ll, beta, sigma2, sigma2 * np.linalg.inv(XtViX)
    return ll, beta, sigma2


def fit_lmm(table: CohortTable, response: str, covariate: str, reference: str = REFERENCE_REGION) -> LmmFit:
    """Maximum-likelihood random-intercept model ``y ~ region + covariate + (1 | case)``.

    The variance ratio is profiled on a bounded log scale; fixed effects are
    generalised least squares at the optimum.

    Raises
    ------
    IdentifiabilityError
        If the fixed-effect design is rank-deficient or there are fewer than two cases.
    """
    X, names = design_matrix(table, covariate, reference)
    y = np.asarray(table.columns[response], dtype=float)
    groups, n_groups = _group_index(table.case_id)
    if n_groups < 2:
        raise IdentifiabilityError("need at least two cases")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise IdentifiabilityError("fixed-effect design is singular (is the covariate constant?)")

    def nll(t):
        return -_profile(np.exp(t), X, y, groups, n_groups)[0]

    grid = np.linspace(-12.0, 8.0, 41)
    vals = [nll(t) for t in grid]
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(nll, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    t_best, converged = float(res.x), bool(res.success)
    ll0 = _profile(0.0, X, y, groups, n_groups)[0]
    if ll0 >= -res.fun:
        gamma = 0.0  # boundary optimum
    else:
        gamma = float(np.exp(t_best))
    ll, beta, sigma2, cov = _profile(gamma, X, y, groups, n_groups, want_cov=True)
    se = np.sqrt(np.diag(cov))
    z = beta / se
    p = 2.0 * stats.norm.sf(np.abs(z))
    return LmmFit(tuple(names), beta, se, p, gamma * sigma2, sigma2, float(ll), converged)


def wald_test(fit: LmmFit, coefficient: str) -> float:
    """Two-sided normal p-value for one fixed effect."""
    i = fit.names.index(coefficient)
    if not fit.se[i] > 0:
        raise DegenerateTestError(f"standard error of {coefficient} is zero")
    return wald_p(fit.beta[i] / fit.se[i])


def wald_p(z: float) -> float:
    return float(min(1.0, 2.0 * stats.norm.sf(abs(z))))


@dataclass(frozen=True)
class PairedTest:
    pair: tuple[str, str]
    t: float
    df: int
    p_raw: float
    p_adjusted: float


def paired_ttest_bonferroni(matrix, regions: Sequence[str], comparisons: Sequence[tuple[str, str]] | None = None):
    """Paired t-tests between region columns with Bonferroni adjustment.

    ``matrix`` is cases x regions.  Cases with a missing value in either
    column of a pair are dropped for that pair.
    """
    M = np.asarray(matrix, dtype=float)
    regions = list(regions)
    if comparisons is None:
        comparisons = list(itertools.combinations(regions, 2))
    k = len(comparisons)
    out = []
    for a, b in comparisons:
        d = M[:, regions.index(a)] - M[:, regions.index(b)]
        d = d[np.isfinite(d)]
        if len(d) < 2:
            raise DegenerateTestError(f"fewer than two paired cases for {a} vs {b}")
        sd = d.std(ddof=1)
        if sd == 0.0:
            if np.all(d == 0.0):
                out.append(PairedTest((a, b), 0.0, len(d) - 1, 1.0, 1.0))
                continue
            raise DegenerateTestError(f"differences {a} - {b} have zero variance")
        t = d.mean() / (sd / np.sqrt(len(d)))
        p = float(2.0 * stats.t.sf(abs(t), len(d) - 1))
        out.append(PairedTest((a, b), float(t), len(d) - 1, p, min(1.0, p * k)))
    return out


def stats_report(table: CohortTable, response: str = "d_es_mm",
                 covariates: Sequence[str] = ("thickness_mm", "eat_ml", "alpha")) -> dict:
    """Mixed models per covariate plus paired regional tests on the response."""
    report = {"response": response, "reference_region": REFERENCE_REGION, "models": {}, "paired_tests": []}
    for cov in covariates:
        if cov not in table.columns:
            continue
        try:
            report["models"][cov] = fit_lmm(table, response, cov).as_dict()
        except IdentifiabilityError as exc:
            report["models"][cov] = {"error": str(exc)}
    try:
        tests = paired_ttest_bonferroni(table.wide(response), FEATURE_REGIONS)
        report["paired_tests"] = [
            {"pair": list(t.pair), "t": t.t, "df": t.df, "p_raw": t.p_raw, "p_bonferroni": t.p_adjusted}
            for t in tests
        ]
    except DegenerateTestError as exc:
        report["paired_tests"] = {"error": str(exc)}
    return report


def write_stats_report(report: dict, path, header: dict | None = None) -> None:
    data = dict(header or {})
    data.update(report)
    Path(path).write_text(json.dumps(data, indent=2))
