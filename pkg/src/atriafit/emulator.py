"""Gaussian process emulators with a linear mean and squared-exponential kernel.

Each emulator models one scalar output.  Inputs are mapped to the unit
cube using the supplied bounds (optionally on a log scale per input) and
outputs are standardised.  The mean coefficients and the signal variance
are profiled out of the likelihood in closed form, so the numerical
search runs over the log lengthscales and, when enabled, the log nugget.
Predictions use plug-in hyperparameters.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg, optimize

from .errors import FitError, FoldSizeError, ShapeError, UndefinedScoreError

log = logging.getLogger(__name__)

FORMAT_VERSION = "atriafit-gpe/1"
_SIGMA2_FLOOR = 1e-12  # in standardised output units


@dataclass(frozen=True)
class EmulatorConfig:
    """Fitting options.

    ``learn_nugget`` adds a fitted diagonal term (relative to the signal
    variance) that absorbs simulator roughness; without it the emulator
    interpolates and only the factorisation jitter sits on the diagonal.
    ``log_inputs`` selects inputs normalised on a log scale.
    """

    n_restarts: int = 8
    lengthscale_bounds: tuple[float, float] = (1e-2, 1e2)
    jitter_start: float = 1e-10
    jitter_max: float = 1e-4
    seed: int = 0
    max_iter: int = 200
    initial_lengthscales: tuple[float, ...] | None = None  # first start; others are random
    learn_nugget: bool = False
    nugget_bounds: tuple[float, float] = (1e-8, 1e3)
    log_inputs: tuple[bool, ...] | None = None


@dataclass(frozen=True, eq=False)
class Emulator:
    """A fitted emulator.  Immutable; ``predict`` is reentrant."""

    input_names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    beta: np.ndarray  # standardised units, basis [1, u_1..u_d] on the unit cube
    sigma_f2: float  # standardised units
    lengthscales: np.ndarray  # unit-cube units
    jitter: float  # total diagonal term (nugget plus any escalation), relative to sigma_f2
    X: np.ndarray  # training inputs on the unit cube
    y: np.ndarray  # standardised training outputs
    y_mean: float
    y_scale: float
    log_marginal_likelihood: float = float("nan")
    log_inputs: np.ndarray | None = None
    _chol: np.ndarray = field(default=None, repr=False)
    _alpha: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not self.sigma_f2 > 0:
            raise FitError("signal variance must be positive")
        if np.any(self.lengthscales <= 0):
            raise FitError("lengthscales must be positive")
        if self.log_inputs is None:
            object.__setattr__(self, "log_inputs", np.zeros(len(self.lower), dtype=bool))
        if self._chol is None:
            R = _correlation(self.X, self.X, self.lengthscales)
            R[np.diag_indices_from(R)] += self.jitter
            L = linalg.cholesky(R, lower=True)
            resid = self.y - _basis(self.X, len(self.beta)) @ self.beta
            object.__setattr__(self, "_chol", L)
            object.__setattr__(self, "_alpha", linalg.cho_solve((L, True), resid))

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_train(self) -> int:
        return self.X.shape[0]

    @property
    def signal_variance(self) -> float:
        """Kernel variance in output units."""
        return self.sigma_f2 * self.y_scale**2

    def normalise(self, X) -> np.ndarray:
        return _to_unit(X, self.lower, self.upper, self.log_inputs)


@dataclass(frozen=True)
class Prediction:
    mean: np.ndarray
    variance: np.ndarray
    extrapolated: np.ndarray  # bool per point

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(self.variance)


def _to_unit(X, lower, upper, log_mask) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if log_mask is None or not np.any(log_mask):
        return (X - lower) / (upper - lower)
    lo = np.where(log_mask, np.log(np.where(log_mask, lower, 1.0)), lower)
    hi = np.where(log_mask, np.log(np.where(log_mask, upper, 1.0)), upper)
    with np.errstate(invalid="ignore", divide="ignore"):
        Z = np.where(log_mask, np.log(np.where(log_mask, np.maximum(X, 1e-300), 1.0)), X)
    return (Z - lo) / (hi - lo)


def _basis(U: np.ndarray, q: int) -> np.ndarray:
    H = np.ones((U.shape[0], q))
    if q > 1:
        H[:, 1:] = U
    return H


def _correlation(A: np.ndarray, B: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    a = A / lengthscales
    b = B / lengthscales
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.exp(-np.maximum(d2, 0.0))


class _Profile:
    """Profile log marginal likelihood over log lengthscales (and log nugget)."""

    def __init__(self, U, y, q, cfg: EmulatorConfig):
        self.U, self.y, self.q, self.cfg = U, y, q, cfg
        self.H = _basis(U, q)
        self.diff2 = (U[:, None, :] - U[None, :, :]) ** 2  # n x n x d
        self.n = len(y)
        self.d = U.shape[1]

    def split(self, theta):
        ell = np.exp(theta[:self.d])
        nugget = float(np.exp(theta[self.d])) if self.cfg.learn_nugget else 0.0
        return ell, nugget

    def factor(self, ell, nugget):
        R = np.exp(-(self.diff2 / (ell * ell)).sum(-1))
        extra = self.cfg.jitter_start
        while extra <= self.cfg.jitter_max * (1 + 1e-9):
            diag = nugget + extra
            Rj = R.copy()
            Rj[np.diag_indices_from(Rj)] += diag
            try:
                return R, linalg.cholesky(Rj, lower=True), diag
            except linalg.LinAlgError:
                extra *= 10.0
        return R, None, None

    def solve(self, ell, nugget=0.0):
        R, L, diag = self.factor(ell, nugget)
        if L is None:
            return None
        RiH = linalg.cho_solve((L, True), self.H)
        Riy = linalg.cho_solve((L, True), self.y)
        beta = linalg.solve(self.H.T @ RiH, self.H.T @ Riy, assume_a="pos")
        resid = self.y - self.H @ beta
        a = linalg.cho_solve((L, True), resid)
        s2_raw = float(resid @ a) / self.n
        s2 = max(s2_raw, _SIGMA2_FLOOR)
        logdet = 2.0 * np.log(np.diag(L)).sum()
        lml = -0.5 * self.n * np.log(s2) - 0.5 * logdet - 0.5 * self.n * (np.log(2 * np.pi) + 1.0)
        return dict(R=R, L=L, jitter=diag, beta=beta, a=a, s2=s2, floored=s2_raw < _SIGMA2_FLOOR, lml=lml)

    def objective(self, theta):
        ell, nugget = self.split(theta)
        try:
            s = self.solve(ell, nugget)
        except (linalg.LinAlgError, FloatingPointError, ValueError):
            s = None
        if s is None or not np.isfinite(s["lml"]):
            return np.inf, np.zeros_like(theta)
        Rinv = linalg.cho_solve((s["L"], True), np.eye(self.n))
        grad = np.empty_like(theta)
        w = (0.0 if s["floored"] else 1.0 / s["s2"]) * np.outer(s["a"], s["a"]) - Rinv
        for k in range(self.d):
            dR = s["R"] * (2.0 * self.diff2[:, :, k] / ell[k] ** 2)
            grad[k] = 0.5 * np.sum(w * dR)
        if self.cfg.learn_nugget:
            grad[self.d] = 0.5 * nugget * np.trace(w)
        return -s["lml"], -grad


def fit_gpe(X, y, config: EmulatorConfig | None = None, bounds=None,
            input_names: Sequence[str] | None = None) -> Emulator:
    """Fit one emulator by multi-start maximisation of the marginal likelihood.

    Parameters
    ----------
    X : (n, d) array
        Design in physical units.
    y : (n,) array
        Outputs.
    config : EmulatorConfig, optional
    bounds : (2, d) array-like, optional
        Lower and upper input bounds used for normalisation.  Defaults to
        the design's range.
    input_names : sequence of str, optional

    Raises
    ------
    FitError
        On a rank-deficient design, non-finite outputs, or if every start fails.
    """
    cfg = config or EmulatorConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if len(y) != n:
        raise ShapeError(f"X has {n} rows but y has {len(y)} entries")
    if n == 0 or d == 0:
        raise FitError("empty design")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise FitError("non-finite training data")
    if n < 10 * d:
        warnings.warn(f"{n} training points for {d} inputs (at least {10 * d} recommended)", stacklevel=2)
    if bounds is None:
        lower, upper = X.min(0), X.max(0)
        span = upper - lower
        upper = np.where(span > 0, upper, lower + 1.0)
    else:
        lower, upper = (np.asarray(b, dtype=float) for b in bounds)
    if lower.shape != (d,) or upper.shape != (d,) or np.any(upper <= lower):
        raise FitError("bounds must give lower < upper for every input")
    log_mask = np.zeros(d, dtype=bool) if cfg.log_inputs is None else np.asarray(cfg.log_inputs, dtype=bool)
    if log_mask.shape != (d,):
        raise ShapeError("log_inputs must flag every input")
    if np.any(log_mask & (lower <= 0)):
        raise FitError("log-scaled inputs need positive bounds")
    names = tuple(input_names) if input_names is not None else tuple(f"x{i}" for i in range(d))
    if len(names) != d:
        raise ShapeError("input_names length does not match design width")

    U = _to_unit(X, lower, upper, log_mask)
    y_mean = float(y.mean())
    y_scale = float(y.std())
    if not y_scale > 0:
        y_scale = 1.0
    ys = (y - y_mean) / y_scale

    # A linear trend needs more than d + 1 points to leave any residual;
    # smaller designs fall back to a constant mean.
    q = d + 1
    if n <= d + 1:
        q = 1
    elif np.linalg.matrix_rank(_basis(U, q)) < q:
        raise FitError("rank-deficient design: the linear mean basis is not identifiable")

    prof = _Profile(U, ys, q, cfg)
    lo, hi = np.log(cfg.lengthscale_bounds[0]), np.log(cfg.lengthscale_bounds[1])
    bnds = [(lo, hi)] * d
    rng = np.random.default_rng(cfg.seed)
    first = np.zeros(d)
    if cfg.initial_lengthscales is not None:
        first = np.clip(np.log(np.asarray(cfg.initial_lengthscales, dtype=float)), lo, hi)
    starts = [first] + [rng.uniform(np.log(0.1), np.log(10.0), d) for _ in range(cfg.n_restarts - 1)]
    if cfg.learn_nugget:
        glo, ghi = np.log(cfg.nugget_bounds[0]), np.log(cfg.nugget_bounds[1])
        bnds.append((glo, ghi))
        starts = [np.append(s, np.log(1e-3) if i == 0 else rng.uniform(glo, np.log(1e-1)))
                  for i, s in enumerate(starts)]
    best = None
    for theta0 in starts:
        f0, _ = prof.objective(theta0)
        if not np.isfinite(f0):
            continue
        res = optimize.minimize(prof.objective, theta0, jac=True, method="L-BFGS-B",
                                bounds=bnds, options={"maxiter": cfg.max_iter})
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitError("likelihood was non-finite from every start")
    ell, nugget = prof.split(best.x)
    s = prof.solve(ell, nugget)
    return Emulator(
        input_names=names, lower=lower, upper=upper, beta=s["beta"], sigma_f2=s["s2"],
        lengthscales=ell, jitter=s["jitter"], X=U, y=ys, y_mean=y_mean, y_scale=y_scale,
        log_marginal_likelihood=float(s["lml"] - n * np.log(y_scale)), log_inputs=log_mask,
        _chol=s["L"], _alpha=s["a"],
    )


def predict(em: Emulator, X_star, chunk: int = 2048) -> Prediction:
    """Posterior mean and variance in output units.

    The variance includes the diagonal term, so with a fitted nugget it
    describes a new simulator run rather than the smooth latent trend.
    """
    Xs = np.atleast_2d(np.asarray(X_star, dtype=float))
    if Xs.shape[1] != em.dim:
        raise ShapeError(f"expected {em.dim} input columns, got {Xs.shape[1]}")
    U = em.normalise(Xs)
    extrap = np.any((U < -1e-9) | (U > 1 + 1e-9), axis=1)
    if np.any(extrap):
        log.debug("%d of %d prediction points lie outside the emulator bounds", extrap.sum(), len(U))
    mean = np.empty(len(U))
    var = np.empty(len(U))
    q = len(em.beta)
    for s in range(0, len(U), chunk):
        u = U[s:s + chunk]
        r = _correlation(u, em.X, em.lengthscales)
        mean[s:s + chunk] = _basis(u, q) @ em.beta + r @ em._alpha
        v = linalg.solve_triangular(em._chol, r.T, lower=True)
        var[s:s + chunk] = em.sigma_f2 * np.maximum(1.0 + em.jitter - (v * v).sum(0), 0.0)
    return Prediction(mean * em.y_scale + em.y_mean, var * em.y_scale**2, extrap)


def predict_many(emulators: Sequence[Emulator], X_star) -> tuple[np.ndarray, np.ndarray]:
    """Stacked means and variances, shape (n_points, n_emulators)."""
    preds = [predict(em, X_star) for em in emulators]
    return np.column_stack([p.mean for p in preds]), np.column_stack([p.variance for p in preds])


def r2_score(pred_means, y) -> float:
    """Coefficient of determination ``1 - RSS/TSS``."""
    m = np.asarray(pred_means, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if len(y) < 2 or len(m) != len(y):
        raise ShapeError("r2 needs at least two aligned points")
    tss = float(((y - y.mean()) ** 2).sum())
    if tss == 0.0:
        raise UndefinedScoreError("total sum of squares is zero")
    return 1.0 - float(((y - m) ** 2).sum()) / tss


def ise_score(preds: Prediction, y) -> float:
    """Fraction of points whose error is under two predictive sd."""
    y = np.asarray(y, dtype=float).ravel()
    return float(np.mean(np.abs(preds.mean - y) < 2.0 * np.sqrt(preds.variance)))


@dataclass(frozen=True)
class CrossValidation:
    folds: tuple[np.ndarray, ...]  # held-out row indices
    r2: np.ndarray
    ise: np.ndarray

    @property
    def mean_r2(self) -> float:
        return float(self.r2.mean())

    @property
    def mean_ise(self) -> float:
        return float(self.ise.mean())


def kfold_indices(n: int, k_folds: int, seed: int) -> list[np.ndarray]:
    if n < k_folds:
        raise FoldSizeError(f"{n} points cannot fill {k_folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    folds = [np.sort(f) for f in np.array_split(perm, k_folds)]
    if min(len(f) for f in folds) < 2:
        raise FoldSizeError("every fold needs at least two held-out points")
    return folds


def cross_validate(X, y, k_folds: int = 5, config: EmulatorConfig | None = None, bounds=None,
                   seed: int = 0) -> CrossValidation:
    """k-fold R2 and ISE with a seeded fold assignment."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    folds = kfold_indices(len(y), k_folds, seed)
    r2, ise = [], []
    for test in folds:
        train = np.setdiff1d(np.arange(len(y)), test)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            em = fit_gpe(X[train], y[train], config, bounds=bounds)
        p = predict(em, X[test])
        r2.append(r2_score(p.mean, y[test]))
        ise.append(ise_score(p, y[test]))
    return CrossValidation(tuple(folds), np.array(r2), np.array(ise))


# ----------------------------------------------------------------------------
# serialisation


def _floats(a) -> list:
    return [float(v) for v in np.ravel(a)]


def emulator_to_dict(em: Emulator) -> dict:
    return {
        "format": FORMAT_VERSION,
        "input_names": list(em.input_names),
        "lower": _floats(em.lower),
        "upper": _floats(em.upper),
        "beta": _floats(em.beta),
        "sigma_f2": float(em.sigma_f2),
        "lengthscales": _floats(em.lengthscales),
        "jitter": float(em.jitter),
        "y_mean": em.y_mean,
        "y_scale": em.y_scale,
        "log_marginal_likelihood": em.log_marginal_likelihood,
        "n_train": em.n_train,
        "log_inputs": [bool(v) for v in em.log_inputs],
        "X": _floats(em.X),
        "y": _floats(em.y),
    }


def emulator_from_dict(data: dict) -> Emulator:
    if data.get("format") != FORMAT_VERSION:
        raise FitError(f"unsupported emulator format {data.get('format')!r}")
    d = len(data["input_names"])
    return Emulator(
        input_names=tuple(data["input_names"]),
        lower=np.array(data["lower"]), upper=np.array(data["upper"]),
        beta=np.array(data["beta"]), sigma_f2=float(data["sigma_f2"]),
        lengthscales=np.array(data["lengthscales"]), jitter=float(data["jitter"]),
        X=np.array(data["X"]).reshape(int(data["n_train"]), d), y=np.array(data["y"]),
        y_mean=float(data["y_mean"]), y_scale=float(data["y_scale"]),
        log_marginal_likelihood=float(data["log_marginal_likelihood"]),
        log_inputs=np.array(data.get("log_inputs", [False] * d), dtype=bool),
    )


def save_emulator(em: Emulator, path) -> None:
    """Write JSON text; floats use shortest round-trip repr, so reloading is exact."""
    Path(path).write_text(json.dumps(emulator_to_dict(em), indent=1))


def load_emulator(path) -> Emulator:
    return emulator_from_dict(json.loads(Path(path).read_text()))
