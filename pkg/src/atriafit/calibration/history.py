"""Implausibility and wave-based history matching."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..emulator import Emulator, EmulatorConfig, cross_validate, fit_gpe, predict_many
from ..errors import EmptyNroyError, FitError, StageError
from ..mechanics import FEATURE_NAMES
from .space import Observation, ParameterSpace, maximin_select, sample_region, sobol_design

log = logging.getLogger(__name__)


def emulator_moments(emulators, X) -> tuple[np.ndarray, np.ndarray]:
    """Means and variances, shape (n_points, n_features).

    ``emulators`` is a sequence of fitted emulators, or any object with a
    ``moments(X)`` method returning the same pair (used for injected oracles).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if hasattr(emulators, "moments"):
        m, v = emulators.moments(X)
        return np.atleast_2d(m), np.atleast_2d(v)
    return predict_many(emulators, X)


def implausibility_from_moments(means, variances, obs: Observation, per_feature: bool = False):
    z = np.abs(means - obs.mean) / np.sqrt(variances + obs.sd**2)
    return z if per_feature else z.max(axis=1)


def implausibility(x, emulators, obs: Observation, per_feature: bool = False):
    """``I(x) = max_i |E f_i(x) - mu_i| / sqrt(Var f_i(x) + sigma_i^2)``.

    Returns a float for a single point and an array for a batch.
    """
    single = np.ndim(x) == 1
    m, v = emulator_moments(emulators, x)
    out = implausibility_from_moments(m, v, obs, per_feature)
    return out[0] if single else out


@dataclass(frozen=True)
class _Criterion:
    emulators: object
    obs: Observation
    threshold: float


@dataclass(frozen=True, eq=False)
class NroyCloud:
    """Non-implausible region after a wave.

    Points and the bounding box are in unit-cube coordinates of ``space``.
    Membership of a new point means passing every wave's criterion so far.
    """

    space: ParameterSpace
    wave: int
    points: np.ndarray
    threshold: float
    box_lower: np.ndarray
    box_upper: np.ndarray
    fraction_history: tuple[float, ...]  # NROY volume as a fraction of the initial box
    retained_fraction: float  # share of this wave's test points retained
    criteria: tuple = field(default=(), repr=False)

    @classmethod
    def full(cls, space: ParameterSpace) -> "NroyCloud":
        return cls(space, 0, np.zeros((0, space.dim)), np.inf, np.zeros(space.dim), np.ones(space.dim),
                   (1.0,), 1.0, ())

    @property
    def volume_fraction(self) -> float:
        return self.fraction_history[-1]

    @property
    def box_volume(self) -> float:
        return float(np.prod(self.box_upper - self.box_lower))

    def box_physical(self) -> np.ndarray:
        return np.vstack([self.space.to_physical(self.box_lower), self.space.to_physical(self.box_upper)])

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        ok = self.space.contains(X)
        for c in self.criteria:
            if not np.any(ok):
                break
            idx = np.flatnonzero(ok)
            ok[idx] = implausibility(X[idx], c.emulators, c.obs) <= c.threshold
        return ok


def hm_wave(cloud_or_space, emulators, obs: Observation, threshold: float, n_test: int = 20000,
            n_simul: int = 100, seed: int = 0):
    """Classify a test design and pick the next batch of simulations.

    Returns
    -------
    (NroyCloud, ndarray)
        The new cloud and the ``n_simul`` (or fewer) next-wave points in
        physical units.

    Raises
    ------
    EmptyNroyError
        If no test point passes ``threshold``.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    prior = cloud_or_space if isinstance(cloud_or_space, NroyCloud) else NroyCloud.full(cloud_or_space)
    space = prior.space
    X, acceptance = sample_region(prior, n_test, seed)
    I = implausibility(X, emulators, obs)
    keep = I <= threshold
    if not np.any(keep):
        raise EmptyNroyError(
            f"no non-implausible points at threshold {threshold} (min I = {I.min():.3g})")
    U = space.to_unit(X[keep])
    volume = prior.box_volume * acceptance * float(keep.mean())
    cloud = NroyCloud(
        space=space, wave=prior.wave + 1, points=U, threshold=float(threshold),
        box_lower=U.min(0), box_upper=U.max(0),
        fraction_history=prior.fraction_history + (volume,),
        retained_fraction=float(keep.mean()),
        criteria=prior.criteria + (_Criterion(emulators, obs, float(threshold)),),
    )
    chosen = maximin_select(U, n_simul)
    return cloud, space.to_physical(U[chosen])


@dataclass(frozen=True)
class HMSchedule:
    first_threshold: float = 3.5
    threshold_step: float = 0.5
    final_threshold: float = 3.0
    n_first: int = 200
    n_later: int = 100
    n_test: int = 20000
    max_waves: int = 5
    stop_reduction: float = 0.01
    cv_folds: int = 5
    seed: int = 0

    def threshold(self, wave: int) -> float:
        return max(self.first_threshold - self.threshold_step * (wave - 1), self.final_threshold)


@dataclass
class WaveRecord:
    wave: int
    design: np.ndarray  # physical, this wave's simulations
    outputs: np.ndarray  # NaN rows for failed simulations
    emulators: list
    cloud: NroyCloud
    next_design: np.ndarray
    metrics: dict


@dataclass
class HistoryMatchingResult:
    space: ParameterSpace
    waves: list[WaveRecord]
    X: np.ndarray  # all simulated inputs
    Y: np.ndarray

    @property
    def cloud(self) -> NroyCloud:
        return self.waves[-1].cloud

    @property
    def emulators(self) -> list:
        return self.waves[-1].emulators

    @property
    def final_wave_ids(self) -> np.ndarray:
        """Row indices into ``X`` of the last wave's successful simulations."""
        n_last = len(self.waves[-1].design)
        ids = np.arange(len(self.X) - n_last, len(self.X))
        return ids[np.all(np.isfinite(self.Y[ids]), axis=1)]


def train_emulators(space: ParameterSpace, X, Y, config: EmulatorConfig | None = None,
                    previous: Sequence[Emulator] | None = None, seed: int = 0) -> list[Emulator]:
    """One emulator per feature column, on rows with finite outputs."""
    cfg = config or EmulatorConfig()
    if cfg.log_inputs is None:
        cfg = replace(cfg, log_inputs=space.log_mask)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    ok = np.all(np.isfinite(Y), axis=1)
    if ok.sum() < 2:
        raise FitError(f"only {int(ok.sum())} successful simulations to train on")
    out = []
    for j in range(Y.shape[1]):
        c = replace(cfg, seed=seed * 100 + j)
        if previous is not None:
            c = replace(c, initial_lengthscales=tuple(previous[j].lengthscales))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out.append(fit_gpe(X[ok], Y[ok, j], c, bounds=space.bounds, input_names=space.names))
    return out


def emulator_cv(space, X, Y, emulators, folds: int, seed: int, config: EmulatorConfig | None = None) -> dict:
    """Per-feature mean CV R2 and ISE, warm-started at the full-data lengthscales."""
    ok = np.all(np.isfinite(Y), axis=1)
    base = config or EmulatorConfig()
    if base.log_inputs is None:
        base = replace(base, log_inputs=space.log_mask)
    scores = {}
    for j, em in enumerate(emulators):
        cfg = replace(base, n_restarts=1, initial_lengthscales=tuple(em.lengthscales), seed=seed)
        cv = cross_validate(X[ok], Y[ok, j], folds, cfg, bounds=space.bounds, seed=seed)
        scores[f"r2_{FEATURE_NAMES[j]}"] = cv.mean_r2
        scores[f"ise_{FEATURE_NAMES[j]}"] = cv.mean_ise
    return scores


def run_history_matching(space: ParameterSpace, simulator: Callable[[np.ndarray], np.ndarray],
                         obs: Observation, schedule: HMSchedule | None = None,
                         emulator_config: EmulatorConfig | None = None,
                         on_wave: Callable[[WaveRecord], None] | None = None) -> HistoryMatchingResult:
    """Simulate, train on all data so far, classify, repeat.

    ``simulator`` maps an (n, d) physical design to an (n, 7) feature
    array, with NaN rows for failed runs.  Stops when a wave at the final
    threshold shrinks the NROY volume by less than ``stop_reduction``
    (relative), or at ``max_waves``.
    """
    sch = schedule or HMSchedule()
    cloud = NroyCloud.full(space)
    design = sobol_design(space, sch.n_first, seed=sch.seed)
    X_all = np.zeros((0, space.dim))
    Y_all = np.zeros((0, len(FEATURE_NAMES)))
    waves: list[WaveRecord] = []
    emulators = None
    for k in range(1, sch.max_waves + 1):
        try:
            Y = np.asarray(simulator(design), dtype=float)
            X_all = np.vstack([X_all, design])
            Y_all = np.vstack([Y_all, Y])
            emulators = train_emulators(space, X_all, Y_all, emulator_config, emulators, seed=sch.seed + k)
            thr = sch.threshold(k)
            new_cloud, next_design = hm_wave(cloud, emulators, obs, thr, sch.n_test, sch.n_later,
                                             seed=sch.seed + 1000 * k)
        except EmptyNroyError:
            raise
        except Exception as exc:
            raise StageError(f"history matching wave {k}: {exc}", stage="hm") from exc
        reduction = 1.0 - new_cloud.volume_fraction / cloud.volume_fraction
        metrics = {
            "wave": k,
            "threshold": thr,
            "n_simulated": len(design),
            "n_failed": int((~np.all(np.isfinite(Y), axis=1)).sum()),
            "n_train": int(np.all(np.isfinite(Y_all), axis=1).sum()),
            "retained_fraction": new_cloud.retained_fraction,
            "nroy_volume_fraction": new_cloud.volume_fraction,
            "reduction_vs_previous": reduction,
        }
        if sch.cv_folds:
            metrics.update(emulator_cv(space, X_all, Y_all, emulators, sch.cv_folds, sch.seed + k, emulator_config))
        rec = WaveRecord(k, design, Y, emulators, new_cloud, next_design, metrics)
        waves.append(rec)
        log.info("wave %d: threshold %.2f, NROY %.4g of box", k, thr, new_cloud.volume_fraction)
        if on_wave is not None:
            on_wave(rec)
        cloud, design = new_cloud, next_design
        if thr <= sch.final_threshold and k > 1 and reduction < sch.stop_reduction:
            break
    return HistoryMatchingResult(space, waves, X_all, Y_all)
