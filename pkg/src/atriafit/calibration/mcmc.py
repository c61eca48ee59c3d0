"""Likelihood, affine-invariant ensemble sampling, MAP and nearest simulation."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import DegenerateEnsembleError
from .history import NroyCloud, emulator_moments, implausibility_from_moments
from .space import Observation, ParameterPoint, ParameterSpace

log = logging.getLogger(__name__)


def log_likelihood_from_moments(means, variances, obs: Observation) -> np.ndarray:
    s2 = variances + obs.sd**2
    return (-0.5 * np.log(2.0 * np.pi * s2) - (obs.mean - means) ** 2 / (2.0 * s2)).sum(axis=1)


def log_likelihood(x, emulators, obs: Observation):
    """Gaussian log density of the targets with emulator variance added to the noise."""
    single = np.ndim(x) == 1
    m, v = emulator_moments(emulators, x)
    out = log_likelihood_from_moments(m, v, obs)
    return out[0] if single else out


def stretch_acceptance(z: float, d: int, log_p_new: float, log_p_old: float) -> float:
    """Metropolis acceptance probability of a stretch move."""
    if not np.isfinite(log_p_new):
        return 0.0
    return float(min(1.0, np.exp(min(0.0, (d - 1) * np.log(z) + log_p_new - log_p_old))))


def sample_stretch(rng, n: int, a: float = 2.0) -> np.ndarray:
    """Draws from g(z) proportional to 1/sqrt(z) on [1/a, a] by inversion."""
    return ((a - 1.0) * rng.random(n) + 1.0) ** 2 / a


@dataclass(frozen=True, eq=False)
class Chain:
    names: tuple[str, ...]
    walkers: int
    steps: int
    burn_in: int
    thin: int
    samples: np.ndarray  # (n_kept, walkers, d), physical units
    log_posterior: np.ndarray  # (n_kept, walkers)
    kept_steps: np.ndarray  # step number of each kept row
    acceptance_fraction: float
    space: ParameterSpace | None = None

    @property
    def flat_samples(self) -> np.ndarray:
        return self.samples.reshape(-1, self.samples.shape[-1])

    @property
    def flat_log_posterior(self) -> np.ndarray:
        return self.log_posterior.ravel()

    def credible_intervals(self, level: float = 0.95) -> np.ndarray:
        q = 50.0 * (1.0 - level)
        return np.percentile(self.flat_samples, [q, 100.0 - q], axis=0)


def stretch_sampler(log_prob: Callable[[np.ndarray], np.ndarray], p0, steps: int, burn_in: int = 0,
                    thin: int = 1, seed: int = 0, a: float = 2.0, names=None,
                    space: ParameterSpace | None = None) -> Chain:
    """Affine-invariant ensemble sampler with the stretch move.

    ``log_prob`` is vectorised over rows.  The ensemble is split into two
    halves; each half is updated using the other half's current state.
    Rows ``burn_in, burn_in + thin, ...`` of the trajectory are kept.
    """
    rng = np.random.default_rng(seed)
    X = np.array(p0, dtype=float)
    W, d = X.shape
    if W < 2 * d:
        raise ValueError(f"{W} walkers cannot span {d} dimensions (need at least {2 * d})")
    if W < 2 * d + 2:
        warnings.warn(f"{W} walkers for {d} dimensions; 2d+2 = {2 * d + 2} is recommended", stacklevel=2)
    if np.allclose(X, X[0]):
        raise DegenerateEnsembleError("all walkers start at the same point")
    lp = np.asarray(log_prob(X), dtype=float)
    if not np.all(np.isfinite(lp)):
        raise DegenerateEnsembleError("initial walkers lie outside the posterior support")
    if not 0 <= burn_in < steps:
        raise ValueError("need 0 <= burn_in < steps")
    halves = (np.arange(W // 2), np.arange(W // 2, W))
    n_keep = len(range(burn_in, steps, thin))
    samples = np.empty((n_keep, W, d))
    lps = np.empty((n_keep, W))
    kept = np.empty(n_keep, dtype=int)
    accepted = 0
    row = 0
    for t in range(steps):
        for h in (0, 1):
            S, other = halves[h], halves[1 - h]
            z = sample_stretch(rng, len(S), a)
            partners = X[other[rng.integers(0, len(other), len(S))]]
            Y = partners + z[:, None] * (X[S] - partners)
            lpY = np.asarray(log_prob(Y), dtype=float)
            with np.errstate(invalid="ignore"):
                log_r = (d - 1) * np.log(z) + lpY - lp[S]
            acc = np.isfinite(lpY) & (np.log(rng.random(len(S))) < log_r)
            X[S[acc]] = Y[acc]
            lp[S[acc]] = lpY[acc]
            accepted += int(acc.sum())
        if t >= burn_in and (t - burn_in) % thin == 0:
            samples[row], lps[row], kept[row] = X, lp, t
            row += 1
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(d))
    return Chain(names, W, steps, burn_in, thin, samples, lps, kept, accepted / (W * steps), space)


def calibration_log_posterior(cloud: NroyCloud, emulators, obs: Observation, support_threshold: float = 3.0):
    """Uniform prior on the cloud's bounding box, restricted to ``I <= support_threshold``."""
    space = cloud.space
    box = cloud.box_physical()
    log_prior = -float(np.sum(np.log(box[1] - box[0])))

    def log_post(X):
        X = np.atleast_2d(X)
        out = np.full(len(X), -np.inf)
        inside = np.all((X >= box[0]) & (X <= box[1]), axis=1) & space.contains(X)
        if np.any(inside):
            m, v = emulator_moments(emulators, X[inside])
            ok = implausibility_from_moments(m, v, obs) <= support_threshold
            ll = log_likelihood_from_moments(m, v, obs)
            out[np.flatnonzero(inside)[ok]] = ll[ok] + log_prior
        return out

    return log_post


def ensemble_mcmc(cloud: NroyCloud, emulators, obs: Observation, walkers: int = 18, steps: int = 20000,
                  burn_in: int = 2000, thin: int = 10, seed: int = 0, support_threshold: float = 3.0) -> Chain:
    """Posterior sampling over the final NROY region.

    Walkers start at distinct retained NROY points chosen at random; the
    prior is uniform over the NROY bounding box with support ``I <= 3``.
    """
    space = cloud.space
    log_post = calibration_log_posterior(cloud, emulators, obs, support_threshold)
    rng = np.random.default_rng(seed)
    pool = space.to_physical(cloud.points)
    lp_pool = log_post(pool)
    pool = pool[np.isfinite(lp_pool)]
    if len(pool) == 0:
        raise DegenerateEnsembleError("no retained NROY point lies in the posterior support")
    pick = rng.choice(len(pool), size=walkers, replace=len(pool) < walkers)
    return stretch_sampler(log_post, pool[pick], steps, burn_in, thin, seed=int(rng.integers(2**31)),
                           names=space.names, space=space)


def map_estimate(chain: Chain) -> ParameterPoint:
    """Stored sample with the highest log posterior (first on ties)."""
    flat = chain.flat_log_posterior
    if flat.size == 0:
        raise ValueError("empty chain")
    i = int(np.argmax(flat))
    x = chain.flat_samples[i]
    return ParameterPoint(chain.space, x.copy())


def map_log_posterior(chain: Chain) -> float:
    return float(chain.flat_log_posterior.max())


def nearest_plausible(map_point: ParameterPoint, simulated, sim_ids=None) -> tuple[int, float]:
    """Closest simulated point in unit-cube coordinates.

    Returns ``(sim_id, distance)``; ties go to the lowest id.
    """
    X = np.atleast_2d(np.asarray(simulated, dtype=float))
    if len(X) == 0:
        raise ValueError("no simulated points")
    ids = np.arange(len(X)) if sim_ids is None else np.asarray(sim_ids)
    space = map_point.space
    dist = np.sqrt(((space.to_unit(X) - map_point.unit) ** 2).sum(1))
    order = np.lexsort((ids, dist))
    return int(ids[order[0]]), float(dist[order[0]])
