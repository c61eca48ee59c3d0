"""Parameter spaces, observations and space-filling designs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from ..errors import EmptySpaceError, SparseRegionError
from ..geometry import FEATURE_REGIONS
from ..mechanics import FEATURE_NAMES, FeatureVector

C_FIXED_KPA = 1.7


@dataclass(frozen=True)
class Parameter:
    name: str
    unit: str
    lower: float
    upper: float
    scale: str = "linear"  # emulator input scaling; designs stay uniform in physical units

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"{self.name}: lower bound {self.lower} must be below upper bound {self.upper}")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"{self.name}: scale must be 'linear' or 'log'")
        if self.scale == "log" and self.lower <= 0:
            raise ValueError(f"{self.name}: log scale needs a positive lower bound")


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered, named box of simulator inputs.

    ``fixed`` holds inputs pinned outside the box (for example ``C_region``
    after the sensitivity stage); they are passed to the simulator but are
    not calibrated.
    """

    parameters: tuple[Parameter, ...]
    fixed: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    @property
    def dim(self) -> int:
        return len(self.parameters)

    @property
    def lower(self) -> np.ndarray:
        return np.array([p.lower for p in self.parameters])

    @property
    def upper(self) -> np.ndarray:
        return np.array([p.upper for p in self.parameters])

    @property
    def log_mask(self) -> tuple[bool, ...]:
        return tuple(p.scale == "log" for p in self.parameters)

    @property
    def bounds(self) -> np.ndarray:
        return np.vstack([self.lower, self.upper])

    def index(self, name: str) -> int:
        return self.names.index(name)

    def to_physical(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        return self.lower + U * (self.upper - self.lower)

    def to_unit(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return (X - self.lower) / (self.upper - self.lower)

    def contains(self, X, tol: float = 1e-12) -> np.ndarray:
        U = np.atleast_2d(self.to_unit(X))
        return np.all((U >= -tol) & (U <= 1 + tol), axis=1)

    def as_dict(self, x) -> dict[str, float]:
        """Named inputs for one point, including fixed ones."""
        out = dict(self.fixed)
        out.update({n: float(v) for n, v in zip(self.names, np.ravel(x))})
        return out

    def fix(self, values: dict[str, float]) -> "ParameterSpace":
        """Drop the named inputs from the box and pin them."""
        unknown = set(values) - set(self.names)
        if unknown:
            raise KeyError(f"unknown parameters {sorted(unknown)}")
        kept = tuple(p for p in self.parameters if p.name not in values)
        return ParameterSpace(kept, self.fixed + tuple((k, float(v)) for k, v in values.items()))

    def with_bounds(self, name: str, lower: float, upper: float) -> "ParameterSpace":
        params = tuple(Parameter(p.name, p.unit, lower, upper, p.scale) if p.name == name else p for p in self.parameters)
        return ParameterSpace(params, self.fixed)


def table1_space() -> ParameterSpace:
    """The 14 simulator inputs with their default ranges."""
    params = []
    for r in FEATURE_REGIONS:
        params.append(Parameter(f"C_{r}", "kPa", 0.2, 6.8, "log"))
        params.append(Parameter(f"alpha_{r}", "-", 0.125, 4.0, "log"))
    params += [
        Parameter("EDP", "mmHg", 1.0, 12.0),
        Parameter("ESP", "mmHg", 13.0, 37.0),
        Parameter("k_peri", "kPa/um", 1e-4, 5e-3, "log"),
        Parameter("PTH", "-", 0.5, 0.95),
    ]
    return ParameterSpace(tuple(params))


def alpha_space(C: float = C_FIXED_KPA) -> ParameterSpace:
    """The 9-input stage: regional C pinned, alpha and loading free."""
    return table1_space().fix({f"C_{r}": C for r in FEATURE_REGIONS})


@dataclass(frozen=True)
class ParameterPoint:
    space: ParameterSpace
    values: np.ndarray  # physical units

    @property
    def unit(self) -> np.ndarray:
        return self.space.to_unit(self.values)

    def as_dict(self) -> dict[str, float]:
        return self.space.as_dict(self.values)


@dataclass(frozen=True)
class Observation:
    """Targets and observation sd for the seven features."""

    mean: np.ndarray
    sd: np.ndarray
    provenance: str = "synthetic"

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        sd = np.asarray(self.sd, dtype=float)
        if mean.shape != (len(FEATURE_NAMES),) or sd.shape != mean.shape:
            raise ValueError(f"observation needs {len(FEATURE_NAMES)} means and sds")
        if np.any(sd <= 0):
            raise ValueError("observation sd must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sd", sd)

    @classmethod
    def from_features(cls, features, displacement_sd_mm: float = 0.2, esv_rel_sd: float = 0.05,
                      provenance: str = "synthetic") -> "Observation":
        f = features.as_array() if isinstance(features, FeatureVector) else np.asarray(features, dtype=float)
        sd = np.full(len(FEATURE_NAMES), float(displacement_sd_mm))
        sd[0] = esv_rel_sd * abs(f[0])
        return cls(f, sd, provenance)


# ----------------------------------------------------------------------------
# designs


def _check_n(n: int):
    if n < 1:
        raise ValueError("design size must be at least 1")


def sobol_design(space: ParameterSpace, n: int, seed: int = 0) -> np.ndarray:
    """Scrambled Sobol points scaled to the box, shape (n, d)."""
    _check_n(n)
    if space.dim == 0:
        raise EmptySpaceError("parameter space has no free inputs")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # balance warning for non powers of two
        U = qmc.Sobol(space.dim, scramble=True, seed=seed).random(n)
    return space.to_physical(U)


def _lhs_unit(d: int, n: int, rng) -> np.ndarray:
    return qmc.LatinHypercube(d, seed=rng).random(n)


def lhs_design(space_or_cloud, n: int, seed: int = 0, max_draw_factor: int = 200) -> np.ndarray:
    """Latin hypercube design over a box, or over an NROY cloud's bounding box.

    For a cloud, strata are laid over its bounding box and draws outside
    the cloud (per its membership test) are rejected; batches are repeated
    until ``n`` points are accepted.
    """
    return sample_region(space_or_cloud, n, seed, max_draw_factor)[0]


def sample_region(space_or_cloud, n: int, seed: int = 0, max_draw_factor: int = 200):
    """Like ``lhs_design`` but also returns the acceptance rate in the box."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    if isinstance(space_or_cloud, ParameterSpace):
        space = space_or_cloud
        if space.dim == 0:
            raise EmptySpaceError("parameter space has no free inputs")
        return space.to_physical(_lhs_unit(space.dim, n, rng)), 1.0
    cloud = space_or_cloud
    space = cloud.space
    lo, hi = cloud.box_lower, cloud.box_upper
    member: Callable[[np.ndarray], np.ndarray] = cloud.contains
    kept, drawn, batch = [], 0, n
    have = 0
    while have < n:
        if drawn >= max_draw_factor * n:
            raise SparseRegionError(
                f"only {have} of {n} points accepted after {drawn} draws; the region is too sparse")
        U = lo + _lhs_unit(space.dim, batch, rng) * (hi - lo)
        X = space.to_physical(U)
        ok = member(X)
        drawn += batch
        kept.append(X[ok])
        have += int(ok.sum())
        rate = max(have / drawn, 1.0 / (max_draw_factor * n))
        batch = int(min(max(np.ceil(1.2 * (n - have) / rate), n), 20 * n))
    X = np.vstack(kept)[:n]
    return X, have / drawn


def maximin_select(U: np.ndarray, k: int) -> np.ndarray:
    """Greedy maximin subset of rows of ``U``, started at the row nearest the centroid."""
    U = np.asarray(U, dtype=float)
    k = min(k, len(U))
    if k == 0:
        return np.zeros(0, dtype=int)
    first = int(np.argmin(((U - U.mean(0)) ** 2).sum(1)))
    chosen = [first]
    dmin = ((U - U[first]) ** 2).sum(1)
    for _ in range(k - 1):
        nxt = int(np.argmax(dmin))
        chosen.append(nxt)
        dmin = np.minimum(dmin, ((U - U[nxt]) ** 2).sum(1))
    return np.array(chosen)


def space_from_rows(rows: Sequence[tuple[str, str, float, float]], fixed=()) -> ParameterSpace:
    return ParameterSpace(tuple(Parameter(*r) for r in rows), tuple(fixed))


__all__ = [
    "C_FIXED_KPA", "Parameter", "ParameterSpace", "ParameterPoint", "Observation",
    "table1_space", "alpha_space", "sobol_design", "lhs_design", "sample_region",
    "maximin_select", "space_from_rows",
]
