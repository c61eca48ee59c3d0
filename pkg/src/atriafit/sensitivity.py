"""Variance-based sensitivity indices and the max-total-effect ranking."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .errors import EmptySpaceError, UndefinedIndicesError

NEGATIVE_FLAG = -0.05


@dataclass(frozen=True)
class SaltelliDesign:
    """Base matrices ``A``, ``B`` and radial matrices ``AB[i]`` (A with column i from B)."""

    A: np.ndarray
    B: np.ndarray
    AB: np.ndarray  # (d, N, d)

    @property
    def n_base(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def stacked(self) -> np.ndarray:
        """All evaluation points in the order A, B, AB_1, ..., AB_d."""
        return np.vstack([self.A, self.B, *self.AB])


def saltelli_design(space, n_base: int, seed: int = 0) -> SaltelliDesign:
    """Scrambled Sobol A/B matrices and their d radial hybrids.

    ``space`` is a ParameterSpace or a (2, d) array of bounds.
    Total evaluations are ``n_base * (d + 2)``.
    """
    bounds = space.bounds if hasattr(space, "bounds") else np.asarray(space, dtype=float)
    lo, hi = bounds[0], bounds[1]
    d = len(lo)
    if d == 0:
        raise EmptySpaceError("no inputs to analyse")
    if n_base & (n_base - 1):
        warnings.warn(f"N_base={n_base} is not a power of two", stacklevel=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        U = qmc.Sobol(2 * d, scramble=True, seed=seed).random(n_base)
    A = lo + U[:, :d] * (hi - lo)
    B = lo + U[:, d:] * (hi - lo)
    AB = np.repeat(A[None], d, axis=0)
    for i in range(d):
        AB[i, :, i] = B[:, i]
    return SaltelliDesign(A, B, AB)


@dataclass(frozen=True)
class SobolResult:
    names: tuple[str, ...]
    outputs: tuple[str, ...]
    S1: np.ndarray  # (d, m)
    ST: np.ndarray  # (d, m)
    S1_ci: np.ndarray  # bootstrap 95% half-widths
    ST_ci: np.ndarray
    n_base: int

    @property
    def negative_flags(self) -> np.ndarray:
        return (self.S1 < NEGATIVE_FLAG) | (self.ST < NEGATIVE_FLAG)


def _estimators(fA, fB, fAB):
    """Saltelli first-order and Jansen total-effect estimators.

    fA, fB: (N, m); fAB: (d, N, m).  Returns (d, m) arrays.  Outputs are
    centred on the pooled A/B mean so the indices are invariant to affine
    rescaling of the output.
    """
    f0 = np.concatenate([fA, fB]).mean(axis=0)
    fA, fB, fAB = fA - f0, fB - f0, fAB - f0
    var = np.concatenate([fA, fB]).var(axis=0)
    S1 = np.mean(fB[None] * (fAB - fA[None]), axis=1) / var
    ST = 0.5 * np.mean((fA[None] - fAB) ** 2, axis=1) / var
    return S1, ST


def sobol_indices(evaluations, d: int, names: Sequence[str] | None = None,
                  outputs: Sequence[str] | None = None, n_bootstrap: int = 100, seed: int = 0) -> SobolResult:
    """Indices from model values on a stacked Saltelli design.

    Parameters
    ----------
    evaluations : (N(d+2),) or (N(d+2), m) array
        Outputs in ``SaltelliDesign.stacked`` order.
    d : int
        Number of inputs.
    """
    Y = np.asarray(evaluations, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    total, m = Y.shape
    if total % (d + 2):
        raise ValueError(f"{total} evaluations do not fit a design with d={d}")
    N = total // (d + 2)
    fA, fB = Y[:N], Y[N:2 * N]
    fAB = Y[2 * N:].reshape(d, N, m)
    if np.any(np.concatenate([fA, fB]).var(axis=0) == 0.0):
        raise UndefinedIndicesError("an output has zero variance over the design")
    S1, ST = _estimators(fA, fB, fAB)
    rng = np.random.default_rng(seed)
    boot1 = np.empty((n_bootstrap, d, m))
    bootT = np.empty((n_bootstrap, d, m))
    for b in range(n_bootstrap):
        idx = rng.integers(0, N, N)
        with np.errstate(divide="ignore", invalid="ignore"):
            boot1[b], bootT[b] = _estimators(fA[idx], fB[idx], fAB[:, idx])
    z = 1.959963984540054
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(d))
    outputs = tuple(outputs) if outputs is not None else tuple(f"y{j}" for j in range(m))
    return SobolResult(names, outputs, S1, ST, z * np.nanstd(boot1, axis=0), z * np.nanstd(bootT, axis=0), N)


def rank_parameters(result: SobolResult) -> list[tuple[str, float]]:
    """Inputs ordered by normalised maximum total effect over outputs.

    Ties keep declaration order.
    """
    score = np.max(result.ST, axis=1)
    score = np.clip(score, 0.0, None)
    total = score.sum()
    if total > 0:
        score = score / total
    order = sorted(range(len(score)), key=lambda i: -score[i])  # stable
    return [(result.names[i], float(score[i])) for i in order]


def write_gsa_csv(result: SobolResult, path, header_lines: Sequence[str] = ()) -> None:
    """One row per input: S1 and ST per output, then the normalised rank score."""
    scores = dict(rank_parameters(result))
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        cols = ["input"]
        for o in result.outputs:
            cols += [f"S1_{o}", f"ST_{o}", f"S1_ci_{o}", f"ST_ci_{o}"]
        w.writerow(cols + ["rank_score"])
        for i, name in enumerate(result.names):
            row = [name]
            for j in range(len(result.outputs)):
                row += [repr(float(v)) for v in (result.S1[i, j], result.ST[i, j], result.S1_ci[i, j], result.ST_ci[i, j])]
            w.writerow(row + [repr(scores[name])])
