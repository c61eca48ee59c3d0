"""Guccione (with anisotropic scaling alpha) and Neo-Hookean strain energies.

Scalar functions operate on a single strain state; the ``membrane_*``
kernels are vectorised over triangles and work directly on the in-plane
right Cauchy-Green tensor, with the through-thickness stretch given by
incompressibility (``lambda_n = 1 / det F``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, InvertedElementError

Q_CAP = 50.0


@dataclass(frozen=True)
class GuccioneParams:
    C: float = 1.7  # kPa
    alpha: float = 1.0
    b_f: float = 8.0
    b_t: float = 3.0
    b_ft: float = 4.0
    kappa: float = 0.0  # kPa; inactive in the incompressible membrane

    def __post_init__(self):
        if not (self.C > 0 and self.alpha > 0):
            raise ValueError(f"C and alpha must be positive (C={self.C}, alpha={self.alpha})")
        if not (self.b_f > 0 and self.b_t > 0 and self.b_ft > 0):
            raise ValueError("Guccione exponents must be positive")
        if self.kappa < 0:
            raise ValueError("bulk modulus must be non-negative")


@dataclass(frozen=True)
class NeoHookeanParams:
    c: float = 1000.0  # kPa
    kappa: float = 0.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("Neo-Hookean c must be positive")
        if self.kappa < 0:
            raise ValueError("bulk modulus must be non-negative")


@dataclass(frozen=True)
class GreenLagrangeStrain:
    """Green-Lagrange strain in the fibre (f), sheet (s), normal (n) frame."""

    E_ff: float = 0.0
    E_ss: float = 0.0
    E_nn: float = 0.0
    E_fs: float = 0.0
    E_fn: float = 0.0
    E_sn: float = 0.0
    J: float = 1.0

    def as_matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.E_ff, self.E_fs, self.E_fn],
                [self.E_fs, self.E_ss, self.E_sn],
                [self.E_fn, self.E_sn, self.E_nn],
            ]
        )


def green_lagrange_from_F(F, incompressible_thickness: bool = True) -> GreenLagrangeStrain:
    """Membrane strain from an in-plane deformation gradient.

    ``F`` may be the 2x2 gradient in the fibre frame or the 3x2 map from
    the reference (f, s) plane into space.  Transverse shears are zero.
    """
    F = np.asarray(F, dtype=float)
    C = F.T @ F
    det_c = np.linalg.det(C)
    det_f = np.linalg.det(F) if F.shape == (2, 2) else np.sqrt(max(det_c, 0.0))
    if not det_f > 0.0:
        raise InvertedElementError(f"non-positive in-plane Jacobian {det_f:.6g}")
    E = 0.5 * (C - np.eye(2))
    if incompressible_thickness:
        lam_n = 1.0 / det_f
        e_nn, J = 0.5 * (lam_n**2 - 1.0), 1.0
    else:
        e_nn, J = 0.0, det_f
    return GreenLagrangeStrain(E_ff=E[0, 0], E_ss=E[1, 1], E_nn=e_nn, E_fs=E[0, 1], J=J)


def guccione_q(E: GreenLagrangeStrain, p: GuccioneParams) -> float:
    return p.alpha * (
        p.b_f * E.E_ff**2
        + 2.0 * p.b_ft * (E.E_fs**2 + E.E_fn**2)
        + p.b_t * (E.E_ss**2 + E.E_nn**2 + 2.0 * E.E_sn**2)
    )


def _check_q(q, element=None):
    if q > Q_CAP:
        where = "" if element is None else f" in element {element}"
        raise DivergenceError(f"Guccione exponent Q={q:.4g} exceeds cap {Q_CAP}{where}", element=element)


def guccione_energy(E: GreenLagrangeStrain, p: GuccioneParams) -> float:
    """Strain energy density in kPa."""
    q = guccione_q(E, p)
    _check_q(q)
    if not E.J > 0.0:
        raise InvertedElementError(f"non-positive Jacobian {E.J}")
    return 0.5 * p.C * np.expm1(q) + 0.5 * p.kappa * np.log(E.J) ** 2


def guccione_stress(E: GreenLagrangeStrain, p: GuccioneParams) -> np.ndarray:
    """Second Piola-Kirchhoff stress (3x3, fibre frame) of the exponential term.

    This is the tensor derivative; the derivative of the energy with
    respect to a single shear component such as ``E_fs`` is ``2 * S[0, 1]``.
    """
    q = guccione_q(E, p)
    _check_q(q)
    g = p.C * p.alpha * np.exp(q)
    return g * np.array(
        [
            [p.b_f * E.E_ff, p.b_ft * E.E_fs, p.b_ft * E.E_fn],
            [p.b_ft * E.E_fs, p.b_t * E.E_ss, p.b_t * E.E_sn],
            [p.b_ft * E.E_fn, p.b_t * E.E_sn, p.b_t * E.E_nn],
        ]
    )


def neohookean_energy(I1: float, J: float, p: NeoHookeanParams) -> float:
    if not J > 0.0:
        raise InvertedElementError(f"non-positive Jacobian {J}")
    return p.c * (I1 - 3.0) + 0.5 * p.kappa * np.log(J) ** 2


# ----------------------------------------------------------------------------
# vectorised membrane kernels


def membrane_guccione(c00, c01, c11, C, alpha, b_f, b_t, b_ft):
    """Energy density and ``dPsi/dC`` for incompressible Guccione membranes.

    Inputs are the components of the in-plane right Cauchy-Green tensor in
    the fibre frame (arrays of equal shape) and per-element parameters.
    Returns ``psi, p00, p01, p11`` with ``dpsi = p00 dC00 + 2 p01 dC01 + p11 dC11``.
    """
    det = c00 * c11 - c01 * c01
    if np.any(det <= 0.0):
        bad = int(np.flatnonzero(det <= 0.0)[0])
        raise InvertedElementError(f"inverted element {bad}", element=bad)
    e00, e11, e01 = 0.5 * (c00 - 1.0), 0.5 * (c11 - 1.0), 0.5 * c01
    inv_det = 1.0 / det
    enn = 0.5 * (inv_det - 1.0)
    q = alpha * (b_f * e00 * e00 + 2.0 * b_ft * e01 * e01 + b_t * (e11 * e11 + enn * enn))
    if np.any(q > Q_CAP):
        bad = int(np.argmax(q))
        _check_q(q[bad], bad)
    eq = np.exp(q)
    psi = 0.5 * C * (eq - 1.0)
    g = 0.5 * C * eq * alpha
    t = b_t * enn * inv_det * inv_det
    return psi, g * (b_f * e00 - t * c11), g * (b_ft * e01 + t * c01), g * (b_t * e11 - t * c00)


def membrane_neohookean(c00, c01, c11, c):
    """Incompressible Neo-Hookean membrane with ``I1 = tr C + 1/det C``."""
    det = c00 * c11 - c01 * c01
    if np.any(det <= 0.0):
        bad = int(np.flatnonzero(det <= 0.0)[0])
        raise InvertedElementError(f"inverted element {bad}", element=bad)
    inv_det = 1.0 / det
    psi = c * (c00 + c11 + inv_det - 3.0)
    w = c * inv_det * inv_det
    return psi, c - w * c11, w * c01, c - w * c00
