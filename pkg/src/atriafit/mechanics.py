"""Quasi-static hyperelastic membrane mechanics of the synthetic atrium.

Constant-strain triangles carry the Guccione law (wall regions) or a stiff
Neo-Hookean law (rim band).  Loads are a cavity pressure, pericardial
normal springs that only resist outward motion, omni-directional springs
on the vein patch and a prescribed rigid motion of the rim vertices.
Equilibria are energy minima found with BFGS and a backtracking line
search.

Units: mm, kPa, kPa*mm^3 for energies.  Pressures enter in mmHg and are
converted once.
"""

from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import linalg, sparse

from .errors import (
    DivergenceError,
    InvertedElementError,
    NonConvergenceError,
    UnloadingError,
)
from .geometry import (
    FEATURE_REGIONS,
    REGION_NAMES,
    RIM,
    DisplacementField,
    ShellMesh,
    boundary_edges,
    closed_volume,
    colatitude,
    regional_displacement,
    triangle_areas,
    vertex_areas,
)
from .material import GuccioneParams, NeoHookeanParams, membrane_guccione, membrane_neohookean

log = logging.getLogger(__name__)

MMHG_TO_KPA = 0.133322
KPA_PER_UM_TO_KPA_PER_MM = 1000.0
FEATURE_NAMES = (
    "ESV_ml",
    "d_global_mm",
    "d_anterior_mm",
    "d_posterior_mm",
    "d_septum_mm",
    "d_lateral_mm",
    "d_roof_mm",
)


@dataclass(frozen=True)
class LoadingParameters:
    EDP: float = 6.5  # mmHg
    ESP: float = 25.0  # mmHg
    k_peri: float = 0.0025  # kPa/um
    PTH: float = 0.7
    k_vein: float = 0.001  # kPa/um
    rim_amplitude: float = 4.0  # mm, peak rim descent at t_es
    t_es: float = 0.4
    conduit_duration: float = 0.3

    def __post_init__(self):
        if not (0.0 < self.EDP < self.ESP):
            raise ValueError(f"need 0 < EDP < ESP, got EDP={self.EDP}, ESP={self.ESP}")
        if not self.k_peri >= 0.0:
            raise ValueError("k_peri must be non-negative")
        if not 0.0 <= self.PTH <= 1.0:
            raise ValueError("PTH must lie in [0, 1]")
        if not 0.0 < self.t_es < 1.0:
            raise ValueError("t_es must lie in (0, 1)")
        if not 0.0 < self.conduit_duration <= 1.0 - self.t_es:
            raise ValueError("conduit phase must end by t = 1")

    def rim_trajectory(self, t: float) -> np.ndarray:
        """Rigid rim translation (mm) at normalised time ``t``."""
        if t <= self.t_es:
            shape = 0.5 * (1.0 - np.cos(np.pi * t / self.t_es))
        else:
            shape = 0.5 * (1.0 + np.cos(np.pi * (t - self.t_es) / (1.0 - self.t_es)))
        return np.array([0.0, 0.0, -self.rim_amplitude * shape])


@dataclass(frozen=True)
class RegionalMaterialMap:
    regions: Mapping[str, GuccioneParams]
    rim: NeoHookeanParams = NeoHookeanParams(c=1000.0)

    def __post_init__(self):
        missing = set(FEATURE_REGIONS) - set(self.regions)
        extra = set(self.regions) - set(FEATURE_REGIONS)
        if missing or extra:
            raise ValueError(f"material map must cover exactly {FEATURE_REGIONS}; missing={missing} extra={extra}")

    @classmethod
    def uniform(cls, params: GuccioneParams, rim: NeoHookeanParams | None = None):
        return cls({r: params for r in FEATURE_REGIONS}, rim or NeoHookeanParams(c=1000.0))


def params_to_model_inputs(params: Mapping[str, float], base: GuccioneParams | None = None,
                           loading: Mapping | None = None):
    """Map named simulator inputs to (materials, loading).

    Recognised names are ``C_<region>``, ``alpha_<region>``, ``EDP``, ``ESP``,
    ``k_peri`` and ``PTH``; anything missing keeps its default.
    """
    base = base or GuccioneParams()
    regions = {}
    for r in FEATURE_REGIONS:
        regions[r] = GuccioneParams(
            C=float(params.get(f"C_{r}", base.C)),
            alpha=float(params.get(f"alpha_{r}", base.alpha)),
            b_f=base.b_f, b_t=base.b_t, b_ft=base.b_ft, kappa=base.kappa,
        )
    kw = dict(loading or {})
    for name in ("EDP", "ESP", "k_peri", "PTH"):
        if name in params:
            kw[name] = float(params[name])
    return RegionalMaterialMap(regions), LoadingParameters(**kw)


def pressure_transient(t: float, load: LoadingParameters) -> float:
    """Cavity pressure in kPa.

    Cosine rise from EDP to ESP over the reservoir phase, cosine decline
    back to EDP over the conduit phase, then constant.
    """
    t = float(np.clip(t, 0.0, 1.0))
    edp, esp = load.EDP, load.ESP
    if t <= load.t_es:
        p = edp + (esp - edp) * 0.5 * (1.0 - np.cos(np.pi * t / load.t_es))
    elif t <= load.t_es + load.conduit_duration:
        p = edp + (esp - edp) * 0.5 * (1.0 + np.cos(np.pi * (t - load.t_es) / load.conduit_duration))
    else:
        p = edp
    return p * MMHG_TO_KPA


def pericardial_map(mesh: ShellMesh, pth: float) -> np.ndarray:
    """Per-vertex penalty scale in [0, 1].

    Equal to 1 over the polar cap that holds a fraction ``pth`` of the
    non-rim surface area, cosine-tapered to 0 at the rim band.
    """
    theta = np.radians(colatitude(mesh.vertices))
    band = mesh.rim_band_deg if mesh.rim_band_deg is not None else 0.0
    theta_rim = np.radians(90.0 - band)
    theta_1 = np.arccos(1.0 - pth * (1.0 - np.cos(theta_rim)))
    s = np.zeros(len(theta))
    s[theta <= theta_1] = 1.0
    taper = (theta > theta_1) & (theta < theta_rim)
    if theta_rim > theta_1:
        s[taper] = 0.5 * (1.0 + np.cos(np.pi * (theta[taper] - theta_1) / (theta_rim - theta_1)))
    if len(mesh.rim_vertex_ids):
        s[mesh.rim_vertex_ids] = 0.0
    return s


_COLORING_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _cross(a, b):
    """Row-wise cross product (faster than np.cross for small arrays)."""
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


class MembraneModel:
    """Energy of the loaded membrane for one stress-free reference geometry.

    Parameters
    ----------
    mesh : ShellMesh
        ED (image) geometry.  The pericardial map and spring areas come from it.
    materials : RegionalMaterialMap
    load : LoadingParameters
    reference : array, optional
        Stress-free vertex positions; defaults to the ED geometry.  Springs
        are anchored here.
    springs : bool
        Disable to drop pericardial and vein springs (closed-sphere tests).
    """

    def __init__(self, mesh: ShellMesh, materials: RegionalMaterialMap, load: LoadingParameters,
                 reference: np.ndarray | None = None, springs: bool = True):
        self.mesh = mesh
        self.materials = materials
        self.load = load
        self.reference = np.array(mesh.vertices if reference is None else reference, dtype=float)
        tris = mesh.triangles
        self.tris = tris
        self.free = mesh.free_vertex_ids
        self.fixed = np.asarray(mesh.rim_vertex_ids, dtype=np.int64)
        self.rim_edges = boundary_edges(tris) if len(self.fixed) else np.zeros((0, 2), dtype=np.int64)
        self._rim_ids = np.unique(self.rim_edges)

        nt, nv = len(tris), mesh.n_vertices
        # scatter of per-(corner, triangle) rows onto vertices
        self._scatter = sparse.csr_matrix(
            (np.ones(3 * nt), (tris.T.ravel(), np.arange(3 * nt))), shape=(nv, 3 * nt)
        )
        self._ed_area = triangle_areas(mesh.vertices, tris)

        tag = mesh.region_tag
        self.is_rim = tag == RIM
        wall = ~self.is_rim
        self.wall_idx = np.flatnonzero(wall)
        self.rim_idx = np.flatnonzero(self.is_rim)
        pars = [materials.regions[REGION_NAMES[t]] for t in tag[wall]]
        self.C = np.array([p.C for p in pars])
        self.alpha = np.array([p.alpha for p in pars])
        self.b_f = np.array([p.b_f for p in pars])
        self.b_t = np.array([p.b_t for p in pars])
        self.b_ft = np.array([p.b_ft for p in pars])
        self.c_rim = np.full(len(self.rim_idx), materials.rim.c)

        nv = mesh.n_vertices
        self.springs = springs
        self.k_peri = np.zeros(nv)
        self.k_vein = np.zeros(nv)
        if springs:
            a_v = vertex_areas(mesh.vertices, tris)
            self.k_peri = load.k_peri * KPA_PER_UM_TO_KPA_PER_MM * pericardial_map(mesh, load.PTH) * a_v
            vein = np.asarray(mesh.vein_patch_vertex_ids, dtype=np.int64)
            self.k_vein[vein] = load.k_vein * KPA_PER_UM_TO_KPA_PER_MM * a_v[vein]
            self.k_peri[self.fixed] = 0.0
            self.k_vein[self.fixed] = 0.0
        self.peri_ids = np.flatnonzero(self.k_peri > 0.0)
        self.vein_ids = np.flatnonzero(self.k_vein > 0.0)
        self.inverse_hessian = None  # BFGS warm start shared by successive solves
        self.set_reference(self.reference)

    def set_reference(self, X: np.ndarray) -> None:
        """Install a new stress-free geometry (springs stay anchored at ED)."""
        X = np.array(X, dtype=float)
        tris = self.tris
        # reference frame: ED fibre projected onto the reference triangle plane
        n = _cross(X[tris[:, 1]] - X[tris[:, 0]], X[tris[:, 2]] - X[tris[:, 0]])
        area0 = 0.5 * np.linalg.norm(n, axis=1)
        if np.any(area0 <= 0.0):
            bad = int(np.flatnonzero(area0 <= 0.0)[0])
            raise InvertedElementError("degenerate reference triangle", element=bad)
        n /= (2.0 * area0)[:, None]
        fib = self.mesh.fiber_dir
        f = fib - np.einsum("ij,ij->i", fib, n)[:, None] * n
        f /= np.linalg.norm(f, axis=1, keepdims=True)
        s = _cross(n, f)
        e1 = X[tris[:, 1]] - X[tris[:, 0]]
        e2 = X[tris[:, 2]] - X[tris[:, 0]]
        a00 = np.einsum("ij,ij->i", e1, f)
        a10 = np.einsum("ij,ij->i", e1, s)
        a01 = np.einsum("ij,ij->i", e2, f)
        a11 = np.einsum("ij,ij->i", e2, s)
        det = a00 * a11 - a01 * a10
        self._di = [(a11 / det)[:, None], (-a01 / det)[:, None], (-a10 / det)[:, None], (a00 / det)[:, None]]
        self.reference = X
        self.area0 = area0
        # wall volume is conserved between ED and the reference state
        self.thickness0 = self.mesh.thickness * self._ed_area / area0
        self.weight = self.area0 * self.thickness0
        # springs act on the displacement from the stress-free state
        self.anchor = X

    # -- pieces -------------------------------------------------------------

    def volume(self, x: np.ndarray) -> float:
        tris = self.tris
        a, b, c = x[tris[:, 0]], x[tris[:, 1]], x[tris[:, 2]]
        six_v = float(np.sum(a * _cross(b, c)))
        if len(self.rim_edges):
            centre = x[self._rim_ids].mean(axis=0)
            p, q = x[self.rim_edges[:, 1]], x[self.rim_edges[:, 0]]
            six_v += float(np.sum(p * _cross(q, centre)))
        return six_v / 6.0

    def volume_gradient(self, x: np.ndarray) -> np.ndarray:
        tris = self.tris
        a, b, c = x[tris[:, 0]], x[tris[:, 1]], x[tris[:, 2]]
        g = self._scatter @ np.concatenate([_cross(b, c), _cross(c, a), _cross(a, b)])
        if len(self.rim_edges):
            rim_ids = self._rim_ids
            centre = x[rim_ids].mean(axis=0)
            p, q = x[self.rim_edges[:, 1]], x[self.rim_edges[:, 0]]
            np.add.at(g, self.rim_edges[:, 1], _cross(q, centre))
            np.add.at(g, self.rim_edges[:, 0], _cross(centre, p))
            g[rim_ids] += _cross(p, q).sum(axis=0) / len(rim_ids)
        return g / 6.0

    def strain_energy(self, x: np.ndarray, with_grad: bool = True):
        tris = self.tris
        x0 = x[tris[:, 0]]
        d1 = x[tris[:, 1]] - x0
        d2 = x[tris[:, 2]] - x0
        i00, i01, i10, i11 = self._di
        F0 = d1 * i00 + d2 * i10  # columns of F = Ds Dm^-1
        F1 = d1 * i01 + d2 * i11
        c00 = np.einsum("ij,ij->i", F0, F0)
        c01 = np.einsum("ij,ij->i", F0, F1)
        c11 = np.einsum("ij,ij->i", F1, F1)
        nt = len(tris)
        psi, p00, p01, p11 = (np.empty(nt) for _ in range(4))
        w = self.wall_idx
        try:
            out = membrane_guccione(c00[w], c01[w], c11[w], self.C, self.alpha, self.b_f, self.b_t, self.b_ft)
        except (InvertedElementError, DivergenceError) as exc:
            exc.element = None if exc.element is None else int(w[exc.element])
            raise
        psi[w], p00[w], p01[w], p11[w] = out
        r = self.rim_idx
        if len(r):
            try:
                out = membrane_neohookean(c00[r], c01[r], c11[r], self.c_rim)
            except InvertedElementError as exc:
                exc.element = None if exc.element is None else int(r[exc.element])
                raise
            psi[r], p00[r], p01[r], p11[r] = out
        energy = float(self.weight @ psi)
        if not with_grad:
            return energy, None
        w2 = 2.0 * self.weight
        dF0 = (w2 * p00)[:, None] * F0 + (w2 * p01)[:, None] * F1
        dF1 = (w2 * p01)[:, None] * F0 + (w2 * p11)[:, None] * F1
        g1 = dF0 * i00 + dF1 * i01
        g2 = dF0 * i10 + dF1 * i11
        g = self._scatter @ np.concatenate([-g1 - g2, g1, g2])
        return energy, g

    def vertex_normal_sums(self, x: np.ndarray):
        """Area-weighted (unnormalised) vertex normals and the face terms."""
        tris = self.tris
        a, b, c = x[tris[:, 0]], x[tris[:, 1]], x[tris[:, 2]]
        face = 0.5 * _cross(b - a, c - a)
        return self._scatter @ np.concatenate([face, face, face]), (a, b, c)

    def spring_energy(self, x: np.ndarray, with_grad: bool = True):
        """Pericardial gap springs plus omni-directional vein springs.

        The pericardial gap of vertex ``v`` is ``g = (x_v - X_v) . n_v(x)``
        with ``n_v`` the current area-weighted vertex normal, penalised
        only when positive (outward).  Sliding along the surface leaves
        the gap unchanged.
        """
        g = np.zeros_like(x) if with_grad else None
        energy = 0.0
        if len(self.peri_ids):
            i = self.peri_ids
            N, (a, b, c) = self.vertex_normal_sums(x)
            Ni = N[i]
            L = np.linalg.norm(Ni, axis=1)
            n = Ni / L[:, None]
            u = x[i] - self.anchor[i]
            gap = np.einsum("ij,ij->i", u, n)
            pos = np.maximum(gap, 0.0)
            kp = self.k_peri[i] * pos
            energy += 0.5 * float(kp @ pos)
            if with_grad:
                g[i] += kp[:, None] * n
                # dependence of n_v on the surrounding face normals
                W = np.zeros_like(x)
                W[i] = (kp / L)[:, None] * (u - gap[:, None] * n)
                tris = self.tris
                WT = W[tris[:, 0]] + W[tris[:, 1]] + W[tris[:, 2]]
                g += 0.5 * (self._scatter @ np.concatenate([_cross(b - c, WT), _cross(c - a, WT), _cross(a - b, WT)]))
        if len(self.vein_ids):
            i = self.vein_ids
            u = x[i] - self.anchor[i]
            energy += 0.5 * float(self.k_vein[i] @ np.einsum("ij,ij->i", u, u))
            if with_grad:
                g[i] += self.k_vein[i][:, None] * u
        return energy, g

    def hessian_coloring(self) -> list[np.ndarray]:
        """Owner maps for column-compressed finite-difference Hessians.

        Free vertices are greedily grouped so that the closed one-rings of
        any two vertices in a group are disjoint.  Each entry maps a free
        vertex (local index) to the group member whose perturbation it
        sees, or -1.
        """
        cached = _COLORING_CACHE.get(self.mesh)
        if cached is not None:
            return cached
        nv = self.mesh.n_vertices
        local = np.full(nv, -1, dtype=np.int64)
        local[self.free] = np.arange(len(self.free))
        tris = self.tris
        rows = np.concatenate([tris[:, i] for i in (0, 0, 1, 1, 2, 2)])
        cols = np.concatenate([tris[:, j] for j in (1, 2, 0, 2, 0, 1)])
        adj = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(nv, nv))
        adj = adj + sparse.identity(nv, format="csr")
        two = (adj @ adj).tocsr()  # distance <= 2
        colour = np.full(nv, -1, dtype=np.int64)
        for v in self.free:
            taken = set(colour[two.indices[two.indptr[v]:two.indptr[v + 1]]].tolist())
            c = 0
            while c in taken:
                c += 1
            colour[v] = c
        groups = []
        for c in range(int(colour.max()) + 1 if len(self.free) else 0):
            owner = np.full(len(self.free), -1, dtype=np.int64)
            for v in np.flatnonzero(colour == c):
                ring = adj.indices[adj.indptr[v]:adj.indptr[v + 1]]
                ring = local[ring]
                owner[ring[ring >= 0]] = local[v]
            groups.append(owner)
        _COLORING_CACHE[self.mesh] = groups
        return groups

    def energy_and_gradient(self, x: np.ndarray, pressure_kpa: float, with_grad: bool = True):
        """Total potential (kPa*mm^3) and its gradient for all vertices."""
        e_s, g_s = self.strain_energy(x, with_grad)
        e_k, g_k = self.spring_energy(x, with_grad)
        energy = e_s + e_k - pressure_kpa * self.volume(x)
        if not with_grad:
            return energy, None
        return energy, g_s + g_k - pressure_kpa * self.volume_gradient(x)


def total_energy_and_gradient(mesh, materials, vertex_positions, pressure, load, reference=None):
    """Energy and gradient restricted to free vertices; ``pressure`` in kPa."""
    model = MembraneModel(mesh, materials, load, reference=reference)
    e, g = model.energy_and_gradient(np.asarray(vertex_positions, dtype=float), pressure)
    return e, g[model.free]


# ----------------------------------------------------------------------------
# minimisation


@dataclass
class SolverSettings:
    tol_abs: float = 1e-7
    tol_rel: float = 1e-8
    max_iter: int = 500
    n_increments: int = 20
    max_increments: int = 400
    armijo: float = 1e-4


@dataclass
class _MinResult:
    x: np.ndarray
    energy: float
    grad_inf: float
    iterations: int
    converged: bool
    energies: list = field(default_factory=list)


def _fd_inverse_hessian(fun, z, g, groups, h=1e-6):
    """Inverse of a forward-difference Hessian assembled with graph colouring."""
    n = len(z)
    Hm = np.zeros((n, n))
    rows3 = np.arange(n)
    for owner in groups:
        members = np.unique(owner[owner >= 0])
        seen = np.repeat(owner, 3)
        mask = seen >= 0
        for k in range(3):
            zp = z.copy()
            zp[3 * members + k] += h
            _, gp = fun(zp)
            Hm[rows3[mask], 3 * seen[mask] + k] = (gp[mask] - g[mask]) / h
    Hm = 0.5 * (Hm + Hm.T)
    shift = 0.0
    scale = float(np.max(np.abs(np.diag(Hm)))) if n else 1.0
    for _ in range(20):
        try:
            L = linalg.cho_factor(Hm + shift * np.eye(n))
            return linalg.cho_solve(L, np.eye(n))
        except linalg.LinAlgError:
            shift = max(2.0 * shift, 1e-8 * scale)
    return None


def _bfgs(fun, z0, tol, settings: SolverSettings, H=None, groups=None):
    """Dense BFGS with a backtracking line search; returns (result, inverse Hessian).

    Without a warm ``H`` the inverse Hessian starts from a coloured
    finite-difference Hessian when ``groups`` is given, else the identity.
    Steps are accepted on the Armijo condition or, once energy differences
    reach roundoff, on the approximate Wolfe condition.
    """
    z = z0.copy()
    try:
        f, g = fun(z)
    except (InvertedElementError, DivergenceError) as exc:
        raise NonConvergenceError(f"initial state invalid: {exc}") from exc
    n = len(z)

    def restart():
        if groups is not None:
            try:
                Hfd = _fd_inverse_hessian(fun, z, g, groups)
            except (InvertedElementError, DivergenceError):
                Hfd = None
            if Hfd is not None:
                return Hfd, False
        return np.eye(n), True

    fresh = False
    if H is None:
        H, fresh = restart()
    energies = [f]
    it = 0
    resets = 0
    while True:
        ginf = float(np.max(np.abs(g))) if n else 0.0
        if ginf < tol:
            return _MinResult(z, f, ginf, it, True, energies), H
        if it >= settings.max_iter:
            return _MinResult(z, f, ginf, it, False, energies), H
        d = -H @ g
        slope = float(g @ d)
        if slope >= 0.0:
            H, fresh = np.eye(n), True
            d, slope = -g, -float(g @ g)
        if fresh:
            # keep identity steps modest: 0.1 mm max vertex move
            dmax = float(np.max(np.abs(d)))
            if dmax > 0.1:
                d *= 0.1 / dmax
                slope *= 0.1 / dmax
        eps_f = 1e-11 * max(1.0, abs(f))
        step = 1.0
        accepted = False
        for _ in range(60):
            z_new = z + step * d
            try:
                f_new, g_new = fun(z_new)
            except (InvertedElementError, DivergenceError):
                step *= 0.5
                continue
            if f_new <= f + settings.armijo * step * slope:
                accepted = True
                break
            dslope = float(g_new @ d)
            if f_new <= f + eps_f and 0.9 * slope <= dslope <= -0.8 * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if resets < 3:
                H, fresh = restart()
                resets += 1
                continue
            return _MinResult(z, f, ginf, it, False, energies), H
        s_vec = z_new - z
        y_vec = g_new - g
        sy = float(s_vec @ y_vec)
        z, f, g = z_new, f_new, g_new
        energies.append(f)
        it += 1
        if sy > 1e-12 * float(np.linalg.norm(s_vec) * np.linalg.norm(y_vec)) and sy > 0.0:
            if fresh:
                H = np.eye(n) * (sy / float(y_vec @ y_vec))
                fresh = False
            rho = 1.0 / sy
            Hy = H @ y_vec
            # rank-2 update as a single (n x 2)(2 x n) product
            U = np.column_stack([s_vec, Hy])
            W = np.array([[rho * rho * float(y_vec @ Hy) + rho, -rho], [-rho, 0.0]])
            H += (U @ W) @ U.T


def _gradient_tol(settings: SolverSettings, pressure_kpa: float, radius: float) -> float:
    return settings.tol_abs + settings.tol_rel * abs(pressure_kpa) * radius**2


def _rim_blend(mesh: ShellMesh) -> np.ndarray:
    """Weights used to carry rim motion into the initial guess (1 at rim, 0 at pole)."""
    z = mesh.vertices[:, 2] / mesh.radius
    return np.clip(1.0 - z, 0.0, 1.0)


def solve_equilibrium(model: MembraneModel, pressure_kpa: float, initial_guess: np.ndarray | None = None,
                      rim_positions: np.ndarray | None = None, start_pressure_kpa: float | None = None,
                      settings: SolverSettings | None = None, n_increments: int | None = None,
                      return_info: bool = False):
    """Equilibrium vertex positions under ``pressure_kpa``.

    The load (pressure and rim positions) is applied in increments from the
    state described by ``initial_guess``/``start_pressure_kpa``; an
    increment that fails is halved until the step cap is hit.  Starting
    from rest the default is ``settings.n_increments`` increments,
    otherwise a single one.
    """
    settings = settings or SolverSettings()
    mesh = model.mesh
    x = np.array(model.reference if initial_guess is None else initial_guess, dtype=float)
    if start_pressure_kpa is None:
        start_pressure_kpa = 0.0 if initial_guess is None else pressure_kpa
    if n_increments is None:
        # warm starts take one increment and rely on adaptive halving
        n_increments = settings.n_increments if initial_guess is None else 1
    rim_start = x[model.fixed].copy()
    rim_end = rim_start if rim_positions is None else np.asarray(rim_positions, dtype=float)
    blend = _rim_blend(mesh)
    free = model.free
    rim_shift = (rim_end - rim_start).mean(axis=0) if len(model.fixed) else np.zeros(3)

    H = model.inverse_hessian if initial_guess is not None else None
    groups = model.hessian_coloring()
    base_step = 1.0 / max(n_increments, 1)
    done, frac_step = 0.0, base_step
    n_steps = 0
    energies_all = []
    last = None
    while done < 1.0 - 1e-12:
        frac = min(1.0, done + frac_step)
        p = start_pressure_kpa + (pressure_kpa - start_pressure_kpa) * frac
        trial = x.copy()
        trial[model.fixed] = rim_start + (rim_end - rim_start) * frac
        trial[free] += ((frac - done) * rim_shift)[None, :] * blend[free, None]

        def fun(z, trial=trial, p=p):
            trial[free] = z.reshape(-1, 3)
            e, g = model.energy_and_gradient(trial, p)
            return e, g[free].ravel()

        tol = _gradient_tol(settings, p, mesh.radius)
        n_steps += 1
        if n_steps > settings.max_increments:
            raise NonConvergenceError(
                f"load stepping exceeded {settings.max_increments} increments",
                residual=None if last is None else last.grad_inf,
            )
        try:
            res, H_new = _bfgs(fun, trial[free].ravel().copy(), tol, settings, H, groups)
        except NonConvergenceError:
            res, H_new = None, None
        if res is None or not res.converged:
            last = res or last
            frac_step *= 0.5
            H = None
            if frac_step < 1e-6:
                raise NonConvergenceError(
                    "equilibrium solve failed: increment collapsed",
                    residual=None if last is None else last.grad_inf,
                )
            continue
        trial[free] = res.x.reshape(-1, 3)
        x = trial
        energies_all.append(res.energies)
        last, H = res, H_new
        done = frac
        frac_step = min(frac_step * 2.0, base_step)
    model.inverse_hessian = H
    if return_info:
        return x, {"increments": n_steps, "energies": energies_all,
                   "residual": last.grad_inf if last else 0.0}
    return x


# ----------------------------------------------------------------------------
# unloading


@dataclass
class UnloadResult:
    reference: np.ndarray  # stress-free geometry
    loaded: np.ndarray  # its reinflation at EDP
    volume_error: float  # |V(loaded) - V_ED| / V_ED
    rms_history: list
    volume_history: list
    iterations: int


def unload(mesh: ShellMesh, materials: RegionalMaterialMap, load: LoadingParameters,
           volume_tol: float = 0.01, geometry_tol: float | None = 1e-4, max_iter: int = 60,
           settings: SolverSettings | None = None, min_relaxation: float = 1e-3) -> UnloadResult:
    """Backward-displacement recovery of the stress-free geometry.

    Fixed point ``X <- X - w (x(X) - x_ED)`` where ``x(X)`` is the EDP
    equilibrium from reference ``X`` with the rim held at its ED position.
    The relaxation ``w`` starts at 1 and follows Aitken's update; a trial
    that raises the RMS mismatch (or fails to solve) is discarded and
    ``w`` halved, so the accepted RMS history is strictly decreasing.

    Converged once the reinflated volume is within ``volume_tol`` of the
    ED volume and either the largest vertex mismatch is below
    ``geometry_tol * radius``, the relaxation has collapsed below
    ``min_relaxation`` or the iteration cap is reached.  The geometric
    target only tightens the volume criterion; the unloading error is
    raised when the volume criterion itself cannot be met.
    """
    settings = settings or SolverSettings()
    target = np.array(mesh.vertices, dtype=float)
    free = mesh.free_vertex_ids
    p_ed = load.EDP * MMHG_TO_KPA
    rim_edges = boundary_edges(mesh.triangles)
    v_target = closed_volume(target, mesh.triangles, rim_edges)
    geom_abs = 0.0 if geometry_tol is None else geometry_tol * mesh.radius

    def measure(x):
        r = (x - target)[free]
        rms = float(np.sqrt(np.mean(np.sum(r * r, axis=1)))) if len(free) else 0.0
        vol_err = abs(closed_volume(x, mesh.triangles, rim_edges) - v_target) / v_target
        max_err = float(np.max(np.linalg.norm(r, axis=1))) if len(free) else 0.0
        return r, rms, vol_err, max_err

    X = target.copy()
    model = MembraneModel(mesh, materials, load, reference=X)
    x = solve_equilibrium(model, p_ed, settings=settings)
    r, rms, vol_err, max_err = measure(x)
    rms_hist, vol_hist = [rms], [vol_err]
    omega = 1.0
    for it in range(max_iter + 1):
        stalled = omega < min_relaxation or it == max_iter
        if vol_err <= volume_tol and (geometry_tol is None or max_err <= geom_abs or stalled):
            return UnloadResult(X, x, vol_err, rms_hist, vol_hist, it)
        if it == max_iter or stalled:
            break
        X_new = X.copy()
        X_new[free] = X[free] - omega * r
        guess = x.copy()
        guess[free] = X_new[free] + (x[free] - X[free])
        try:
            model.set_reference(X_new)
            x_new = solve_equilibrium(model, p_ed, initial_guess=guess, settings=settings)
            r_new, rms_new, vol_new, max_new = measure(x_new)
        except (NonConvergenceError, InvertedElementError, DivergenceError):
            rms_new = np.inf
        if not rms_new < rms:
            omega *= 0.5
            model.inverse_hessian = None
            continue
        dr = r_new - r
        denom = float(np.sum(dr * dr))
        aitken = -omega * float(np.sum(r * dr)) / denom if denom > 0.0 else omega
        omega = float(np.clip(aitken, min_relaxation, 1.0))
        X, x, r, rms, vol_err, max_err = X_new, x_new, r_new, rms_new, vol_new, max_new
        rms_hist.append(rms)
        vol_hist.append(vol_err)
    model.set_reference(X)
    raise UnloadingError(
        f"backward displacement did not converge in {max_iter} iterations "
        f"(volume error {vol_err:.3g}, rms {rms:.3g} mm)",
        residual=vol_err,
    )


# ----------------------------------------------------------------------------
# transient and features


@dataclass(frozen=True)
class FeatureVector:
    ESV_ml: float
    d_global_mm: float
    d_anterior_mm: float
    d_posterior_mm: float
    d_septum_mm: float
    d_lateral_mm: float
    d_roof_mm: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES])

    @classmethod
    def from_array(cls, values) -> "FeatureVector":
        values = [float(v) for v in values]
        if len(values) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {len(values)}")
        return cls(*values)


@dataclass
class SimulationResult:
    times: np.ndarray
    pressures_kpa: np.ndarray
    volumes_ml: np.ndarray
    displacements: list  # DisplacementField per time sample
    mesh: ShellMesh
    unloading: UnloadResult
    features: FeatureVector = None

    @property
    def es_index(self) -> int:
        return int(np.argmax(self.volumes_ml))

    def regional_transient(self) -> list[dict]:
        return [regional_displacement(self.mesh, d) for d in self.displacements]


def run_transient(mesh: ShellMesh, materials: RegionalMaterialMap, load: LoadingParameters,
                  n_steps: int = 10, settings: SolverSettings | None = None,
                  unloading: UnloadResult | None = None) -> SimulationResult:
    """Unload, preload to ED, then march the cardiac cycle on ``n_steps`` intervals."""
    settings = settings or SolverSettings()
    if unloading is None:
        unloading = unload(mesh, materials, load, settings=settings)
    model = MembraneModel(mesh, materials, load, reference=unloading.reference)
    target = np.array(mesh.vertices, dtype=float)
    rim0 = target[model.fixed]
    times = np.linspace(0.0, 1.0, n_steps + 1)
    x = unloading.loaded.copy()
    pressures, volumes, fields = [], [], []
    for i, t in enumerate(times):
        p = pressure_transient(t, load)
        rim = rim0 + load.rim_trajectory(t)[None, :]
        if i > 0:
            try:
                x = solve_equilibrium(model, p, initial_guess=x, rim_positions=rim,
                                      start_pressure_kpa=pressures[-1], settings=settings)
            except NonConvergenceError as exc:
                exc.time_index = i
                raise
        pressures.append(p)
        volumes.append(model.volume(x) / 1000.0)
        fields.append(DisplacementField(values=x - target, timestamp=float(t)))
    result = SimulationResult(times, np.array(pressures), np.array(volumes), fields, mesh, unloading)
    result.features = extract_features(result)
    return result


def extract_features(result: SimulationResult) -> FeatureVector:
    """ESV (ml) and mean displacements (mm) at the volume peak."""
    k = result.es_index
    d = regional_displacement(result.mesh, result.displacements[k])
    return FeatureVector(
        ESV_ml=float(result.volumes_ml[k]),
        d_global_mm=d["global"],
        **{f"d_{r}_mm": d[r] for r in FEATURE_REGIONS},
    )


def simulate(params: Mapping[str, float], mesh: ShellMesh, n_steps: int = 10,
             loading: Mapping | None = None, settings: SolverSettings | None = None) -> FeatureVector:
    """Features for one named parameter point (C_region fixed at default when absent)."""
    materials, load = params_to_model_inputs(params, loading=loading)
    return run_transient(mesh, materials, load, n_steps=n_steps, settings=settings).features
