"""Synthetic hemispherical shell: construction, region labels, fibre frames,
closed volumes and regional displacement features.

Meshes are built by recursive midpoint subdivision of an octahedron
projected onto the sphere.  The hemisphere is the ``z >= 0`` half; its
equator is the rim (mitral annulus analogue).  Refinement level 0 is one
subdivision of the octahedron (16 triangles per hemisphere), the coarsest
triangulation on which all six region tags exist.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    InvalidGeometryError,
    MissingRegionError,
    OrientationError,
    TopologyError,
)

REGION_NAMES = ("anterior", "posterior", "septum", "lateral", "roof", "rim")
FEATURE_REGIONS = ("anterior", "posterior", "septum", "lateral", "roof")
RIM = REGION_NAMES.index("rim")
ROOF = REGION_NAMES.index("roof")
UNTAGGED = -1

# Quadrant centres (degrees of azimuth) for the four wall regions.
_QUADRANT_CENTRES = {"anterior": 0.0, "septum": 90.0, "posterior": 180.0, "lateral": 270.0}


@dataclass(frozen=True, eq=False)
class ShellMesh:
    """Triangulated shell with per-triangle material frame.

    Arrays are treated as immutable once the mesh is built; all the
    ``assign_*`` helpers return new instances.
    """

    vertices: np.ndarray  # (nv, 3) mm
    triangles: np.ndarray  # (nt, 3) int, counter-clockwise seen from outside
    radius: float
    region_tag: np.ndarray = None  # (nt,) int index into REGION_NAMES
    fiber_dir: np.ndarray = None  # (nt, 3)
    sheet_dir: np.ndarray = None  # (nt, 3)
    thickness: np.ndarray = None  # (nt,) mm
    rim_vertex_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    vein_patch_vertex_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    roof_angle_deg: float = 35.0
    rim_band_deg: float = 5.0

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def rest_area(self) -> np.ndarray:
        return triangle_areas(self.vertices, self.triangles)

    @property
    def is_closed(self) -> bool:
        return len(self.rim_vertex_ids) == 0

    @property
    def free_vertex_ids(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.rim_vertex_ids] = False
        return np.flatnonzero(mask)

    def region_mask(self, name: str) -> np.ndarray:
        return self.region_tag == REGION_NAMES.index(name)

    def tag_names(self) -> list[str]:
        return [REGION_NAMES[t] for t in self.region_tag]


@dataclass(frozen=True)
class DisplacementField:
    values: np.ndarray  # (nv, 3) mm, relative to the ED reference
    timestamp: float = 0.0


# ----------------------------------------------------------------------------
# elementary geometry


def triangle_normals(x: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Unnormalised normals (length = 2 * area)."""
    a, b, c = x[tris[:, 0]], x[tris[:, 1]], x[tris[:, 2]]
    return np.cross(b - a, c - a)


def triangle_areas(x: np.ndarray, tris: np.ndarray) -> np.ndarray:
    return 0.5 * np.linalg.norm(triangle_normals(x, tris), axis=1)


def vertex_areas(x: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Barycentric lumped area per vertex."""
    area = triangle_areas(x, tris)
    out = np.zeros(len(x))
    for k in range(3):
        np.add.at(out, tris[:, k], area / 3.0)
    return out


def vertex_normals(x: np.ndarray, tris: np.ndarray) -> np.ndarray:
    n = triangle_normals(x, tris)
    out = np.zeros_like(x)
    for k in range(3):
        np.add.at(out, tris[:, k], n)
    norm = np.linalg.norm(out, axis=1, keepdims=True)
    norm[norm == 0.0] = 1.0
    return out / norm


def colatitude(points: np.ndarray) -> np.ndarray:
    """Angle from +z in degrees."""
    r = np.linalg.norm(points, axis=1)
    return np.degrees(np.arccos(np.clip(points[:, 2] / r, -1.0, 1.0)))


def azimuth(points: np.ndarray) -> np.ndarray:
    """Azimuth in degrees, in [0, 360)."""
    return np.mod(np.degrees(np.arctan2(points[:, 1], points[:, 0])), 360.0)


def boundary_edges(tris: np.ndarray) -> np.ndarray:
    """Directed edges (as they appear in their triangle) used by one triangle only."""
    directed = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    key = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        raise TopologyError("non-manifold edge shared by more than two triangles")
    return directed[counts[inverse] == 1]


def triangle_neighbors(tris: np.ndarray) -> list[list[int]]:
    """Edge-adjacent triangles for each triangle."""
    owner: dict[tuple[int, int], list[int]] = {}
    for t, tri in enumerate(tris):
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            owner.setdefault((min(a, b), max(a, b)), []).append(t)
    nbrs: list[list[int]] = [[] for _ in range(len(tris))]
    for ts in owner.values():
        if len(ts) == 2:
            nbrs[ts[0]].append(ts[1])
            nbrs[ts[1]].append(ts[0])
    return nbrs


def _rim_loop_ok(edges: np.ndarray) -> bool:
    if len(edges) == 0:
        return True
    nxt = {}
    for a, b in edges:
        if a in nxt:
            return False
        nxt[int(a)] = int(b)
    if sorted(nxt) != sorted(int(b) for b in edges[:, 1]):
        return False
    start = int(edges[0, 0])
    v, steps = nxt[start], 1
    while v != start:
        v = nxt[v]
        steps += 1
        if steps > len(edges):
            return False
    return steps == len(edges)


# ----------------------------------------------------------------------------
# construction


def _subdivided_octahedron(refinement: int, full_sphere: bool):
    verts = [
        np.array([1.0, 0.0, 0.0]),
        np.array([0.0, 1.0, 0.0]),
        np.array([-1.0, 0.0, 0.0]),
        np.array([0.0, -1.0, 0.0]),
        np.array([0.0, 0.0, 1.0]),
    ]
    tris = [(k, (k + 1) % 4, 4) for k in range(4)]
    if full_sphere:
        verts.append(np.array([0.0, 0.0, -1.0]))
        tris += [((k + 1) % 4, k, 5) for k in range(4)]

    for _ in range(refinement):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in tris:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        tris = new
    return np.array(verts), np.array(tris, dtype=np.int64)


def _thickness_from_profile(mesh: ShellMesh, profile) -> np.ndarray:
    if isinstance(profile, Mapping):
        fallback = profile.get("others", profile.get("default"))
        h = np.empty(mesh.n_triangles)
        for t, tag in enumerate(mesh.region_tag):
            name = REGION_NAMES[tag]
            value = profile.get(name, fallback)
            if value is None:
                raise InvalidGeometryError(f"no thickness given for region {name!r}")
            h[t] = float(value)
    else:
        h = np.full(mesh.n_triangles, float(profile))
    if not np.all(h > 0.0):
        raise InvalidGeometryError("thickness must be positive")
    return h


def _vein_patch(x: np.ndarray, rim: np.ndarray, radius_deg: float) -> np.ndarray:
    # right pulmonary vein analogue: septal-posterior side of the roof
    theta, phi = np.radians(45.0), np.radians(135.0)
    centre = np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    unit = x / np.linalg.norm(x, axis=1, keepdims=True)
    ang = np.degrees(np.arccos(np.clip(unit @ centre, -1.0, 1.0)))
    ang[rim] = np.inf
    ids = np.flatnonzero(ang <= radius_deg)
    if len(ids) == 0:
        ids = np.array([int(np.argmin(ang))])
    return ids


def build_hemisphere_mesh(
    radius: float = 20.0,
    refinement: int = 3,
    thickness_profile: float | Mapping[str, float] = 2.0,
    roof_angle_deg: float = 35.0,
    rim_band_deg: float = 5.0,
    vein_radius_deg: float = 20.0,
) -> ShellMesh:
    """Hemispherical shell with regions, fibres and thickness assigned.

    Parameters
    ----------
    radius : float
        Sphere radius in mm.
    refinement : int
        Number of midpoint subdivisions; the vertex count grows about 4x per level.
    thickness_profile : float or mapping
        Uniform wall thickness in mm, or a ``{region: mm}`` map where the key
        ``"others"`` supplies the value for unlisted regions.
    """
    if not radius > 0.0:
        raise InvalidGeometryError(f"radius must be positive, got {radius}")
    if refinement < 0:
        raise InvalidGeometryError(f"refinement must be >= 0, got {refinement}")
    unit, tris = _subdivided_octahedron(int(refinement) + 1, full_sphere=False)
    x = unit * radius
    x[np.abs(unit[:, 2]) < 1e-14, 2] = 0.0
    rim = np.flatnonzero(x[:, 2] == 0.0)
    mesh = ShellMesh(
        vertices=x,
        triangles=tris,
        radius=float(radius),
        rim_vertex_ids=rim,
        vein_patch_vertex_ids=_vein_patch(x, rim, vein_radius_deg),
        roof_angle_deg=roof_angle_deg,
        rim_band_deg=rim_band_deg,
    )
    mesh = assign_fibers(assign_regions(mesh))
    mesh = replace(mesh, thickness=_thickness_from_profile(mesh, thickness_profile))
    validate_mesh(mesh)
    return mesh


def build_sphere_mesh(radius: float = 20.0, refinement: int = 2, thickness: float = 2.0) -> ShellMesh:
    """Closed sphere (no rim) used by the inflation benchmark."""
    if not radius > 0.0:
        raise InvalidGeometryError(f"radius must be positive, got {radius}")
    unit, tris = _subdivided_octahedron(int(refinement) + 1, full_sphere=True)
    mesh = ShellMesh(vertices=unit * radius, triangles=tris, radius=float(radius), rim_band_deg=None)
    mesh = assign_fibers(assign_regions(mesh))
    return replace(mesh, thickness=_thickness_from_profile(mesh, thickness))


def assign_regions(mesh: ShellMesh) -> ShellMesh:
    """Tag roof cap, four azimuthal quadrants and the equatorial rim band.

    Each tag is then made contiguous: detached pieces of a region are
    merged into the most common neighbouring tag.
    """
    x, tris = mesh.vertices, mesh.triangles
    centroid = x[tris].mean(axis=1)
    theta = colatitude(centroid)
    phi = azimuth(centroid)

    tag = np.full(len(tris), UNTAGGED, dtype=np.int64)
    for name, centre in _QUADRANT_CENTRES.items():
        offset = np.mod(phi - centre + 45.0, 360.0)
        tag[offset < 90.0] = REGION_NAMES.index(name)
    tag[theta < mesh.roof_angle_deg] = ROOF

    rim_fixed = np.zeros(len(tris), dtype=bool)
    if mesh.rim_band_deg is not None:
        rim_fixed = theta > 90.0 - mesh.rim_band_deg
        if len(mesh.rim_vertex_ids):
            on_rim = np.isin(tris, mesh.rim_vertex_ids).sum(axis=1) >= 2
            rim_fixed |= on_rim
        tag[rim_fixed] = RIM

    tag = _make_contiguous(tag, triangle_neighbors(tris), rim_fixed)
    return replace(mesh, region_tag=tag)


def _components(members: np.ndarray, nbrs: list[list[int]], tag: np.ndarray) -> list[list[int]]:
    seen: set[int] = set()
    comps = []
    for start in members:
        if start in seen:
            continue
        stack, comp = [int(start)], []
        seen.add(int(start))
        while stack:
            t = stack.pop()
            comp.append(t)
            for n in nbrs[t]:
                if n not in seen and tag[n] == tag[t]:
                    seen.add(n)
                    stack.append(n)
        comps.append(sorted(comp))
    return comps


def _make_contiguous(tag: np.ndarray, nbrs: list[list[int]], frozen: np.ndarray) -> np.ndarray:
    tag = tag.copy()
    for _ in range(len(tag)):
        changed = False
        for region in range(len(REGION_NAMES)):
            if region == RIM:
                continue
            members = np.flatnonzero(tag == region)
            if len(members) == 0:
                continue
            comps = _components(members, nbrs, tag)
            if len(comps) <= 1:
                continue
            comps.sort(key=lambda c: (-len(c), c[0]))
            for comp in comps[1:]:
                for t in comp:
                    if frozen[t]:
                        continue
                    votes = [tag[n] for n in nbrs[t] if tag[n] != region]
                    wall = [v for v in votes if v != RIM]
                    pool = wall or votes
                    if pool:
                        counts = np.bincount(pool, minlength=len(REGION_NAMES))
                        tag[t] = int(np.argmax(counts))
                        changed = True
        if not changed:
            break
    return tag


def assign_fibers(mesh: ShellMesh, pole_cutoff_deg: float = 2.0) -> ShellMesh:
    """Circumferential fibre rule.

    The fibre is the horizontal direction in each triangle's plane
    (``z x n``), oriented with increasing azimuth.  Triangles whose
    centroid is within ``pole_cutoff_deg`` of the pole use the projected
    global x-axis instead.
    """
    x, tris = mesh.vertices, mesh.triangles
    n = triangle_normals(x, tris)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    centroid = x[tris].mean(axis=1)
    e_phi = np.stack([-centroid[:, 1], centroid[:, 0], np.zeros(len(tris))], axis=1)

    f = np.cross(np.array([0.0, 0.0, 1.0]), n)
    flip = np.einsum("ij,ij->i", f, e_phi) < 0.0
    f[flip] *= -1.0

    polar = (colatitude(centroid) < pole_cutoff_deg) | (colatitude(centroid) > 180.0 - pole_cutoff_deg)
    polar |= np.linalg.norm(f, axis=1) < 1e-8
    if np.any(polar):
        ex = np.array([1.0, 0.0, 0.0])
        f[polar] = ex - np.outer(n[polar] @ ex, np.ones(3)) * n[polar]
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    s = np.cross(n, f)
    s /= np.linalg.norm(s, axis=1, keepdims=True)
    return replace(mesh, fiber_dir=f, sheet_dir=s)


def validate_mesh(mesh: ShellMesh) -> None:
    """Check the structural invariants; raises on violation."""
    if not np.all(mesh.rest_area > 0.0):
        raise InvalidGeometryError("degenerate triangle with zero area")
    centroid = mesh.vertices[mesh.triangles].mean(axis=1)
    n = triangle_normals(mesh.vertices, mesh.triangles)
    if np.any(np.einsum("ij,ij->i", n, centroid) <= 0.0):
        raise OrientationError("triangle normal points inward")
    if mesh.fiber_dir is not None:
        dots = np.abs(np.einsum("ij,ij->i", mesh.fiber_dir, mesh.sheet_dir))
        if np.any(dots > 1e-12):
            raise InvalidGeometryError("fibre and sheet directions are not orthogonal")
    if len(mesh.rim_vertex_ids) and np.any(np.abs(mesh.vertices[mesh.rim_vertex_ids, 2]) > 1e-9):
        raise InvalidGeometryError("rim vertices are off the equatorial plane")
    if mesh.thickness is not None and not np.all(mesh.thickness > 0.0):
        raise InvalidGeometryError("thickness must be positive")


# ----------------------------------------------------------------------------
# volume and displacement features


def _as_displacement(mesh: ShellMesh, displacement) -> np.ndarray:
    if displacement is None:
        return np.zeros_like(mesh.vertices)
    values = displacement.values if isinstance(displacement, DisplacementField) else np.asarray(displacement)
    if values.shape != mesh.vertices.shape:
        raise InvalidGeometryError(
            f"displacement shape {values.shape} does not match vertices {mesh.vertices.shape}"
        )
    return values


def closed_volume(x: np.ndarray, tris: np.ndarray, rim_edges: np.ndarray | None = None) -> float:
    """Signed volume of the surface closed by a fan cap over ``rim_edges``."""
    a, b, c = x[tris[:, 0]], x[tris[:, 1]], x[tris[:, 2]]
    six_v = np.einsum("ij,ij->", a, np.cross(b, c))
    if rim_edges is not None and len(rim_edges):
        rim_ids = np.unique(rim_edges)
        centre = x[rim_ids].mean(axis=0)
        p, q = x[rim_edges[:, 1]], x[rim_edges[:, 0]]
        six_v += np.einsum("ij,ij->", p, np.cross(q, np.broadcast_to(centre, p.shape)))
    return six_v / 6.0


def enclosed_volume(mesh: ShellMesh, displacement=None) -> float:
    """Volume in mm^3 of the (deformed) shell closed by the rim cap.

    The cap is a fan from the rim centroid, recomputed on the deformed rim.
    """
    edges = boundary_edges(mesh.triangles)
    if not _rim_loop_ok(edges):
        raise TopologyError("surface boundary is not a single closed rim loop")
    x = mesh.vertices + _as_displacement(mesh, displacement)
    volume = closed_volume(x, mesh.triangles, edges)
    if not volume > 0.0:
        raise OrientationError(f"non-positive enclosed volume {volume:.6g}; surface orientation is inverted")
    return float(volume)


def regional_displacement(mesh: ShellMesh, displacement) -> dict[str, float]:
    """Mean element-centre displacement magnitude per region, plus ``global``.

    Rim-band triangles are excluded from every average.
    """
    u = _as_displacement(mesh, displacement)
    mag = np.linalg.norm(u[mesh.triangles].mean(axis=1), axis=1)
    out: dict[str, float] = {}
    wall = mesh.region_tag != RIM
    if not np.any(wall):
        raise MissingRegionError("mesh has no non-rim triangles")
    out["global"] = float(mag[wall].mean())
    for name in FEATURE_REGIONS:
        mask = mesh.region_tag == REGION_NAMES.index(name)
        if not np.any(mask):
            raise MissingRegionError(f"region {name!r} has no triangles")
        out[name] = float(mag[mask].mean())
    return out


# ----------------------------------------------------------------------------
# text export / import


def save_mesh(mesh: ShellMesh, path: str | Path, header_lines: Sequence[str] = ()) -> None:
    """Write the plain-text mesh format (see README for the grammar)."""
    lines = ["# atriafit shell mesh v1", *(f"# {h}" for h in header_lines), f"radius {mesh.radius!r}",
             f"angles {mesh.roof_angle_deg!r} {mesh.rim_band_deg!r}"]
    lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    for (i, j, k), tag in zip(mesh.triangles.tolist(), mesh.region_tag.tolist()):
        lines.append(f"t {i} {j} {k} {REGION_NAMES[tag]}")
    for f, s, h in zip(mesh.fiber_dir.tolist(), mesh.sheet_dir.tolist(), mesh.thickness.tolist()):
        lines.append("f " + " ".join(repr(v) for v in (*f, *s, h)))
    lines += [f"rim {i}" for i in mesh.rim_vertex_ids.tolist()]
    lines += [f"vein {i}" for i in mesh.vein_patch_vertex_ids.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path: str | Path) -> ShellMesh:
    verts, tris, tags, aux, rim, vein = [], [], [], [], [], []
    radius, roof, band = None, 35.0, 5.0
    for raw in Path(path).read_text().splitlines():
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        key = parts[0]
        if key == "radius":
            radius = float(parts[1])
        elif key == "angles":
            roof = float(parts[1])
            band = None if parts[2] == "None" else float(parts[2])
        elif key == "v":
            verts.append([float(p) for p in parts[1:4]])
        elif key == "t":
            tris.append([int(p) for p in parts[1:4]])
            tags.append(REGION_NAMES.index(parts[4]))
        elif key == "f":
            aux.append([float(p) for p in parts[1:8]])
        elif key == "rim":
            rim.append(int(parts[1]))
        elif key == "vein":
            vein.append(int(parts[1]))
        else:
            raise InvalidGeometryError(f"unknown mesh record {key!r}")
    aux_arr = np.array(aux)
    return ShellMesh(
        vertices=np.array(verts),
        triangles=np.array(tris, dtype=np.int64),
        radius=radius,
        region_tag=np.array(tags, dtype=np.int64),
        fiber_dir=aux_arr[:, 0:3],
        sheet_dir=aux_arr[:, 3:6],
        thickness=aux_arr[:, 6],
        rim_vertex_ids=np.array(rim, dtype=np.int64),
        vein_patch_vertex_ids=np.array(vein, dtype=np.int64),
        roof_angle_deg=roof,
        rim_band_deg=band,
    )
