"""Closed discrete hypersurfaces: representation, validation, generation, file I/O.

Two mesh modes are supported. ``surface`` meshes are closed oriented triangle
meshes embedded in R^3 (the main regime). ``curve`` meshes are closed planar
polylines in R^2 stored in cyclic vertex order with no explicit face list;
they provide an independent one-dimensional sanity regime for the same flow
machinery.
"""

from dataclasses import dataclass
from math import pi, sqrt
import os

import numpy as np

from .errors import MeshParseError, MeshTopologyError

FLOAT_FMT = "%.17g"  # lossless double round-trip


@dataclass(frozen=True)
class MeshQualityReport:
    """Connectivity and shape quality summary produced by :func:`validate`."""

    is_closed: bool
    is_oriented: bool
    min_face_area: float
    min_angle: float
    boundary_edge_count: int


class TriMesh:
    """Immutable indexed-face-set mesh (surface mode) or cyclic polyline (curve mode).

    Parameters
    ----------
    vertices : array_like
        Shape (n, 3) float positions for surfaces, (n, 2) for curves.
    faces : array_like | None
        Shape (m, 3) int vertex-index triples, oriented consistently
        (counter-clockwise seen from outside). ``None`` in curve mode,
        where edges are implied by cyclic vertex order.
    mode : str
        ``"surface"`` or ``"curve"``.

    Notes
    -----
    Construction performs hard structural checks only (index range, no
    degenerate faces). Closedness and orientation are reported by
    :func:`validate` and enforced by :func:`load_mesh` and the geometry
    operations that require them. Vertex and face arrays are frozen;
    derived meshes are created with :meth:`with_vertices`.
    """

    def __init__(self, vertices, faces=None, mode="surface"):
        vertices = np.asarray(vertices, dtype=np.float64)
        if mode == "surface":
            if vertices.ndim != 2 or vertices.shape[1] != 3:
                raise ValueError("surface vertices must have shape (n, 3)")
            if faces is None:
                raise ValueError("surface mesh requires a face list")
            faces = np.asarray(faces, dtype=np.int64)
            if faces.ndim != 2 or faces.shape[1] != 3:
                raise ValueError("faces must have shape (m, 3)")
            if len(faces) and (faces.min() < 0 or faces.max() >= len(vertices)):
                raise ValueError("face index out of range")
            degen = (
                (faces[:, 0] == faces[:, 1])
                | (faces[:, 1] == faces[:, 2])
                | (faces[:, 2] == faces[:, 0])
            )
            if degen.any():
                raise ValueError(
                    f"{int(degen.sum())} degenerate faces (repeated vertex index)"
                )
        elif mode == "curve":
            if vertices.ndim != 2 or vertices.shape[1] != 2:
                raise ValueError("curve vertices must have shape (n, 2)")
            if len(vertices) < 3:
                raise ValueError("curve needs at least 3 vertices")
            if faces is not None:
                raise ValueError("curve mode takes no face list")
        else:
            raise ValueError(f"unknown mesh mode {mode!r}")

        vertices.setflags(write=False)
        self.vertices = vertices
        if faces is not None:
            faces.setflags(write=False)
        self.faces = faces
        self.mode = mode
        if mode == "surface":
            self._build_edge_table()
        else:
            n = len(vertices)
            e = np.column_stack([np.arange(n), np.roll(np.arange(n), -1)])
            e.setflags(write=False)
            self.directed_edges = e

    # -- connectivity -------------------------------------------------------

    def _build_edge_table(self):
        f = self.faces
        de = np.vstack([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        de.setflags(write=False)
        self.directed_edges = de
        und = np.sort(de, axis=1)
        edges, counts = np.unique(und, axis=0, return_counts=True)
        edges.setflags(write=False)
        self.edges = edges
        self._edge_counts = counts
        # orientation balance: a consistently oriented interior edge appears
        # once in each direction
        key = de[:, 0].astype(np.int64) * len(self.vertices) + de[:, 1]
        self._has_duplicate_directed = len(np.unique(key)) != len(key)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return 0 if self.faces is None else len(self.faces)

    @property
    def is_closed(self):
        if self.mode == "curve":
            return True
        return bool((self._edge_counts == 2).all())

    def with_vertices(self, vertices):
        """Return a mesh with the same connectivity and new vertex positions.

        Shares all derived connectivity tables with the source mesh; only the
        positions are replaced (and frozen).
        """
        vertices = np.asarray(vertices, dtype=np.float64)
        if vertices.shape != self.vertices.shape:
            raise ValueError("vertex array shape must be preserved")
        clone = object.__new__(TriMesh)
        clone.__dict__.update(self.__dict__)
        vertices = vertices.copy()
        vertices.setflags(write=False)
        clone.vertices = vertices
        return clone

    def edge_lengths(self):
        v = self.vertices
        e = self.directed_edges if self.mode == "curve" else self.edges
        return np.linalg.norm(v[e[:, 0]] - v[e[:, 1]], axis=1)

    def __eq__(self, other):
        if not isinstance(other, TriMesh) or self.mode != other.mode:
            return NotImplemented if not isinstance(other, TriMesh) else False
        same_f = (self.faces is None) == (other.faces is None) and (
            self.faces is None or np.array_equal(self.faces, other.faces)
        )
        return same_f and np.array_equal(self.vertices, other.vertices)

    def __repr__(self):
        return f"TriMesh(mode={self.mode!r}, |V|={self.n_vertices}, |F|={self.n_faces})"


def _face_corner_angles(mesh):
    p = mesh.vertices[mesh.faces]
    ang = np.empty((len(mesh.faces), 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        nu = np.linalg.norm(u, axis=1)
        nv = np.linalg.norm(v, axis=1)
        denom = np.where(nu * nv == 0, 1.0, nu * nv)
        c = np.clip(np.einsum("ij,ij->i", u, v) / denom, -1.0, 1.0)
        ang[:, k] = np.arccos(c)
    return ang


def _face_areas(mesh):
    p = mesh.vertices[mesh.faces]
    cr = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    return 0.5 * np.linalg.norm(cr, axis=1)


def validate(mesh):
    """Compute a :class:`MeshQualityReport` from connectivity and positions.

    Never raises; all failures are carried by the report. A mesh is closed
    iff every undirected edge is shared by exactly two faces
    (``boundary_edge_count == 0`` and no over-shared edge), and oriented iff
    the two half-edges of every interior edge run in opposite directions.
    """
    if mesh.mode == "curve":
        seg = mesh.edge_lengths()
        t = np.diff(np.vstack([mesh.vertices, mesh.vertices[:1]]), axis=0)
        t = t / np.linalg.norm(t, axis=1)[:, None]
        c = np.clip(np.einsum("ij,ij->i", np.roll(t, 1, axis=0), t), -1, 1)
        turning = np.arccos(c)
        return MeshQualityReport(
            is_closed=True,
            is_oriented=bool(_shoelace_area(mesh.vertices) > 0),
            min_face_area=float(seg.min()),
            min_angle=float((pi - turning).min()),
            boundary_edge_count=0,
        )
    counts = mesh._edge_counts
    boundary = int((counts == 1).sum())
    overshared = bool((counts > 2).any())
    closed = boundary == 0 and not overshared
    oriented = not mesh._has_duplicate_directed and not overshared
    areas = _face_areas(mesh)
    angles = _face_corner_angles(mesh)
    return MeshQualityReport(
        is_closed=closed,
        is_oriented=oriented,
        min_face_area=float(areas.min()) if len(areas) else 0.0,
        min_angle=float(angles.min()) if len(angles) else 0.0,
        boundary_edge_count=boundary,
    )


def _shoelace_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _signed_volume(mesh):
    p = mesh.vertices[mesh.faces]
    cr = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    cent = (p[:, 0] + p[:, 1] + p[:, 2]) / 3.0
    return float(np.einsum("ij,ij->i", cent, cr).sum() / 6.0)


# -- file I/O ---------------------------------------------------------------


def load_mesh(path, fmt=None):
    """Load and validate a closed oriented mesh from OFF, OBJ or curve CSV.

    Parameters
    ----------
    path : str | os.PathLike
        Input file.
    fmt : str | None
        ``"off"``, ``"obj"`` or ``"csv"``; inferred from the extension when
        ``None``.

    Returns
    -------
    TriMesh

    Raises
    ------
    MeshParseError
        Malformed file.
    MeshTopologyError
        Open, non-manifold, inconsistently oriented or inward-oriented mesh.
    """
    fmt = (fmt or os.path.splitext(str(path))[1].lstrip(".")).lower()
    if fmt == "off":
        verts, faces = _read_off(path)
    elif fmt == "obj":
        verts, faces = _read_obj(path)
    elif fmt == "csv":
        pts = _read_curve_csv(path)
        return TriMesh(pts, mode="curve")
    else:
        raise MeshParseError(f"unsupported mesh format {fmt!r}")

    try:
        mesh = TriMesh(verts, faces)
    except ValueError as exc:
        raise MeshParseError(str(exc)) from exc
    report = validate(mesh)
    if not report.is_closed:
        raise MeshTopologyError(f"{report.boundary_edge_count} boundary edges")
    if not report.is_oriented:
        raise MeshTopologyError("inconsistent face orientation")
    if _signed_volume(mesh) <= 0:
        raise MeshTopologyError("inward orientation (negative enclosed volume)")
    return mesh


def save_mesh(mesh, path, fmt=None):
    """Write a mesh to OFF, OBJ or curve CSV with 17-significant-digit floats.

    A save/load round trip reproduces vertices bit-exactly and faces
    identically. Raises ``OSError`` on I/O failure.
    """
    fmt = (fmt or os.path.splitext(str(path))[1].lstrip(".")).lower()
    if mesh.mode == "curve":
        if fmt != "csv":
            raise ValueError("curve meshes serialize to CSV only")
        lines = [
            ",".join(FLOAT_FMT % c for c in row) for row in mesh.vertices
        ]
        _write_text(path, "\n".join(lines) + "\n")
        return
    if fmt == "off":
        out = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
        out += [" ".join(FLOAT_FMT % c for c in row) for row in mesh.vertices]
        out += ["3 %d %d %d" % tuple(f) for f in mesh.faces]
    elif fmt == "obj":
        out = ["v " + " ".join(FLOAT_FMT % c for c in row) for row in mesh.vertices]
        out += ["f %d %d %d" % tuple(f + 1) for f in mesh.faces]
    else:
        raise ValueError(f"unsupported mesh format {fmt!r}")
    _write_text(path, "\n".join(out) + "\n")


def _write_text(path, text):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(text)


def _data_lines(path):
    with open(path, encoding="ascii") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                yield line


def _read_off(path):
    lines = _data_lines(path)
    try:
        header = next(lines)
    except StopIteration:
        raise MeshParseError("empty OFF file") from None
    if header.startswith("OFF"):
        rest = header[3:].split()
        counts = rest if rest else next(lines, "").split()
    else:
        raise MeshParseError("missing OFF header")
    try:
        nv, nf = int(counts[0]), int(counts[1])
        verts = np.array(
            [[float(x) for x in next(lines).split()[:3]] for _ in range(nv)]
        )
        faces = []
        for _ in range(nf):
            parts = next(lines).split()
            if int(parts[0]) != 3:
                raise MeshParseError("OFF loader accepts triangles only")
            faces.append([int(x) for x in parts[1:4]])
    except (StopIteration, ValueError, IndexError) as exc:
        raise MeshParseError(f"malformed OFF file: {exc}") from exc
    return verts, np.array(faces, dtype=np.int64)


def _read_obj(path):
    verts, faces = [], []
    try:
        for line in _data_lines(path):
            parts = line.split()
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise MeshParseError("OBJ loader accepts triangles only")
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    except (ValueError, IndexError) as exc:
        raise MeshParseError(f"malformed OBJ file: {exc}") from exc
    if not verts or not faces:
        raise MeshParseError("OBJ file without vertices or faces")
    return np.array(verts), np.array(faces, dtype=np.int64)


def _read_curve_csv(path):
    try:
        rows = [
            [float(x) for x in line.split(",")[:2]] for line in _data_lines(path)
        ]
    except ValueError as exc:
        raise MeshParseError(f"malformed curve CSV: {exc}") from exc
    if len(rows) < 3:
        raise MeshParseError("curve CSV needs at least 3 points")
    return np.array(rows)


# -- generators -------------------------------------------------------------

_ICO_VERTS = None
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


def _icosahedron_vertices():
    global _ICO_VERTS
    if _ICO_VERTS is None:
        phi = (1.0 + sqrt(5.0)) / 2.0
        v = np.array(
            [
                [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
                [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
                [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
            ],
            dtype=np.float64,
        )
        _ICO_VERTS = v / np.linalg.norm(v[0])
    return _ICO_VERTS.copy()


def _unit_icosphere(subdivisions):
    """Midpoint-subdivided icosahedron, re-projected to the unit sphere each level.

    Midpoint indices are cached per sorted vertex pair in insertion order, so
    identical inputs produce bitwise-identical vertex arrays.
    """
    verts = list(_icosahedron_vertices())
    faces = _ICO_FACES
    for _ in range(subdivisions):
        cache = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = np.empty((4 * len(faces), 3), dtype=np.int64)
        for n, (a, b, c) in enumerate(faces):
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces[4 * n : 4 * n + 4] = [
                [a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca],
            ]
        faces = new_faces
    v = np.array(verts)
    return v / np.linalg.norm(v, axis=1)[:, None], faces


def gen_icosphere(radius, center=(0.0, 0.0, 0.0), subdivisions=0):
    """Generate a sphere mesh with 20 * 4**subdivisions faces.

    All vertices lie at exact distance ``radius`` from ``center`` up to
    rounding. Deterministic: identical inputs give bitwise-identical arrays.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")
    u, faces = _unit_icosphere(int(subdivisions))
    return TriMesh(np.asarray(center, dtype=np.float64) + radius * u, faces)


def gen_ellipsoid(a, b, c, subdivisions=0):
    """Generate an origin-centred ellipsoid by anisotropic scaling of an icosphere."""
    if min(a, b, c) <= 0:
        raise ValueError("semi-axes must be positive")
    u, faces = _unit_icosphere(int(subdivisions))
    return TriMesh(u * np.array([a, b, c], dtype=np.float64), faces)


@dataclass(frozen=True)
class SphericalHarmonicBump:
    """Real orthonormal spherical harmonic Y_lm as a radial bump profile."""

    degree: int
    order: int = 0

    def __post_init__(self):
        if abs(self.order) > self.degree:
            raise ValueError("|order| must not exceed degree")

    def evaluate(self, unit_points):
        from scipy.special import lpmv
        from math import factorial

        l, m = self.degree, abs(self.order)
        theta_cos = np.clip(unit_points[:, 2], -1.0, 1.0)
        norm = sqrt((2 * l + 1) / (4 * pi) * factorial(l - m) / factorial(l + m))
        p = lpmv(m, l, theta_cos)
        if self.order == 0:
            return norm * p
        phi = np.arctan2(unit_points[:, 1], unit_points[:, 0])
        if self.order > 0:
            return sqrt(2.0) * norm * p * np.cos(m * phi)
        return sqrt(2.0) * norm * p * np.sin(m * phi)


@dataclass(frozen=True)
class GaussianDentBump:
    """Gaussian profile in geodesic angle around a direction on the unit sphere."""

    direction: tuple = (0.0, 0.0, 1.0)
    width: float = 0.3  # radians

    def evaluate(self, unit_points):
        d = np.asarray(self.direction, dtype=np.float64)
        d = d / np.linalg.norm(d)
        ang = np.arccos(np.clip(unit_points @ d, -1.0, 1.0))
        return np.exp(-(ang**2) / (2.0 * self.width**2))


def gen_perturbed_sphere(radius, amplitude, bump, subdivisions=0):
    """Generate a radially perturbed sphere: v -> (radius + amplitude * bump(u)) u.

    Parameters
    ----------
    radius : float
    amplitude : float
        Must satisfy ``abs(amplitude) < radius / 2``; negative values dent
        the surface inward.
    bump : SphericalHarmonicBump | GaussianDentBump
    subdivisions : int
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if abs(amplitude) >= radius / 2:
        raise ValueError("amplitude must satisfy |amplitude| < radius/2")
    u, faces = _unit_icosphere(int(subdivisions))
    r = radius + amplitude * bump.evaluate(u)
    return TriMesh(r[:, None] * u, faces)


def gen_circle(radius, n_vertices, center=(0.0, 0.0)):
    """Generate a regular closed polygon (curve mode), counter-clockwise."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if n_vertices < 3:
        raise ValueError("need at least 3 vertices")
    th = 2 * pi * np.arange(n_vertices) / n_vertices
    pts = np.asarray(center) + radius * np.column_stack([np.cos(th), np.sin(th)])
    return TriMesh(pts, mode="curve")
