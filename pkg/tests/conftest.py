import numpy as np
import pytest

from sapflow import TriMesh, gen_icosphere


@pytest.fixture(scope="session")
def icosphere():
    """Cached icosphere factory: icosphere(radius, subdiv, center)."""
    cache = {}

    def make(radius=1.0, subdiv=3, center=(0.0, 0.0, 0.0)):
        key = (radius, subdiv, tuple(center))
        if key not in cache:
            cache[key] = gen_icosphere(radius, center, subdiv)
        return cache[key]

    return make


@pytest.fixture(scope="session")
def unit_cube():
    """Unit cube split into 12 triangles; corners 0 and 6 have symmetric stars."""
    verts = np.array(
        [
            [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
            [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
        ],
        dtype=float,
    )
    faces = [
        [0, 3, 2], [0, 2, 1],  # bottom
        [4, 5, 6], [4, 6, 7],  # top
        [0, 1, 5], [0, 5, 4],  # front
        [2, 3, 6], [3, 7, 6],  # back
        [1, 2, 6], [1, 6, 5],  # right
        [0, 4, 7], [0, 7, 3],  # left
    ]
    return TriMesh(verts, faces)


@pytest.fixture(scope="session")
def tetrahedron():
    verts = np.array(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float
    )
    faces = [[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]]
    return TriMesh(verts, faces)


@pytest.fixture(scope="session")
def flat_patch():
    """Triangulated unit square in the z=0 plane (open mesh)."""
    n = 9
    ax = np.linspace(0.0, 1.0, n)
    xx, yy = np.meshgrid(ax, ax, indexing="ij")
    verts = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(n * n)])
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            b = (i + 1) * n + j
            faces += [[a, b, b + 1], [a, b + 1, a + 1]]
    return TriMesh(verts, faces)


def make_cylinder_patch(n_theta, n_z, height=1.0):
    """Open unit-radius cylinder segment; returns (mesh, interior_vertex_mask)."""
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    zs = np.linspace(0.0, height, n_z)
    verts = []
    for z in zs:
        for t in th:
            verts.append([np.cos(t), np.sin(t), z])
    verts = np.array(verts)
    faces = []
    for k in range(n_z - 1):
        for i in range(n_theta):
            a = k * n_theta + i
            b = k * n_theta + (i + 1) % n_theta
            c = (k + 1) * n_theta + i
            d = (k + 1) * n_theta + (i + 1) % n_theta
            faces += [[a, b, d], [a, d, c]]
    # "interior" means at least two rings away from the open ends, so the
    # whole 1-ring of every marked vertex (and of its neighbours) is interior
    interior = np.zeros(len(verts), dtype=bool)
    interior[2 * n_theta : (n_z - 2) * n_theta] = True
    return TriMesh(verts, faces), interior
