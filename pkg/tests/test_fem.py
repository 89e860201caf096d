import numpy as np
import pytest

from kktprec import (
    ObservationSet,
    assemble_mass,
    assemble_observation,
    assemble_regularization,
    assemble_stiffness_nitsche,
    build_mesh,
    inner_solve_to_tol,
    interpolate_image,
    lump_mass,
    spmv,
)
from kktprec.fem import (
    PenaltyTooSmallError,
    assemble_stiffness_neumann,
    p1_gradients,
    p1_mass_element,
    p1_stiffness_element,
)
from kktprec.mesh import MeshParameterError, PointLocationError


# --- mass ------------------------------------------------------------------

def test_mass_partition_of_unity():
    mesh = build_mesh(1.0, 1.0, 1, 1)
    w = assemble_mass(mesh)
    assert abs(w.to_dense().sum() - 1.0) <= 1e-12


def test_mass_total_sum_rectangle():
    mesh = build_mesh(1.45, 1.0, 5, 4)
    assert abs(assemble_mass(mesh).to_dense().sum() - 1.45) <= 1e-12


def test_mass_exact_symmetry():
    w = assemble_mass(build_mesh(2.0, 1.0, 4, 3)).to_dense()
    assert np.array_equal(w, w.T)


def test_mass_element_closed_form():
    area = 0.37
    expected = (area / 12.0) * np.array(
        [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])
    assert np.allclose(p1_mass_element(area), expected, rtol=0, atol=1e-16)


def test_stiffness_element_unit_right_triangle():
    xy = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    expected = 0.5 * np.array(
        [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    assert np.allclose(p1_stiffness_element(xy), expected, atol=1e-14)
    # gradients of the barycentric basis on that triangle
    grads = p1_gradients(xy)
    assert np.allclose(grads, [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]], atol=1e-14)


def test_mass_spd():
    w = assemble_mass(build_mesh(1.0, 1.0, 3, 3))
    eigs = np.linalg.eigvalsh(w.to_dense())
    assert eigs[0] > 0.0


# --- lumped mass -------------------------------------------------------------

def test_lump_interior_entry():
    mesh = build_mesh(1.0, 1.0, 4, 4)
    wl = lump_mass(assemble_mass(mesh))
    k = mesh.vertex_index(2, 2)
    # interior vertex touches 6 triangles of area dx*dy/2 each; a third of
    # that mass lands on the vertex
    assert abs(wl[k] - mesh.dx * mesh.dy) <= 1e-14


def test_lump_unit_square_sum():
    wl = lump_mass(assemble_mass(build_mesh(1.0, 1.0, 1, 1)))
    assert abs(wl.sum() - 1.0) <= 1e-14


def test_lump_corner_entries():
    mesh = build_mesh(1.0, 1.0, 3, 3)
    wl = lump_mass(assemble_mass(mesh))
    tri_area = mesh.dx * mesh.dy / 2.0
    # bottom-right corner sits in exactly one triangle
    assert abs(wl[mesh.vertex_index(3, 0)] - tri_area / 3.0) <= 1e-15
    # bottom-left corner sits in two (the diagonal passes through it)
    assert abs(wl[mesh.vertex_index(0, 0)] - 2.0 * tri_area / 3.0) <= 1e-15


def test_lump_equals_row_sums():
    w = assemble_mass(build_mesh(1.45, 1.0, 4, 3))
    assert np.allclose(lump_mass(w), w.to_dense().sum(axis=1), atol=1e-15)


# --- Nitsche stiffness -------------------------------------------------------

def test_nitsche_exact_symmetry():
    a = assemble_stiffness_nitsche(build_mesh(1.0, 1.0, 4, 4)).to_dense()
    assert np.array_equal(a, a.T)


def test_nitsche_positive_definite_at_default_penalty():
    a = assemble_stiffness_nitsche(build_mesh(1.45, 1.0, 4, 3), verify=True)
    assert np.linalg.eigvalsh(a.to_dense())[0] > 0.0


def test_nitsche_rejects_tiny_penalty():
    with pytest.raises(PenaltyTooSmallError):
        assemble_stiffness_nitsche(build_mesh(1.0, 1.0, 4, 4), gamma0=1e-3, verify=True)


def test_nitsche_rejects_nonpositive_penalty():
    with pytest.raises(MeshParameterError):
        assemble_stiffness_nitsche(build_mesh(1.0, 1.0, 2, 2), gamma0=0.0)


def poisson_l2_error(nx, ny, lx=1.0, ly=1.0, gamma0=10.0):
    """Manufactured Poisson solve; returns the mass-norm interpolation error."""
    mesh = build_mesh(lx, ly, nx, ny)
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    u_star = np.sin(np.pi * x / lx) * np.sin(np.pi * y / ly)
    f = np.pi**2 * (1.0 / lx**2 + 1.0 / ly**2) * u_star
    a = assemble_stiffness_nitsche(mesh, gamma0=gamma0)
    w = assemble_mass(mesh)
    u_h = inner_solve_to_tol(a, spmv(w, f), 1e-12)
    e = u_h - u_star
    return float(np.sqrt(e @ spmv(w, e)))


def test_manufactured_convergence_rate():
    errs = [poisson_l2_error(n, n) for n in (8, 16, 32)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 1.8), rates


def test_penalty_limit_pins_boundary():
    mesh = build_mesh(1.0, 1.0, 8, 8)
    bdry = mesh.boundary_vertices()
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    f = np.ones(mesh.n_vertices)
    w = assemble_mass(mesh)

    def boundary_max(gamma0):
        a = assemble_stiffness_nitsche(mesh, gamma0=gamma0)
        u = inner_solve_to_tol(a, spmv(w, f), 1e-12)
        return float(np.abs(u[bdry]).max())

    b_small = boundary_max(1e2)
    b_large = boundary_max(1e5)
    # boundary values decay like 1/gamma0
    assert b_large <= 3.0 * b_small * (1e2 / 1e5)
    assert b_large <= 1e-4


# --- regularization ----------------------------------------------------------

def test_regularization_annihilates_constants_up_to_shift():
    mesh = build_mesh(1.45, 1.0, 5, 4)
    reg = assemble_regularization(mesh, t=0.1)
    w = assemble_mass(mesh)
    ones = np.ones(mesh.n_vertices)
    assert np.max(np.abs(spmv(reg, ones) - 0.1 * spmv(w, ones))) <= 1e-13


def test_regularization_hand_assembled_single_cell():
    # 1x1-cell unit square, t=1: compare against element-by-element hand
    # assembly of stiffness + mass into the 4-vertex dense matrix
    mesh = build_mesh(1.0, 1.0, 1, 1)
    reg = assemble_regularization(mesh, t=1.0).to_dense()
    expected = np.zeros((4, 4))
    for tri in mesh.triangles:
        xy = mesh.vertices[tri]
        ke = p1_stiffness_element(xy) + p1_mass_element(0.5)
        for i in range(3):
            for j in range(3):
                expected[tri[i], tri[j]] += ke[i, j]
    assert np.allclose(reg, expected, atol=1e-14)


def test_regularization_spd():
    reg = assemble_regularization(build_mesh(1.0, 1.0, 4, 4), t=0.1)
    assert np.linalg.eigvalsh(reg.to_dense())[0] > 0.0


def test_regularization_rejects_nonpositive_shift():
    with pytest.raises(MeshParameterError):
        assemble_regularization(build_mesh(1.0, 1.0, 2, 2), t=0.0)


def test_regularization_equals_neumann_plus_shifted_mass():
    mesh = build_mesh(1.45, 1.0, 3, 3)
    reg = assemble_regularization(mesh, t=0.25).to_dense()
    k = assemble_stiffness_neumann(mesh).to_dense()
    w = assemble_mass(mesh).to_dense()
    assert np.allclose(reg, k + 0.25 * w, atol=1e-14)


# --- observation -------------------------------------------------------------

def test_observation_row_at_vertex():
    mesh = build_mesh(1.0, 1.0, 2, 2)
    j = mesh.vertex_index(1, 1)
    obs = ObservationSet(points=mesh.vertices[[j]], lx=1.0, ly=1.0)
    row = assemble_observation(mesh, obs).to_dense()[0]
    e_j = np.zeros(mesh.n_vertices)
    e_j[j] = 1.0
    assert np.allclose(row, e_j, atol=1e-14)


def test_observation_row_at_centroid():
    mesh = build_mesh(1.0, 1.0, 2, 2)
    tri = mesh.triangles[0]
    centroid = mesh.vertices[tri].mean(axis=0)
    obs = ObservationSet(points=centroid[None, :], lx=1.0, ly=1.0)
    row = assemble_observation(mesh, obs).to_dense()[0]
    expected = np.zeros(mesh.n_vertices)
    expected[tri] = 1.0 / 3.0
    assert np.allclose(row, expected, atol=1e-13)


def test_observation_row_at_edge_midpoint():
    # center of a cell lies on the shared diagonal: two weights of 1/2
    mesh = build_mesh(1.0, 1.0, 2, 2)
    point = np.array([[0.25, 0.25]])
    row = assemble_observation(mesh, ObservationSet(points=point, lx=1.0, ly=1.0)).to_dense()[0]
    nz = row[row > 1e-13]
    assert nz.size == 2
    assert np.allclose(nz, 0.5, atol=1e-13)


def test_observation_rows_sum_to_one():
    mesh = build_mesh(1.45, 1.0, 5, 4)
    rng = np.random.default_rng(2)
    pts = np.column_stack([rng.uniform(0.01, 1.44, 40), rng.uniform(0.01, 0.99, 40)])
    b = assemble_observation(mesh, ObservationSet(points=pts, lx=1.45, ly=1.0))
    sums = b.to_dense().sum(axis=1)
    assert np.max(np.abs(sums - 1.0)) <= 1e-13
    # at most 3 entries per row
    assert np.max(np.diff(b.indptr)) <= 3


def test_observation_converges_to_point_values():
    # B applied to the interpolant of a smooth field approaches pointwise
    # values under refinement
    pts = np.array([[0.312, 0.471], [0.9, 0.13], [0.05, 0.88]])
    f = lambda x, y: np.sin(2.3 * x) * np.cos(1.1 * y)
    errs = []
    for n in (4, 8, 16, 32):
        mesh = build_mesh(1.0, 1.0, n, n)
        b = assemble_observation(mesh, ObservationSet(points=pts, lx=1.0, ly=1.0))
        vals = spmv(b, f(mesh.vertices[:, 0], mesh.vertices[:, 1]))
        errs.append(np.max(np.abs(vals - f(pts[:, 0], pts[:, 1]))))
    assert errs[-1] < errs[0]
    assert errs[-1] <= 5e-3


def test_observation_rejects_outside_point():
    mesh = build_mesh(1.0, 1.0, 2, 2)
    with pytest.raises(PointLocationError):
        ObservationSet(points=np.array([[1.5, 0.5]]), lx=1.0, ly=1.0)


# --- image interpolation -----------------------------------------------------

def test_image_constant_maps_to_low():
    mesh = build_mesh(1.0, 1.0, 2, 2)
    field = interpolate_image(mesh, np.full((4, 4), 7.0), low=0.25, high=1.0)
    assert np.all(field.values == 0.25)


def test_image_linear_ramp():
    mesh = build_mesh(1.0, 1.0, 4, 4)
    img = np.array([[0.0, 1.0], [0.0, 1.0]])
    field = interpolate_image(mesh, img, low=0.0, high=1.0)
    assert np.allclose(field.values, mesh.vertices[:, 0], atol=1e-13)


def test_image_rescale_range():
    mesh = build_mesh(1.0, 1.0, 3, 3)
    rng = np.random.default_rng(4)
    img = rng.uniform(-5.0, 9.0, size=(6, 7))
    field = interpolate_image(mesh, img, low=0.0, high=1.0)
    assert field.values.min() >= -1e-12
    assert field.values.max() <= 1.0 + 1e-12


def test_image_row_zero_is_top():
    mesh = build_mesh(1.0, 1.0, 2, 2)
    img = np.array([[1.0, 1.0], [0.0, 0.0]])  # bright top row
    field = interpolate_image(mesh, img)
    top = mesh.vertex_index(0, mesh.ny)
    bottom = mesh.vertex_index(0, 0)
    assert field.values[top] == 1.0
    assert field.values[bottom] == 0.0


def test_image_rejects_empty():
    mesh = build_mesh(1.0, 1.0, 2, 2)
    with pytest.raises(ValueError):
        interpolate_image(mesh, np.zeros((0, 3)))
