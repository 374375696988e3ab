import numpy as np
import pytest
import scipy.linalg as sla

from acoustic_vem import assemble, build_dof_map, build_mesh, generate_mesh, refine_cells, solve_smallest_positive
from acoustic_vem.eig import SolverConfig
from acoustic_vem.errors import DegenerateCell, DimensionMismatch, UnsupportedDegree, ZeroEigenvalue
from acoustic_vem.mesh import CellGeometry, EdgeGeometry, cell_geometry, check_regularity
from acoustic_vem.vem import (
    interpolate_constant,
    interpolate_field,
    local_operators,
    reconstruct_fields,
    write_triplets,
)

from conftest import square_grid, two_squares

UNIT = build_mesh([(0, 0), (1, 0), (1, 1), (0, 1)], [[0, 1, 2, 3]])

MESHES = {
    "squares": lambda: square_grid(3),
    "triangles": lambda: generate_mesh("l_shape", "triangles", 4),
    "hexagons": lambda: generate_mesh("l_shape", "hexagons", 4),
    "trapezoids": lambda: generate_mesh("unit_square", "trapezoids", 4),
    "mix": lambda: generate_mesh("h_shape", "square_triangle_mix", 8),
    "voronoi": lambda: generate_mesh("circle_obstacles", "voronoi", 60, 0),
    "hanging": lambda: refine_cells(refine_cells(square_grid(3), {4}), {0, 1}),
}


class TestDofMap:
    def test_single_square(self):
        dm = build_dof_map(UNIT)
        assert (dm.n_total, dm.n_free) == (4, 0)

    def test_two_by_two(self):
        m = square_grid(2)
        dm = build_dof_map(m)
        assert m.n_edges == 12
        assert dm.n_free == 4 == dm.n_total - int(m.boundary_edges.sum())

    def test_opposite_signs(self):
        m = two_squares()
        e = int(np.flatnonzero(~m.boundary_edges)[0])
        signs = [int(s) for c in range(2) for s, edge in zip(m.cell_signs(c), m.cell_edges(c)) if edge == e]
        assert signs[0] * signs[1] == -1

    def test_higher_degree_rejected(self):
        with pytest.raises(UnsupportedDegree):
            build_dof_map(UNIT, k=1)

    def test_extend_restrict(self):
        dm = build_dof_map(square_grid(2))
        w = dm.extend(np.arange(4.0))
        assert np.array_equal(dm.restrict(w), np.arange(4.0))
        assert np.all(w[dm.boundary] == 0)
        with pytest.raises(DimensionMismatch):
            dm.extend(np.zeros(5))


class TestLocalOperators:
    # loop (0,0),(1,0),(1,1),(0,1): edges bottom, right, top, left

    def ops(self):
        return local_operators(cell_geometry(UNIT, 0))

    def test_constant_field(self):
        op = self.ops()
        dofs = np.array([0.0, 1.0, 0.0, -1.0])
        assert op.d @ dofs == pytest.approx(0.0, abs=1e-15)
        assert op.P @ dofs == pytest.approx([1.0, 0.0], abs=1e-15)
        assert np.abs((np.eye(4) - op.Pi_dof) @ dofs).max() < 1e-15
        assert dofs @ op.S @ dofs == pytest.approx(0.0, abs=1e-15)

    def test_linear_field(self):
        # tau = (x, y) = grad((x^2 + y^2) / 2)
        op = self.ops()
        dofs = np.array([0.0, 1.0, 1.0, 0.0])
        assert op.d @ dofs == pytest.approx(2.0, rel=1e-15)
        assert op.P @ dofs == pytest.approx([0.5, 0.5], rel=1e-15)

    def test_structure(self):
        g = cell_geometry(generate_mesh("l_shape", "hexagons", 4), 2)
        op = local_operators(g)
        n = len(g.edges)
        for A in (op.S, op.M_K, op.B_K):
            assert np.allclose(A, A.T, atol=1e-14)
        assert np.linalg.matrix_rank(op.B_K) == 1
        assert np.linalg.eigvalsh(op.M_K).min() > 0
        assert op.d == pytest.approx([e.length / g.area for e in g.edges], rel=1e-14)
        N = np.array([e.normal for e in g.edges])
        for c in ([1.0, 0.0], [0.3, -2.0]):
            dofs = N @ np.array(c)
            assert op.d @ dofs == pytest.approx(0.0, abs=1e-13)
            # consistency: M_K acts as the L2 product of constants
            assert dofs @ op.M_K @ dofs == pytest.approx(g.area * np.dot(c, c), rel=1e-13)
        assert op.P.shape == (2, n)

    def test_degenerate_cell(self):
        edges = tuple(EdgeGeometry(1.0, (0.0, 0.0), (1.0, 0.0), (0.0, 1.0)) for _ in range(3))
        g = CellGeometry(area=1e-20, centroid=(0.0, 0.0), diameter=1.0, edges=edges, vertices=np.zeros((3, 2)))
        with pytest.raises(DegenerateCell):
            local_operators(g)


class TestAssembly:
    def test_two_by_two(self):
        s = assemble(square_grid(2), build_dof_map(square_grid(2)))
        assert s.B.shape == (4, 4)
        ev = np.linalg.eigvalsh(s.B.toarray())
        assert int(np.sum(ev > 1e-10 * ev.max())) == 3

    def test_single_square_empty(self):
        s = assemble(UNIT, build_dof_map(UNIT))
        assert s.B.shape == (0, 0) and s.M.shape == (0, 0)

    def test_mass_positive_definite(self):
        m = square_grid(3)
        s = assemble(m, build_dof_map(m))
        sla.cholesky(s.M.toarray())

    @pytest.mark.parametrize("name", sorted(MESHES))
    def test_symmetry(self, name):
        m = MESHES[name]()
        s = assemble(m, build_dof_map(m))
        for A in (s.B, s.M):
            assert abs(A - A.T).max() <= 1e-13 * abs(A).max()

    def test_triplets(self, tmp_path):
        m = square_grid(2)
        s = assemble(m, build_dof_map(m))
        path = tmp_path / "B.txt"
        write_triplets(s.B, path)
        rows = np.loadtxt(path)
        A = np.zeros((4, 4))
        A[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2]
        assert np.array_equal(A, s.B.toarray())


@pytest.mark.parametrize("name", sorted(MESHES))
def test_patch_test(name):
    m = MESHES[name]()
    dm = build_dof_map(m)
    s = assemble(m, dm)
    area = m.total_area
    for c in ([1.0, 0.0], [0.0, 1.0], [0.7, -1.3]):
        cI = interpolate_constant(m, dm, c)
        assert cI @ (s.M_all @ cI) == pytest.approx(area * np.dot(c, c), rel=1e-12)
        assert np.abs(s.B_all @ cI).max() <= 1e-12 * np.abs(s.B_all).max()


@pytest.mark.parametrize("name", sorted(MESHES))
def test_gradient_of_linear_has_no_stabilized_part(name):
    m = MESHES[name]()
    dm = build_dof_map(m)
    s = assemble(m, dm)
    w = interpolate_field(m, dm, lambda x, y: (2.0 + 0 * x, -0.5 + 0 * y))
    theta = 0.0
    for n, (cells, pos, (d, P, Pi_dof, S, M, B)) in s.ops.groups.items():
        x = dm.he_sign[pos] * w[m.he_edge[pos]]
        theta = max(theta, float(np.abs(np.einsum("mi,mij,mj->m", x, S, x)).max()))
    assert theta < 1e-13


@pytest.mark.parametrize("name", sorted(MESHES))
def test_position_field_projects_to_centroid(name):
    # tau = (x, y) has constant normal trace on every straight edge, so it lies in the local space
    m = MESHES[name]()
    dm = build_dof_map(m)
    w = interpolate_field(m, dm, lambda x, y: (x, y))
    f = reconstruct_fields(m, dm, w)
    assert np.abs(f.projection - m.geometry.centroid).max() < 1e-12
    assert np.abs(f.pressure + 2.0).max() < 1e-12


@pytest.mark.parametrize("name", sorted(MESHES))
def test_local_mass_spectrum_bounded(name):
    m = MESHES[name]()
    ok = check_regularity(m, 0.01).cell_pass
    s = assemble(m, build_dof_map(m))
    area = m.geometry.area
    for n, (cells, pos, (d, P, Pi_dof, S, M, B)) in s.ops.groups.items():
        ev = np.linalg.eigvalsh(M / area[cells, None, None])
        keep = ok[cells]
        assert ev[keep].min() >= 1e-3 and ev[keep].max() <= 1e3


@pytest.mark.parametrize("name", ["squares", "voronoi", "hanging"])
def test_orientation_flip(name):
    m = MESHES[name]()
    a = assemble(m, build_dof_map(m))
    b = assemble(m, build_dof_map(m, flip=True))
    assert abs(a.B - b.B).max() == 0 and abs(a.M - b.M).max() == 0
    la = [p.lam for p in solve_smallest_positive(a, SolverConfig(n_eigs=4))]
    lb = [p.lam for p in solve_smallest_positive(b, SolverConfig(n_eigs=4))]
    assert np.allclose(la, lb, rtol=1e-10, atol=0)
    # the interpolated constant flips sign with the convention
    assert np.array_equal(interpolate_constant(m, build_dof_map(m, flip=True), (1, 2)),
                          -interpolate_constant(m, build_dof_map(m), (1, 2)))


class TestReconstruction:
    def test_constant(self):
        m = generate_mesh("l_shape", "hexagons", 4)
        dm = build_dof_map(m)
        f = reconstruct_fields(m, dm, interpolate_constant(m, dm, (1.0, 0.0)))
        assert np.abs(f.projection - [1.0, 0.0]).max() < 1e-13
        assert np.abs(f.pressure).max() < 1e-13
        assert f.u is None

    def test_normalization_and_mode_shape(self):
        m = square_grid(8)
        dm = build_dof_map(m)
        s = assemble(m, dm)
        pair = solve_smallest_positive(s, SolverConfig(n_eigs=2))[0]
        f = reconstruct_fields(m, dm, pair.w, pair.lam)
        area = m.geometry.area
        assert np.sum(area * f.u**2) == pytest.approx(1.0, rel=1e-10)
        # lambda = pi^2 is double: the pressure lies close to span{cos(pi x), cos(pi y)} and changes sign
        x, y = m.geometry.centroid.T
        basis = np.stack([np.cos(np.pi * x), np.cos(np.pi * y)], axis=1)
        coef, *_ = np.linalg.lstsq(basis, f.pressure, rcond=None)
        resid = f.pressure - basis @ coef
        assert np.linalg.norm(resid) < 0.05 * np.linalg.norm(f.pressure)
        assert f.pressure.min() < 0 < f.pressure.max()

    def test_zero_eigenvalue(self):
        m = square_grid(2)
        dm = build_dof_map(m)
        with pytest.raises(ZeroEigenvalue):
            reconstruct_fields(m, dm, np.ones(dm.n_free), lam=0.0)

    def test_wrong_shape(self):
        m = square_grid(2)
        with pytest.raises(DimensionMismatch):
            reconstruct_fields(m, build_dof_map(m), np.ones(7))


@pytest.mark.parametrize("alpha", [1.0, 0.5, 1 / 6])
def test_stabilization_asymptotics(alpha):
    # on uniform squares the cos(pi x) mode satisfies lambda_h / pi^2 - 1 ~ (pi h)^2 (1/6 - alpha/2)
    n = 32
    m = square_grid(n)
    s = assemble(m, build_dof_map(m), stab=alpha)
    lam = solve_smallest_positive(s, SolverConfig(n_eigs=1)).pop().lam
    coef = (lam / np.pi**2 - 1.0) / (np.pi / n) ** 2
    assert coef == pytest.approx(1 / 6 - alpha / 2, abs=0.01)
