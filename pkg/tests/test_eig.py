import numpy as np
import pytest

from acoustic_vem import assemble, build_dof_map, build_mesh, generate_mesh, refine_cells, solve_smallest_positive
from acoustic_vem.eig import SolverConfig, count_positive, generalized_spectrum, kernel_dimension
from acoustic_vem.errors import InsufficientSpectrum, SizeExceeded
from acoustic_vem.vem import reconstruct_fields

from conftest import square_grid

from references import L_SHAPE_PUBLISHED_STEP0


def system_of(mesh):
    return assemble(mesh, build_dof_map(mesh))


class TestCounting:
    def test_two_by_two(self):
        s = system_of(square_grid(2))
        assert count_positive(s) == 3
        assert kernel_dimension(s) == 1

    def test_three_by_three(self):
        s = system_of(square_grid(3))
        assert s.n == 12
        assert kernel_dimension(s) == 4
        assert count_positive(s) == 8

    def test_single_cell(self):
        m = build_mesh([(0, 0), (1, 0), (1, 1), (0, 1)], [[0, 1, 2, 3]])
        assert kernel_dimension(system_of(m)) == 0

    def test_size_exceeded(self):
        s = system_of(square_grid(8))
        with pytest.raises(SizeExceeded):
            kernel_dimension(s, dense_threshold=10)

    def test_full_spectrum_nonnegative(self):
        lam, mu = generalized_spectrum(system_of(generate_mesh("l_shape", "hexagons", 4)))
        assert lam.min() > -1e-8 * mu.max()


class TestSolve:
    def test_square_fine_grid(self):
        # sparse path: 8064 free DOFs
        s = system_of(square_grid(64))
        pair = solve_smallest_positive(s, SolverConfig(n_eigs=1))[0]
        assert abs(pair.lam - np.pi**2) / np.pi**2 < 1e-3

    def test_l_shape_initial_triangles(self):
        # 10x10 background triangles: 245 edges in total
        m = generate_mesh("l_shape", "triangles", 10)
        assert build_dof_map(m).n_total == 245
        pair = solve_smallest_positive(system_of(m))[0]
        assert pair.lam == pytest.approx(L_SHAPE_PUBLISHED_STEP0, abs=0.05)

    @pytest.mark.parametrize("mesh", [
        lambda: square_grid(12),
        lambda: generate_mesh("h_shape", "square_triangle_mix", 8),
        lambda: refine_cells(generate_mesh("l_shape", "voronoi", 60, 2), range(0, 60, 3)),
    ])
    def test_dense_sparse_agree(self, mesh):
        s = system_of(mesh())
        dense = solve_smallest_positive(s, SolverConfig(n_eigs=5, dense_threshold=10**6))
        sparse = solve_smallest_positive(s, SolverConfig(n_eigs=5, dense_threshold=0))
        for a, b in zip(dense, sparse):
            assert b.lam == pytest.approx(a.lam, rel=1e-9)
        # simple eigenvalues: same vector including the sign convention
        for a, b in zip(dense, sparse):
            if a.multiplicity == 1:
                assert np.allclose(a.w, b.w, atol=1e-6 * np.abs(a.w).max())

    @pytest.mark.parametrize("dense_threshold", [10**6, 0])
    def test_shift_invariance(self, dense_threshold):
        s = system_of(generate_mesh("l_shape", "triangles", 6))
        ref = None
        for shift in (0.5, 1.0, 2.0):
            lam = [p.lam for p in solve_smallest_positive(s, SolverConfig(n_eigs=4, shift=shift, dense_threshold=dense_threshold))]
            if ref is None:
                ref = lam
            assert np.allclose(lam, ref, rtol=1e-9, atol=0)

    @pytest.mark.parametrize("dense_threshold", [10**6, 0])
    def test_pair_properties(self, dense_threshold):
        m = generate_mesh("l_shape", "hexagons", 8)
        dm = build_dof_map(m)
        s = assemble(m, dm)
        pairs = solve_smallest_positive(s, SolverConfig(n_eigs=6, dense_threshold=dense_threshold))
        lams = [p.lam for p in pairs]
        assert all(x > 0 for x in lams)
        assert lams == sorted(lams)
        area = m.geometry.area
        for p in pairs:
            assert p.residual < 1e-8
            f = reconstruct_fields(m, dm, p.w, p.lam)
            assert np.sum(area * f.u**2) == pytest.approx(1.0, abs=1e-10)
            first = np.flatnonzero(np.abs(f.pressure) > 1e-8 * np.abs(f.pressure).max())[0]
            assert f.pressure[first] > 0
        W = np.stack([p.w for p in pairs], axis=1)
        G = W.T @ (s.M @ W)
        off = G - np.diag(np.diag(G))
        assert np.abs(off).max() < 1e-8

    def test_multiplicity(self):
        pairs = solve_smallest_positive(system_of(square_grid(8)), SolverConfig(n_eigs=3))
        assert [p.multiplicity for p in pairs] == [2, 2, 1]

    def test_count_is_cells_minus_one(self):
        m = square_grid(2)
        pairs = solve_smallest_positive(system_of(m), SolverConfig(n_eigs=3))
        assert len(pairs) == 3
        with pytest.raises(InsufficientSpectrum):
            solve_smallest_positive(system_of(m), SolverConfig(n_eigs=4))

    def test_empty_system(self):
        m = build_mesh([(0, 0), (1, 0), (1, 1), (0, 1)], [[0, 1, 2, 3]])
        with pytest.raises(InsufficientSpectrum):
            solve_smallest_positive(system_of(m))


@pytest.mark.parametrize("kwargs", [{"shift": 0.0}, {"zero_tol": 1.5}, {"n_eigs": 0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)
