"""Mesh construction and banded operator assembly."""

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from viscodiff.discretization import (
    BoundaryData,
    DiscreteOperators,
    Mesh,
    assemble_flux_vector,
    assemble_mass,
    assemble_stiffness,
    banded_diagonals,
    boundary_functional,
    build_mesh,
    lumped_mass_diagonal,
    neumann_bilaplacian,
    neumann_laplacian_lumped,
    tridiag_matvec,
)


class TestMesh:
    def test_nodes_and_h(self):
        mesh = build_mesh(1.0, 4)
        assert np.allclose(mesh.nodes, [0, 0.25, 0.5, 0.75, 1.0])
        assert mesh.h == 0.25

    def test_two_cells(self):
        mesh = build_mesh(2.0, 2)
        assert np.allclose(mesh.nodes, [0, 1, 2])

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            build_mesh(1.0, 1)
        with pytest.raises(ValueError):
            build_mesh(0.0, 4)

    def test_boundary_normals(self):
        mesh = build_mesh(1.0, 8)
        assert mesh.boundary == ((0, -1.0), (8, 1.0))


class TestMass:
    def test_n2_entries(self):
        mesh = build_mesh(1.0, 2)
        h = 0.5
        M = assemble_mass(mesh).toarray()
        expected = np.array([[h / 3, h / 6, 0],
                             [h / 6, 2 * h / 3, h / 6],
                             [0, h / 6, h / 3]])
        assert np.allclose(M, expected, atol=1e-15)

    def test_row_sums_total_L(self):
        for L, N in ((1.0, 7), (2.5, 33)):
            M = assemble_mass(build_mesh(L, N))
            assert abs(M.sum() - L) <= 1e-14 * max(1.0, L)

    def test_symmetric_exact(self):
        M = assemble_mass(build_mesh(1.0, 16)).toarray()
        assert np.array_equal(M, M.T)

    def test_lumped_is_row_sums(self):
        mesh = build_mesh(1.5, 9)
        M = assemble_mass(mesh).toarray()
        assert np.allclose(lumped_mass_diagonal(mesh), M.sum(axis=1),
                           atol=1e-15)


class TestStiffness:
    def test_unit_laplacian_n2(self):
        mesh = build_mesh(1.0, 2)
        K = assemble_stiffness(mesh, np.ones(3)).toarray()
        expected = (1 / 0.5) * np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
        assert np.allclose(K, expected, atol=1e-14)

    def test_constants_in_kernel(self):
        # zero up to one rounding of the diagonal accumulation
        mesh = build_mesh(1.0, 17)
        a = np.linspace(0.5, 2.0, 18)
        K = assemble_stiffness(mesh, a)
        tol = 1e-15 * (1.0 + np.max(a) / mesh.h)
        assert np.max(np.abs(K @ np.ones(18))) <= tol

    def test_scaling_linearity(self):
        mesh = build_mesh(1.0, 8)
        K1 = assemble_stiffness(mesh, np.ones(9)).toarray()
        K3 = assemble_stiffness(mesh, 3.0 * np.ones(9)).toarray()
        assert np.allclose(K3, 3.0 * K1)

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            assemble_stiffness(build_mesh(1.0, 4), np.ones(4))

    def test_positive_semidefinite(self):
        mesh = build_mesh(1.0, 12)
        rng = np.random.default_rng(3)
        K = assemble_stiffness(mesh, rng.uniform(0.1, 2.0, 13)).toarray()
        eig = np.linalg.eigvalsh(K)
        assert eig.min() >= -1e-12

    def test_coercivity_on_mean_zero(self):
        # second-smallest eigenvalue bounded below for a >= a_min > 0
        mesh = build_mesh(1.0, 32)
        a_min = 0.3
        K = assemble_stiffness(mesh, np.full(33, a_min)).toarray()
        eig = np.sort(np.linalg.eigvalsh(K))
        # continuous oracle: smallest nonzero eigenvalue of -a_min*Laplacian
        # in the h-weighted discrete form is ~ a_min * pi^2 * h
        assert eig[1] >= 0.5 * a_min * math.pi ** 2 * mesh.h

    @given(arrays(np.float64, 9, elements=st.floats(0.01, 10)))
    @settings(max_examples=50, deadline=None)
    def test_kernel_property(self, a):
        mesh = build_mesh(1.0, 8)
        K = assemble_stiffness(mesh, a)
        tol = 1e-15 * (1.0 + np.max(a) / mesh.h)
        assert np.max(np.abs(K @ np.ones(9))) <= tol


class TestFluxVector:
    def test_constant_field(self):
        mesh = build_mesh(1.0, 5)
        b = assemble_flux_vector(mesh, np.full(6, 2.5))
        expected = np.zeros(6)
        expected[0], expected[-1] = -2.5, 2.5
        assert np.allclose(b, expected, atol=1e-15)

    def test_zero_field(self):
        b = assemble_flux_vector(build_mesh(1.0, 4), np.zeros(5))
        assert np.array_equal(b, np.zeros(5))

    def test_linear_field_exact_integral(self):
        # w(x) = x on two cells of h=0.5: b_i = int w * phi_i'
        mesh = build_mesh(1.0, 2)
        b = assemble_flux_vector(mesh, mesh.nodes.copy())
        # hand integration with element midpoint values 0.25 and 0.75
        assert np.allclose(b, [-0.25, -0.5, 0.75], atol=1e-15)

    @given(arrays(np.float64, 7, elements=st.floats(-10, 10)))
    @settings(max_examples=50, deadline=None)
    def test_components_sum_to_zero(self, w):
        b = assemble_flux_vector(build_mesh(1.0, 6), w)
        assert abs(b.sum()) <= 1e-12 * (1 + np.max(np.abs(w)))


class TestBoundaryFunctional:
    def test_point_loads(self):
        mesh = build_mesh(1.0, 4)
        bd = BoundaryData(phi_left=lambda t: 1.0, phi_right=lambda t: 0.0)
        assert np.array_equal(boundary_functional(mesh, bd, 0.0),
                              [1, 0, 0, 0, 0])

    def test_zero(self):
        mesh = build_mesh(1.0, 4)
        bd = BoundaryData(phi_left=lambda t: 0.0, phi_right=lambda t: 0.0)
        assert np.array_equal(boundary_functional(mesh, bd, 1.0), np.zeros(5))

    def test_time_dependence(self):
        mesh = build_mesh(1.0, 3)
        bd = BoundaryData(phi_left=math.sin, phi_right=lambda t: 0.0)
        psi = boundary_functional(mesh, bd, math.pi / 2)
        assert psi[0] == pytest.approx(1.0)
        assert np.all(psi[1:] == 0.0)

    def test_validate_rejects_nonfinite(self):
        bd = BoundaryData(phi_left=lambda t: math.inf, phi_right=lambda t: 0.0)
        with pytest.raises(ValueError):
            bd.validate(1.0)


class TestBilaplacian:
    def test_constants_are_fixed_points(self):
        mesh = build_mesh(1.0, 16)
        P = neumann_bilaplacian(mesh)
        c = 3.7 * np.ones(17)
        assert np.allclose(P @ c, c, atol=1e-12)

    def test_eigenvalues_at_least_one(self):
        P = neumann_bilaplacian(build_mesh(1.0, 4)).toarray()
        eig = np.linalg.eigvals(P)
        assert np.max(np.abs(eig.imag)) <= 1e-10
        assert eig.real.min() >= 1.0 - 1e-10

    def test_lowest_nonconstant_eigenvalue(self):
        # continuous Neumann oracle: (1 + (pi/L)^2)^2 via cos(pi x / L)
        mesh = build_mesh(1.0, 64)
        P = neumann_bilaplacian(mesh).toarray()
        eig = np.sort(np.linalg.eigvals(P).real)
        target = (1.0 + math.pi ** 2) ** 2
        assert eig[1] == pytest.approx(target, rel=0.05)

    def test_selfadjoint_in_lumped_inner_product(self):
        mesh = build_mesh(1.0, 12)
        P = neumann_bilaplacian(mesh).toarray()
        W = np.diag(lumped_mass_diagonal(mesh))
        assert np.allclose(W @ P, (W @ P).T, atol=1e-12)

    def test_laplacian_zero_row_sums(self):
        Lh = neumann_laplacian_lumped(build_mesh(1.0, 10)).toarray()
        assert np.allclose(Lh @ np.ones(11), 0.0, atol=1e-12)


class TestHelpers:
    def test_tridiag_matvec_matches_dense(self):
        mesh = build_mesh(1.0, 9)
        ops = DiscreteOperators.build(mesh)
        rng = np.random.default_rng(5)
        v = rng.normal(size=10)
        assert np.allclose(tridiag_matvec(ops.mass_main, ops.mass_off, v),
                           ops.mass @ v, atol=1e-14)

    def test_banded_serialization_round_trip(self):
        mesh = build_mesh(1.0, 6)
        K = assemble_stiffness(mesh, np.linspace(1, 2, 7))
        d = banded_diagonals(K)
        assert set(d) == {-1, 0, 1}
        dense = K.toarray()
        assert np.allclose(d[0], np.diag(dense))
        assert np.allclose(d[1], np.diag(dense, 1))
        assert np.allclose(d[-1], np.diag(dense, -1))

    def test_bandwidth_at_most_two(self):
        mesh = build_mesh(1.0, 20)
        for mat in (assemble_mass(mesh),
                    assemble_stiffness(mesh, np.ones(21)),
                    neumann_bilaplacian(mesh)):
            assert max(abs(int(o)) for o in mat.offsets) <= 2

    def test_assembly_scales_roughly_linearly(self):
        def best_time(N):
            mesh = build_mesh(1.0, N)
            a = np.ones(N + 1)
            best = math.inf
            for _ in range(5):
                t0 = time.perf_counter()
                assemble_stiffness(mesh, a)
                best = min(best, time.perf_counter() - t0)
            return best

        t_small = best_time(20_000)
        t_big = best_time(40_000)
        # lenient bound: linear assembly should not blow up quadratically
        assert t_big <= 10.0 * t_small + 1e-3
