"""Grid, field, and discrete-calculus tests against analytic oracles."""

import numpy as np
import pytest

from nlchlab import grid
from nlchlab.errors import NonZeroMean, PreconditionViolated, UnsupportedDimension
from nlchlab.grid import (
    Domain,
    Field,
    VectorField,
    VelocityField,
    divergence_flux,
    gradient,
    inner,
    inverse_neumann_laplacian,
    laplacian,
    mean,
    norm,
)

PI = np.pi


def square_domain(n, boundary="neumann", length=PI):
    return Domain((length, length), (n, n), boundary)


def cos_x(domain):
    return Field.from_function(domain, lambda x, y: np.cos(x))


def refinement_order(err_coarse, err_fine, ratio=2.0):
    return np.log(err_coarse / err_fine) / np.log(ratio)


class TestDomain:
    def test_spacing_consistency(self):
        d = Domain((PI, 2.0), (64, 32))
        for h, n, L in zip(d.spacing, d.cells, d.lengths):
            assert abs(h * n - L) <= 4 * np.finfo(float).eps * L

    def test_dim_checked(self):
        with pytest.raises(UnsupportedDimension):
            Domain((1.0,), (8,))
        with pytest.raises(ValueError):
            Domain((1.0, 1.0), (8,))

    def test_minimum_cells(self):
        with pytest.raises(ValueError):
            Domain((1.0, 1.0), (3, 8))

    def test_3d_supported(self):
        d = Domain((1.0, 1.0, 1.0), (8, 8, 8))
        assert d.dim == 3 and d.n_cells == 512


class TestField:
    def test_rejects_nonfinite(self):
        d = square_domain(8)
        vals = np.zeros(d.n_cells)
        vals[3] = np.nan
        with pytest.raises(ValueError):
            Field(d, vals)

    def test_length_checked(self):
        d = square_domain(8)
        with pytest.raises(ValueError):
            Field(d, np.zeros(7))


class TestMean:
    def test_constant(self):
        f = Field.constant(square_domain(16), 0.3)
        assert mean(f) == pytest.approx(0.3, abs=1e-15)

    def test_cosine_integrates_to_zero(self):
        # oracle: midpoint rule on cos over [0, pi] is exactly zero by symmetry
        f = cos_x(square_domain(64))
        assert abs(mean(f)) < 1e-12

    def test_indicator_of_half(self):
        d = square_domain(16)
        vals = np.zeros(d.n_cells)
        vals[: d.n_cells // 2] = 1.0
        assert mean(Field(d, vals)) == pytest.approx(0.5, abs=1e-15)


class TestLaplacian:
    def test_constant_maps_to_zero(self):
        f = Field.constant(square_domain(16), 2.5)
        assert np.max(np.abs(laplacian(f).values)) == 0.0

    def test_neumann_cosine_order(self):
        # Taylor oracle: lap cos(x) = -cos(x), centered stencil is O(h^2)
        errs = []
        for n in (48, 96):
            d = square_domain(n)
            f = cos_x(d)
            exact = Field(d, -f.values)
            errs.append(norm(laplacian(f) - exact) / norm(exact))
        assert refinement_order(*errs) >= 1.9

    def test_periodic_cosine_order(self):
        L = 2.0
        errs = []
        for n in (48, 96):
            d = Domain((L, L), (n, n), "periodic")
            k = 2 * PI / L
            f = Field.from_function(d, lambda x, y: np.cos(k * x))
            exact = Field(d, -(k**2) * f.values)
            errs.append(norm(laplacian(f) - exact) / norm(exact))
        assert refinement_order(*errs) >= 1.9

    @pytest.mark.parametrize("boundary", ["neumann", "periodic"])
    def test_zero_mean_output(self, boundary):
        rng = np.random.default_rng(7)
        d = square_domain(32, boundary)
        f = Field(d, rng.standard_normal(d.n_cells))
        assert abs(mean(laplacian(f))) < 1e-12 * (1 + np.max(np.abs(f.values)))


class TestGradient:
    def test_constant(self):
        g = gradient(Field.constant(square_domain(8), 1.0))
        assert all(np.max(np.abs(c)) == 0.0 for c in g.components)

    def test_affine_exact_in_interior(self):
        d = square_domain(16)
        f = Field.from_function(d, lambda x, y: x)
        g = gradient(f)
        gx = g.grids()[0][1:-1, :]
        gy = g.grids()[1]
        assert np.allclose(gx, 1.0, atol=1e-13)
        assert np.max(np.abs(gy)) < 1e-13

    def test_cosine_order(self):
        errs = []
        for n in (48, 96):
            d = square_domain(n)
            f = cos_x(d)
            g = gradient(f)
            exact = Field.from_function(d, lambda x, y: -np.sin(x))
            err = Field(d, g.components[0] - exact.values)
            errs.append(norm(err))
        assert refinement_order(*errs) >= 1.9


class TestDivergenceFlux:
    def test_zero_field(self):
        d = square_domain(16)
        out = divergence_flux(VectorField.zeros(d))
        assert np.max(np.abs(out.values)) == 0.0

    def test_telescoping_mean(self):
        d = square_domain(32)
        F = VectorField.zeros(d)
        x, y = d.mesh()
        F = VectorField(d, (np.sin(x) * np.cos(3 * y), np.cos(2 * x) * np.sin(y)))
        out = divergence_flux(F)
        assert abs(mean(out)) < 1e-13

    def test_stream_function_divergence_exact_cancellation(self):
        # perp-gradient of psi = sin(x) sin(y): the centered differences of
        # the two components cancel identically on this grid
        d = square_domain(32)
        x, y = d.mesh()
        F = VectorField(d, (np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)))
        assert norm(divergence_flux(F)) < 1e-12

    def test_stream_function_divergence_vanishes(self):
        # oracle: perp-gradient of psi = sin(x) sin(2y) is divergence free;
        # the discrete residual is pure truncation error, O(h^2)
        errs = []
        for n in (32, 64):
            d = square_domain(n)
            x, y = d.mesh()
            F = VectorField(
                d, (2 * np.sin(x) * np.cos(2 * y), -np.cos(x) * np.sin(2 * y))
            )
            errs.append(norm(divergence_flux(F)))
        assert errs[1] < errs[0]
        assert refinement_order(*errs) >= 1.9

    def test_rejects_nonzero_normal_trace(self):
        d = square_domain(16)
        ones = np.ones(d.n_cells)
        with pytest.raises(PreconditionViolated):
            divergence_flux(VectorField(d, (ones, 0 * ones)))

    def test_periodic_mode_allows_through_flow(self):
        d = square_domain(16, "periodic")
        ones = np.ones(d.n_cells)
        out = divergence_flux(VectorField(d, (ones, ones)))
        assert np.max(np.abs(out.values)) < 1e-13


class TestInverseLaplacian:
    def test_zero(self):
        z = inverse_neumann_laplacian(Field.zeros(square_domain(16)))
        assert np.max(np.abs(z.values)) == 0.0

    def test_cos_x_eigenfunction(self):
        # analytic oracle: -lap cos(x) = cos(x) on [0, pi] with zero flux
        d = square_domain(64)
        f = cos_x(d)
        z = inverse_neumann_laplacian(f)
        assert norm(z - f) / norm(f) < 1e-3

    def test_cos_2x_eigenvalue_four(self):
        d = square_domain(64)
        f = Field.from_function(d, lambda x, y: np.cos(2 * x))
        z = inverse_neumann_laplacian(f)
        exact = Field(d, f.values / 4.0)
        assert norm(z - exact) / norm(exact) < 5e-3

    def test_rejects_nonzero_mean(self):
        with pytest.raises(NonZeroMean):
            inverse_neumann_laplacian(Field.constant(square_domain(16), 1.0))

    @pytest.mark.parametrize("boundary", ["neumann", "periodic"])
    def test_right_inverse(self, boundary):
        rng = np.random.default_rng(5)
        d = square_domain(32, boundary)
        v = rng.standard_normal(d.n_cells)
        f = Field(d, v - v.mean())
        z = inverse_neumann_laplacian(f, rtol=1e-11)
        res = laplacian(z) + f
        assert norm(res) <= 1e-9 * norm(f)

    def test_self_adjoint(self):
        rng = np.random.default_rng(11)
        d = square_domain(24)
        a = rng.standard_normal(d.n_cells)
        b = rng.standard_normal(d.n_cells)
        f = Field(d, a - a.mean())
        g = Field(d, b - b.mean())
        lhs = inner(inverse_neumann_laplacian(f), g)
        rhs = inner(f, inverse_neumann_laplacian(g))
        assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))


class TestNorms:
    def test_l2_of_constant(self):
        f = Field.constant(square_domain(32), 1.0)
        assert norm(f) == pytest.approx(PI, rel=1e-12)

    def test_vstar_of_cos(self):
        # oracle: (N cos, cos) = int cos^2 = pi^2/2 on [0, pi]^2
        f = cos_x(square_domain(64))
        assert norm(f, "vstar") == pytest.approx(np.sqrt(PI**2 / 2), rel=1e-3)

    def test_h1_of_cos(self):
        # oracle: l2^2 + |grad|^2 = pi^2/2 + pi^2/2
        f = cos_x(square_domain(64))
        assert norm(f, "h1") == pytest.approx(PI, rel=5e-3)

    def test_ordering_on_zero_mean_fields(self):
        # first nonzero Neumann eigenvalue on [0, pi]^2 is 1
        rng = np.random.default_rng(3)
        d = square_domain(32)
        for _ in range(5):
            v = rng.standard_normal(d.n_cells)
            f = Field(d, v - v.mean())
            assert norm(f, "vstar") < norm(f) * 1.01
            assert norm(f) < norm(f, "h1")

    def test_vstar_requires_zero_mean(self):
        with pytest.raises(NonZeroMean):
            norm(Field.constant(square_domain(16), 0.5), "vstar")


class TestVelocityField:
    def test_zero(self):
        v = VelocityField.zero(square_domain(16))
        assert all(np.max(np.abs(c)) == 0 for c in v.at(0.0).components)

    def test_cellular_divergence_small(self):
        v = VelocityField.cellular(square_domain(64), amplitude=1.0)
        assert v.max_divergence() < 1e-2

    def test_cellular_divergence_refines(self):
        # unequal modes break the exact cross-axis cancellation, leaving
        # pure O(h^2) truncation error
        divs = [
            VelocityField.cellular(square_domain(n), 1.0, modes=(1, 2)).max_divergence()
            for n in (32, 64)
        ]
        assert refinement_order(*divs) >= 1.9

    def test_cellular_trace_accepted_by_flux(self):
        d = square_domain(32)
        v = VelocityField.cellular(d, 1.0).at(0.0)
        divergence_flux(v)  # must not raise

    def test_custom_samples_lookup(self):
        d = square_domain(8)
        fields = [VectorField.zeros(d), VectorField(d, (np.ones(d.n_cells),) * 2)]
        v = VelocityField.from_samples(d, [0.0, 1.0], fields)
        assert np.max(v.at(0.9).components[0]) == 1.0
