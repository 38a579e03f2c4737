import numpy as np
import pandas as pd
import pytest

from bbmag.core import (
    ComplexField,
    Domain,
    MagneticPotential,
    lp_norm,
    magnetic_gradient,
    modulation_phase,
    pnorm,
    pnorm_pp,
    read_grid_csv,
)
from bbmag.utils import (
    BbmagError,
    BoundaryStencilError,
    DimensionMismatchError,
    InvalidFieldError,
    NodeOutsideMaskError,
    TensorGridError,
    load_config,
)


class TestDomain(object):

    def test_geometry(self, unit_square):
        """
            Test cell counts, measure and diameter of a full square
        :return:
        """
        assert unit_square.n_cells == 256
        assert unit_square.measure == pytest.approx(1.0)
        # distance between the corner cell centres
        assert unit_square.diameter == pytest.approx(np.sqrt(2) * 15 / 16)
        assert unit_square.cell_diagonal == pytest.approx(np.sqrt(2) / 16)

    def test_contains(self):
        """
            Test membership of points for a masked domain
        :return:
        """
        mask = np.zeros((4, 4), dtype=bool)
        mask[:2, :] = True
        domain = Domain([[0, 1], [0, 1]], [4, 4], mask)
        assert domain.n_cells == 8
        inside = domain.contains([[0.1, 0.9], [0.9, 0.1], [1.5, 0.5]])
        assert inside.tolist() == [True, False, False]

    def test_shrink(self):
        """
            Test Omega_r keeps the cells farther than r from the boundary
        :return:
        """
        domain = Domain([[0, 1]], [10])
        inner = domain.shrink(0.2)
        assert inner.n_cells == 6
        np.testing.assert_allclose(inner.centers[:, 0], [0.25, 0.35, 0.45, 0.55, 0.65, 0.75])

    def test_quadrature_nodes(self, unit_interval):
        """
            Test per-cell Gauss nodes integrate x^3 exactly, also across a breakpoint
        :return:
        """
        for cuts in (None, [np.array([0.3])]):
            points, weights = unit_interval.quadrature_nodes(4, cuts)
            assert np.sum(weights * points[..., 0] ** 3) == pytest.approx(0.25, rel=1e-13)

    def test_bad_input(self):
        """
            Test shape errors
        :return:
        """
        with pytest.raises(DimensionMismatchError):
            Domain([[0, 1], [0, 1]], [4])
        with pytest.raises(InvalidFieldError):
            Domain([[1, 0]], [4])


class TestNorms(object):

    def test_pnorm(self):
        """
            Test the complex p-norm on scalars and vectors
        :return:
        """
        assert pnorm(3 + 4j, 2) == pytest.approx(5.0)
        assert pnorm(1 + 1j, 1) == pytest.approx(2.0)
        assert pnorm(np.array([3.0, 4.0j]), 1) == pytest.approx(7.0)
        assert pnorm_pp(np.array([1 + 2j]), 2) == pytest.approx(5.0)

    def test_pnorm_errors(self):
        """
            Test that p < 1 and non-finite values are rejected
        :return:
        """
        with pytest.raises(BbmagError, match="p must be ≥ 1"):
            pnorm(1.0, 0.5)
        with pytest.raises(InvalidFieldError):
            pnorm(np.array([np.nan, 1.0]), 2)

    def test_lp_norm(self, unit_interval):
        """
            Test the L^1 norm of a constant complex field is |Re c| + |Im c|
        :return:
        """
        u = ComplexField.constant(unit_interval, 1 + 1j)
        assert lp_norm(u, p=1) == pytest.approx(2.0)
        assert lp_norm(ComplexField.linear(unit_interval, [1.0]), p=2) == pytest.approx(np.sqrt(1 / 3))


class TestFields(object):

    def test_magnetic_gradient_cancels(self, unit_square):
        """
            Test grad u - iAu vanishes for u = exp(i a.x), A = a
        :return:
        """
        a = np.array([0.5, -2.0])
        u = ComplexField.plane_wave(unit_square, a)
        A = MagneticPotential.constant(a)
        x = np.random.default_rng(1).random((50, 2))
        assert np.max(np.abs(magnetic_gradient(u, A, x))) < 1e-14

    def test_gaussian_gradient(self, unit_square):
        """
            Test the exact Gaussian gradient against central differences
        :return:
        """
        u = ComplexField.gaussian(unit_square, [0.5, 0.5], 0.3, 1 + 0.5j)
        x = np.array([[0.3, 0.7]])
        h = 1e-6
        fd = [(u(x + h * e) - u(x - h * e)) / (2 * h) for e in np.eye(2)]
        np.testing.assert_allclose(u.gradient(x)[0], np.array(fd)[:, 0], rtol=1e-7)

    def test_product_gradient(self, unit_interval):
        """
            Test the product rule of composite presets
        :return:
        """
        u = ComplexField.wave_bump(unit_interval, [3.0], [0.5], 0.4)
        x = np.array([[0.4]])
        h = 1e-6
        fd = (u(x + h) - u(x - h)) / (2 * h)
        assert u.gradient(x)[0, 0] == pytest.approx(fd[0], rel=1e-6)

    def test_sampled_linear(self):
        """
            Test a sampled linear field has the exact gradient everywhere in the mask
        :return:
        """
        domain = Domain([[0, 1], [0, 2]], [8, 8])
        x, y = np.meshgrid(*domain.axes, indexing='ij')
        u = ComplexField.sampled(domain, 2 * x + 1j * y)
        points = np.array([[0.02, 0.1], [0.5, 1.0], [0.97, 1.9]])
        np.testing.assert_allclose(u.gradient(points), np.tile([2.0, 1j], (3, 1)), atol=1e-12)
        np.testing.assert_allclose(u(points), 2 * points[:, 0] + 1j * points[:, 1], atol=1e-12)

    def test_sampled_outside(self):
        """
            Test the magnetic gradient of a sampled field outside its mask
        :return:
        """
        mask = np.ones((8, 8), dtype=bool)
        mask[4:, :] = False
        domain = Domain([[0, 1], [0, 1]], [8, 8], mask)
        u = ComplexField.sampled(domain, np.ones((8, 8)))
        with pytest.raises(NodeOutsideMaskError):
            magnetic_gradient(u, MagneticPotential.zero(2), [[0.9, 0.5]])

    def test_boundary_stencil(self):
        """
            Test an isolated masked node has no second-order stencil
        :return:
        """
        mask = np.zeros((5, 5), dtype=bool)
        mask[2, 2] = True
        domain = Domain([[0, 1], [0, 1]], [5, 5], mask)
        with pytest.raises(BoundaryStencilError):
            ComplexField.sampled(domain, np.ones((5, 5))).nodal_gradient()

    def test_non_finite_samples(self, unit_interval):
        """
            Test NaN samples on masked nodes are rejected
        :return:
        """
        values = np.ones(64)
        values[3] = np.nan
        with pytest.raises(InvalidFieldError):
            ComplexField.sampled(unit_interval, values)

    def test_cell_averages(self, symmetric_interval):
        """
            Test cut cells of an indicator carry their volume fraction
        :return:
        """
        from bbmag.perimeter import ShapeSet
        u = ComplexField.indicator(symmetric_interval, ShapeSet.interval(0.0, 1.0 / 64))
        means = u.cell_averages(symmetric_interval).real
        assert np.sum(means) * symmetric_interval.cell_volume == pytest.approx(1.0 / 64)


class TestPotentials(object):

    def test_presets(self):
        """
            Test values and bounds of the potential presets
        :return:
        """
        A = MagneticPotential.landau(1.0)
        np.testing.assert_allclose(A([[1.0, 0.0]]), [[0.0, 0.5]])
        assert A.lipschitz_bound == pytest.approx(0.5)
        assert MagneticPotential.constant([0.3]).sup_bound([[-1, 1]]) == pytest.approx(0.3)
        np.testing.assert_allclose(MagneticPotential.radial(2.0, 3)([[1.0, 0.0, -1.0]]), [[2.0, 0.0, -2.0]])
        with pytest.raises(DimensionMismatchError):
            MagneticPotential.landau(1.0, dim=1)

    def test_modulation_phase(self):
        """
            Test theta = (x - y).A((x + y)/2)
        :return:
        """
        A = MagneticPotential.landau(2.0)
        # A(0.5, 0.5) = (-0.5, 0.5)
        assert modulation_phase([1.0, 0.0], [0.0, 1.0], A) == pytest.approx(-1.0)


class TestGridCsv(object):

    def test_read(self, tmp_path):
        """
            Test reading a complete grid with a mask column
        :return:
        """
        x, y = np.meshgrid([0.125, 0.375, 0.625, 0.875], [0.25, 0.75], indexing='ij')
        df = pd.DataFrame({'x1': x.ravel(), 'x2': y.ravel(), 're': x.ravel(), 'im': 0.0,
                           'mask': (x.ravel() < 0.8).astype(int)})
        path = tmp_path / 'field.csv'
        df.to_csv(path, index=False)
        u = ComplexField.from_csv(path)
        assert u.domain.resolution == (4, 2)
        assert u.domain.n_cells == 6
        np.testing.assert_allclose(u.domain.bbox, [[0, 1], [0, 1]])

    def test_missing_node(self, tmp_path):
        """
            Test a grid with a missing node is rejected
        :return:
        """
        x, y = np.meshgrid([0.0, 1.0, 2.0], [0.0, 1.0], indexing='ij')
        df = pd.DataFrame({'x1': x.ravel(), 'x2': y.ravel(), 'mask': 1}).iloc[:-1]
        path = tmp_path / 'mask.csv'
        df.to_csv(path, index=False)
        with pytest.raises(TensorGridError, match="tensor grid"):
            read_grid_csv(path, ('mask',))


class TestConfig(object):

    def test_sections(self):
        """
            Test the shipped defaults only carry sections the package reads
        :return:
        """
        sections = set(load_config()['bbmag'])
        assert sections == {'threads', 'quadrature', 'sphere', 'kernels', 'mollifier', 'bv', 'sweep', 'output'}
