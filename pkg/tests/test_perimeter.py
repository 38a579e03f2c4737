import numpy as np
import pytest
from scipy.integrate import quad

from bbmag.core import ComplexField, Domain, MagneticPotential
from bbmag.functionals import fractional_magnetic_energy
from bbmag.perimeter import (
    ShapeSet,
    classical_fractional_perimeter,
    indicator_bv,
    magnetic_fractional_perimeter,
    numeric_perimeter,
    perimeter_sweep,
)
from bbmag.utils import BbmagError, InvalidFieldError, pi


def half_line_perimeter(s):
    """P_s((0, 1)) inside (-1, 1)"""
    return (2 - 2 ** (1 - s)) / (s * (1 - s))


def shifted_perimeter(s, a):
    """P_s((a, 1)) inside (-1, 1)"""
    return ((1 - a) ** (1 - s) - 2 ** (1 - s) + (1 + a) ** (1 - s)) / (s * (1 - s))


def magnetic_oracle(a, s):
    """
        P_s((0, 1); a) inside (-1, 1) by adaptive quadrature in h = |x - y|
    """
    def inner(h):
        # (|1 - cos ah| + |sin ah|) / h, continued to h = 0
        return a if h == 0 else (abs(1 - np.cos(a * h)) + abs(np.sin(a * h))) / h

    def outer(h):
        return abs(np.cos(a * h)) + abs(np.sin(a * h))

    kw = dict(limit=200, epsabs=1e-13, epsrel=1e-12)
    same, _ = quad(lambda h: inner(h) * (1 - h), 0, 1, weight='alg', wvar=(-s, 0), **kw)
    near, _ = quad(lambda h: 1.0, 0, 1, weight='alg', wvar=(-s, 0), **kw)
    far, _ = quad(lambda h: (2 - h) * h ** (-1 - s), 1, 2, **kw)
    near_phase, _ = quad(outer, 0, 1, weight='alg', wvar=(-s, 0), **kw)
    far_phase, _ = quad(lambda h: outer(h) * (2 - h) * h ** (-1 - s), 1, 2, **kw)
    return 0.5 * (2 * same + (near + far) + (near_phase + far_phase))


class TestShapeSet(object):

    def test_constructors(self):
        """
            Test invalid sets are rejected
        :return:
        """
        with pytest.raises(InvalidFieldError):
            ShapeSet.interval(1.0, 0.0)
        with pytest.raises(InvalidFieldError):
            ShapeSet.disk([0, 0], -1.0)
        with pytest.raises(InvalidFieldError):
            ShapeSet.square([0, 0], [1, 0])

    def test_contains(self):
        """
            Test membership for each kind
        :return:
        """
        assert ShapeSet.interval(0, 1).contains([[0.5], [1.5]]).tolist() == [True, False]
        assert ShapeSet.disk([0, 0], 0.5).contains([[0.1, 0.1], [0.5, 0.5]]).tolist() == [True, False]
        domain = Domain([[0, 1]], [4])
        mask = ShapeSet.from_mask(domain, [True, False, False, True])
        assert mask.contains([[0.1], [0.4], [0.9]]).tolist() == [True, False, True]

    def test_analytic_perimeters(self, symmetric_interval):
        """
            Test relative perimeters: only interfaces inside Omega count
        :return:
        """
        square = Domain([[-1, 1], [-1, 1]], [16, 16])
        assert ShapeSet.interval(0, 1).perimeter(symmetric_interval) == 1.0
        assert ShapeSet.interval(-0.5, 0.5).perimeter(symmetric_interval) == 2.0
        assert ShapeSet.square([-0.5, -0.5], [0.5, 0.5]).perimeter(square) == pytest.approx(4.0)
        assert ShapeSet.square([0, -0.5], [2, 0.5]).perimeter(square) == pytest.approx(3.0)
        assert ShapeSet.disk([0, 0], 0.5).perimeter(square) == pytest.approx(pi)

    def test_numeric_perimeters(self):
        """
            Test marching squares on a disk and on a square cell mask
        :return:
        """
        domain = Domain([[-1, 1], [-1, 1]], [128, 128])
        assert numeric_perimeter(ShapeSet.disk([0, 0], 0.5), domain) == pytest.approx(pi, rel=1e-2)
        mask = np.zeros((128, 128), dtype=bool)
        mask[32:96, 32:96] = True
        assert ShapeSet.from_mask(domain, mask).perimeter(domain) == pytest.approx(4.0, rel=1e-2)

    def test_complement(self, symmetric_interval):
        """
            Test the complement mask and its jump count
        :return:
        """
        E = ShapeSet.interval(0, 1)
        complement = E.complement(symmetric_interval)
        assert complement.kind == 'mask'
        assert complement.contains([[-0.5], [0.5]]).tolist() == [True, False]
        assert complement.perimeter(symmetric_interval) == 1.0

    def test_interface(self, symmetric_interval):
        """
            Test interface elements: outward normals, weights summing to the relative perimeter
        :return:
        """
        points, normals, weights = ShapeSet.interval(0, 1).interface(symmetric_interval)
        np.testing.assert_allclose(points, [[0.0]])
        np.testing.assert_allclose(normals, [[-1.0]])
        np.testing.assert_allclose(weights, [1.0])
        points, _, _ = ShapeSet.interval(0.01, 1).interface(symmetric_interval)
        np.testing.assert_allclose(points, [[0.01]])
        square = Domain([[-1, 1], [-1, 1]], [8, 8])
        points, normals, weights = ShapeSet.square([-0.5, -0.3], [0.5, 0.3]).interface(square)
        assert np.sum(weights) == pytest.approx(3.2, rel=1e-12)
        np.testing.assert_allclose(np.sum(np.abs(normals), axis=1), 1.0)
        _, normals, weights = ShapeSet.disk([0, 0], 0.5).interface(square)
        assert np.sum(weights) == pytest.approx(pi, rel=1e-12)
        np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0)
        grid = Domain([[0, 1]], [4])
        points, normals, weights = ShapeSet.from_mask(grid, [False, True, True, False]).interface(grid)
        order = np.argsort(points[:, 0])
        np.testing.assert_allclose(points[order, 0], [0.25, 0.75])
        np.testing.assert_allclose(normals[order, 0], [-1.0, 1.0])
        np.testing.assert_allclose(weights, 1.0)

    def test_indicator_bv(self, symmetric_interval):
        """
            Test |D 1_E|_A = Per(E; Omega) + int_E |A|
        :return:
        """
        E = ShapeSet.interval(0, 1)
        assert indicator_bv(E, MagneticPotential.zero(1), symmetric_interval) == 1.0
        assert indicator_bv(E, MagneticPotential.constant([0.3]), symmetric_interval) == pytest.approx(1.3)
        square = Domain([[-1, 1], [-1, 1]], [64, 64])
        disk = ShapeSet.disk([0, 0], 0.5)
        # numeric int_E |A| for a radial potential matches 2 pi r^3 / 3
        A = MagneticPotential.radial(1.0)
        assert disk.magnetic_mass(A, square) == pytest.approx(2 * pi / 24)
        off_centre = ShapeSet.disk([0.1, 0.0], 0.5)
        assert off_centre.magnetic_mass(MagneticPotential.constant([0.3, 0.4]), square) == \
            pytest.approx(0.5 * pi * 0.25, rel=1e-2)


class TestFractionalPerimeter(object):

    @pytest.mark.parametrize("s", [0.5, 0.7, 0.9])
    def test_half_line(self, symmetric_interval, s):
        """
            Test P_s((0, 1)) in (-1, 1) against (2 - 2^{1-s}) / (s (1 - s))
        :return:
        """
        E = ShapeSet.interval(0, 1)
        result = classical_fractional_perimeter(E, symmetric_interval, s)
        assert result.value == pytest.approx(half_line_perimeter(s), rel=2e-3)

    @pytest.mark.parametrize("s", [0.5, 0.9])
    def test_jump_inside_cell(self, s):
        """
            Test a jump through the middle of a cell (63 cells) keeps P_s((0, 1)) in (-1, 1)
        :return:
        """
        domain = Domain([[-1, 1]], [63])
        result = classical_fractional_perimeter(ShapeSet.interval(0, 1), domain, s)
        assert result.value == pytest.approx(half_line_perimeter(s), rel=5e-3)

    @pytest.mark.parametrize("s", [0.5, 0.9])
    def test_jump_off_centre(self, symmetric_interval, s):
        """
            Test P_s((a, 1)) for a jump off the cell faces and off the cell centres
        :return:
        """
        result = classical_fractional_perimeter(ShapeSet.interval(0.013, 1), symmetric_interval, s)
        assert result.value == pytest.approx(shifted_perimeter(s, 0.013), rel=5e-3)

    def test_square_off_grid(self):
        """
            Test a square whose sides cut through cells matches the cell-aligned value
        :return:
        """
        E = ShapeSet.square([-0.5, -0.5], [0.5, 0.5])
        aligned = classical_fractional_perimeter(E, Domain([[-1, 1], [-1, 1]], [16, 16]), 0.5)
        shifted = classical_fractional_perimeter(E, Domain([[-1, 1], [-1, 1]], [15, 15]), 0.5)
        assert shifted.value == pytest.approx(aligned.value, rel=1e-2)

    def test_curved_interface(self):
        """
            Test a disk on a coarse grid reports its flat-interface error instead of passing silently
        :return:
        """
        domain = Domain([[-1, 1], [-1, 1]], [16, 16])
        result = classical_fractional_perimeter(ShapeSet.disk([0.03, -0.02], 0.5), domain, 0.5)
        assert not result.tolerance_met
        assert 'tolerance not met' in result.warning
        assert result.est_error > 1e-3 * result.value
        assert result.value > 0

    def test_increasing(self, symmetric_interval):
        """
            Test P_s grows as s increases
        :return:
        """
        E = ShapeSet.interval(0, 1)
        values = [classical_fractional_perimeter(E, symmetric_interval, s).value for s in (0.5, 0.7, 0.9)]
        assert values[0] < values[1] < values[2]

    def test_symmetry(self, symmetric_interval):
        """
            Test P_s(E) = P_s(Omega minus E)
        :return:
        """
        E = ShapeSet.interval(0, 1)
        a = classical_fractional_perimeter(E, symmetric_interval, 0.6).value
        b = classical_fractional_perimeter(ShapeSet.interval(-1, 0), symmetric_interval, 0.6).value
        c = classical_fractional_perimeter(E.complement(symmetric_interval), symmetric_interval, 0.6).value
        assert b == pytest.approx(a, rel=1e-8)
        assert c == pytest.approx(a, rel=1e-8)

    def test_trivial_sets(self, symmetric_interval):
        """
            Test E = Omega and E empty have zero perimeter
        :return:
        """
        A = MagneticPotential.constant([0.5])
        assert classical_fractional_perimeter(ShapeSet.interval(-1, 1), symmetric_interval, 0.5).value == 0.0
        assert magnetic_fractional_perimeter(ShapeSet.empty(symmetric_interval), A, symmetric_interval,
                                             0.5).value == 0.0

    def test_zero_potential(self, symmetric_interval):
        """
            Test the magnetic perimeter reduces to the classical one for A = 0
        :return:
        """
        E = ShapeSet.interval(0, 1)
        classical = classical_fractional_perimeter(E, symmetric_interval, 0.7).value
        magnetic = magnetic_fractional_perimeter(E, MagneticPotential.zero(1), symmetric_interval, 0.7).value
        assert magnetic == pytest.approx(classical, rel=1e-12, abs=1e-12)

    def test_magnetic_oracle(self, symmetric_interval):
        """
            Test P_s((0, 1); a = 0.1) at s = 1/2 against adaptive quadrature
        :return:
        """
        E = ShapeSet.interval(0, 1)
        A = MagneticPotential.constant([0.1])
        result = magnetic_fractional_perimeter(E, A, symmetric_interval, 0.5)
        oracle = magnetic_oracle(0.1, 0.5)
        assert abs(result.value - oracle) <= max(2 * result.est_error, 1e-3 * oracle)
        assert result.value > classical_fractional_perimeter(E, symmetric_interval, 0.5).value

    def test_full_integral(self, symmetric_interval):
        """
            Test the fractional energy of 1_E at p = 1 is twice the magnetic perimeter
        :return:
        """
        E = ShapeSet.interval(0, 1)
        A = MagneticPotential.constant([0.4])
        u = ComplexField.indicator(symmetric_interval, E)
        full = fractional_magnetic_energy(u, A, s=0.6, p=1).value
        half = magnetic_fractional_perimeter(E, A, symmetric_interval, 0.6)
        assert full == pytest.approx(2 * half.value, rel=1e-12)
        assert half.components['full_integral'] == pytest.approx(full, rel=1e-12)

    def test_s_range(self, symmetric_interval):
        """
            Test s outside (0, 1) is rejected
        :return:
        """
        with pytest.raises(BbmagError, match="s must be in"):
            classical_fractional_perimeter(ShapeSet.interval(0, 1), symmetric_interval, 1.0)

    def test_sweep(self):
        """
            Test the perimeter sweep table and both normalisations
        :return:
        """
        domain = Domain([[-1, 1]], [32])
        E = ShapeSet.interval(0, 1)
        table = perimeter_sweep(E, MagneticPotential.zero(1), domain, [0.6, 0.9])
        assert list(table.columns) == ['s', 'Ps_classical', 'Ps_magnetic', '(1-s)*full_integral', 'target']
        np.testing.assert_allclose(table['Ps_magnetic'], table['Ps_classical'], rtol=1e-12)
        np.testing.assert_allclose(table['(1-s)*full_integral'], 2 * (1 - table['s']) * table['Ps_classical'],
                                   rtol=1e-12)
        # Q_{1,1} Per = 2
        np.testing.assert_allclose(table['target'], 2.0)
