import numpy as np
import pytest

from bbmag.bv import (
    BvResult,
    bv_dual,
    bv_norm,
    bv_primal_smooth,
    extend_by_zero,
    face_mask,
    magnetic_measure,
)
from bbmag.core import ComplexField, Domain, MagneticPotential, magnetic_gradient, pnorm_pp
from bbmag.perimeter import ShapeSet, indicator_bv
from bbmag.utils import ContainmentError, StepSizeError, pi


class TestBv(object):

    def test_step(self, symmetric_interval):
        """
            Test |D 1_(0,1)|((-1, 1)) = 1 without potential
        :return:
        """
        u = ComplexField.indicator(symmetric_interval, ShapeSet.interval(0.0, 1.0))
        result = bv_dual(u, MagneticPotential.zero(1))
        assert result.c1 == pytest.approx(1.0, rel=1e-9)
        assert result.c2 == 0.0
        assert result.total == pytest.approx(1.0, rel=1e-9)
        assert set(result.to_dict()) == {'c1', 'c2', 'total', 'iterations', 'gap'}

    def test_constant_field(self):
        """
            Test a constant field under a constant potential: C_2 = |a| |Omega| up to one cell layer
        :return:
        """
        domain = Domain([[0, 1]], [128])
        u = ComplexField.constant(domain, 1.0)
        result = bv_dual(u, MagneticPotential.constant([0.3]))
        assert result.c1 == pytest.approx(0.0, abs=1e-12)
        assert result.c2 == pytest.approx(0.3, rel=1e-2)

    def test_disk_landau(self):
        """
            Test |D 1_B|_A for a disk of radius 1/2 and the Landau potential, B = 1
        :return:
        """
        domain = Domain([[-1, 1], [-1, 1]], [128, 128])
        disk = ShapeSet.disk([0.0, 0.0], 0.5)
        u = ComplexField.indicator(domain, disk)
        A = MagneticPotential.landau(1.0)
        target = pi + pi / 24
        assert indicator_bv(disk, A, domain) == pytest.approx(target, rel=1e-12)
        result = bv_dual(u, A)
        assert result.total == pytest.approx(target, rel=3e-2)

    def test_smooth_matches_primal(self):
        """
            Test the dual value of a smooth field against int |grad u - iAu|_1
        :return:
        """
        domain = Domain([[0, 1]], [256])
        u = ComplexField.product(ComplexField.gaussian(domain, [0.5], 0.15, 1.0 + 0.5j),
                                 ComplexField.plane_wave(domain, [3.0]))
        A = MagneticPotential.constant([1.2])
        primal = bv_primal_smooth(u, A)
        assert bv_dual(u, A).total == pytest.approx(primal, rel=1e-2)

    def test_measure(self, symmetric_interval):
        """
            Test the ascent attains the total variation of the discrete measure
        :return:
        """
        u = ComplexField.gaussian(symmetric_interval, [0.2], 0.3, 1 - 1j)
        A = MagneticPotential.constant([0.7])
        tv1, tv2 = magnetic_measure(u, A).total_variation()
        result = bv_dual(u, A)
        assert result.c1 == pytest.approx(tv1, rel=1e-9)
        assert result.c2 == pytest.approx(tv2, rel=1e-9)

    @pytest.mark.parametrize("n, a", [(64, 1.5), (128, -2.0)])
    def test_dual_below_primal(self, n, a):
        """
            Test the dual value of a smooth field stays below int |grad u - i A u|_1, 1% slack
        :return:
        """
        domain = Domain([[0, 1]], [n])
        u = ComplexField.product(ComplexField.gaussian(domain, [0.45], 0.2, 1 - 1j),
                                 ComplexField.plane_wave(domain, [3.0]))
        A = MagneticPotential.constant([a])
        assert bv_dual(u, A).total <= 1.01 * bv_primal_smooth(u, A)

    def test_dual_below_primal_2d(self):
        """
            Test dual <= primal for a Gaussian in the Landau potential
        :return:
        """
        domain = Domain([[0, 1], [0, 1]], [32, 32])
        u = ComplexField.gaussian(domain, [0.5, 0.5], 0.25)
        A = MagneticPotential.landau(1.0)
        assert bv_dual(u, A).total <= 1.01 * bv_primal_smooth(u, A)

    def test_fixed_step(self, symmetric_interval):
        """
            Test a fixed step reaches the same value and a bad step is rejected
        :return:
        """
        u = ComplexField.indicator(symmetric_interval, ShapeSet.interval(0.0, 1.0))
        A = MagneticPotential.zero(1)
        assert bv_dual(u, A, step=1.0).total == pytest.approx(1.0, rel=1e-6)
        with pytest.raises(StepSizeError):
            bv_dual(u, A, step=-1.0)

    def test_open_subset(self, symmetric_interval):
        """
            Test |Du|_A(U) only sees the jump when U contains it
        :return:
        """
        u = ComplexField.indicator(symmetric_interval, ShapeSet.interval(0.0, 1.0))
        A = MagneticPotential.zero(1)
        x = symmetric_interval.axes[0]
        assert bv_dual(u, A, support=x < 0).total == 0.0
        assert bv_dual(u, A, support=np.abs(x) < 0.5).total == pytest.approx(1.0, rel=1e-9)
        faces = face_mask(symmetric_interval, x < 0)
        assert faces.sum() == 31

    def test_jump_next_to_boundary(self, unit_interval):
        """
            Test a jump across the first interior face is counted in full
        :return:
        """
        u = ComplexField.indicator(unit_interval, ShapeSet.interval(1 / 64, 1.0))
        result = bv_dual(u, MagneticPotential.zero(1))
        assert result.total == pytest.approx(1.0, rel=1e-9)
        assert face_mask(unit_interval)[0, 0]
        assert not face_mask(unit_interval)[-1, 0]

    def test_bv_norm(self, symmetric_interval):
        """
            Test ||u||_1 + |Du|_A for an indicator
        :return:
        """
        u = ComplexField.indicator(symmetric_interval, ShapeSet.interval(0.0, 1.0))
        assert bv_norm(u, MagneticPotential.zero(1)) == pytest.approx(2.0, rel=1e-9)


class TestMultiplication(object):

    @pytest.mark.parametrize('dim', [1, 2])
    def test_primal_bound(self, dim):
        """
            Test |D(psi u)|_A <= int |psi| |grad u - i A u|_1 + int |u|_1 |grad psi| for smooth fields
        :return:
        """
        domain = Domain([[0, 1]] * dim, [24] * dim)
        u = ComplexField.product(ComplexField.gaussian(domain, [0.4] * dim, 0.3, 1 - 0.5j),
                                 ComplexField.plane_wave(domain, [2.0] + [-1.0] * (dim - 1)))
        psi = ComplexField.gaussian(domain, [0.7] * dim, 0.35)
        A = MagneticPotential.constant([1.5] * dim)
        points, weights = domain.quadrature_nodes(4)
        grad_psi = np.linalg.norm(psi.gradient(points).real, axis=-1)
        bound = np.sum(weights * (np.abs(psi(points).real) * pnorm_pp(magnetic_gradient(u, A, points), 1)
                                  + pnorm_pp(u(points), 1, vector=False) * grad_psi))
        lhs = bv_primal_smooth(ComplexField.product(psi, u), A, order=4)
        assert 0 < lhs <= bound * (1 + 1e-12)

    def test_measure_identity(self):
        """
            Test mu_{A, psi u} = psi mu_{A, u} - (Re u, Im u) grad psi vol face by face, to second order in h
        :return:
        """
        A = MagneticPotential.constant([1.2])
        errors = []
        for n in (64, 128):
            domain = Domain([[0, 1]], [n])
            u = ComplexField.product(ComplexField.gaussian(domain, [0.45], 0.25, 1 + 0.5j),
                                     ComplexField.plane_wave(domain, [3.0]))
            psi = ComplexField.gaussian(domain, [0.6], 0.3)
            product = magnetic_measure(ComplexField.product(psi, u), A)
            plain = magnetic_measure(u, A)
            faces = face_mask(domain)[:, 0]
            midpoints = (domain.axes[0] + 0.5 * domain.widths[0])[:, None]
            weight = psi(midpoints).real
            slope = psi.gradient(midpoints)[:, 0].real
            value = u(midpoints)
            vol = domain.cell_volume
            real = weight * plain.real_channel[:, 0] - value.real * slope * vol
            imag = weight * plain.imag_channel[:, 0] - value.imag * slope * vol
            error = max(np.max(np.abs(product.real_channel[:, 0] - real)[faces]),
                        np.max(np.abs(product.imag_channel[:, 0] - imag)[faces])) / vol
            errors.append(error)
        assert errors[0] < 1e-1
        assert errors[1] < 0.4 * errors[0]


class TestExtension(object):

    def test_extend_by_zero(self, unit_interval):
        """
            Test the extension of 1 on (0, 1) to (-1, 2) jumps twice
        :return:
        """
        onto = Domain([[-1, 2]], [192])
        u = extend_by_zero(ComplexField.constant(unit_interval, 1.0), unit_interval, onto)
        assert u.domain is onto
        np.testing.assert_allclose(u([[-0.5], [0.5], [1.5]]), [0.0, 1.0, 0.0])
        assert bv_dual(u, MagneticPotential.zero(1)).total == pytest.approx(2.0, rel=1e-9)

    def test_not_contained(self, unit_interval):
        """
            Test extension onto a smaller domain fails
        :return:
        """
        with pytest.raises(ContainmentError):
            extend_by_zero(ComplexField.constant(unit_interval), unit_interval, Domain([[0, 0.5]], [16]))

    def test_result_repr(self):
        """
            Test negative round-off is clipped
        :return:
        """
        result = BvResult(-1e-17, 0.5, 3)
        assert result.c1 == 0.0
        assert result.total == 0.5
