import numpy as np
import pytest

from bbmag.bv import bv_dual
from bbmag.core import ComplexField, Domain, MagneticPotential, lp_norm
from bbmag.kernels import (
    Mollifier,
    bbm_kernel,
    dilated_kernel,
    mollify,
    mollify_at,
    smoothstep_cutoff,
    tabulated_kernel,
    validate_kernel_sequence,
)
from bbmag.utils import BbmagError, KernelError, UnderResolvedError


class TestKernels(object):

    def test_cutoff(self):
        """
            Test psi_0 is 1 up to r_omega, 0 from 2 r_omega, 1/2 halfway
        :return:
        """
        values = smoothstep_cutoff(np.array([0.0, 1.0, 1.5, 2.0, 3.0]), 1.0)
        np.testing.assert_allclose(values, [1.0, 1.0, 0.5, 0.0, 0.0], atol=1e-15)

    @pytest.mark.parametrize("s", [0.5, 0.7, 0.9, 0.99])
    @pytest.mark.parametrize("p", [1.0, 2.0])
    def test_bbm_moments(self, s, p):
        """
            Test the core moment r_omega^{p(1-s)} and beta-moments p(1-s)/(p(1-s)+beta)
        :return:
        """
        rho = bbm_kernel(s, p, 2.0, dim=1)
        assert rho.core_moment == pytest.approx(2.0 ** (p * (1 - s)), rel=1e-8)
        for beta in (0.5, 1.0):
            expected = p * (1 - s) / (p * (1 - s) + beta)
            assert rho.moment(0.0, 1.0, beta=beta) == pytest.approx(expected, rel=1e-8)
        assert rho.core_moment < rho.total_moment < 4.0 ** (p * (1 - s))

    def test_bbm_values(self):
        """
            Test rho(r) = p(1-s) r^{p-ps-N} inside r_omega, 0 beyond 2 r_omega
        :return:
        """
        rho = bbm_kernel(0.5, 2.0, 1.0, dim=2)
        assert rho(0.25) == pytest.approx(2 * 0.5 * 0.25 ** (-1.0))
        assert rho(2.5) == 0.0

    def test_generic_moments(self):
        """
            Test quadrature moments of a tabulated kernel against hand values
        :return:
        """
        rho = tabulated_kernel([0.0, 0.5, 1.0], [1.0, 1.0, 0.0], dim=1)
        # 0.5 + area of the ramp
        assert rho.total_moment == pytest.approx(0.75, rel=1e-10)
        rho2 = tabulated_kernel([0.0, 1.0], [1.0, 1.0], dim=2)
        assert rho2.total_moment == pytest.approx(0.5, rel=1e-10)

    def test_dilated(self):
        """
            Test dilations keep unit mass and concentrate at the origin
        :return:
        """
        profile = tabulated_kernel([0.0, 0.5, 1.0], [1.0, 1.0, 0.0], dim=1)
        family = [dilated_kernel(profile, m) for m in (1.0, 2.0, 4.0, 8.0)]
        for rho in family:
            assert rho.total_moment == pytest.approx(1.0, rel=1e-8)
        report = validate_kernel_sequence(family, tail_radii=[0.05, 0.2], beta_exponents=[1.0])
        assert report.convergent

    def test_sequence_report(self, tmp_path):
        """
            Test the report of an s-sequence of bbm kernels and its CSV
        :return:
        """
        s_list = [0.5, 0.7, 0.9, 0.99]
        report = validate_kernel_sequence([bbm_kernel(s, 2.0, 2.0) for s in s_list])
        assert report.convergent
        frame = report.to_frame()
        assert frame['s'].tolist() == s_list
        assert np.all(np.diff(frame['beta_1.0']) < 0)
        path = tmp_path / 'kernels.csv'
        report.to_csv(path)
        with open(path) as f:
            header = f.readline().strip()
        assert header == 's,total_moment,tail_0.1,tail_0.5,tail_1.0,beta_moment'

    def test_sequence_not_convergent(self):
        """
            Test a sequence moving away from s = 1 is flagged
        :return:
        """
        report = validate_kernel_sequence([bbm_kernel(s, 2.0, 2.0) for s in (0.9, 0.5)])
        assert not report.convergent
        assert report.warnings

    def test_errors(self):
        """
            Test invalid kernel parameters
        :return:
        """
        with pytest.raises(BbmagError, match="s must be in"):
            bbm_kernel(1.2, 2.0, 1.0)
        with pytest.raises(KernelError):
            bbm_kernel(0.5, 2.0, 0.0)
        with pytest.raises(KernelError):
            tabulated_kernel([0.0, 1.0], [1.0, -1.0])


class TestMollifier(object):

    def test_unit_mass(self):
        """
            Test the mollifier integrates to one
        :return:
        """
        for dim in (1, 2):
            m = Mollifier(0.3, dim)
            t = np.linspace(-0.3, 0.3, 601)
            h = t[1] - t[0]
            grid = np.stack(np.meshgrid(*([t] * dim), indexing='ij'), axis=-1)
            assert np.sum(m(grid)) * h ** dim == pytest.approx(1.0, rel=1e-6)

    def test_constant(self):
        """
            Test interior values of a mollified constant, and the zero extension at the edge
        :return:
        """
        domain = Domain([[0, 1]], [32])
        u = ComplexField.constant(domain, 2.0 - 1.0j)
        values = mollify_at(u, Mollifier(0.1, 1), [[0.5], [0.0]])
        assert values[0] == pytest.approx(2.0 - 1.0j, rel=1e-12)
        assert values[1] == pytest.approx(0.5 * (2.0 - 1.0j), rel=1e-6)

    def test_under_resolved(self):
        """
            Test scales below half a cell are rejected
        :return:
        """
        domain = Domain([[0, 1]], [8])
        with pytest.raises(UnderResolvedError):
            mollify(ComplexField.constant(domain), Mollifier(0.01, 1))

    @pytest.mark.parametrize("center, width", [(0.5, 0.2), (0.3, 0.1), (0.6, 0.3), (0.5, 0.05), (0.45, 0.15)])
    def test_convolution_bound(self, center, width):
        """
            Test |D u_eps|_A(Omega_eps) <= |Du|_A(Omega) + eps Lip(A) ||u||_1, 5% slack
        :return:
        """
        domain = Domain([[0, 1]], [128])
        u = ComplexField.product(ComplexField.gaussian(domain, [center], width, 1.0 + 0.5j),
                                 ComplexField.plane_wave(domain, [3.0]))
        A = MagneticPotential.radial(2.0, dim=1)
        total = bv_dual(u, A).total
        mass = lp_norm(u, p=1.0)
        for eps in (0.2, 0.1, 0.05):
            inner = domain.shrink(eps)
            smooth = bv_dual(mollify(u, Mollifier(eps, 1)), A, support=inner.mask).total
            assert smooth <= 1.05 * (total + eps * A.lipschitz_bound * mass)
