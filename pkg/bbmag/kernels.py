"""
    Radial kernels rho(|x|), their moment conditions, and mollification.
"""
import functools
import itertools
import numpy as np
import pandas as pd
from scipy.integrate import quad

from bbmag.core import ComplexField
from bbmag.utils import (
    KernelError,
    UnderResolvedError,
    check_p,
    check_s,
    gauss_legendre,
    load_config,
    log,
    sphere_area,
)


config = load_config()['bbmag']


def smoothstep_cutoff(r, r_omega):
    """
        psi_0: 1 on [0, r_omega], 0 on [2 r_omega, inf), quintic (C^2) in between
    """
    t = np.clip((np.asarray(r, dtype=np.float64) - r_omega) / r_omega, 0.0, 1.0)
    return 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t ** 2)


class RadialKernel(object):
    """
        Nonnegative radial weight rho on R^N, evaluated on radii.

    Parameters
    ----------
    kind : str
        'bbm', 'tabulated' or 'dilated'.
    evaluator : callable
        r -> rho(r) on arrays of radii.
    support_radius : float
        rho vanishes beyond it (may be inf).
    dim : int
        Ambient dimension N, fixing the polar factor r^{N-1} of the moments.
    singular_exponent : float
        sigma with rho(r) ~ r^sigma near 0; used to integrate moments exactly
        at the origin.
    breakpoints : sequence of float
        Radii where rho is not smooth.
    params : dict
        Parameters that define the kernel (s, p, r_omega for the bbm family).
    """
    def __init__(self, kind, evaluator, support_radius, dim=1, singular_exponent=0.0, breakpoints=(), params=None):
        if not support_radius > 0:
            raise KernelError(f"kernel support radius must be positive, got {support_radius}")
        self.kind = kind
        self.evaluator = evaluator
        self.support_radius = float(support_radius)
        self.dim = int(dim)
        self.singular_exponent = float(singular_exponent)
        self.breakpoints = tuple(sorted(float(b) for b in breakpoints if 0 < b < support_radius))
        self.params = dict(params or {})

    def __repr__(self):
        return f"RadialKernel({self.kind}, {self.params}, dim={self.dim})"

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        values = np.where(r < self.support_radius, self.evaluator(np.maximum(r, 1e-300)), 0.0)
        if np.any(values < 0):
            raise KernelError(f"{self.kind} kernel takes negative values")
        return values

    def check_nonnegative(self, samples=2049):
        """Sample rho on a geometric grid of radii; KernelError on negative values"""
        top = self.support_radius if np.isfinite(self.support_radius) else 1e3
        radii = np.concatenate([np.geomspace(1e-6 * top, top, samples), self.breakpoints])
        self(radii)
        return True

    def moment(self, lower=0.0, upper=np.inf, beta=0.0):
        """
            int_lower^upper rho(r) r^{N - 1 + beta} dr
        """
        upper = min(upper, self.support_radius)
        if upper <= lower:
            return 0.0
        cfg = config['kernels']
        if self.kind == 'bbm':
            r_omega = self.params['r_omega']
            scale = self.params['p'] * (1 - self.params['s'])
            gamma_ = scale + beta
            core = 0.0
            if lower < r_omega:
                hi = min(upper, r_omega)
                core = scale * (hi ** gamma_ - lower ** gamma_) / gamma_
            if upper <= r_omega:
                return core
            lo = max(lower, r_omega)
            transition, _ = quad(lambda r: scale * r ** (gamma_ - 1) * smoothstep_cutoff(r, r_omega),
                                 lo, upper, limit=cfg['quad_limit'], epsabs=cfg['epsabs'], epsrel=cfg['epsrel'])
            return core + transition

        edges = [lower] + [b for b in self.breakpoints if lower < b < upper] + [upper]
        total = 0.0
        power = self.dim - 1 + beta
        for a, b in zip(edges[:-1], edges[1:]):
            if a == 0 and self.singular_exponent != 0:
                sigma = self.singular_exponent
                value, _ = quad(lambda r: float(self(r)) * r ** (-sigma), a, b, weight='alg',
                                wvar=(sigma + power, 0.0), limit=cfg['quad_limit'])
            else:
                value, _ = quad(lambda r: float(self(r)) * r ** power, a, b, limit=cfg['quad_limit'],
                                epsabs=cfg['epsabs'], epsrel=cfg['epsrel'])
            total += value
        return total

    @property
    def core_moment(self):
        """int_0^{r_omega} rho r^{N-1} dr for the bbm family, r_omega^{p(1-s)}"""
        return self.moment(0.0, self.params.get('r_omega', self.support_radius))

    @property
    def total_moment(self):
        return self.moment(0.0, np.inf)


def bbm_kernel(s, p, r_omega, dim=1):
    """
        rho(r) = p (1 - s) r^{p - ps - N} psi_0(r)

    :param s: in (0, 1)
    :param p: >= 1
    :param r_omega: cutoff radius, at least the diameter of the domain
    :param dim: N
    """
    check_s(s)
    check_p(p)
    if not r_omega > 0:
        raise KernelError(f"r_omega must be positive, got {r_omega}")
    scale = p * (1 - s)
    exponent = p - p * s - dim

    def evaluator(r):
        return scale * r ** exponent * smoothstep_cutoff(r, r_omega)

    return RadialKernel('bbm', evaluator, 2.0 * r_omega, dim=dim, singular_exponent=exponent,
                        breakpoints=(r_omega,), params={'s': s, 'p': p, 'r_omega': r_omega})


def tabulated_kernel(radii, values, dim=1):
    """
        Piecewise-linear rho through (radii, values), zero beyond the last radius
    """
    radii = np.asarray(radii, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if radii.ndim != 1 or radii.shape != values.shape or len(radii) < 2:
        raise KernelError("tabulated kernel needs matching 1D radii and values")
    if np.any(np.diff(radii) <= 0) or radii[0] < 0:
        raise KernelError("tabulated kernel radii must be nonnegative and increasing")
    if np.any(values < 0):
        raise KernelError("tabulated kernel takes negative values")

    def evaluator(r):
        return np.interp(r, radii, values, right=0.0)

    return RadialKernel('tabulated', evaluator, radii[-1], dim=dim, breakpoints=radii[1:-1],
                        params={'nodes': len(radii)})


def dilated_kernel(profile, m, dim=None):
    """
        rho_m(r) = m^N rho(m r) / int_0^inf rho r^{N-1}: unit first moment,
        concentrating at the origin as m grows
    """
    if not m > 0:
        raise KernelError(f"dilation factor must be positive, got {m}")
    dim = profile.dim if dim is None else int(dim)
    mass = profile.total_moment
    if not mass > 0:
        raise KernelError("profile has no mass")
    factor = m ** dim / mass

    def evaluator(r):
        return factor * profile(m * r)

    return RadialKernel('dilated', evaluator, profile.support_radius / m, dim=dim,
                        singular_exponent=profile.singular_exponent,
                        breakpoints=[b / m for b in profile.breakpoints],
                        params={**profile.params, 'm': m})


class KernelReport(object):
    """
        Moments of a kernel sequence and whether its tails vanish.
    """
    def __init__(self, rows, tail_radii, beta_exponents, convergent, warnings=()):
        self.rows = list(rows)
        self.tail_radii = tuple(tail_radii)
        self.beta_exponents = tuple(beta_exponents)
        self.convergent = bool(convergent)
        self.warnings = list(warnings)

    def to_frame(self):
        return pd.DataFrame(self.rows)

    def to_csv(self, path, float_format=None):
        """s,total_moment,tail_*,beta_moment (beta = 1)"""
        frame = self.to_frame()
        columns = ['s', 'total_moment'] + [f"tail_{d}" for d in self.tail_radii] + ['beta_moment']
        frame['beta_moment'] = frame[f"beta_{1.0}"] if f"beta_{1.0}" in frame else np.nan
        frame[columns].to_csv(path, index=False, float_format=float_format or config['output']['float_format'])


def validate_kernel_sequence(kernels, N=None, tail_radii=None, beta_exponents=None, beta_radius=None):
    """
        Moment conditions of a kernel sequence rho_m

    Per kernel: total moment, core moment, tails beyond each delta, and
    int_0^delta rho r^{N-1+beta} dr. The sequence is flagged convergent when every
    tail and every beta-moment decreases along the list.

    :param kernels: nonempty list of RadialKernel
    :param N: dimension; taken from the kernels when omitted
    :return: KernelReport
    """
    kernels = list(kernels)
    if not kernels:
        raise KernelError("empty kernel sequence")
    cfg = config['kernels']
    tail_radii = tuple(cfg['tail_radii'] if tail_radii is None else tail_radii)
    beta_exponents = tuple(cfg['beta_exponents'] if beta_exponents is None else beta_exponents)
    beta_radius = cfg['beta_radius'] if beta_radius is None else beta_radius

    rows = []
    for kernel in kernels:
        if N is not None and int(N) != kernel.dim:
            kernel = RadialKernel(kernel.kind, kernel.evaluator, kernel.support_radius, dim=N,
                                  singular_exponent=kernel.singular_exponent,
                                  breakpoints=kernel.breakpoints, params=kernel.params)
        kernel.check_nonnegative()
        total = kernel.total_moment
        row = {
            's': kernel.params.get('s', kernel.params.get('m', np.nan)),
            'total_moment': total,
            'core_moment': kernel.core_moment,
        }
        for delta in tail_radii:
            row[f"tail_{delta}"] = max(total - kernel.moment(0.0, delta), 0.0)
        for beta in beta_exponents:
            row[f"beta_{beta}"] = kernel.moment(0.0, beta_radius, beta=beta)
        rows.append(row)

    warnings = []
    keys = [f"tail_{d}" for d in tail_radii] + [f"beta_{b}" for b in beta_exponents]
    for key in keys:
        series = np.array([row[key] for row in rows])
        if len(series) > 1 and np.any(np.diff(series) > 1e-14 * max(series.max(), 1.0)):
            warnings.append(f"{key} does not decrease along the sequence")
    for warning in warnings:
        log(f"kernel sequence: {warning}")
    return KernelReport(rows, tail_radii, beta_exponents, convergent=not warnings, warnings=warnings)


@functools.lru_cache(maxsize=8)
def bump_normalisation(dim):
    """c_N with c_N int_{B_1} exp(-1 / (1 - |x|^2)) dx = 1"""
    radial, _ = quad(lambda r: np.exp(-1.0 / (1.0 - r * r)) * r ** (dim - 1), 0.0, 1.0,
                     epsabs=1e-15, epsrel=1e-13, limit=200)
    return 1.0 / (sphere_area(dim) * radial)


class Mollifier(object):
    """
        eta_eps(x) = eps^{-N} eta(x / eps), eta = c_N exp(-1 / (1 - |x|^2)) on B_1
    """
    def __init__(self, epsilon, dim):
        if not epsilon > 0:
            raise KernelError(f"mollifier scale must be positive, got {epsilon}")
        self.epsilon = float(epsilon)
        self.dim = int(dim)
        self.normalisation = bump_normalisation(self.dim)

    def __repr__(self):
        return f"Mollifier(epsilon={self.epsilon}, dim={self.dim})"

    def profile(self, x):
        r2 = np.sum(np.asarray(x, dtype=np.float64) ** 2, axis=-1)
        out = np.zeros(r2.shape)
        inside = r2 < 1.0
        out[inside] = self.normalisation * np.exp(-1.0 / (1.0 - r2[inside]))
        return out

    def __call__(self, x):
        return self.profile(np.asarray(x) / self.epsilon) / self.epsilon ** self.dim


def mollify_at(u, m, points, order=None):
    """
        u_eps at arbitrary points, u extended by zero outside its mask

    Every cell within reach of a point is integrated with a tensor Gauss rule;
    the discrete weights are rescaled to unit mass.

    :return: complex array, one value per point
    """
    domain = u.domain
    if m.dim != domain.dim:
        raise KernelError(f"mollifier dimension {m.dim} does not match field dimension {domain.dim}")
    if m.epsilon < 0.5 * float(np.min(domain.widths)):
        raise UnderResolvedError(
            f"mollifier scale {m.epsilon} is below half a cell width ({0.5 * float(np.min(domain.widths))})"
        )
    order = config['mollifier']['order'] if order is None else order
    t, w = gauss_legendre(order)
    dim = domain.dim
    unit = np.stack(np.meshgrid(*([t] * dim), indexing='ij'), axis=-1).reshape(-1, dim)
    unit_w = np.prod(np.stack(np.meshgrid(*([w] * dim), indexing='ij'), axis=-1).reshape(-1, dim), axis=-1)

    points = np.asarray(points, dtype=np.float64).reshape(-1, dim)
    rel = (points - domain.bbox[:, 0]) / domain.widths
    base = np.floor(rel).astype(np.int64)
    reach = np.ceil(m.epsilon / domain.widths).astype(np.int64) + 1
    numerator = np.zeros(len(points), dtype=np.complex128)
    mass = np.zeros(len(points))
    resolution = np.array(domain.resolution)
    for offset in itertools.product(*[range(-k, k + 1) for k in reach]):
        cells = base + np.array(offset)
        lower = domain.bbox[:, 0] + cells * domain.widths
        nodes = lower[:, None, :] + unit[None, :, :] * domain.widths
        weights = m(points[:, None, :] - nodes) * unit_w * float(np.prod(domain.widths))
        near = np.any(weights > 0, axis=1)
        if not np.any(near):
            continue
        mass += weights.sum(axis=1)
        inside = near & np.all((cells >= 0) & (cells < resolution), axis=-1)
        inside[inside] = domain.mask[tuple(cells[inside].T)]
        if np.any(inside):
            numerator[inside] += np.sum(weights[inside] * u(nodes[inside]), axis=1)
    return numerator / mass


def mollify(u, m, order=None):
    """
        u_eps = eta_eps * u sampled at the masked cell centres of u's grid

    :param u: ComplexField
    :param m: Mollifier
    :return: sampled ComplexField on the same Domain
    """
    domain = u.domain
    values = np.zeros(domain.resolution, dtype=np.complex128)
    values[tuple(domain.indices.T)] = mollify_at(u, m, domain.centers, order=order)
    return ComplexField.sampled(domain, values)
