"""
    s-sweeps of the normalised magnetic energies and their extrapolated limit.
"""
from multiprocessing.pool import ThreadPool
import numpy as np
import pandas as pd
import time
from tqdm import tqdm

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from bbmag.bv import bv_dual  # noqa: E402
from bbmag.constants import q_constant  # noqa: E402
from bbmag.functionals import (  # noqa: E402
    QuadratureSpec,
    fractional_magnetic_energy,
    local_magnetic_energy,
    weighted_difference_energy,
)
from bbmag.kernels import bbm_kernel  # noqa: E402
from bbmag.perimeter import ShapeSet, indicator_bv  # noqa: E402
from bbmag.utils import (  # noqa: E402
    BbmagError,
    DegenerateFitError,
    InvalidFieldError,
    check_p,
    check_s,
    load_config,
    log,
)


config = load_config()['bbmag']

columns = ['s', 'raw', 'normalized', 'target', 'rel_error']


def rich(coarse, fine, k, n):
    """
        Richardson extrapolation of two values with step ratio k and order n
    """
    return (k ** n * fine - coarse) / (k ** n - 1)


class SweepTable(object):
    """
        Rows (s, raw, normalized, target, rel_error), ascending in s, plus run metadata
    """
    def __init__(self, rows, metadata=None, warnings=()):
        self.frame = pd.DataFrame(rows, columns=columns)
        self.metadata = dict(metadata or {})
        self.warnings = list(warnings)
        s = self.frame['s'].to_numpy()
        if np.any(np.diff(s) <= 0):
            raise InvalidFieldError(f"sweep s values must be strictly increasing, got {s.tolist()}")

    def __repr__(self):
        return f"SweepTable({len(self.frame)} rows, {self.metadata.get('form', 'fractional')})"

    def __len__(self):
        return len(self.frame)

    @property
    def s(self):
        return self.frame['s'].to_numpy()

    @property
    def normalized(self):
        return self.frame['normalized'].to_numpy()

    @property
    def target(self):
        return float(self.frame['target'].iloc[0]) if len(self.frame) else 0.0

    @property
    def tolerance_met(self):
        return not self.warnings

    def to_csv(self, path, float_format=None):
        float_format = config['output']['float_format'] if float_format is None else float_format
        self.frame.to_csv(path, index=False, float_format=float_format)

    def to_svg(self, path, limit=None):
        """normalized against s, with the target line and the extrapolated limit"""
        plt.close('all')
        plt.rcParams['svg.hashsalt'] = 'bbmag'
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(self.s, self.normalized, 'o-', label='normalized')
        ax.axhline(self.target, color='k', linestyle='--', label='target')
        if limit is not None:
            ax.plot([1.0], [limit.extrapolated_value], 'rx', label=f'limit ({limit.fit_model})')
        ax.set_xlabel('s')
        ax.set_ylabel('normalized energy')
        ax.legend(loc='best')
        fig.savefig(path, format='svg', metadata={'Date': None})
        plt.close('all')


class LimitEstimate(object):
    def __init__(self, extrapolated_value, fit_model, residual, coefficients=()):
        self.extrapolated_value = float(extrapolated_value)
        self.fit_model = fit_model
        self.residual = max(float(residual), 0.0)
        self.coefficients = tuple(float(c) for c in coefficients)

    def __repr__(self):
        return f"LimitEstimate({self.extrapolated_value:.10g}, {self.fit_model}, residual={self.residual:.3g})"

    def to_dict(self):
        return {'extrapolated_value': self.extrapolated_value, 'fit_model': self.fit_model,
                'residual': self.residual}


def sweep_target(u, A, domain, p, order=None):
    """
        Q_{p,N} times the local energy, or Q_{1,N} |Du|_A(Omega) for fields with jumps
    """
    N = domain.dim
    if u.has_jumps:
        if p != 1:
            raise InvalidFieldError(f"fields with jumps have infinite energy for p = {p} > 1 near s = 1")
        shape = u.params.get('shape') if u.kind == 'preset' and u.preset == 'indicator' else None
        if isinstance(shape, ShapeSet):
            return q_constant(1.0, N) * indicator_bv(shape, A, domain)
        return q_constant(1.0, N) * bv_dual(u, A, domain).total
    return q_constant(p, N) * local_magnetic_energy(u, A, domain, p, order).value


def _check_s_list(s_list):
    s_list = [float(s) for s in s_list]
    for s in s_list:
        check_s(s)
    if any(b <= a for a, b in zip(s_list, s_list[1:])):
        raise BbmagError(f"s_list must be strictly ascending, got {s_list}")
    return s_list


def bbm_sweep(u, A, domain=None, p=2.0, s_list=None, q=None, form='fractional', threads=None, verbose=False):
    """
        Normalised energies over s and the s-independent limit target

    :param form: 'fractional': normalized = (1 - s) [u]^p;
                 'kernel': normalized = (1/p) int int ... rho_s with the bbm kernel,
                 r_Omega at least the diameter of the domain
    :param threads: sweep points evaluated concurrently; results do not depend on it
    :return: SweepTable
    """
    check_p(p)
    domain = u.domain if domain is None else domain
    s_list = _check_s_list(config['sweep']['s_list'] if s_list is None else s_list)
    if form not in ('fractional', 'kernel'):
        raise BbmagError(f"unknown sweep form '{form}'")
    q = QuadratureSpec() if q is None else q
    threads = config['threads'] if threads is None else int(threads)
    r_omega = domain.diameter + domain.cell_diagonal

    tic = time.time()
    target = sweep_target(u, A, domain, p)

    def point(s):
        if form == 'kernel':
            result = weighted_difference_energy(u, A, domain, bbm_kernel(s, p, r_omega, domain.dim), p, q,
                                                threads=1)
            return result, result.value / p
        result = fractional_magnetic_energy(u, A, domain, s, p, q, threads=1)
        return result, (1 - s) * result.value

    with ThreadPool(processes=max(1, min(threads, len(s_list)))) as pool:
        results = list(tqdm(pool.imap(point, s_list), total=len(s_list), disable=not verbose))

    rows, warnings = [], []
    for s, (result, normalized) in zip(s_list, results):
        rel_error = abs(normalized - target) / target if target > 0 else abs(normalized)
        rows.append({'s': s, 'raw': result.value, 'normalized': normalized, 'target': target,
                     'rel_error': rel_error})
        if not result.tolerance_met:
            warnings.append(f"s = {s}: {result.warning}")
    metadata = {
        'p': p,
        'N': domain.dim,
        'field': u.identifier,
        'potential': A.identifier,
        'resolution': list(domain.resolution),
        'quadrature': q.to_dict(),
        'form': form,
    }
    if form == 'kernel':
        metadata['r_omega'] = r_omega
    log(f"bbm_sweep: {len(s_list)} values of s in {time.time() - tic:.2f} s, target {target:.10g}")
    return SweepTable(rows, metadata, warnings)


def extrapolate_limit(table, model=None):
    """
        Limit of normalized(s) as s -> 1

    affine: weighted least squares normalized ~ L + c (1 - s), weights 1/(1 - s)^2
    quadratic: adds c2 (1 - s)^2
    richardson: first-order Richardson on the two rows closest to s = 1

    residual is the largest unweighted misfit of the fitted model over all rows.
    """
    model = config['sweep']['extrapolation'] if model is None else model
    s = np.asarray(table.s, dtype=np.float64)
    y = np.asarray(table.normalized, dtype=np.float64)
    if len(s) < 3:
        raise DegenerateFitError(f"extrapolation needs at least 3 rows, got {len(s)}")
    if np.ptp(s) == 0:
        raise DegenerateFitError("extrapolation needs distinct values of s")
    t = 1.0 - s

    if model == 'richardson':
        order = np.argsort(t)
        fine, coarse = order[0], order[1]
        k = t[coarse] / t[fine]
        limit = rich(y[coarse], y[fine], k, 1)
        slope = (y[coarse] - y[fine]) / (t[coarse] - t[fine])
        coefficients = (limit, slope)
        fitted = y[fine] + slope * (t - t[fine])
        residual = np.max(np.abs(fitted - y))
        return LimitEstimate(limit, model, residual, coefficients)

    degree = {'affine': 1, 'quadratic': 2}.get(model)
    if degree is None:
        raise DegenerateFitError(f"unknown extrapolation model '{model}'")
    if len(s) <= degree:
        raise DegenerateFitError(f"{model} extrapolation needs more than {degree} rows")
    design = np.vander(t, degree + 1, increasing=True)
    weight = 1.0 / t
    coefficients, *_ = np.linalg.lstsq(design * weight[:, None], y * weight, rcond=None)
    residual = np.max(np.abs(design @ coefficients - y))
    return LimitEstimate(coefficients[0], model, residual, coefficients)


def byproduct_check(u, A, domain=None, p=2.0, s_list=None, q=None, tol=1e-8, system_tol=1e-8, table=None):
    """
        If every normalised energy is below tol, check pointwise that
        grad Re u = -Im u A and grad Im u = Re u A

    :return: dict report; 'hypothesis_met' False means no system check is claimed
    """
    domain = u.domain if domain is None else domain
    table = bbm_sweep(u, A, domain, p, s_list, q) if table is None else table
    largest = float(np.max(np.abs(table.normalized)))
    report = {'max_normalized': largest, 'tol': tol}
    if not largest < tol:
        report.update({'hypothesis_met': False, 'message': 'hypothesis not met'})
        log(f"byproduct_check: hypothesis not met (max normalized energy {largest:.3g})")
        return report
    points = domain.centers
    values = u(points)
    gradient = u.gradient(points)
    a = A(points)
    real = np.linalg.norm(gradient.real + values.imag[:, None] * a, axis=-1)
    imag = np.linalg.norm(gradient.imag - values.real[:, None] * a, axis=-1)
    residual = float(max(real.max(initial=0.0), imag.max(initial=0.0)))
    report.update({
        'hypothesis_met': True,
        'residual_real': float(real.max(initial=0.0)),
        'residual_imag': float(imag.max(initial=0.0)),
        'residual': residual,
        'system_holds': residual < system_tol,
        'message': 'system holds' if residual < system_tol else 'system violated',
    })
    return report
