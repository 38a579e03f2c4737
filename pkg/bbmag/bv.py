"""
    Magnetic total variation |Du|_A.

    On the grid of a Domain, u is replaced by its cell means and test fields
    phi live on the faces between two masked cells (forward faces of each
    cell). Summation by parts turns the two suprema of the definition into
    linear functionals of phi,

        C_1 = sup <phi, mu_1>,  mu_1 = -(grad_h Re u + A Im u) vol
        C_2 = sup <phi, mu_2>,  mu_2 = -(grad_h Im u - A Re u) vol

    with A sampled at face midpoints and u averaged onto the face. Both are
    solved by projected ascent onto the pointwise Euclidean unit ball.
"""
import numpy as np
import time

from bbmag.core import ComplexField, lp_norm, magnetic_gradient, pnorm_pp
from bbmag.utils import (
    ContainmentError,
    DimensionMismatchError,
    InvalidFieldError,
    StepSizeError,
    load_config,
    log,
    tree_sum,
)


config = load_config()['bbmag']


class BvResult(object):
    """
        C_{1,A,u}, C_{2,A,u} and their sum.
    """
    def __init__(self, c1, c2, iterations, gap=None, wall_time=0.0):
        self.c1 = max(float(c1), 0.0)
        self.c2 = max(float(c2), 0.0)
        self.total = self.c1 + self.c2
        self.iterations = int(iterations)
        self.gap = None if gap is None else float(gap)
        self.wall_time = wall_time

    def __repr__(self):
        return f"BvResult(c1={self.c1:.10g}, c2={self.c2:.10g}, total={self.total:.10g})"

    def to_dict(self):
        return {'c1': self.c1, 'c2': self.c2, 'total': self.total, 'iterations': self.iterations, 'gap': self.gap}


class DiscreteVectorMeasure(object):
    """
        Per-cell N-vector masses of the real and imaginary channels (mu_1, mu_2)
    """
    def __init__(self, domain, real_channel, imag_channel):
        self.domain = domain
        self.real_channel = real_channel
        self.imag_channel = imag_channel
        if not (np.all(np.isfinite(real_channel)) and np.all(np.isfinite(imag_channel))):
            raise InvalidFieldError("measure has non-finite masses")

    def __repr__(self):
        return f"DiscreteVectorMeasure({self.domain!r})"

    def total_variation(self):
        """sum of pointwise Euclidean norms of both channels"""
        return (tree_sum(np.linalg.norm(self.real_channel, axis=-1)),
                tree_sum(np.linalg.norm(self.imag_channel, axis=-1)))


def face_mask(domain, support=None):
    """
        (resolution + (N,)) flags: the forward face of a cell along axis k lies
        between two cells of the mask (and of the support mask, when given)
    """
    mask = domain.mask if support is None else domain.mask & np.asarray(support, dtype=bool)
    faces = np.zeros(domain.resolution + (domain.dim,), dtype=bool)
    for k in range(domain.dim):
        lower = [slice(None)] * domain.dim
        upper = [slice(None)] * domain.dim
        lower[k] = slice(None, -1)
        upper[k] = slice(1, None)
        faces[tuple(lower) + (k,)] = mask[tuple(lower)] & mask[tuple(upper)]
    return faces


def magnetic_measure(u, A, domain=None, support=None, supersample=None, values=None):
    """
        The discrete measures mu_{1,A,u}, mu_{2,A,u} on the cells of domain

    :param u: ComplexField
    :param A: MagneticPotential
    :param domain: Domain; u.domain by default
    :param support: optional boolean mask restricting the test fields (an open U)
    :param values: precomputed cell means of u
    :return: DiscreteVectorMeasure
    """
    domain = u.domain if domain is None else domain
    if u.dim != domain.dim or A.dim != domain.dim:
        raise DimensionMismatchError("field, potential and domain dimensions differ")
    if values is None:
        supersample = config['bv']['supersample'] if supersample is None else supersample
        values = u.cell_averages(domain, supersample=supersample)
    if not np.all(np.isfinite(values)):
        raise InvalidFieldError("cell means of u are not finite")
    faces = face_mask(domain, support)
    vol = domain.cell_volume
    real_channel = np.zeros(domain.resolution + (domain.dim,))
    imag_channel = np.zeros(domain.resolution + (domain.dim,))
    grid = np.stack(np.meshgrid(*domain.axes, indexing='ij'), axis=-1)
    for k in range(domain.dim):
        lower = [slice(None)] * domain.dim
        upper = [slice(None)] * domain.dim
        lower[k] = slice(None, -1)
        upper[k] = slice(1, None)
        lower, upper = tuple(lower), tuple(upper)
        here = faces[lower + (k,)]
        diff = (values[upper] - values[lower]) / domain.widths[k]
        mean = 0.5 * (values[upper] + values[lower])
        midpoint = grid[lower].copy()
        midpoint[..., k] += 0.5 * domain.widths[k]
        a = A(midpoint)[..., k]
        real_channel[lower + (k,)] = np.where(here, -(diff.real + a * mean.imag) * vol, 0.0)
        imag_channel[lower + (k,)] = np.where(here, -(diff.imag - a * mean.real) * vol, 0.0)
    return DiscreteVectorMeasure(domain, real_channel, imag_channel)


def _ascent(mu, step, max_iter, tol, window):
    """
        Projected ascent of <phi, mu> over |phi| <= 1 per cell

    :return: (objective, iterations, gap)
    """
    norm = np.linalg.norm(mu, axis=-1)
    if step == 'jacobi':
        tau = np.where(norm > 0, 0.5 / np.where(norm > 0, norm, 1.0), 0.0)[..., None]
    else:
        tau = float(step)
        if not (np.isfinite(tau) and tau > 0):
            raise StepSizeError(f"ascent step must be positive and finite, got {step}")
    phi = np.zeros_like(mu)
    objective = 0.0
    history = [objective]
    upper = tree_sum(norm)
    gap = upper
    iterations = 0
    for iterations in range(1, max_iter + 1):
        phi = phi + tau * mu
        length = np.linalg.norm(phi, axis=-1, keepdims=True)
        phi = phi / np.maximum(length, 1.0)
        new = tree_sum(np.sum(phi * mu, axis=-1))
        if new < objective - 1e-12 * max(abs(objective), 1.0):
            raise StepSizeError(f"ascent lost monotonicity at iteration {iterations}: {new:.12g} < {objective:.12g}")
        objective = new
        gap = upper - objective
        history.append(objective)
        if gap <= tol * max(upper, 1e-300):
            break
        if len(history) > window:
            reference = history[-window - 1]
            if abs(objective - reference) <= tol * max(abs(objective), 1e-300):
                break
    return objective, iterations, gap


def bv_dual(u, A, domain=None, max_iter=None, tol=None, step=None, support=None, values=None):
    """
        |Du|_A(Omega) = C_1 + C_2 by projected ascent over discrete test fields

    The returned values are attained by admissible test fields, so they are
    lower bounds of the discrete suprema at any stopping point.

    Test fields live on faces between two masked cells and vanish on every
    face leaving the mask (or the support), one cell layer rather than two;
    a jump across the first interior face is counted in full.

    :param support: optional boolean mask of an open U in Omega; |Du|_A(U)
    :return: BvResult
    """
    tic = time.time()
    cfg = config['bv']
    max_iter = cfg['max_iter'] if max_iter is None else int(max_iter)
    tol = cfg['tol'] if tol is None else float(tol)
    step = cfg['step'] if step is None else step
    measure = magnetic_measure(u, A, domain, support=support, values=values)
    c1, it1, gap1 = _ascent(measure.real_channel, step, max_iter, tol, cfg['stall_window'])
    c2, it2, gap2 = _ascent(measure.imag_channel, step, max_iter, tol, cfg['stall_window'])
    if max(it1, it2) >= max_iter:
        log(f"bv_dual: stopped at max_iter = {max_iter} with gap {gap1 + gap2:.3g}")
    return BvResult(c1, c2, max(it1, it2), gap1 + gap2, time.time() - tic)


def bv_primal_smooth(u, A, domain=None, order=None):
    """
        int_Omega |grad u - i A u|_1 = int |grad Re u + A Im u| + |grad Im u - A Re u|
    """
    domain = u.domain if domain is None else domain
    order = config['quadrature']['order'] if order is None else order
    points, weights = domain.quadrature_nodes(order, u.breakpoints())
    return float(np.sum(weights * pnorm_pp(magnetic_gradient(u, A, points), 1)))


def bv_norm(u, A, domain=None, **kwargs):
    """||u||_{L^1} + |Du|_A(Omega)"""
    domain = u.domain if domain is None else domain
    return lp_norm(u, domain, 1.0) + bv_dual(u, A, domain, **kwargs).total


def extend_by_zero(u, domain, onto):
    """
        u on the masked cells of domain, zero elsewhere, as a field on onto

    :raises ContainmentError: when domain's masked cells are not inside onto's mask
    """
    if domain.dim != onto.dim:
        raise DimensionMismatchError("domains of different dimension")
    corners = domain.lower[:, None, :] + np.array([[0.25], [0.75]])[None, :, :] * domain.widths
    samples = np.concatenate([domain.centers, corners.reshape(-1, domain.dim)])
    if not np.all(onto.contains(samples)):
        raise ContainmentError("the domain is not contained in the target domain")
    return ComplexField.restricted(u, domain, onto)
