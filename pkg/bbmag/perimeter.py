"""
    Sets E in Omega, their relative perimeter, and classical and magnetic
    fractional s-perimeters.
"""
from numba import jit
import numpy as np
import pandas as pd

from bbmag.constants import default_rule, q_constant
from bbmag.core import ComplexField, MagneticPotential, as_points
from bbmag.functionals import fractional_magnetic_energy, EnergyResult
from bbmag.utils import (
    DimensionMismatchError,
    InvalidFieldError,
    check_s,
    load_config,
    pi,
    sphere_area,
)


config = load_config()['bbmag']


class ShapeSet(object):
    """
        A set E: interval (N = 1), disk (ball), square (N-box) or cell mask.

    Parameters
    ----------
    kind : str
        'interval', 'disk', 'square' or 'mask'.
    dim : int
    params : dict
        lower/upper for interval and square, center/radius for disk,
        domain/mask for mask sets.
    """
    kinds = ('interval', 'disk', 'square', 'mask')

    def __init__(self, kind, dim, params):
        if kind not in self.kinds:
            raise InvalidFieldError(f"unknown set kind '{kind}'")
        self.kind = kind
        self.dim = int(dim)
        self.params = dict(params)

    def __repr__(self):
        shown = {k: v for k, v in self.params.items() if k not in ('domain', 'mask')}
        return f"ShapeSet({self.kind}, {shown})"

    @classmethod
    def interval(cls, a, b):
        if not a < b:
            raise InvalidFieldError(f"empty interval ({a}, {b})")
        return cls('interval', 1, {'lower': np.array([float(a)]), 'upper': np.array([float(b)])})

    @classmethod
    def square(cls, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
        upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
        if lower.shape != upper.shape or np.any(upper <= lower):
            raise InvalidFieldError("square needs lower < upper on every axis")
        return cls('square', len(lower), {'lower': lower, 'upper': upper})

    @classmethod
    def disk(cls, center, radius):
        center = np.atleast_1d(np.asarray(center, dtype=np.float64))
        if not radius > 0:
            raise InvalidFieldError(f"disk radius must be positive, got {radius}")
        return cls('disk', len(center), {'center': center, 'radius': float(radius)})

    @classmethod
    def from_mask(cls, domain, mask):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != domain.resolution:
            raise DimensionMismatchError(f"mask shape {mask.shape} does not match {domain.resolution}")
        return cls('mask', domain.dim, {'domain': domain, 'mask': mask})

    @classmethod
    def empty(cls, domain):
        return cls.from_mask(domain, np.zeros(domain.resolution, dtype=bool))

    def complement(self, domain):
        """Omega minus E, as a mask on the cells of domain"""
        inside = self.cell_membership(domain)
        mask = np.zeros(domain.resolution, dtype=bool)
        mask[tuple(domain.indices.T)] = ~inside
        return ShapeSet.from_mask(domain, mask)

    def contains(self, points):
        points = as_points(points, self.dim)
        if self.kind in ('interval', 'square'):
            return np.all((points >= self.params['lower']) & (points < self.params['upper']), axis=-1)
        if self.kind == 'disk':
            return np.sum((points - self.params['center']) ** 2, axis=-1) < self.params['radius'] ** 2
        domain = self.params['domain']
        index, inside = domain.cell_of(points)
        flat = index.reshape(-1, self.dim)
        member = self.params['mask'][tuple(flat.T)].reshape(index.shape[:-1])
        return inside & member

    def cell_membership(self, domain):
        """E-membership of the masked cells of domain, by cell centre"""
        return self.contains(domain.centers)

    def breakpoints(self):
        if self.kind in ('interval', 'square'):
            return [np.array([self.params['lower'][k], self.params['upper'][k]]) for k in range(self.dim)]
        return [np.zeros(0) for _ in range(self.dim)]

    def aligned(self, domain):
        """True when every interface of E inside the box of domain lies on a cell face"""
        if self.kind == 'disk':
            return False
        if self.kind == 'mask':
            return self.params['domain'].same_grid(domain)
        for k in range(self.dim):
            for b in (self.params['lower'][k], self.params['upper'][k]):
                lo, hi = domain.bbox[k]
                if lo < b < hi:
                    position = (b - lo) / domain.widths[k]
                    if abs(position - round(position)) > 1e-9:
                        return False
        return True

    def interface(self, domain):
        """
            Quadrature of the boundary of E inside Omega

        Normals point out of E. Elements are kept only when both sides lie in
        masked cells of domain, so the weights sum to Per(E; Omega).

        :return: points (M, N), normals (M, N), weights (M,)
        """
        if self.dim != domain.dim:
            raise DimensionMismatchError("set and domain dimensions differ")
        if self.kind in ('interval', 'square'):
            points, normals, weights = self._box_interface(domain)
        elif self.kind == 'disk':
            rule = default_rule(self.dim)
            normals = rule.nodes
            points = self.params['center'] + self.params['radius'] * normals
            weights = rule.weights * self.params['radius'] ** (self.dim - 1)
        else:
            points, normals, weights = self._mask_interface()
        delta = 1e-7 * float(np.min(domain.widths))
        keep = domain.contains(points - delta * normals) & domain.contains(points + delta * normals)
        return points[keep], normals[keep], weights[keep]

    def _box_interface(self, domain):
        lower, upper = self.params['lower'], self.params['upper']
        lo, hi = domain.bbox[:, 0], domain.bbox[:, 1]
        # faces are pieced along the grid lines of domain
        centres, lengths = [], []
        for j in range(self.dim):
            a, b = max(lower[j], lo[j]), min(upper[j], hi[j])
            if not b > a:
                return np.zeros((0, self.dim)), np.zeros((0, self.dim)), np.zeros(0)
            grid = domain.edges(j)
            edges = np.unique(np.concatenate([[a, b], grid[(grid > a) & (grid < b)]]))
            centres.append(0.5 * (edges[1:] + edges[:-1]))
            lengths.append(np.diff(edges))
        points, normals, weights = [], [], []
        for k in range(self.dim):
            others = [j for j in range(self.dim) if j != k]
            if others:
                grids = np.meshgrid(*[centres[j] for j in others], indexing='ij')
                area = np.prod(np.stack(np.meshgrid(*[lengths[j] for j in others], indexing='ij')), axis=0).ravel()
            else:
                grids, area = [], np.ones(1)
            for b, sign in ((lower[k], -1.0), (upper[k], 1.0)):
                if not lo[k] < b < hi[k]:
                    continue
                face = np.empty((len(area), self.dim))
                face[:, k] = b
                for j, g in zip(others, grids):
                    face[:, j] = g.ravel()
                normal = np.zeros((len(area), self.dim))
                normal[:, k] = sign
                points.append(face)
                normals.append(normal)
                weights.append(area)
        if not points:
            return np.zeros((0, self.dim)), np.zeros((0, self.dim)), np.zeros(0)
        return np.concatenate(points), np.concatenate(normals), np.concatenate(weights)

    def _mask_interface(self):
        own, mask = self.params['domain'], self.params['mask']
        points, normals, weights = [], [], []
        for k in range(self.dim):
            pad = [(0, 0)] * self.dim
            pad[k] = (1, 1)
            padded = np.pad(mask, pad, constant_values=False)
            upper = np.take(padded, range(1, padded.shape[k]), axis=k)
            below = np.take(padded, range(0, padded.shape[k] - 1), axis=k)
            index = np.argwhere(upper != below)
            if not len(index):
                continue
            # face k-index i sits at the lower edge of cell i
            face = own.bbox[:, 0] + (index + 0.5) * own.widths
            face[:, k] = own.bbox[k, 0] + index[:, k] * own.widths[k]
            normal = np.zeros((len(index), self.dim))
            normal[:, k] = np.where(below[tuple(index.T)], 1.0, -1.0)
            points.append(face)
            normals.append(normal)
            weights.append(np.full(len(index), own.cell_volume / own.widths[k]))
        if not points:
            return np.zeros((0, self.dim)), np.zeros((0, self.dim)), np.zeros(0)
        return np.concatenate(points), np.concatenate(normals), np.concatenate(weights)

    def curvature(self):
        """Bound on the curvature of the boundary of E, zero for flat faces"""
        if self.kind == 'disk':
            return 1.0 / self.params['radius']
        if self.kind == 'mask':
            return 1.0 / float(np.min(self.params['domain'].widths))
        return 0.0

    def indicator(self, domain):
        return ComplexField.indicator(domain, self)

    def measure(self, domain):
        """|E cap Omega| from cell fractions"""
        fractions = self.indicator(domain).cell_averages(domain, supersample=config['bv']['supersample'])
        return float(np.sum(fractions.real[domain.mask]) * domain.cell_volume)

    def perimeter(self, domain):
        """
            Relative perimeter Per(E; Omega): only interface interior to Omega counts
        """
        full = bool(np.all(domain.mask))
        lo, hi = domain.bbox[:, 0], domain.bbox[:, 1]
        if full and self.kind in ('interval', 'square'):
            lower = np.maximum(self.params['lower'], lo)
            upper = np.minimum(self.params['upper'], hi)
            if np.any(upper <= lower):
                return 0.0
            total = 0.0
            for k in range(self.dim):
                others = np.prod(np.delete(upper - lower, k)) if self.dim > 1 else 1.0
                for b in (self.params['lower'][k], self.params['upper'][k]):
                    if lo[k] < b < hi[k]:
                        total += others
            return float(total)
        if full and self.kind == 'disk':
            c, r = self.params['center'], self.params['radius']
            if np.all(c - r > lo) and np.all(c + r < hi):
                return float(sphere_area(self.dim) * r ** (self.dim - 1))
        return numeric_perimeter(self, domain)

    def magnetic_mass(self, A, domain):
        """
            int_{E cap Omega} |A(x)| dx
        """
        if A.dim != self.dim:
            raise DimensionMismatchError("set and potential dimensions differ")
        full = bool(np.all(domain.mask))
        if A.kind == 'preset' and A.preset == 'zero':
            return 0.0
        if A.kind == 'preset' and A.preset == 'constant':
            return float(np.linalg.norm(A.params['a'])) * self.measure(domain)
        if (full and self.kind == 'disk' and self.dim == 2 and A.kind == 'preset'
                and A.preset in ('landau', 'radial') and np.allclose(self.params['center'], 0.0)):
            r = self.params['radius']
            if np.all(-r > domain.bbox[:, 0]) and np.all(r < domain.bbox[:, 1]):
                slope = 0.5 * abs(A.params['B']) if A.preset == 'landau' else abs(A.params['c'])
                return slope * 2.0 * pi * r ** 3 / 3.0
        n = config['bv']['supersample']
        t = (np.arange(n) + 0.5) / n
        unit = np.stack(np.meshgrid(*([t] * self.dim), indexing='ij'), axis=-1).reshape(-1, self.dim)
        total = 0.0
        step = max(1, 2 ** 20 // len(unit))
        for start in range(0, domain.n_cells, step):
            points = domain.lower[start:start + step, None, :] + unit[None, :, :] * domain.widths
            inside = self.contains(points)
            total += float(np.sum(np.linalg.norm(A(points), axis=-1) * inside))
        return total * domain.cell_volume / len(unit)


@jit(nopython=True)
def _marching_squares(values, usable, hx, hy, level):
    total = 0.0
    nx, ny = values.shape
    xs = np.zeros(4)
    ys = np.zeros(4)
    for i in range(nx - 1):
        for j in range(ny - 1):
            if not usable[i, j]:
                continue
            v00 = values[i, j]
            v10 = values[i + 1, j]
            v11 = values[i + 1, j + 1]
            v01 = values[i, j + 1]
            corners = ((v00, v10, 0.0, 0.0, 1.0, 0.0),
                       (v10, v11, 1.0, 0.0, 1.0, 1.0),
                       (v01, v11, 0.0, 1.0, 1.0, 1.0),
                       (v00, v01, 0.0, 0.0, 0.0, 1.0))
            n = 0
            for e in range(4):
                va, vb, xa, ya, xb, yb = corners[e]
                if (va >= level) != (vb >= level):
                    t = (level - va) / (vb - va)
                    xs[n] = (xa + t * (xb - xa)) * hx
                    ys[n] = (ya + t * (yb - ya)) * hy
                    n += 1
            if n == 2:
                total += np.sqrt((xs[1] - xs[0]) ** 2 + (ys[1] - ys[0]) ** 2)
            elif n == 4:
                # saddle: edges are bottom, right, top, left; pair by the centre value
                centre = 0.25 * (v00 + v10 + v11 + v01)
                if (centre >= level) == (v00 >= level):
                    total += np.sqrt((xs[0] - xs[1]) ** 2 + (ys[0] - ys[1]) ** 2)
                    total += np.sqrt((xs[2] - xs[3]) ** 2 + (ys[2] - ys[3]) ** 2)
                else:
                    total += np.sqrt((xs[0] - xs[3]) ** 2 + (ys[0] - ys[3]) ** 2)
                    total += np.sqrt((xs[1] - xs[2]) ** 2 + (ys[1] - ys[2]) ** 2)
    return total


@jit(nopython=True)
def _count_jumps(values, usable, level):
    count = 0
    for i in range(values.shape[0] - 1):
        if usable[i] and (values[i] >= level) != (values[i + 1] >= level):
            count += 1
    return count


def numeric_perimeter(shape, domain):
    """
        Per(E; Omega) from cell fractions of E: jump counting in 1D, the
        length of the 1/2 level line by marching squares in 2D
    """
    if domain.dim > 2:
        raise DimensionMismatchError("numeric perimeters are available for N = 1, 2")
    fractions = ComplexField.indicator(domain, shape).cell_averages(
        domain, supersample=config['bv']['supersample']).real
    mask = domain.mask
    if domain.dim == 1:
        usable = mask[:-1] & mask[1:]
        return float(_count_jumps(fractions, usable, 0.5))
    usable = mask[:-1, :-1] & mask[1:, :-1] & mask[1:, 1:] & mask[:-1, 1:]
    return float(_marching_squares(fractions, usable, domain.widths[0], domain.widths[1], 0.5))


def indicator_bv(E, A, domain):
    """
        |D 1_E|_A(Omega) = Per(E; Omega) + int_E |A|
    """
    if E.dim != domain.dim:
        raise DimensionMismatchError("set and domain dimensions differ")
    return E.perimeter(domain) + E.magnetic_mass(A, domain)


def _half(result):
    return EnergyResult(0.5 * result.value, 0.5 * result.est_error, result.node_pairs, result.wall_time,
                        result.tolerance_met, result.warning, {'full_integral': result.value})


def classical_fractional_perimeter(E, domain, s, q=None, threads=None):
    """
        P_s(E) = int_E int_{Omega \\ E} |x - y|^{-N-s} dx dy
    """
    check_s(s)
    u = ComplexField.indicator(domain, E)
    return _half(fractional_magnetic_energy(u, MagneticPotential.zero(domain.dim), domain, s, 1.0, q,
                                            threads=threads))


def magnetic_fractional_perimeter(E, A, domain, s, q=None, threads=None):
    """
        P_s(E; A) = 1/2 int_E int_E |1 - e^{i theta}|_1 K + 1/2 int_E int_{E^c} K
                  + 1/2 int_{E^c} int_E |e^{i theta}|_1 K,   K = |x - y|^{-N-s}

    which is half the fractional energy of 1_E at p = 1.
    """
    check_s(s)
    u = ComplexField.indicator(domain, E)
    return _half(fractional_magnetic_energy(u, A, domain, s, 1.0, q, threads=threads))


def perimeter_sweep(E, A, domain, s_list, q=None, threads=None):
    """
        Columns s, Ps_classical, Ps_magnetic, (1-s)*full_integral, target

    attrs['tolerance_met'] is False when any quadrature missed its tolerance;
    attrs['warnings'] lists their messages.
    """
    target = q_constant(1.0, domain.dim, check=False) * indicator_bv(E, A, domain)
    rows, warnings = [], []
    met = True
    for s in s_list:
        classical = classical_fractional_perimeter(E, domain, s, q, threads)
        magnetic = magnetic_fractional_perimeter(E, A, domain, s, q, threads)
        for result in (classical, magnetic):
            met = met and result.tolerance_met
            if result.warning:
                warnings.append(f"s={s}: {result.warning}")
        rows.append({
            's': s,
            'Ps_classical': classical.value,
            'Ps_magnetic': magnetic.value,
            '(1-s)*full_integral': (1 - s) * magnetic.components['full_integral'],
            'target': target,
        })
    table = pd.DataFrame(rows, columns=['s', 'Ps_classical', 'Ps_magnetic', '(1-s)*full_integral', 'target'])
    table.attrs['tolerance_met'] = met
    table.attrs['warnings'] = warnings
    return table
