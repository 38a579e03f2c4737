"""
    Domains, complex fields and magnetic potentials.

    Every functional in bbmag integrates over a Domain: an axis-aligned box split
    into cells, with a boolean mask selecting the cells that belong to the set.
    Fields and potentials are either analytic presets, evaluated exactly
    anywhere, or grid samples attached to the cell centres of a Domain.
"""
import numpy as np
import pandas as pd
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import distance_transform_edt
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from bbmag.utils import (
    BoundaryStencilError,
    DimensionMismatchError,
    InvalidFieldError,
    NodeOutsideMaskError,
    TensorGridError,
    check_p,
    gauss_legendre,
)


def _readonly(array):
    array = np.array(array)
    array.flags.writeable = False
    return array


def as_points(points, dim):
    """
        Coerce to a float array of shape (..., dim)
    """
    points = np.asarray(points, dtype=np.float64)
    if dim == 1 and (points.ndim == 0 or points.shape[-1] != 1):
        points = points[..., None]
    if points.shape[-1] != dim:
        raise DimensionMismatchError(f"expected points of dimension {dim}, got shape {points.shape}")
    return points


class Domain(object):
    """
        Axis-aligned box, split into cells, with a per-cell membership mask.

    Parameters
    ----------
    bbox : array-like, shape (N, 2)
        Lower and upper bound per axis.
    resolution : sequence of int
        Number of cells per axis.
    mask : array-like of bool, shape resolution, optional
        Cells belonging to the set; the full box when omitted.
    """
    def __init__(self, bbox, resolution, mask=None):
        bbox = np.asarray(bbox, dtype=np.float64).reshape(-1, 2)
        resolution = tuple(int(n) for n in np.atleast_1d(resolution))
        if len(resolution) != bbox.shape[0]:
            raise DimensionMismatchError(
                f"bbox has {bbox.shape[0]} axes but resolution has {len(resolution)}"
            )
        if any(n < 1 for n in resolution):
            raise InvalidFieldError(f"resolution must be positive, got {resolution}")
        widths = (bbox[:, 1] - bbox[:, 0]) / np.array(resolution)
        if not np.all(widths > 0):
            raise InvalidFieldError(f"cell widths must be positive, got {widths}")
        if mask is None:
            mask = np.ones(resolution, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != resolution:
            raise DimensionMismatchError(f"mask shape {mask.shape} does not match resolution {resolution}")

        self.dim = bbox.shape[0]
        self.bbox = _readonly(bbox)
        self.resolution = resolution
        self.widths = _readonly(widths)
        self.mask = _readonly(mask)
        self.cell_volume = float(np.prod(widths))
        self.axes = tuple(
            _readonly(bbox[k, 0] + (np.arange(resolution[k]) + 0.5) * widths[k]) for k in range(self.dim)
        )
        self.indices = _readonly(np.argwhere(mask))
        self.centers = _readonly(
            np.stack([self.axes[k][self.indices[:, k]] for k in range(self.dim)], axis=-1)
            if len(self.indices) else np.zeros((0, self.dim))
        )
        self.lower = _readonly(self.centers - 0.5 * widths)
        self._diameter = None

    def __repr__(self):
        return f"Domain(bbox={self.bbox.tolist()}, resolution={self.resolution}, cells={self.n_cells})"

    @property
    def n_cells(self):
        return len(self.indices)

    def edges(self, k):
        """Grid lines along axis k, box bounds included"""
        return self.bbox[k, 0] + np.arange(self.resolution[k] + 1) * self.widths[k]

    @property
    def measure(self):
        return self.n_cells * self.cell_volume

    @property
    def cell_diagonal(self):
        return float(np.linalg.norm(self.widths))

    @property
    def diameter(self):
        """
            r_Omega: largest distance between masked cell centres
        """
        if self._diameter is None:
            boundary = self.centers[self.boundary_cells()]
            if len(boundary) < 2:
                self._diameter = 0.0
            elif self.dim == 1:
                self._diameter = float(boundary.max() - boundary.min())
            else:
                if len(boundary) > 4000:
                    try:
                        boundary = boundary[ConvexHull(boundary).vertices]
                    except Exception:
                        pass
                self._diameter = float(pdist(boundary).max())
        return self._diameter

    def boundary_cells(self):
        """Boolean flags over masked cells that touch an unmasked cell or the box edge"""
        padded = np.pad(self.mask, 1, constant_values=False)
        interior = padded.copy()
        for k in range(self.dim):
            interior &= np.roll(padded, 1, axis=k) & np.roll(padded, -1, axis=k)
        inner = interior[tuple(slice(1, -1) for _ in range(self.dim))]
        return ~inner[tuple(self.indices.T)]

    def cell_of(self, points):
        """Integer cell index per point and a flag for points inside the box"""
        points = as_points(points, self.dim)
        rel = (points - self.bbox[:, 0]) / self.widths
        inside = np.all((rel >= 0) & (rel <= np.array(self.resolution)), axis=-1)
        index = np.clip(np.floor(rel).astype(np.int64), 0, np.array(self.resolution) - 1)
        return index, inside

    def contains(self, points):
        """True for points in a masked cell (closed cells)"""
        index, inside = self.cell_of(points)
        flat = index.reshape(-1, self.dim)
        member = self.mask[tuple(flat.T)].reshape(index.shape[:-1])
        return inside & member

    def same_grid(self, other):
        return (self.resolution == other.resolution
                and np.allclose(self.bbox, other.bbox, rtol=0, atol=1e-12 * np.max(np.abs(self.bbox) + 1)))

    def restrict(self, mask):
        """Same grid, mask intersected with the given one"""
        return Domain(self.bbox, self.resolution, self.mask & np.asarray(mask, dtype=bool))

    def shrink(self, r):
        """
            Omega_r = {x in Omega : dist(x, boundary) > r}, resolved at cell centres
        """
        padded = np.pad(self.mask, 1, constant_values=False)
        distance = distance_transform_edt(padded, sampling=self.widths)
        distance = distance[tuple(slice(1, -1) for _ in range(self.dim))] - 0.5 * float(np.min(self.widths))
        return self.restrict(distance > r)

    def masked_neighbour(self, offset):
        """
            Flags over masked cells whose neighbour at integer offset is masked too
        """
        target = self.indices + np.asarray(offset, dtype=np.int64)
        inside = np.all((target >= 0) & (target < np.array(self.resolution)), axis=-1)
        result = np.zeros(self.n_cells, dtype=bool)
        result[inside] = self.mask[tuple(target[inside].T)]
        return result

    def cell_lookup(self):
        """Grid-shaped array mapping cells to masked-cell ids, -1 elsewhere"""
        lookup = -np.ones(self.resolution, dtype=np.int64)
        lookup[tuple(self.indices.T)] = np.arange(self.n_cells)
        return lookup

    def quadrature_nodes(self, order, breakpoints=None, cells=None):
        """
            Tensor Gauss nodes in every masked cell, with cells split at breakpoints

        :param order: Gauss order per axis (per piece when split)
        :param breakpoints: per-axis sequences of coordinates where the integrand jumps
        :param cells: optional subset of masked-cell ids
        :return: points (M, K, N), weights (M, K) including the cell volume
        """
        lower = self.lower if cells is None else self.lower[cells]
        t, w = gauss_legendre(order)
        coords, weights = [], []
        for k in range(self.dim):
            lo = lower[:, k]
            hi = lo + self.widths[k]
            cuts = np.asarray(breakpoints[k] if breakpoints is not None else [], dtype=np.float64)
            split = split_points(lo, hi, cuts)
            if split is None:
                coords.append(lo[:, None] + self.widths[k] * t[None, :])
                weights.append(np.broadcast_to(self.widths[k] * w, (len(lo), order)))
            else:
                left, right = split - lo, hi - split
                coords.append(np.concatenate([lo[:, None] + left[:, None] * t, split[:, None] + right[:, None] * t], axis=1))
                weights.append(np.concatenate([left[:, None] * w, right[:, None] * w], axis=1))
        return tensor_combine(coords, weights)


def split_points(lo, hi, cuts):
    """
        Per-cell split coordinate: the cut nearest the cell centre if one lies
        strictly inside, the midpoint otherwise; None if no cell is cut
    """
    if len(cuts) == 0:
        return None
    tol = 1e-9 * (hi - lo)
    centre = 0.5 * (lo + hi)
    nearest = cuts[np.argmin(np.abs(cuts[None, :] - centre[:, None]), axis=1)]
    inside = (nearest > lo + tol) & (nearest < hi - tol)
    if not np.any(inside):
        return None
    return np.where(inside, nearest, centre)


def tensor_combine(coords, weights):
    """Per-row tensor product of per-axis nodes (M, n_k) and weights (M, n_k)"""
    grids = np.meshgrid(*[np.arange(c.shape[1]) for c in coords], indexing='ij')
    idx = [g.ravel() for g in grids]
    points = np.stack([coords[k][:, idx[k]] for k in range(len(coords))], axis=-1)
    w = np.ones(points.shape[:2])
    for k in range(len(coords)):
        w = w * weights[k][:, idx[k]]
    return points, w


def pnorm(z, p):
    """
        Complex p-norm |z|_p = (|Re z|^p + |Im z|^p)^(1/p)

    Re z and Im z are the real vectors of real and imaginary parts, measured with
    the Euclidean norm; the last axis holds vector components, a 0-d input is a
    complex scalar.

    :param z: complex scalar or array (..., N)
    :param p: real >= 1
    :return: float or array of shape z.shape[:-1]
    """
    check_p(p)
    z = np.asarray(z)
    if not np.all(np.isfinite(z)):
        raise InvalidFieldError("pnorm of a non-finite value")
    if z.ndim == 0:
        return float((abs(z.real) ** p + abs(z.imag) ** p) ** (1.0 / p))
    re = np.linalg.norm(np.real(z), axis=-1)
    im = np.linalg.norm(np.imag(z), axis=-1)
    return (re ** p + im ** p) ** (1.0 / p)


def pnorm_pp(z, p, vector=True):
    """|z|_p^p without the root; vector=False treats every entry as a scalar"""
    if vector:
        re = np.linalg.norm(np.real(z), axis=-1)
        im = np.linalg.norm(np.imag(z), axis=-1)
    else:
        re, im = np.abs(np.real(z)), np.abs(np.imag(z))
    if p == 1:
        return re + im
    if p == 2:
        return re * re + im * im
    return re ** p + im ** p


def modulation_phase(x, y, A):
    """
        theta = (x - y) . A((x + y) / 2)
    """
    x = as_points(x, A.dim)
    y = as_points(y, A.dim)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionMismatchError(f"x has dimension {x.shape[-1]}, y has {y.shape[-1]}")
    theta = np.sum((x - y) * A(0.5 * (x + y)), axis=-1)
    return float(theta) if theta.ndim == 0 else theta


def magnetic_gradient(u, A, x):
    """
        grad u(x) - i A(x) u(x)

    :param u: ComplexField
    :param A: MagneticPotential
    :param x: point(s) (..., N)
    :return: complex array (..., N)
    """
    if A.dim != u.dim:
        raise DimensionMismatchError(f"field has dimension {u.dim}, potential has {A.dim}")
    x = as_points(x, u.dim)
    if u.kind == 'sampled' and not np.all(u.domain.contains(x)):
        raise NodeOutsideMaskError("magnetic gradient of a sampled field requested outside its mask")
    values = u(x)
    return u.gradient(x) - (1j * A(x)) * values[..., None]


class ComplexField(object):
    """
        Complex-valued u on a Domain, analytic preset or sampled at cell centres.

    Presets evaluate (and differentiate) exactly at any point; sampled fields
    interpolate linearly between cell centres and use second-order finite
    differences for the gradient.
    """
    presets = ('constant', 'plane_wave', 'gaussian', 'linear', 'bump', 'wave_bump',
               'indicator', 'product', 'restricted')

    def __init__(self, domain, kind, preset=None, params=None, values=None, parts=()):
        self.domain = domain
        self.dim = domain.dim
        self.kind = kind
        self.preset = preset
        self.params = dict(params or {})
        self.parts = tuple(parts)
        self._nodal_gradient = None
        self._interpolants = None
        if kind == 'sampled':
            values = np.asarray(values, dtype=np.complex128)
            if values.shape != domain.resolution:
                raise DimensionMismatchError(f"values shape {values.shape} does not match {domain.resolution}")
            if not np.all(np.isfinite(values[domain.mask])):
                raise InvalidFieldError("sampled field has non-finite values on masked nodes")
            values = np.where(domain.mask, values, 0)
            self.values = _readonly(values)
        elif kind == 'preset':
            if preset not in self.presets:
                raise InvalidFieldError(f"unknown field preset '{preset}'")
            self.values = None
        else:
            raise InvalidFieldError(f"unknown field kind '{kind}'")

    def __repr__(self):
        if self.kind == 'sampled':
            return f"ComplexField(sampled, {self.domain.resolution})"
        return f"ComplexField({self.preset}, {self.params})"

    @property
    def identifier(self):
        return 'sampled' if self.kind == 'sampled' else self.preset

    # presets
    @classmethod
    def constant(cls, domain, c=1.0):
        return cls(domain, 'preset', 'constant', {'c': complex(c)})

    @classmethod
    def plane_wave(cls, domain, a, c=1.0):
        a = np.atleast_1d(np.asarray(a, dtype=np.float64))
        if a.shape != (domain.dim,):
            raise DimensionMismatchError(f"wave vector must have {domain.dim} components")
        return cls(domain, 'preset', 'plane_wave', {'a': a, 'c': complex(c)})

    @classmethod
    def gaussian(cls, domain, center=None, width=1.0, amplitude=1.0):
        center = np.zeros(domain.dim) if center is None else np.atleast_1d(np.asarray(center, dtype=np.float64))
        return cls(domain, 'preset', 'gaussian', {'center': center, 'width': float(width), 'amplitude': complex(amplitude)})

    @classmethod
    def linear(cls, domain, slope, offset=0.0):
        slope = np.atleast_1d(np.asarray(slope, dtype=np.complex128))
        if slope.shape != (domain.dim,):
            raise DimensionMismatchError(f"slope must have {domain.dim} components")
        return cls(domain, 'preset', 'linear', {'slope': slope, 'offset': complex(offset)})

    @classmethod
    def bump(cls, domain, center=None, radius=1.0, amplitude=1.0):
        center = np.zeros(domain.dim) if center is None else np.atleast_1d(np.asarray(center, dtype=np.float64))
        return cls(domain, 'preset', 'bump', {'center': center, 'radius': float(radius), 'amplitude': complex(amplitude)})

    @classmethod
    def wave_bump(cls, domain, a, center=None, radius=1.0):
        return cls.product(cls.plane_wave(domain, a), cls.bump(domain, center, radius))

    @classmethod
    def indicator(cls, domain, shape):
        """1_E for a set object exposing contains/breakpoints/interface"""
        return cls(domain, 'preset', 'indicator', {'shape': shape})

    @classmethod
    def product(cls, f, g):
        if f.dim != g.dim:
            raise DimensionMismatchError("product of fields of different dimension")
        return cls(f.domain, 'preset', 'product', parts=(f, g))

    @classmethod
    def restricted(cls, f, support, onto):
        """f on the masked cells of support, zero elsewhere, integrated over onto"""
        return cls(onto, 'preset', 'restricted', {'support': support}, parts=(f,))

    @classmethod
    def sampled(cls, domain, values):
        return cls(domain, 'sampled', values=values)

    @classmethod
    def from_csv(cls, path):
        """
            Load a sampled field from x1,...,xN,re,im rows (optional mask column)
        """
        domain, columns = read_grid_csv(path, ('re', 'im'))
        return cls.sampled(domain, columns['re'] + 1j * columns['im'])

    # evaluation
    def __call__(self, points):
        points = as_points(points, self.dim)
        if self.kind == 'sampled':
            re, im = self._interpolate(points, self._get_interpolants()[0])
            return re + 1j * im
        p = self.params
        if self.preset == 'constant':
            return np.full(points.shape[:-1], p['c'], dtype=np.complex128)
        if self.preset == 'plane_wave':
            return p['c'] * np.exp(1j * (points @ p['a']))
        if self.preset == 'gaussian':
            r2 = np.sum((points - p['center']) ** 2, axis=-1)
            return p['amplitude'] * np.exp(-r2 / p['width'] ** 2)
        if self.preset == 'linear':
            return points @ p['slope'] + p['offset']
        if self.preset == 'bump':
            t = np.sum((points - p['center']) ** 2, axis=-1) / p['radius'] ** 2
            inside = t < 1
            out = np.zeros(points.shape[:-1], dtype=np.complex128)
            out[inside] = p['amplitude'] * np.exp(-1.0 / (1.0 - t[inside]))
            return out
        if self.preset == 'indicator':
            return p['shape'].contains(points).astype(np.complex128)
        if self.preset == 'product':
            return self.parts[0](points) * self.parts[1](points)
        if self.preset == 'restricted':
            return self.parts[0](points) * p['support'].contains(points)

    def zero_extended(self, points):
        """Values inside the domain mask, zero outside"""
        points = as_points(points, self.dim)
        return self(points) * self.domain.contains(points)

    def gradient(self, points):
        """
            Gradient (complex, (..., N)); jumps of discontinuous presets are ignored
        """
        points = as_points(points, self.dim)
        if self.kind == 'sampled':
            if not np.all(self.domain.contains(points)):
                raise NodeOutsideMaskError("gradient of a sampled field requested outside its mask")
            grads = self._get_interpolants()[1]
            return np.stack(
                [re + 1j * im for re, im in (self._interpolate(points, g) for g in grads)], axis=-1
            )
        p = self.params
        if self.preset in ('constant', 'indicator'):
            return np.zeros(points.shape, dtype=np.complex128)
        if self.preset == 'plane_wave':
            return (1j * p['a']) * self(points)[..., None]
        if self.preset == 'gaussian':
            return (-2.0 * (points - p['center']) / p['width'] ** 2) * self(points)[..., None]
        if self.preset == 'linear':
            return np.broadcast_to(p['slope'], points.shape).astype(np.complex128)
        if self.preset == 'bump':
            t = np.sum((points - p['center']) ** 2, axis=-1) / p['radius'] ** 2
            factor = np.zeros_like(t)
            inside = t < 1
            factor[inside] = -2.0 / (p['radius'] ** 2 * (1.0 - t[inside]) ** 2)
            return (factor[..., None] * (points - p['center'])) * self(points)[..., None]
        if self.preset == 'product':
            f, g = self.parts
            return f.gradient(points) * g(points)[..., None] + f(points)[..., None] * g.gradient(points)
        if self.preset == 'restricted':
            inside = p['support'].contains(points)
            return self.parts[0].gradient(points) * inside[..., None]

    # structure used by the quadrature
    @property
    def has_jumps(self):
        if self.kind == 'sampled':
            return False
        if self.preset in ('indicator', 'restricted'):
            return True
        return any(part.has_jumps for part in self.parts)

    def breakpoints(self):
        """Per-axis coordinates of axis-aligned discontinuities"""
        cuts = [[] for _ in range(self.dim)]
        if self.kind == 'sampled':
            return cuts
        if self.preset == 'indicator':
            cuts = [list(c) for c in self.params['shape'].breakpoints()]
        elif self.preset == 'restricted':
            bbox = self.params['support'].bbox
            cuts = [list(bbox[k]) for k in range(self.dim)]
        for part in self.parts:
            for k, c in enumerate(part.breakpoints()):
                cuts[k].extend(c)
        return [np.unique(np.asarray(c, dtype=np.float64)) for c in cuts]

    def _support_set(self):
        from bbmag.perimeter import ShapeSet
        support = self.params['support']
        if np.all(support.mask):
            return ShapeSet.square(support.bbox[:, 0], support.bbox[:, 1])
        return ShapeSet.from_mask(support, support.mask)

    def interface(self, domain):
        """
            Points, normals and surface weights of every jump interface inside domain

        :return: (points (M, N), normals (M, N), weights (M,)); empty without jumps
        """
        empty = (np.zeros((0, self.dim)), np.zeros((0, self.dim)), np.zeros(0))
        if not self.has_jumps:
            return empty
        pieces = []
        if self.preset == 'indicator':
            pieces.append(self.params['shape'].interface(domain))
        elif self.preset == 'restricted':
            pieces.append(self._support_set().interface(domain))
        pieces.extend(part.interface(domain) for part in self.parts if part.has_jumps)
        if not pieces:
            return empty
        return tuple(np.concatenate(arrays) for arrays in zip(*pieces))

    def sides(self, points):
        """
            Integer label of the smooth piece of the field each point falls in
        """
        points = as_points(points, self.dim)
        if not self.has_jumps:
            return np.zeros(points.shape[:-1], dtype=np.int64)
        if self.preset == 'indicator':
            return self.params['shape'].contains(points).astype(np.int64)
        if self.preset == 'restricted':
            label = self.params['support'].contains(points).astype(np.int64)
            return label + 2 * self.parts[0].sides(points)
        f, g = self.parts
        return f.sides(points) * 65536 + g.sides(points)

    def planar_jumps(self, domain):
        """True when every jump lies on a cell face of domain or on an axis-aligned breakpoint plane"""
        if not self.has_jumps:
            return True
        if self.preset == 'indicator':
            shape = self.params['shape']
            return shape.kind in ('interval', 'square') or shape.aligned(domain)
        if self.preset == 'restricted':
            support = self.params['support']
            flat = bool(np.all(support.mask)) or support.same_grid(domain)
            return flat and self.parts[0].planar_jumps(domain)
        return all(part.planar_jumps(domain) for part in self.parts)

    def curvature(self):
        if not self.has_jumps:
            return 0.0
        bounds = [part.curvature() for part in self.parts]
        if self.preset == 'indicator':
            bounds.append(self.params['shape'].curvature())
        elif self.preset == 'restricted':
            bounds.append(self._support_set().curvature())
        return max(bounds)

    def cell_averages(self, domain=None, order=4, supersample=16):
        """
            Cell means on the grid of domain (zero outside its mask)

        Discontinuous presets are averaged with supersample**N midpoints per cell
        so that cut cells carry their volume fraction.
        """
        domain = self.domain if domain is None else domain
        out = np.zeros(domain.resolution, dtype=np.complex128)
        if self.kind == 'sampled' and domain.same_grid(self.domain):
            out[domain.mask] = self.values[domain.mask]
            return out
        if self.has_jumps:
            t = (np.arange(supersample) + 0.5) / supersample
            w = np.full(supersample, 1.0 / supersample)
            unit = tensor_combine([np.tile(t, (1, 1))] * domain.dim, [np.tile(w, (1, 1))] * domain.dim)
            nodes, weights = unit[0][0], unit[1][0]
        else:
            t, w = gauss_legendre(order)
            unit = tensor_combine([t[None, :]] * domain.dim, [w[None, :]] * domain.dim)
            nodes, weights = unit[0][0], unit[1][0]
        means = np.empty(domain.n_cells, dtype=np.complex128)
        block = max(1, 2 ** 20 // len(nodes))
        for start in range(0, domain.n_cells, block):
            lower = domain.lower[start:start + block]
            points = lower[:, None, :] + nodes[None, :, :] * domain.widths
            means[start:start + block] = self(points) @ weights
        out[tuple(domain.indices.T)] = means
        return out

    # sampled internals
    def _get_interpolants(self):
        if self._interpolants is None:
            axes = self.domain.axes
            if any(len(a) < 2 for a in axes):
                raise BoundaryStencilError("sampled fields need at least two nodes per axis")

            def build(values):
                return tuple(
                    RegularGridInterpolator(axes, part, method='linear', bounds_error=False, fill_value=None)
                    for part in (np.real(values), np.imag(values))
                )

            grad = self.nodal_gradient()
            self._interpolants = (build(self.values), [build(grad[..., k]) for k in range(self.dim)])
        return self._interpolants

    @staticmethod
    def _interpolate(points, pair):
        flat = points.reshape(-1, points.shape[-1])
        shape = points.shape[:-1]
        return pair[0](flat).reshape(shape), pair[1](flat).reshape(shape)

    def nodal_gradient(self):
        """
            Second-order finite differences at masked nodes: central in the
            interior, one-sided where the mask ends
        """
        if self._nodal_gradient is not None:
            return self._nodal_gradient
        mask = self.domain.mask
        grad = np.zeros(self.domain.resolution + (self.dim,), dtype=np.complex128)
        for k in range(self.dim):
            h = self.domain.widths[k]
            pad = [(0, 0)] * self.dim
            pad[k] = (2, 2)
            f = np.pad(self.values, pad)
            m = np.pad(mask, pad, constant_values=False)
            n = mask.shape[k]

            def shift(a, s):
                index = [slice(None)] * self.dim
                index[k] = slice(2 + s, 2 + s + n)
                return a[tuple(index)]

            central = shift(m, -1) & shift(m, 1)
            forward = shift(m, 1) & shift(m, 2)
            backward = shift(m, -1) & shift(m, -2)
            g = np.where(
                central, (shift(f, 1) - shift(f, -1)) / (2 * h),
                np.where(
                    forward, (-3 * shift(f, 0) + 4 * shift(f, 1) - shift(f, 2)) / (2 * h),
                    (3 * shift(f, 0) - 4 * shift(f, -1) + shift(f, -2)) / (2 * h),
                ),
            )
            if np.any(mask & ~(central | forward | backward)):
                raise BoundaryStencilError(f"masked node without a second-order stencil along axis {k}")
            grad[..., k] = np.where(mask, g, 0)
        self._nodal_gradient = _readonly(grad)
        return self._nodal_gradient


class MagneticPotential(object):
    """
        Real vector field A on R^N: preset (zero, constant, landau, radial) or sampled.
    """
    presets = ('zero', 'constant', 'landau', 'radial')

    def __init__(self, dim, kind, preset=None, params=None, domain=None, values=None):
        self.dim = int(dim)
        self.kind = kind
        self.preset = preset
        self.params = dict(params or {})
        self.domain = domain
        self._interpolants = None
        if kind == 'sampled':
            values = np.asarray(values, dtype=np.float64)
            if values.shape != domain.resolution + (self.dim,):
                raise DimensionMismatchError(f"potential values shape {values.shape} does not match grid")
            if not np.all(np.isfinite(values[domain.mask])):
                raise InvalidFieldError("sampled potential has non-finite values on masked nodes")
            self.values = _readonly(values)
        elif kind == 'preset':
            if preset not in self.presets:
                raise InvalidFieldError(f"unknown potential preset '{preset}'")
            if preset == 'landau' and self.dim not in (2, 3):
                raise DimensionMismatchError("the landau potential needs N = 2 or 3")
            self.values = None
        else:
            raise InvalidFieldError(f"unknown potential kind '{kind}'")

    def __repr__(self):
        return f"MagneticPotential({self.identifier}, {self.params})"

    @property
    def identifier(self):
        return 'sampled' if self.kind == 'sampled' else self.preset

    @classmethod
    def zero(cls, dim):
        return cls(dim, 'preset', 'zero')

    @classmethod
    def constant(cls, a):
        a = np.atleast_1d(np.asarray(a, dtype=np.float64))
        return cls(len(a), 'preset', 'constant', {'a': a})

    @classmethod
    def landau(cls, B=1.0, dim=2):
        """A(x) = B/2 (-x2, x1[, 0]): uniform field B along the third axis"""
        return cls(dim, 'preset', 'landau', {'B': float(B)})

    @classmethod
    def radial(cls, c=1.0, dim=2):
        """A(x) = c x, a pure gauge"""
        return cls(dim, 'preset', 'radial', {'c': float(c)})

    @classmethod
    def sampled(cls, domain, values):
        return cls(domain.dim, 'sampled', domain=domain, values=values)

    @classmethod
    def from_csv(cls, path):
        """
            Load a sampled potential from x1,...,xN,a1,...,aN rows
        """
        with open(path) as f:
            header = f.readline().strip().split(',')
        dim = sum(1 for c in header if c.startswith('x'))
        domain, columns = read_grid_csv(path, tuple(f"a{k + 1}" for k in range(dim)))
        values = np.stack([columns[f"a{k + 1}"] for k in range(dim)], axis=-1)
        return cls.sampled(domain, values)

    def __call__(self, points):
        points = as_points(points, self.dim)
        if self.kind == 'sampled':
            if self._interpolants is None:
                self._interpolants = [
                    RegularGridInterpolator(self.domain.axes, self.values[..., k], method='linear',
                                            bounds_error=False, fill_value=None)
                    for k in range(self.dim)
                ]
            flat = points.reshape(-1, self.dim)
            out = np.stack([f(flat) for f in self._interpolants], axis=-1).reshape(points.shape)
        elif self.preset == 'zero':
            out = np.zeros(points.shape)
        elif self.preset == 'constant':
            out = np.broadcast_to(self.params['a'], points.shape)
        elif self.preset == 'landau':
            half = 0.5 * self.params['B']
            out = np.zeros(points.shape)
            out[..., 0] = -half * points[..., 1]
            out[..., 1] = half * points[..., 0]
        else:
            out = self.params['c'] * points
        if not np.all(np.isfinite(out)):
            raise InvalidFieldError("potential evaluated to a non-finite value")
        return out

    @property
    def lipschitz_bound(self):
        if self.kind == 'sampled':
            bound = 0.0
            for k in range(self.dim):
                index = [slice(None)] * self.dim
                index[k] = slice(1, None)
                upper = tuple(index)
                index[k] = slice(None, -1)
                lower = tuple(index)
                both = self.domain.mask[upper] & self.domain.mask[lower]
                if np.any(both):
                    jumps = np.linalg.norm(self.values[upper] - self.values[lower], axis=-1)[both]
                    bound = max(bound, float(jumps.max() / self.domain.widths[k]))
            return bound
        if self.preset in ('zero', 'constant'):
            return 0.0
        if self.preset == 'landau':
            return 0.5 * abs(self.params['B'])
        return abs(self.params['c'])

    def sup_bound(self, bbox):
        """
            Upper bound of |A| on the box (max over masked nodes when sampled)
        """
        if self.kind == 'sampled':
            return float(np.linalg.norm(self.values[self.domain.mask], axis=-1).max())
        bbox = np.asarray(bbox, dtype=np.float64).reshape(-1, 2)
        far = np.max(np.abs(bbox), axis=1)
        if self.preset == 'zero':
            return 0.0
        if self.preset == 'constant':
            return float(np.linalg.norm(self.params['a']))
        if self.preset == 'landau':
            return 0.5 * abs(self.params['B']) * float(np.linalg.norm(far[:2]))
        return abs(self.params['c']) * float(np.linalg.norm(far))


def read_grid_csv(path, value_columns):
    """
        Read x1,...,xN plus value columns forming a complete uniform tensor grid

    :return: (Domain, {column: grid-shaped array})
    """
    df = pd.read_csv(path)
    coords = [c for c in df.columns if c.startswith('x')]
    missing = [c for c in value_columns if c not in df.columns]
    if not coords or missing:
        raise TensorGridError(f"{path}: expected columns x1..xN,{','.join(value_columns)}")
    axes = [np.unique(df[c].to_numpy(dtype=np.float64)) for c in coords]
    expected = int(np.prod([len(a) for a in axes]))
    if len(df) != expected or df.duplicated(subset=coords).any():
        raise TensorGridError(f"tensor grid: {path} has {len(df)} rows, a complete grid needs {expected}")
    widths = []
    for c, a in zip(coords, axes):
        if len(a) < 2:
            raise TensorGridError(f"tensor grid: axis {c} needs at least two nodes")
        steps = np.diff(a)
        if not np.allclose(steps, steps[0], rtol=1e-6, atol=0):
            raise TensorGridError(f"tensor grid: axis {c} is not uniformly spaced")
        widths.append(steps[0])
    index = tuple(np.searchsorted(a, df[c].to_numpy(dtype=np.float64)) for c, a in zip(coords, axes))
    shape = tuple(len(a) for a in axes)
    bbox = [[a[0] - 0.5 * h, a[-1] + 0.5 * h] for a, h in zip(axes, widths)]
    mask = np.ones(shape, dtype=bool)
    if 'mask' in df.columns:
        mask[index] = df['mask'].to_numpy() != 0
    columns = {}
    for c in value_columns:
        grid = np.zeros(shape)
        grid[index] = df[c].to_numpy(dtype=np.float64)
        columns[c] = grid
    return Domain(bbox, shape, mask), columns


def load_mask_csv(path):
    """Domain from x1,...,xN,mask rows"""
    domain, _ = read_grid_csv(path, ('mask',))
    return domain


def lp_norm(u, domain=None, p=1.0, order=4):
    """
        (int |u|_p^p)^(1/p) over the masked cells; p = 1 gives int |Re u| + |Im u|
    """
    check_p(p)
    domain = u.domain if domain is None else domain
    points, weights = domain.quadrature_nodes(order, u.breakpoints())
    return float(np.sum(weights * pnorm_pp(u(points), p, vector=False)) ** (1.0 / p))
